"""EMD-based classification losses with ordinal and learned class-to-class ground distances."""

from .errors import (EMDLossError, InsufficientDataError, InvalidInputError, NumericalError,
                     UndefinedMetricError)
from .ground_distance import (CentroidAccumulator, GroundMatrix, learn_ground_matrix,
                              ordinal_matrix, sdd)
from .losses import (XEMD1, XEMD2, HybridParams, LossResult, Target, cross_entropy, emd2_ordered,
                     emd_single_label, hybrid_loss, sinkhorn_emd)
from .oracle import TransportPlan, TransportProblem, emd_exact, solve_transport

__version__ = "0.1.0"

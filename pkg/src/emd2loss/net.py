"""A small MLP with hand-written backprop, momentum SGD and the training schedule
for the cross-entropy / EMD / self-guided hybrid losses.

The loss kinds:

    XE     softmax cross-entropy (fused log-sum-exp)
    REG    L2 regression on the class index, linear 1-unit head
    EMD    squared CDF distance on ordered classes
    XEMD1  XE + lam * sum p_i^2 (D_ik + mu),    omega=1, mu=-0.5
    XEMD2  XE + lam * sum p_i^2 (D_ik^2 + mu),  omega=2, mu=-0.25
    AEMD   entropic (Sinkhorn) approximation of EMD with a fixed D
"""

import json
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import InsufficientDataError, InvalidInputError, NumericalError
from .ground_distance import CentroidAccumulator, GroundMatrix, learn_ground_matrix, ordinal_matrix, sdd
from .losses import XEMD1, XEMD2, HybridParams, smoothed_target, softmax, softmax_backward
from .metrics import aem_aeo, decode_regression

log = logging.getLogger(__name__)

LOSS_KINDS = ("XE", "REG", "EMD", "XEMD1", "XEMD2", "AEMD")
HYBRID_KINDS = ("XEMD1", "XEMD2")
HISTORY_COLUMNS = ("epoch", "loss_XE_component", "loss_reg_component", "lambda",
                   "train_AEM", "test_AEM", "test_AEO", "SDD", "loss_total")
CHECKPOINT_VERSION = 1


@dataclass
class NetConfig:
    layer_sizes: list
    head: str = "softmax"
    seed: int = 0
    weight_init_scale: float = 1.0

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidInputError("layer_sizes needs at least an input and an output size")
        if self.head not in ("softmax", "linear"):
            raise InvalidInputError(f"unknown head {self.head!r}")
        if self.head == "linear" and self.layer_sizes[-1] != 1:
            raise InvalidInputError("a linear head has exactly one output unit")


@dataclass
class TrainConfig:
    learning_rate: float = 10 ** -2.5
    momentum: float = 0.98
    epochs: int = 30
    batch_size: int = 32
    loss_kind: str = "XE"
    lambda_mode: str = "auto_ratio"  # or "fixed"
    lambda_value: float = 0.0
    lambda_ratio: float = 3.5
    jump_start_epochs: int = 4
    omega: Optional[float] = None  # None: preset of the loss kind
    mu: Optional[float] = None
    log_epsilon: float = 1e-6
    weight_decay: float = 0.0
    seed: int = 0
    ground_distance: str = "learned"  # learned | ordinal | external
    distance_norm: float = 2
    sdd_include_diagonal: bool = True
    sinkhorn_reg: float = 1.0
    sinkhorn_iters: int = 100

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.jump_start_epochs < 0:
            raise InvalidInputError("epochs/jump_start_epochs must be >= 0 and batch_size >= 1")
        if self.lambda_mode not in ("auto_ratio", "fixed"):
            raise InvalidInputError("lambda_mode must be 'auto_ratio' or 'fixed'")
        if self.lambda_value < 0 or self.lambda_ratio <= 0 or self.weight_decay < 0:
            raise InvalidInputError("lambda_value/weight_decay must be >= 0 and lambda_ratio > 0")
        if self.ground_distance not in ("learned", "ordinal", "external"):
            raise InvalidInputError("ground_distance must be learned, ordinal or external")
        if self.loss_kind == "AEMD" and self.ground_distance == "learned":
            raise InvalidInputError("AEMD needs a predefined (ordinal or external) ground matrix")

    @property
    def head(self):
        return "linear" if self.loss_kind == "REG" else "softmax"

    def hybrid_params(self, lam=0.0):
        preset = XEMD2 if self.loss_kind == "XEMD2" else XEMD1
        omega = preset.omega if self.omega is None else self.omega
        mu = preset.mu if self.mu is None else self.mu
        return HybridParams(lam, omega, mu, self.log_epsilon)


class MLP:
    """ReLU hidden layers, softmax or linear head. Row-major batches: X @ W + b."""

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        sizes = config.layer_sizes
        self.weights = [rng.standard_normal((i, o)) * (config.weight_init_scale / np.sqrt(i))
                        for i, o in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(o) for o in sizes[1:]]
        self.vel_w = [np.zeros_like(W) for W in self.weights]
        self.vel_b = [np.zeros_like(b) for b in self.biases]
        self.epoch = 0
        self.current_D = None
        # a linear head cannot infer C from its width; set by build_model/train
        self.num_classes = sizes[-1] if config.head == "softmax" else None

    @property
    def num_outputs(self):
        return self.config.layer_sizes[-1]

    @property
    def feature_dim(self):
        return self.config.layer_sizes[-2]

    def forward(self, X):
        """Returns ``(output, features, cache)``.

        ``output`` is the probability matrix (softmax head) or the vector of
        regression outputs (linear head); ``features`` is the input of the head.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.config.layer_sizes[0]:
            raise InvalidInputError(f"input has {X.shape[1]} features, expected {self.config.layer_sizes[0]}")
        acts = [X]
        h = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
            acts.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        out = softmax(logits) if self.config.head == "softmax" else logits[:, 0]
        return out, h, {"acts": acts, "logits": logits}

    def backward(self, cache, d_logits):
        """Parameter gradients given dL/d(logits) for the whole batch."""
        acts = cache["acts"]
        d = np.atleast_2d(d_logits)
        if d.shape != cache["logits"].shape:
            raise InvalidInputError("gradient does not match the cached forward pass")
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for li in range(len(self.weights) - 1, -1, -1):
            gW[li] = acts[li].T @ d
            gb[li] = d.sum(axis=0)
            if li > 0:
                d = (d @ self.weights[li].T) * (acts[li] > 0)
        return gW, gb

    def sgd_step(self, gW, gb, lr, momentum):
        for W, v, g in zip(self.weights, self.vel_w, gW):
            v *= momentum
            v -= lr * g
            W += v
        for b, v, g in zip(self.biases, self.vel_b, gb):
            v *= momentum
            v -= lr * g
            b += v

    def predict(self, X, batch_size=1024):
        outs = [self.forward(X[i:i + batch_size])[0] for i in range(0, len(X), batch_size)]
        return np.concatenate(outs, axis=0)

    def predict_labels(self, X):
        out = self.predict(X)
        if self.config.head == "softmax":
            return np.argmax(out, axis=1)
        if self.num_classes is None:
            raise InvalidInputError("regression model does not know its class count")
        return decode_regression(out, self.num_classes)


@dataclass
class Objective:
    """Per-batch loss for one loss kind. ``lam`` and ``D`` can change between epochs."""

    kind: str
    D: Optional[np.ndarray] = None
    lam: float = 0.0
    omega: float = 1.0
    mu: float = 0.0
    sinkhorn_reg: float = 1.0
    sinkhorn_iters: int = 100

    def terms(self, logits, labels):
        """Returns ``(loss, xe, reg_raw, d_logits)``.

        ``loss`` is the per-example total, ``xe`` the per-example cross-entropy
        (NaN for REG), ``reg_raw`` the per-example unweighted hybrid regulariser
        (None when not applicable) and ``d_logits`` the gradient of the *mean*
        loss with respect to the logits.
        """
        n = logits.shape[0]
        labels = np.asarray(labels, dtype=np.int64)
        if self.kind == "REG":
            r = logits[:, 0] - labels
            return r * r, np.full(n, np.nan), None, (2.0 * r / n)[:, None]
        mx = np.max(logits, axis=1, keepdims=True)
        shifted = logits - mx
        lse = np.log(np.sum(np.exp(shifted), axis=1))
        p = np.exp(shifted - lse[:, None])
        rows = np.arange(n)
        xe = lse - shifted[rows, labels]
        d_xe = p.copy()
        d_xe[rows, labels] -= 1.0
        reg_raw = None
        if self.kind == "XE":
            return xe, xe, None, d_xe / n
        if self.kind == "EMD":
            vals, gp = kernels.emd2_ordered_batch(p, labels)
            return vals, xe, None, softmax_backward(p, gp) / n
        if self.kind == "AEMD":
            C = p.shape[1]
            T = np.stack([smoothed_target(k, C) for k in labels])
            F, f, _ = kernels.sinkhorn_batch(p, T, self.D, self.sinkhorn_reg, self.sinkhorn_iters)
            if not (np.all(np.isfinite(F)) and np.all(np.isfinite(f))):
                raise NumericalError("Sinkhorn scaling produced non-finite values")
            vals = np.einsum("ij,nij->n", self.D, F)
            gp = f - f.mean(axis=1, keepdims=True)
            return vals, xe, None, softmax_backward(p, gp) / n
        # hybrid
        if self.D is not None:
            reg_raw, gp = kernels.hybrid_reg_batch(p, labels, self.D, self.omega, self.mu)
        if self.lam == 0 or self.D is None:
            return xe, xe, reg_raw, d_xe / n
        d = d_xe + self.lam * softmax_backward(p, gp)
        return xe + self.lam * reg_raw, xe, reg_raw, d / n


def loss_and_gradients(model, X, labels, objective, weight_decay=0.0):
    """Mean loss (plus weight decay) and its parameter gradients."""
    _, _, cache = model.forward(X)
    loss, _, _, d = objective.terms(cache["logits"], labels)
    gW, gb = model.backward(cache, d)
    total = float(np.mean(loss))
    if weight_decay:
        total += weight_decay * sum(float(np.sum(W * W)) for W in model.weights)
        gW = [g + 2.0 * weight_decay * W for g, W in zip(gW, model.weights)]
    return total, gW, gb


@dataclass
class EpochRecord:
    epoch: int
    loss_XE_component: float
    loss_reg_component: float
    # stored under the name "lambda" in history files
    lam: float
    train_AEM: float
    test_AEM: float
    test_AEO: float
    SDD: float
    loss_total: float

    def row(self):
        return [self.epoch, self.loss_XE_component, self.loss_reg_component, self.lam,
                self.train_AEM, self.test_AEM, self.test_AEO, self.SDD, self.loss_total]


@dataclass
class TrainResult:
    model: MLP
    history: list
    lambda_fit: Optional[dict] = None
    ground: Optional[GroundMatrix] = None
    raw_distances: Optional[np.ndarray] = None
    skipped_features: int = 0


def build_model(train_cfg, input_dim, num_classes, hidden_sizes=(32,), seed=0, weight_init_scale=1.0):
    out = 1 if train_cfg.head == "linear" else num_classes
    model = MLP(NetConfig([input_dim, *hidden_sizes, out], train_cfg.head, seed, weight_init_scale))
    model.num_classes = num_classes
    return model


def _initial_ground(cfg, C, external):
    if cfg.loss_kind not in HYBRID_KINDS + ("AEMD",):
        return None
    if cfg.ground_distance == "ordinal":
        return ordinal_matrix(C, 1.0 / (C - 1))
    if cfg.ground_distance == "external":
        if external is None:
            raise InvalidInputError("ground_distance='external' needs a matrix")
        G = external if isinstance(external, GroundMatrix) else GroundMatrix(external, "external")
        if G.num_classes != C:
            raise InvalidInputError(f"external ground matrix is {G.num_classes}x{G.num_classes}, need {C}")
        return G
    return None


def train(model, train_set, cfg, test_set=None, external_D=None):
    """Minibatch momentum SGD. Returns a :class:`TrainResult`.

    Hybrid kinds run plain cross-entropy (lam = 0) for ``jump_start_epochs``
    epochs. Features of every training step are accumulated, and at each epoch
    boundary the learned ground matrix is re-estimated from them. In
    ``auto_ratio`` mode lam is fixed once, at the first boundary at or after the
    jump-start whose epoch had a ground matrix available, as
    mean_XE / (lambda_ratio * |mean_reg|) over that epoch.
    """
    C = train_set.num_classes
    X, y = train_set.features, train_set.labels
    n = len(y)
    if n == 0:
        raise InvalidInputError("empty training set")
    model.num_classes = C
    softmax_head = model.config.head == "softmax"
    if (cfg.head == "softmax") != softmax_head:
        raise InvalidInputError(f"loss {cfg.loss_kind} needs a {cfg.head} head")
    if softmax_head and model.num_outputs != C:
        raise InvalidInputError(f"model has {model.num_outputs} outputs for {C} classes")

    hp = cfg.hybrid_params()
    G = _initial_ground(cfg, C, external_D)
    learned = cfg.loss_kind in HYBRID_KINDS and cfg.ground_distance == "learned"
    if learned and model.current_D is not None:
        G = model.current_D
    lam_fixed = cfg.lambda_value if cfg.lambda_mode == "fixed" else None
    lambda_fit = None
    rng = np.random.default_rng(cfg.seed)
    acc = CentroidAccumulator(C, model.feature_dim) if softmax_head else None
    history = []
    raw = None
    skipped = 0

    for epoch in range(1, cfg.epochs + 1):
        in_jump = epoch <= cfg.jump_start_epochs
        lam = 0.0 if (in_jump or G is None or lam_fixed is None) else lam_fixed
        obj = Objective(cfg.loss_kind, None if G is None else G.entries, lam, hp.omega, hp.mu,
                        cfg.sinkhorn_reg, cfg.sinkhorn_iters)
        if acc is not None:
            acc.reset()
        xe_sum = reg_sum = loss_sum = 0.0
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, feats, cache = model.forward(X[idx])
            loss, xe, reg_raw, d = obj.terms(cache["logits"], y[idx])
            if not np.all(np.isfinite(loss)):
                raise NumericalError(f"non-finite loss in epoch {epoch} (batch starting at {start})")
            gW, gb = model.backward(cache, d)
            if cfg.weight_decay:
                gW = [g + 2.0 * cfg.weight_decay * W for g, W in zip(gW, model.weights)]
            model.sgd_step(gW, gb, cfg.learning_rate, cfg.momentum)
            if acc is not None:
                acc.add_batch(feats, y[idx])
            xe_sum += float(np.sum(xe))
            loss_sum += float(np.sum(loss))
            if reg_raw is not None:
                reg_sum += float(np.sum(reg_raw))
        mean_xe, mean_reg, mean_loss = xe_sum / n, reg_sum / n, loss_sum / n

        if (cfg.loss_kind in HYBRID_KINDS and lam_fixed is None and G is not None
                and epoch >= cfg.jump_start_epochs):
            lam_fixed = mean_xe / (cfg.lambda_ratio * abs(mean_reg)) if mean_reg != 0 else 0.0
            lambda_fit = {"epoch": epoch, "mean_xe": mean_xe, "mean_reg": mean_reg,
                          "lambda": lam_fixed, "ratio": cfg.lambda_ratio}
            log.info("epoch %d: lambda fixed at %.6g", epoch, lam_fixed)

        epoch_sdd = float("nan")
        if acc is not None:
            skipped += acc.skipped
            try:
                G_new, raw = learn_ground_matrix(acc, G if learned else None, cfg.distance_norm)
            except InsufficientDataError:
                if learned:
                    raise
                G_new, raw = None, None
            if raw is not None and not np.any(np.isnan(raw)):
                epoch_sdd = sdd(raw, cfg.sdd_include_diagonal)
            if learned:
                G = G_new

        train_aem = aem_aeo(model.predict_labels(X), y)[0]
        test_aem = test_aeo = float("nan")
        if test_set is not None:
            test_aem, test_aeo = aem_aeo(model.predict_labels(test_set.features), test_set.labels)
        reg_component = lam * mean_reg + 0.0 if cfg.loss_kind in HYBRID_KINDS else 0.0  # +0.0 folds -0.0
        history.append(EpochRecord(epoch, mean_xe, reg_component, lam, train_aem,
                                   test_aem, test_aeo, epoch_sdd, mean_loss))
        model.epoch += 1

    if G is not None:
        model.current_D = G
    return TrainResult(model, history, lambda_fit, G if learned else None, raw, skipped)


# ---------------------------------------------------------------------------
# history / checkpoint files


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for rec in history:
            fh.write(",".join(_fmt(v) for v in rec.row()) + "\n")


def read_history(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != HISTORY_COLUMNS:
            raise InvalidInputError(f"{path}: unexpected history header {header}")
        recs = []
        for line in fh:
            if not line.strip():
                continue
            vals = line.strip().split(",")
            recs.append(EpochRecord(int(vals[0]), *(float(v) for v in vals[1:])))
    return recs


def save_checkpoint(model, path):
    """Write an ``.npz`` checkpoint; all arrays are stored as float64 verbatim."""
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "net_config": np.array(json.dumps(asdict(model.config))),
        "epoch": np.array(model.epoch),
        "num_classes": np.array(-1 if model.num_classes is None else model.num_classes),
    }
    for i, (W, b, vW, vb) in enumerate(zip(model.weights, model.biases, model.vel_w, model.vel_b)):
        arrays[f"W{i}"], arrays[f"b{i}"], arrays[f"vW{i}"], arrays[f"vb{i}"] = W, b, vW, vb
    if model.current_D is not None:
        arrays["current_D"] = model.current_D.entries
        arrays["current_D_provenance"] = np.array(model.current_D.provenance)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {version}")
        cfg = NetConfig(**json.loads(str(z["net_config"])))
        model = MLP(cfg)
        for i in range(len(model.weights)):
            model.weights[i] = z[f"W{i}"].copy()
            model.biases[i] = z[f"b{i}"].copy()
            model.vel_w[i] = z[f"vW{i}"].copy()
            model.vel_b[i] = z[f"vb{i}"].copy()
        model.epoch = int(z["epoch"])
        nc = int(z["num_classes"])
        model.num_classes = None if nc < 0 else nc
        if "current_D" in z.files:
            model.current_D = GroundMatrix(z["current_D"].copy(), str(z["current_D_provenance"]))
    return model

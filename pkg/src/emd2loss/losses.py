"""Loss functions on a predicted probability vector and a single-label target.

Every loss returns a :class:`LossResult` holding the scalar value and the
gradient with respect to the *post-softmax* probabilities ``p``. Composition with
the softmax Jacobian is the caller's job (see :func:`softmax_backward`).

The functions here work on one example at a time and are written for clarity;
the training loop uses the batched kernels in :mod:`emd2loss.kernels`, which the
tests cross-check against these.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericalError

SIMPLEX_ATOL = 1e-9
SINKHORN_SMOOTHING = 1e-3


@dataclass(frozen=True)
class Target:
    class_index: int
    num_classes: int

    def __post_init__(self):
        if not 0 <= self.class_index < self.num_classes:
            raise InvalidInputError(
                f"class index {self.class_index} outside [0, {self.num_classes})"
            )

    def one_hot(self):
        t = np.zeros(self.num_classes)
        t[self.class_index] = 1.0
        return t


@dataclass
class LossResult:
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class HybridParams:
    """Weights of the cross-entropy + p^2-mass EMD regulariser.

    ``mu`` is signed; a negative value turns the regulariser into a reward for
    mass placed on (or near) the true class.
    """

    lam: float = 0.0
    omega: float = 1.0
    mu: float = 0.0
    log_epsilon: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInputError(f"lambda must be >= 0, got {self.lam}")
        if self.omega <= 0:
            raise InvalidInputError(f"omega must be > 0, got {self.omega}")
        if self.log_epsilon <= 0:
            raise InvalidInputError(f"log_epsilon must be > 0, got {self.log_epsilon}")


# omega / mu presets of the two self-guided variants
XEMD1 = HybridParams(omega=1.0, mu=-0.5)
XEMD2 = HybridParams(omega=2.0, mu=-0.25)


def check_prob(p, atol=SIMPLEX_ATOL):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError(f"expected a non-empty 1-D probability vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > atol:
        raise InvalidInputError(f"probabilities sum to {p.sum():.12g}, not 1")
    return p


def _class_index(t, C):
    if isinstance(t, Target):
        if t.num_classes != C:
            raise InvalidInputError(f"target has {t.num_classes} classes, prediction has {C}")
        return t.class_index
    k = int(t)
    if k != t or not 0 <= k < C:
        raise InvalidInputError(f"class index {t!r} outside [0, {C})")
    return k


def _ground(D, C):
    D = np.asarray(getattr(D, "entries", D), dtype=np.float64)
    if D.shape != (C, C):
        raise InvalidInputError(f"ground matrix has shape {D.shape}, expected ({C}, {C})")
    return D


def _vec(p, check):
    return check_prob(p) if check else np.asarray(p, dtype=np.float64)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(p, grad_p):
    """Map dL/dp to dL/dz through the softmax Jacobian (works row-wise)."""
    return p * (grad_p - np.sum(p * grad_p, axis=-1, keepdims=True))


def cross_entropy(p, t, eps=1e-6, *, check=True):
    """-log(p_k + eps) and its gradient; only the true-class entry is non-zero."""
    p = _vec(p, check)
    k = _class_index(t, p.size)
    if eps < 0:
        raise InvalidInputError("eps must be >= 0")
    grad = np.zeros_like(p)
    q = p[k] + eps
    grad[k] = -1.0 / q
    return LossResult(float(-np.log(q)), grad)


def cross_entropy_logits(z, t):
    """Fused log-sum-exp cross-entropy. The gradient is w.r.t. the logits."""
    z = np.asarray(z, dtype=np.float64)
    k = _class_index(t, z.size)
    mx = np.max(z)
    lse = mx + np.log(np.sum(np.exp(z - mx)))
    grad = softmax(z)
    grad[k] -= 1.0
    return LossResult(float(lse - z[k]), grad)


def l2_regression(y, t):
    """Squared error of a scalar regression output against the class index."""
    k = t.class_index if isinstance(t, Target) else t
    if int(k) != k or k < 0:
        raise InvalidInputError(f"invalid target {t!r}")
    r = float(y) - float(k)
    return LossResult(r * r, np.array([2.0 * r]))


def emd2_ordered(p, t, *, check=True):
    """Squared L2 distance between the CDFs of ``p`` and the one-hot target.

    grad_n = 2 * sum_{m >= n} (CDF_m(p) - CDF_m(t)).
    """
    p = _vec(p, check)
    C = p.size
    k = _class_index(t, C)
    diff = np.cumsum(p) - (np.arange(C) >= k)
    grad = 2.0 * np.cumsum(diff[::-1])[::-1]
    return LossResult(float(np.sum(diff * diff)), grad)


def emd2_ordered_expanded(p, t, *, check=True):
    """Same loss through the explicit per-class coefficient expansion.

    coef_n = 2 * ( sum_i (C-i+1)(p_i-t_i) - sum_{i<n} (n-i)(p_i-t_i) )  (1-based),
    and since the loss is a quadratic form in d = p - t, value = d . coef / 2.
    O(C^2); kept as an independent route for testing.
    """
    p = _vec(p, check)
    C = p.size
    k = _class_index(t, C)
    d = p.copy()
    d[k] -= 1.0
    base = 0.0
    for i in range(1, C + 1):
        base += (C - i + 1) * d[i - 1]
    coef = np.empty(C)
    for n in range(1, C + 1):
        s = base
        for i in range(1, n):
            s -= (n - i) * d[i - 1]
        coef[n - 1] = 2.0 * s
    return LossResult(float(0.5 * np.dot(coef, d)), coef)


def emd_single_label(p, t, D, *, check=True):
    """EMD to a one-hot target: all mass flows to class k, so cost = sum_i p_i D[i, k]."""
    p = _vec(p, check)
    C = p.size
    k = _class_index(t, C)
    col = _ground(D, C)[:, k]
    return LossResult(float(np.dot(p, col)), col.copy())


def hybrid_loss(p, t, D, params=HybridParams(), *, check=True):
    """Cross-entropy plus lam * sum_i p_i^2 (D[i, k]^omega + mu); D is held constant."""
    p = _vec(p, check)
    C = p.size
    k = _class_index(t, C)
    xe = cross_entropy(p, k, params.log_epsilon, check=False)
    if params.lam == 0:
        return xe
    w = _ground(D, C)[:, k] ** params.omega + params.mu
    value = xe.value + params.lam * float(np.sum(p * p * w))
    grad = xe.grad + 2.0 * params.lam * p * w
    return LossResult(value, grad)


def hybrid_regularizer(p, t, D, omega, mu):
    """The unweighted regulariser sum_i p_i^2 (D[i, k]^omega + mu)."""
    p = np.asarray(p, dtype=np.float64)
    k = _class_index(t, p.size)
    w = _ground(D, p.size)[:, k] ** omega + mu
    return float(np.sum(p * p * w))


def smoothed_target(k, C, weight=SINKHORN_SMOOTHING):
    t = np.full(C, weight / C)
    t[k] += 1.0 - weight
    return t


@dataclass
class SinkhornPlan:
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    cost: float
    objective: float


def sinkhorn_plan(a, b, D, entropic_reg, iters):
    """Entropic OT between mass vectors ``a`` and ``b`` (log-domain scaling).

    ``objective`` is <D, F> + reg * sum F (log F - 1), whose gradient w.r.t.
    ``a`` (along mass-preserving directions) is ``f`` at convergence.
    """
    if entropic_reg <= 0:
        raise InvalidInputError("entropic_reg must be > 0")
    if iters < 1:
        raise InvalidInputError("iters must be >= 1")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    D = _ground(D, a.size)
    F, f, g = kernels.sinkhorn_batch(a[None, :], b[None, :], D, entropic_reg, iters)
    F, f, g = F[0], f[0], g[0]
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericalError("Sinkhorn scaling produced non-finite values")
    pos = F > 0
    ent = float(np.sum(F[pos] * (np.log(F[pos]) - 1.0)))
    cost = float(np.sum(D * F))
    return SinkhornPlan(F, f, g, cost, cost + entropic_reg * ent)


def sinkhorn_emd(p, t, D, entropic_reg=1.0, iters=100, *, smoothing=SINKHORN_SMOOTHING, check=True):
    """Approximate EMD by entropic regularisation.

    The one-hot target is mixed with the uniform vector at weight ``smoothing``
    so that both marginals are strictly positive. ``grad`` is the centred left
    dual potential.
    """
    p = _vec(p, check)
    C = p.size
    k = _class_index(t, C)
    sol = sinkhorn_plan(p, smoothed_target(k, C, smoothing), D, entropic_reg, iters)
    return LossResult(sol.cost, sol.f - sol.f.mean())

"""Regularizer families on the two sides of the kernel-learning duality.

Kernel-weight regularizers h(d) penalize the nonnegative combination
weights directly; block-norm regularizers g(x) act on the squared
per-kernel function norms x_m = ||f_m||^2.  Matched analytic pairs (per
coordinate, with lam abbreviated to L):

    family            h(d)                          g(x)                        optimal d
    block_one_norm    d                             sqrt(x)                     sqrt(x)
    lp_tikhonov       d^p / p                       (1+p)/(2p) x^(p/(1+p))      x^(1/(1+p))
    lp_ivanov         { sum d^p <= 1 }              (sum x^(p/(1+p)))^((1+p)/p) / 2
    uniform           { d <= 1 }                    x / 2                       1
    block_q_norm      -((q-2)/q) d^(-q/(q-2))       x^(q/2) / q                 x^((2-q)/2)
    elastic_net       (1-L)^2 d / (1 - L d)         (1-L) sqrt(x) + L x / 2     sqrt(x)/((1-L)+L sqrt(x))
    wedge             sum d on the monotone cone    numeric (dual ascent)       pooled sqrt
    multitask_ivanov  { sum d <= 1 }                (sum sqrt(x))^2 / 2         sqrt(x)/sum sqrt(x)

Braces denote indicator functions (0 inside, +inf outside).  For
block_q_norm (q > 2) the kernel-weight penalty is concave, so its pairing
with g holds at the stationary point of the conjugate problem rather than
at a global infimum; numeric verification must extremize accordingly.
"""

import dataclasses
import warnings

import numpy as np

from .errors import ValidationError

KERNEL_WEIGHT = "kernel_weight"
BLOCK_NORM = "block_norm"

FAMILIES = (
    "block_one_norm",
    "lp_tikhonov",
    "lp_ivanov",
    "uniform",
    "block_q_norm",
    "elastic_net",
    "wedge",
    "multitask_ivanov",
)

_SEPARABLE = ("block_one_norm", "lp_tikhonov", "uniform", "block_q_norm", "elastic_net")

PRUNE_THRESHOLD = 1e-10
IVANOV_SLACK = 1e-9
BLOCKQ_D_MAX = 1e8


@dataclasses.dataclass(frozen=True)
class RegularizerSpec:
    """One regularizer family instance, tagged with the side it lives on.

    :param family: one of FAMILIES.
    :param side: "kernel_weight" (penalty on d) or "block_norm" (penalty on x).
    :param C: positive trade-off constant applied by the solver.
    :param p: exponent for lp_tikhonov / lp_ivanov (p > 0).
    :param q: exponent for block_q_norm (q > 2).
    :param lam: elastic_net mix in [0, 1].
    """

    family: str
    side: str = KERNEL_WEIGHT
    C: float = 1.0
    p: float = None
    q: float = None
    lam: float = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family: {self.family!r}")
        if self.side not in (KERNEL_WEIGHT, BLOCK_NORM):
            raise ValidationError(f"unknown side: {self.side!r}")
        if not self.C > 0:
            raise ValidationError("C must be positive")
        if self.family in ("lp_tikhonov", "lp_ivanov"):
            if self.p is None or not self.p > 0:
                raise ValidationError(f"{self.family} needs p > 0")
        if self.family == "block_q_norm":
            if self.q is None or not self.q > 2:
                raise ValidationError("block_q_norm needs q > 2")
        if self.family == "elastic_net":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValidationError("elastic_net needs lam in [0, 1]")

    def to_dict(self):
        params = {}
        if self.p is not None:
            params["p"] = self.p
        if self.q is not None:
            params["q"] = self.q
        if self.lam is not None:
            params["lambda"] = self.lam
        return {"family": self.family, "side": self.side, "C": self.C, "params": params}

    @classmethod
    def from_dict(cls, data):
        params = data.get("params") or {}
        return cls(
            family=data["family"],
            side=data.get("side", KERNEL_WEIGHT),
            C=data.get("C", 1.0),
            p=params.get("p"),
            q=params.get("q"),
            lam=params.get("lambda"),
        )


def is_separable(spec):
    return spec.family in _SEPARABLE


def is_convex_h(spec):
    """Whether the kernel-weight penalty (plus its domain) is convex."""
    if spec.family in ("block_one_norm", "uniform", "elastic_net", "wedge", "multitask_ivanov"):
        return True
    if spec.family in ("lp_tikhonov", "lp_ivanov"):
        return spec.p >= 1.0
    return False


def _check_weights(d):
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.ndim != 1 or d.size == 0:
        raise ValidationError("weights must form a nonempty vector")
    if (d < 0).any():
        raise ValidationError("weights must be nonnegative")
    return d


def _check_norms(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("squared norms must form a nonempty vector")
    if (x < 0).any():
        raise ValidationError("squared norms must be nonnegative")
    return x


def h_scalar(spec, t):
    """Per-coordinate kernel-weight penalty for separable families.

    Vectorized over ``t``; returns +inf outside the family domain and the
    -inf limit of block_q_norm at t = 0.
    """
    if not is_separable(spec):
        raise ValidationError(f"{spec.family} has no per-coordinate penalty")
    t = np.asarray(t, dtype=float)
    if spec.family == "block_one_norm":
        return t.copy()
    if spec.family == "lp_tikhonov":
        return t ** spec.p / spec.p
    if spec.family == "uniform":
        return np.where(t <= 1.0 + IVANOV_SLACK, 0.0, np.inf)
    if spec.family == "block_q_norm":
        expo = -spec.q / (spec.q - 2.0)
        with np.errstate(divide="ignore"):
            return -((spec.q - 2.0) / spec.q) * np.where(t > 0, t, 0.0) ** expo
    # elastic_net; at lam = 1 the penalty degenerates to the box indicator
    lam = spec.lam
    if lam == 1.0:
        return np.where(t <= 1.0 + IVANOV_SLACK, 0.0, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (1.0 - lam) ** 2 * t / (1.0 - lam * t)
    if lam > 0:
        val = np.where(t < 1.0 / lam, val, np.inf)
    return val


def g_scalar(spec, t):
    """Per-coordinate block-norm penalty for separable families."""
    if not is_separable(spec):
        raise ValidationError(f"{spec.family} has no per-coordinate penalty")
    t = np.asarray(t, dtype=float)
    if spec.family == "block_one_norm":
        return np.sqrt(t)
    if spec.family == "lp_tikhonov":
        return (1.0 + spec.p) / (2.0 * spec.p) * t ** (spec.p / (1.0 + spec.p))
    if spec.family == "uniform":
        return 0.5 * t
    if spec.family == "block_q_norm":
        return t ** (spec.q / 2.0) / spec.q
    return (1.0 - spec.lam) * np.sqrt(t) + 0.5 * spec.lam * t


def h_value(spec, d):
    """Kernel-weight penalty h(d); extended-real (may be +/- inf)."""
    if spec.side != KERNEL_WEIGHT:
        raise ValidationError("h_value needs a kernel-weight side spec")
    d = _check_weights(d)
    if is_separable(spec):
        return float(h_scalar(spec, d).sum())
    if spec.family == "lp_ivanov":
        return 0.0 if (d ** spec.p).sum() <= 1.0 + IVANOV_SLACK else np.inf
    if spec.family == "multitask_ivanov":
        return 0.0 if d.sum() <= 1.0 + IVANOV_SLACK else np.inf
    # wedge: linear penalty on the nonincreasing cone
    if (np.diff(d) > IVANOV_SLACK).any():
        return np.inf
    return float(d.sum())


def g_value(spec, x):
    """Block-norm penalty g(x) on squared per-kernel norms."""
    if spec.side != BLOCK_NORM:
        raise ValidationError("g_value needs a block-norm side spec")
    x = _check_norms(x)
    if is_separable(spec):
        return float(g_scalar(spec, x).sum())
    if spec.family == "lp_ivanov":
        e = spec.p / (1.0 + spec.p)
        return float(0.5 * (x ** e).sum() ** (1.0 / e))
    if spec.family == "multitask_ivanov":
        return float(0.5 * np.sqrt(x).sum() ** 2)
    from .conjcheck import wedge_g_numeric

    return wedge_g_numeric(x).value


def optimal_weights(spec, x):
    """Minimizing kernel weights for given squared norms x.

    Closed forms per family; entries with x_m = 0 map to d_m = 0 except
    for the uniform family (always 1) and block_q_norm, whose unbounded
    weight is clamped to BLOCKQ_D_MAX with a warning.
    """
    if spec.side != KERNEL_WEIGHT:
        raise ValidationError("optimal_weights needs a kernel-weight side spec")
    x = _check_norms(x)
    fam = spec.family
    if fam == "block_one_norm":
        return np.sqrt(x)
    if fam == "lp_tikhonov":
        return x ** (1.0 / (1.0 + spec.p))
    if fam == "uniform":
        return np.ones_like(x)
    if fam == "block_q_norm":
        d = np.empty_like(x)
        pos = x > 0
        d[pos] = x[pos] ** ((2.0 - spec.q) / 2.0)
        if (~pos).any():
            warnings.warn(
                "block_q_norm weight diverges at zero norm; clamping to "
                f"{BLOCKQ_D_MAX:g}",
                RuntimeWarning,
                stacklevel=2,
            )
            d[~pos] = BLOCKQ_D_MAX
        return np.minimum(d, BLOCKQ_D_MAX)
    if fam == "elastic_net":
        lam = spec.lam
        r = np.sqrt(x)
        den = (1.0 - lam) + lam * r
        return np.where(r > 0, r / np.where(den > 0, den, 1.0), 0.0)
    if fam in ("lp_ivanov", "multitask_ivanov"):
        p = 1.0 if fam == "multitask_ivanov" else spec.p
        e = p / (1.0 + p)
        total = (x ** e).sum()
        if total <= 0:
            return np.zeros_like(x)
        return x ** (1.0 / (1.0 + p)) / total ** (1.0 / p)
    from .conjcheck import wedge_weight_step

    return wedge_weight_step(x)


def conjugate_pair(spec):
    """The same family viewed from the opposite side."""
    other = BLOCK_NORM if spec.side == KERNEL_WEIGHT else KERNEL_WEIGHT
    return dataclasses.replace(spec, side=other)

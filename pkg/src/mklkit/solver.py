"""Alternating solver for multi-kernel models.

The fit alternates two exact blocks on the jointly convex objective

    sum_i loss(y_i, sum_m f_m(x_i) + b) + (C/2) (sum_m ||f_m||^2 / d_m + h(d)):

a function step that solves the combined-kernel problem at fixed weights
(a linear system for squared loss, damped Newton for logistic loss), and
a weight step that applies the family's closed-form minimizer to the
squared per-kernel norms.  Models carry enough to predict and to evaluate
the equivalent block-norm objective.
"""

import dataclasses
import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from . import regfam
from .errors import NumericalError, ValidationError
from .gram import KernelBank, as_matrices, build_cross_gram

LOSS_KINDS = ("squared", "logistic")

NEWTON_TOL = 1e-8
NEWTON_FAIL_TOL = 1e-6
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 30
NEWTON_JITTER = 1e-10


@dataclasses.dataclass(frozen=True)
class LossSpec:
    """Pointwise loss: squared (y - z)^2 / (2 sigma2) or logistic log(1+e^{-yz})."""

    kind: str
    sigma2: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"unknown loss kind: {self.kind!r}")
        if self.kind == "squared" and not self.sigma2 > 0:
            raise ValidationError("squared loss needs sigma2 > 0")

    def value(self, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.kind == "squared":
            return float(np.sum((y - z) ** 2) / (2.0 * self.sigma2))
        return float(np.logaddexp(0.0, -y * z).sum())

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "squared":
            out["sigma2"] = self.sigma2
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(kind=data["kind"], sigma2=data.get("sigma2", 1.0))


@dataclasses.dataclass
class FStepResult:
    alpha: np.ndarray
    b: float
    scores: np.ndarray
    x: np.ndarray
    inner_iterations: int


def _check_labels(loss, y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValidationError("labels must form a nonempty vector")
    if not np.isfinite(y).all():
        raise ValidationError("labels must be finite")
    if loss.kind == "logistic" and not np.isin(y, (-1.0, 1.0)).all():
        raise ValidationError("logistic loss needs labels in {-1, +1}")
    return y


def _combined(mats, d, active):
    n = mats[0].shape[0]
    k0 = np.zeros((n, n))
    for m in np.flatnonzero(active):
        k0 += d[m] * mats[m]
    return k0


def _per_kernel_norms(mats, d, alpha, active):
    x = np.zeros(len(mats))
    for m in np.flatnonzero(active):
        x[m] = d[m] ** 2 * float(alpha @ mats[m] @ alpha)
    return x


def f_step(bank, d, loss, C, y, fit_bias=True,
           prune_threshold=regfam.PRUNE_THRESHOLD):
    """Exactly minimize over functions and bias at fixed kernel weights.

    Returns the representer coefficients of the combined function
    (scores = sum_m d_m K_m alpha + b), the optimal split norms
    x_m = d_m^2 alpha^T K_m alpha, and the inner iteration count
    (1 for squared loss, Newton steps for logistic).
    """
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    if d.shape != (len(mats),):
        raise ValidationError(f"expected {len(mats)} weights, got shape {d.shape}")
    if (d < 0).any():
        raise ValidationError("kernel weights must be nonnegative")
    if not C > 0:
        raise ValidationError("C must be positive")
    y = _check_labels(loss, y)
    n = mats[0].shape[0]
    if y.shape != (n,):
        raise ValidationError("label count must match the Gram size")
    active = d > prune_threshold
    k0 = _combined(mats, d, active)

    if loss.kind == "squared":
        g = k0 + (C * loss.sigma2) * np.eye(n)
        try:
            cho = cho_factor(g)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("combined ridge system is not positive definite") from exc
        if fit_bias:
            u = cho_solve(cho, y)
            v = cho_solve(cho, np.ones(n))
            b = float(u.sum() / v.sum())
            alpha = u - b * v
        else:
            b = 0.0
            alpha = cho_solve(cho, y)
        scores = k0 @ alpha + b
        return FStepResult(alpha, b, scores, _per_kernel_norms(mats, d, alpha, active), 1)

    # logistic: damped Newton on (alpha, b); the linear system is posed in
    # the step so its rounding error scales with the step, not the iterate
    alpha = np.zeros(n)
    b = 0.0
    trace_k0 = float(np.trace(k0))

    def objective(a, bb):
        z = k0 @ a + bb
        return loss.value(y, z) + 0.5 * C * float(a @ k0 @ a), z

    def gradient(a, bb, z):
        s = expit(-y * z)
        gl = -y * s
        grad_a = k0 @ (gl + C * a)
        grad_b = float(gl.sum()) if fit_bias else 0.0
        return s, gl, np.sqrt(float(grad_a @ grad_a) + grad_b ** 2)

    obj, z = objective(alpha, b)
    for it in range(1, NEWTON_MAX_ITER + 1):
        s, gl, grad_norm = gradient(alpha, b, z)
        if grad_norm <= NEWTON_TOL:
            return FStepResult(alpha, b, z, _per_kernel_norms(mats, d, alpha, active), it - 1)
        w = s * (1.0 - s)
        if fit_bias:
            a_mat = np.empty((n + 1, n + 1))
            a_mat[:n, :n] = w[:, None] * k0 + C * np.eye(n)
            a_mat[:n, n] = w
            a_mat[n, :n] = w @ k0
            a_mat[n, n] = w.sum()
            rhs = -np.concatenate([gl + C * alpha, [gl.sum()]])
        else:
            a_mat = w[:, None] * k0 + C * np.eye(n)
            rhs = -(gl + C * alpha)
        a_mat[np.diag_indices_from(a_mat)] += NEWTON_JITTER * max(1.0, trace_k0)
        try:
            sol = np.linalg.solve(a_mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("logistic Newton system is singular") from exc
        if fit_bias:
            delta_a, delta_b = sol[:n], float(sol[n])
        else:
            delta_a, delta_b = sol, 0.0
        t = 1.0
        moved = False
        for _ in range(NEWTON_MAX_HALVINGS):
            cand_a = alpha + t * delta_a
            cand_b = b + t * delta_b
            cand_obj, cand_z = objective(cand_a, cand_b)
            if cand_obj <= obj:
                moved = cand_b != b or not np.array_equal(cand_a, alpha)
                alpha, b, obj, z = cand_a, cand_b, cand_obj, cand_z
                break
            t *= 0.5
        if moved:
            continue
        # objective differences have fallen below float resolution; finish
        # with full steps as long as they shrink the gradient itself
        cand_a = alpha + delta_a
        cand_b = b + delta_b
        cand_obj, cand_z = objective(cand_a, cand_b)
        if gradient(cand_a, cand_b, cand_z)[2] < grad_norm:
            alpha, b, obj, z = cand_a, cand_b, cand_obj, cand_z
            continue
        break
    if gradient(alpha, b, z)[2] > NEWTON_FAIL_TOL:
        raise NumericalError("logistic Newton did not converge")
    return FStepResult(alpha, b, z, _per_kernel_norms(mats, d, alpha, active), it)


@dataclasses.dataclass
class FitOptions:
    max_outer: int = 200
    tol: float = 1e-6
    fit_bias: bool = True
    prune_threshold: float = regfam.PRUNE_THRESHOLD
    descent_slack: float = 1e-9


@dataclasses.dataclass
class FitTrace:
    """Per-outer-iteration record of the alternating fit."""

    objectives: list = dataclasses.field(default_factory=list)
    weights: list = dataclasses.field(default_factory=list)
    inner_iterations: list = dataclasses.field(default_factory=list)
    weight_changes: list = dataclasses.field(default_factory=list)
    converged: bool = False

    @property
    def n_outer(self):
        return len(self.objectives)

    def write_csv(self, path):
        m = len(self.weights[0]) if self.weights else 0
        cols = ["iteration", "objective", "max_weight_change", "inner_iterations"]
        cols += [f"d_{j}" for j in range(m)]
        lines = [",".join(cols)]
        for i in range(self.n_outer):
            row = [str(i + 1), repr(self.objectives[i]), repr(self.weight_changes[i]),
                   str(self.inner_iterations[i])]
            row += [repr(float(v)) for v in self.weights[i]]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclasses.dataclass
class MklModel:
    """A trained multi-kernel model.

    Carries the representer coefficients of the combined function, the
    kernel weights, and the fitting configuration.  ``bank``, ``x_train``
    and ``train_tasks`` are in-memory references used for prediction and
    objective evaluation; they are not serialized (the JSON form stores
    kernel descriptors and a dataset fingerprint instead).
    """

    alpha: np.ndarray
    b: float
    d: np.ndarray
    spec: object
    loss: LossSpec
    C: float
    descriptors: list
    method: str = "alternating"
    fingerprint: str = None
    metadata: dict = dataclasses.field(default_factory=dict)
    normalize: str = None
    bank: KernelBank = None
    x_train: np.ndarray = None
    train_tasks: np.ndarray = None

    def training_scores(self):
        if self.bank is None:
            raise ValidationError("model has no attached kernel bank")
        scores = np.full(len(self.alpha), self.b, dtype=float)
        for m, k in enumerate(as_matrices(self.bank)):
            if self.d[m] != 0.0:
                scores += self.d[m] * (k @ self.alpha)
        return scores

    def per_kernel_norms(self):
        if self.bank is None:
            raise ValidationError("model has no attached kernel bank")
        mats = as_matrices(self.bank)
        return _per_kernel_norms(mats, self.d, self.alpha, self.d > 0)

    def to_dict(self):
        return {
            "alpha": [float(v) for v in self.alpha],
            "b": float(self.b),
            "d": [float(v) for v in self.d],
            "regularizer": self.spec.to_dict() if self.spec is not None else None,
            "loss": self.loss.to_dict(),
            "C": float(self.C),
            "kernels": self.descriptors,
            "method": self.method,
            "fingerprint": self.fingerprint,
            "metadata": self.metadata,
            "normalize": self.normalize,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data):
        spec = data.get("regularizer")
        return cls(
            alpha=np.asarray(data["alpha"], dtype=float),
            b=float(data["b"]),
            d=np.asarray(data["d"], dtype=float),
            spec=regfam.RegularizerSpec.from_dict(spec) if spec else None,
            loss=LossSpec.from_dict(data["loss"]),
            C=float(data["C"]),
            descriptors=list(data.get("kernels", [])),
            method=data.get("method", "alternating"),
            fingerprint=data.get("fingerprint"),
            metadata=data.get("metadata", {}),
            normalize=data.get("normalize"),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _initial_weights(spec, m):
    # the weight-invariant family starts at its fixed point, so a fit
    # records exactly one outer pass; every other family starts uniform
    if spec.family == "uniform":
        return np.ones(m)
    return np.full(m, 1.0 / m)


def _ratio_sum(x, d):
    active = d > 0
    return float((x[active] / d[active]).sum())


def fit(bank, y, spec, loss, C=None, options=None):
    """Alternately optimize functions and kernel weights until the weights settle.

    Parameters
    ----------
    bank : KernelBank or sequence of (N, N) arrays
        Candidate kernels over the training samples.
    y : (N,) array
        Labels; in {-1, +1} for logistic loss.
    spec : RegularizerSpec
        Regularizer family on either side; block-norm specs are mapped to
        their kernel-weight pair before fitting.
    loss : LossSpec
    C : float, optional
        Overrides ``spec.C`` when given.
    options : FitOptions, optional

    Returns
    -------
    (MklModel, FitTrace)
    """
    opts = options or FitOptions()
    mats = as_matrices(bank)
    descriptors = bank.descriptors if isinstance(bank, KernelBank) else [{} for _ in mats]
    spec_h = spec if spec.side == regfam.KERNEL_WEIGHT else regfam.conjugate_pair(spec)
    if C is None:
        C = spec.C
    if not C > 0:
        raise ValidationError("C must be positive")
    y = _check_labels(loss, y)
    m = len(mats)
    d = _initial_weights(spec_h, m)
    frozen = np.zeros(m, dtype=bool)
    trace = FitTrace()
    convex = regfam.is_convex_h(spec_h)
    prev_obj = None
    step = None
    d_at_step = None
    for _ in range(opts.max_outer):
        step = f_step(mats, d, loss, C, y, fit_bias=opts.fit_bias,
                      prune_threshold=opts.prune_threshold)
        d_at_step = d
        d_new = np.asarray(regfam.optimal_weights(spec_h, step.x), dtype=float)
        d_new[frozen] = 0.0
        newly = (~frozen) & (d_new <= opts.prune_threshold)
        d_new[newly] = 0.0
        frozen |= newly
        obj = (loss.value(y, step.scores)
               + 0.5 * C * (_ratio_sum(step.x, d_new) + regfam.h_value(spec_h, d_new)))
        change = float(np.abs(d_new - d).max())
        trace.objectives.append(obj)
        trace.weights.append(d_new.copy())
        trace.inner_iterations.append(step.inner_iterations)
        trace.weight_changes.append(change)
        if (convex and prev_obj is not None
                and obj > prev_obj + opts.descent_slack * max(1.0, abs(prev_obj))):
            raise NumericalError(
                f"objective increased from {prev_obj!r} to {obj!r} on a convex family"
            )
        prev_obj = obj
        d = d_new
        if change <= opts.tol:
            trace.converged = True
            break
    if not np.array_equal(d, d_at_step):
        step = f_step(mats, d, loss, C, y, fit_bias=opts.fit_bias,
                      prune_threshold=opts.prune_threshold)
    model = MklModel(
        alpha=step.alpha, b=step.b, d=d, spec=spec_h, loss=loss, C=C,
        descriptors=descriptors,
        bank=bank if isinstance(bank, KernelBank) else KernelBank(mats),
    )
    return model, trace


def predict(model, x_new=None, cross=None, tasks=None):
    """Decision scores for new points (take the sign for classification).

    Either pass precomputed cross Grams (one (N_new, N_train) matrix per
    kernel) or raw features, which requires the model to carry buildable
    kernel descriptors and its training features.
    """
    if cross is not None:
        mats = [np.asarray(k, dtype=float) for k in cross]
        if len(mats) != len(model.d):
            raise ValidationError(f"expected {len(model.d)} cross Grams")
        n_train = len(model.alpha)
        for k in mats:
            if k.ndim != 2 or k.shape[1] != n_train:
                raise ValidationError("cross Grams must be (n_new, n_train)")
    else:
        if x_new is None:
            raise ValidationError("predict needs features or cross Grams")
        if model.bank is not None and model.bank.precomputed:
            raise ValidationError("precomputed bank: prediction needs cross Grams")
        if model.x_train is None:
            raise ValidationError("model carries no training features; pass cross Grams")
        mats = [
            build_cross_gram(x_new, desc, model.x_train, normalize=model.normalize,
                             tasks_new=tasks, tasks_train=model.train_tasks)
            for desc in model.descriptors
        ]
    scores = np.full(mats[0].shape[0], model.b, dtype=float)
    for m, k in enumerate(mats):
        if model.d[m] != 0.0:
            scores += model.d[m] * (k @ model.alpha)
    return scores


def block_norm_objective(model, y):
    """Training objective in block-norm form: loss + C g(squared norms)."""
    if model.spec is None:
        raise ValidationError("model has no regularizer family")
    spec_g = (model.spec if model.spec.side == regfam.BLOCK_NORM
              else regfam.conjugate_pair(model.spec))
    y = _check_labels(model.loss, y)
    scores = model.training_scores()
    x = model.per_kernel_norms()
    return model.loss.value(y, scores) + model.C * regfam.g_value(spec_g, x)

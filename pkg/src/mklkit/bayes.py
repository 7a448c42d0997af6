"""Marginal-likelihood weighting of a kernel bank.

Treats the combined kernel sigma2 I + sum_m d_m K_m as a Gaussian-process
covariance over the observed labels and adapts the weights by fixed-point
(evidence) updates: each kernel's weight is re-estimated from the squared
norm of its share of the posterior mean against its effective degrees of
freedom.  The negative log marginal splits into the penalized split fit
plus half the log-determinant of the combined kernel, which ties this
weighting to the penalty framework (the log-det acting as the concave
weight penalty).
"""

import dataclasses
import warnings

import numpy as np
from scipy.linalg import cho_factor

from .errors import NumericalError, ValidationError
from .gram import KernelBank, as_matrices, combine
from .solver import LossSpec, MklModel


def _factor_combined(mats, d, sigma2):
    """Combined covariance with its Cholesky factor.

    The factor validates positive definiteness and yields the
    log-determinant; linear solves below go through LU instead, whose
    plain divisions keep small closed-form instances bit-exact.
    """
    if not sigma2 > 0:
        raise ValidationError("sigma2 must be positive")
    kbar = combine(mats, d, sigma2=sigma2)
    try:
        return cho_factor(kbar), kbar
    except np.linalg.LinAlgError as exc:
        raise NumericalError("combined covariance is not positive definite") from exc


def neg_log_marginal(bank, d, sigma2, y):
    """0.5 y^T Kbar^{-1} y + 0.5 log det Kbar (additive constants dropped)."""
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    cho, kbar = _factor_combined(mats, d, sigma2)
    quad = float(y @ np.linalg.solve(kbar, y))
    logdet = 2.0 * float(np.log(np.diag(cho[0])).sum())
    return 0.5 * quad + 0.5 * logdet


def bayes_h_value(bank, d, sigma2):
    """log det(sigma2 I + sum_m d_m K_m), the concave weight penalty."""
    mats = as_matrices(bank)
    cho, _ = _factor_combined(mats, np.asarray(d, dtype=float), sigma2)
    return 2.0 * float(np.log(np.diag(cho[0])).sum())


def mackay_f_step(bank, d, sigma2, y):
    """Posterior-mean split: parts f_m = d_m K_m Kbar^{-1} y and norms x_m."""
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    _, kbar = _factor_combined(mats, d, sigma2)
    alpha = np.linalg.solve(kbar, y)
    parts = np.zeros((len(mats), len(y)))
    x = np.zeros(len(mats))
    for m, k in enumerate(mats):
        if d[m] != 0.0:
            parts[m] = d[m] * (k @ alpha)
            x[m] = d[m] ** 2 * float(alpha @ k @ alpha)
    return parts, x


def mackay_d_step(bank, d, sigma2, x):
    """Evidence reweighting d_m <- x_m / (d_m tr(Kbar^{-1} K_m)).

    A zero weight is absorbing: its part carries no norm, so it stays zero.
    """
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    x = np.asarray(x, dtype=float)
    _, kbar = _factor_combined(mats, d, sigma2)
    out = np.zeros(len(mats))
    for m, k in enumerate(mats):
        if d[m] != 0.0:
            tr = float(np.trace(np.linalg.solve(kbar, k)))
            out[m] = x[m] / (d[m] * tr)
    return out


def split_objective(bank, d, sigma2, y):
    """Penalized split fit 0.5 (sum_m x_m/d_m + ||y - sum_m f_m||^2 / sigma2).

    Evaluated at the posterior-mean split, this is the inner minimum whose
    sum with half the log-determinant recovers ``neg_log_marginal``.
    """
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    parts, x = mackay_f_step(mats, d, sigma2, y)
    resid = y - parts.sum(axis=0)
    active = d > 0
    return 0.5 * (float((x[active] / d[active]).sum())
                  + float(resid @ resid) / sigma2)


@dataclasses.dataclass
class BayesOptions:
    max_iter: int = 500
    tol: float = 1e-6
    nll_increase_tol: float = 1e-6
    patience: int = 5


@dataclasses.dataclass
class BayesState:
    d: np.ndarray
    sigma2: float
    parts: np.ndarray
    x: np.ndarray
    nll_trace: list
    converged: bool
    warned: bool
    n_iter: int


def fit_bayes(bank, y, sigma2, options=None):
    """Run the evidence fixed point to a weighting of the bank.

    Returns the final state (weights, posterior split, objective trace)
    and a predictive model whose coefficients are Kbar^{-1} y at the
    final weights.  The fixed point is not a descent method; if the
    objective keeps increasing for ``patience`` consecutive updates the
    loop falls back to the best weights seen and flags ``warned``.
    """
    opts = options or BayesOptions()
    mats = as_matrices(bank)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != mats[0].shape[0]:
        raise ValidationError("label count must match the Gram size")
    if not np.isfinite(y).all():
        raise ValidationError("labels must be finite")
    m = len(mats)
    d = np.full(m, 1.0 / m)
    nll_trace = [neg_log_marginal(mats, d, sigma2, y)]
    best_nll, best_d = nll_trace[0], d.copy()
    streak = 0
    converged = False
    warned = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        parts, x = mackay_f_step(mats, d, sigma2, y)
        d_new = mackay_d_step(mats, d, sigma2, x)
        change = float(np.abs(d_new - d).max()) / max(1.0, float(np.abs(d_new).max()))
        d = d_new
        nll = neg_log_marginal(mats, d, sigma2, y)
        nll_trace.append(nll)
        if nll < best_nll:
            best_nll, best_d = nll, d.copy()
        if nll > nll_trace[-2] + opts.nll_increase_tol:
            streak += 1
        else:
            streak = 0
        if streak >= opts.patience:
            warned = True
            d = best_d.copy()
            warnings.warn("evidence fixed point stopped descending; "
                          "falling back to the best weights seen", RuntimeWarning)
            break
        if change <= opts.tol:
            converged = True
            break
    parts, x = mackay_f_step(mats, d, sigma2, y)
    _, kbar = _factor_combined(mats, d, sigma2)
    alpha = np.linalg.solve(kbar, y)
    descriptors = bank.descriptors if isinstance(bank, KernelBank) else [{} for _ in mats]
    model = MklModel(
        alpha=alpha, b=0.0, d=d, spec=None,
        loss=LossSpec("squared", sigma2=sigma2), C=1.0,
        descriptors=descriptors, method="mackay",
        metadata={"nll": neg_log_marginal(mats, d, sigma2, y)},
        bank=bank if isinstance(bank, KernelBank) else KernelBank(mats),
    )
    state = BayesState(d=d, sigma2=sigma2, parts=parts, x=x, nll_trace=nll_trace,
                       converged=converged, warned=warned, n_iter=it)
    return state, model

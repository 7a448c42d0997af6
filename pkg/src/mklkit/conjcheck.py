"""Numerical verification of the regularizer correspondences.

The two directions of the pairing are computed on dense log-spaced grids:

* ``numeric_conjugate_g``: from a kernel-weight penalty h to the induced
  block-norm penalty, g(x) = (1/2) extremum_y (x^T y + h(1/y)).
* ``numeric_conjugate_h``: from a block-norm penalty g back to the
  kernel-weight penalty, h(d) = -2 extremum_x (x^T (1/(2d)) - g(x)).

For convex kernel-weight penalties the extremum is an infimum; concave
ones (block_q_norm) pair at the stationary point, reached here as a
supremum (``mode="sup"``).  The module also provides the dual ascent for
the wedge family, the split-function norm identity, and the numeric
block-norm penalty induced by the evidence (log-determinant) objective.
"""

import dataclasses

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from . import regfam
from .errors import NumericalError, ValidationError
from .gram import as_matrices


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Log-spaced evaluation grid for the one-dimensional extremizations."""

    lo: float = 1e-6
    hi: float = 1e6
    points: int = 4001

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValidationError("grid needs 0 < lo < hi")
        if self.points < 3:
            raise ValidationError("grid needs at least 3 points")

    def values(self):
        return np.geomspace(self.lo, self.hi, self.points)


DEFAULT_GRID = GridSpec()


def _call_on_grid(fn, values):
    """Evaluate a possibly vectorized scalar function on a 1-d grid."""
    try:
        out = np.asarray(fn(values), dtype=float)
        if out.shape == values.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(v)) for v in values], dtype=float)


def _extremize(phi, mode, closed_low):
    """Grid extremum with open-boundary detection.

    Raises when the extremum sits on an open end of the grid and the trend
    continues outward, which signals an unbounded inner problem or a grid
    that is too small.
    """
    finite = np.isfinite(phi)
    if not finite.any():
        raise ValidationError("penalty is infinite everywhere on the grid")
    work = np.where(finite, phi, np.inf if mode == "inf" else -np.inf)
    idx = int(np.argmin(work) if mode == "inf" else np.argmax(work))
    val = float(work[idx])
    better = (lambda a, b: a < b) if mode == "inf" else (lambda a, b: a > b)
    if idx == len(work) - 1 and better(work[-1], work[-2]):
        raise NumericalError("inner problem unbounded on the grid (raise hi)")
    if idx == 0 and not closed_low and better(work[0], work[1]):
        raise NumericalError("inner extremum below the grid (lower lo)")
    return val


def numeric_conjugate_g(h, x, grid=None, separable=True, mode="inf"):
    """Block-norm penalty induced by a kernel-weight penalty, numerically.

    With ``separable=True`` (default) ``h`` is a per-coordinate penalty,
    evaluated on the reciprocal grid and extremized coordinate-wise; the
    returned value is the sum over coordinates.  With ``separable=False``
    ``h`` takes full weight vectors and a tensor grid is scanned (supported
    for up to two coordinates).
    """
    if mode not in ("inf", "sup"):
        raise ValidationError(f"unknown mode: {mode!r}")
    grid = grid or DEFAULT_GRID
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if (x < 0).any():
        raise ValidationError("squared norms must be nonnegative")
    ys = grid.values()
    if separable:
        hvals = _call_on_grid(h, 1.0 / ys)
        total = 0.0
        for xm in x:
            total += _extremize(xm * ys + hvals, mode, closed_low=False)
        return 0.5 * total
    if x.size > 2:
        raise ValidationError("full-grid conjugation supported for at most 2 kernels")
    if x.size == 1:
        pts = (1.0 / ys)[:, None]
        lin = x[0] * ys
    else:
        ya, yb = np.meshgrid(ys, ys, indexing="ij")
        pts = np.column_stack([1.0 / ya.ravel(), 1.0 / yb.ravel()])
        lin = x[0] * ya.ravel() + x[1] * yb.ravel()
    try:
        hvals = np.asarray(h(pts), dtype=float).reshape(lin.shape)
    except (TypeError, ValueError):
        hvals = np.array([float(h(p)) for p in pts])
    phi = lin + hvals
    finite = np.isfinite(phi)
    if not finite.any():
        raise ValidationError("penalty is infinite everywhere on the grid")
    val = float(phi[finite].min() if mode == "inf" else phi[finite].max())
    return 0.5 * val


def numeric_conjugate_h(g, d, grid=None, separable=True, mode="inf"):
    """Kernel-weight penalty recovered from a block-norm penalty.

    Evaluates -2 extremum_x (x / (2 d) - g(x)) per coordinate on the grid
    (extended by x = 0).  Interface mirrors ``numeric_conjugate_g``.
    """
    if mode not in ("inf", "sup"):
        raise ValidationError(f"unknown mode: {mode!r}")
    grid = grid or DEFAULT_GRID
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if (d <= 0).any():
        raise ValidationError("weights must be positive here (zero weights have no conjugate)")
    xs = np.concatenate([[0.0], grid.values()])
    if separable:
        gvals = _call_on_grid(g, xs)
        total = 0.0
        for dm in d:
            total += _extremize(xs / (2.0 * dm) - gvals, mode, closed_low=True)
        return -2.0 * total
    if d.size > 2:
        raise ValidationError("full-grid conjugation supported for at most 2 kernels")
    if d.size == 1:
        pts = xs[:, None]
        lin = xs / (2.0 * d[0])
    else:
        xa, xb = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([xa.ravel(), xb.ravel()])
        lin = xa.ravel() / (2.0 * d[0]) + xb.ravel() / (2.0 * d[1])
    try:
        gvals = np.asarray(g(pts), dtype=float).reshape(lin.shape)
    except (TypeError, ValueError):
        gvals = np.array([float(g(p)) for p in pts])
    phi = lin - gvals
    finite = np.isfinite(phi)
    if not finite.any():
        raise ValidationError("penalty is infinite everywhere on the grid")
    val = float(phi[finite].min() if mode == "inf" else phi[finite].max())
    return -2.0 * val


@dataclasses.dataclass
class WedgeResult:
    value: float
    eta: np.ndarray
    residual: float
    iterations: int


def _wedge_slack(eta, coeffs):
    """Affine slacks c_m = coeffs_m + eta_{m-1} - eta_m (boundary etas zero)."""
    m = len(coeffs)
    c = np.asarray(coeffs, dtype=float).copy()
    c[0] -= eta[0]
    if m > 2:
        c[1:-1] += eta[:-1] - eta[1:]
    c[-1] += eta[-1]
    return c


def _wedge_dual_ascent(x, k, tol, max_iter):
    """Maximize sum_m sqrt(c_m x_m) over eta >= 0 with all x strictly positive.

    ``k`` carries the linear coefficients of the slacks (the multiplicity
    each coordinate absorbed from pooled zero-norm neighbours).  With
    k >= 1 every slack stays strictly positive at the optimum, so the KKT
    residual reduces to the eta bounds.  Each iteration tries a Newton
    step on the free multipliers (the curvature is tridiagonal) and falls
    back to a backtracked gradient step; plain projected gradient zig-zags
    above tight tolerances.
    """
    m = x.size
    if m == 1:
        return float(np.sqrt(k[0] * x[0])), np.zeros(0), 0.0, 0

    def value(c):
        return float(np.sqrt(c * x).sum())

    def kkt_residual(eta, c):
        s = np.sqrt(x / np.maximum(c, 1e-300))
        g = 0.5 * (s[1:] - s[:-1])
        res = np.where(eta > 0, np.abs(g), np.maximum(g, 0.0))
        return float(res.max()), s, g

    eta = np.zeros(m - 1)
    c = _wedge_slack(eta, k)
    val = value(c)
    step = 0.25
    residual = np.inf
    for it in range(1, max_iter + 1):
        residual, s, g = kkt_residual(eta, c)
        if residual <= tol:
            return val, eta, residual, it - 1
        moved = False
        w = s / c
        curv = np.diag(w[:-1] + w[1:])
        off = -w[1:-1]
        curv[np.arange(m - 2), np.arange(1, m - 1)] = off
        curv[np.arange(1, m - 1), np.arange(m - 2)] = off
        idx = np.flatnonzero((eta > 0) | (g > 0))
        if idx.size:
            try:
                u = np.linalg.solve(curv[np.ix_(idx, idx)], g[idx])
            except np.linalg.LinAlgError:
                u = None
            if u is not None and np.isfinite(u).all():
                delta = np.zeros(m - 1)
                delta[idx] = 4.0 * u
                t = 1.0
                for _ in range(30):
                    cand = np.maximum(eta + t * delta, 0.0)
                    cc = _wedge_slack(cand, k)
                    if (cc > 0.0).all():
                        cv = value(cc)
                        gain = float(g @ (cand - eta))
                        if gain > 0.0 and cv >= val + 1e-4 * gain:
                            eta, c, val = cand, cc, cv
                            moved = True
                            break
                        # near the optimum the value gain is below float
                        # rounding; accept the full step on residual
                        # contraction instead, but never trade value away
                        # (a lossy residual step can cycle with the
                        # Armijo steps that rebuild the value)
                        if t == 1.0 and cv >= val - 1e-12 * max(1.0, abs(val)):
                            cand_res, _, _ = kkt_residual(cand, cc)
                            if cand_res <= 0.5 * residual:
                                eta, c, val = cand, cc, cv
                                moved = True
                                break
                    t *= 0.5
        if not moved:
            t = step
            for _ in range(60):
                cand = np.maximum(eta + t * g, 0.0)
                cc = _wedge_slack(cand, k)
                if (cc > 0.0).all():
                    cv = value(cc)
                    if cv >= val + 1e-4 * float(g @ (cand - eta)):
                        eta, c, val = cand, cc, cv
                        moved = True
                        step = min(t * 1.3, 1e6)
                        break
                t *= 0.5
        if not moved:
            break
    raise NumericalError(
        f"wedge ascent did not reach tolerance (residual {residual:.3e} > {tol:.1e})"
    )


def wedge_g_numeric(x, tol=1e-6, max_iter=10000):
    """Dual value of the ordered-weight penalty.

    Maximizes sum_m sqrt((1 + eta_{m-1} - eta_m) x_m) over eta >= 0 with
    boundary multipliers fixed at zero and the affine slacks nonnegative.
    Zero-norm coordinates are pooled into the next positive one before
    the ascent (their ordered weight rides along at no extra fit cost but
    full linear cost), which keeps every remaining slack strictly
    positive; the multipliers are then unrolled back to full length,
    climbing by one across each pooled run.  Returns the optimal value,
    full-length multipliers, KKT residual, and iteration count.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if (x < 0).any():
        raise ValidationError("squared norms must be nonnegative")
    m = x.size
    if m == 1:
        return WedgeResult(float(np.sqrt(x[0])), np.zeros(0), 0.0, 0)
    pos_idx = np.flatnonzero(x > 0)
    if pos_idx.size == 0:
        return WedgeResult(0.0, np.zeros(m - 1), 0.0, 0)
    k = np.diff(np.concatenate([[-1], pos_idx])).astype(float)
    val, eta_r, residual, iters = _wedge_dual_ascent(x[pos_idx], k, tol, max_iter)
    eta = np.zeros(m - 1)
    incoming = 0.0
    r = 0
    for j in range(m - 1):
        if r >= pos_idx.size:
            break  # tail zeros: ordering is slack, multipliers stay zero
        if x[j] == 0.0:
            eta[j] = incoming + 1.0
            incoming += 1.0
        else:
            eta[j] = eta_r[r] if r < eta_r.size else 0.0
            incoming = eta[j]
            r += 1
    return WedgeResult(val, eta, residual, iters)


def wedge_weight_step(x, tol=1e-7):
    """Optimal ordered weights for the wedge penalty.

    Maps the dual multipliers through d_m = sqrt(x_m / slack_m); entries
    with x_m = 0 take the smallest value the ordering admits (zero at the
    tail, the next weight in the interior).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if (x < 0).any():
        raise ValidationError("squared norms must be nonnegative")
    m = x.size
    if m == 1:
        return np.sqrt(x)
    res = wedge_g_numeric(x, tol=tol)
    c = _wedge_slack(res.eta, np.ones(m))
    d = np.zeros(m)
    pos = x > 0
    if pos.any():
        if c[pos].min() <= 0:
            raise NumericalError("wedge slack collapsed on an active coordinate")
        d[pos] = np.sqrt(x[pos] / c[pos])
    for j in range(m - 2, -1, -1):
        if not pos[j]:
            d[j] = d[j + 1]
    return np.minimum.accumulate(d)


def variational_norm(bank, d, fbar, prune_threshold=regfam.PRUNE_THRESHOLD,
                     pinv_rtol=1e-10):
    """Split-function norm of fbar under the weighted kernel sum.

    Returns ``(value, parts)`` where parts is the optimal split
    f_m = d_m K_m alpha with alpha solving (sum_m d_m K_m) alpha = fbar,
    and value = sum_m d_m alpha^T K_m alpha, the minimum of
    sum_m ||f_m||^2 / d_m over splits summing to fbar.  Kernels with
    weight at or below the prune threshold are excluded; a pseudo-inverse
    is used when the weighted sum is singular, provided fbar lies in its
    range.
    """
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    fbar = np.asarray(fbar, dtype=float)
    if d.shape != (len(mats),):
        raise ValidationError(f"expected {len(mats)} weights, got shape {d.shape}")
    if (d < 0).any():
        raise ValidationError("weights must be nonnegative")
    if fbar.shape != (mats[0].shape[0],):
        raise ValidationError("fbar length must match the Gram size")
    active = d > prune_threshold
    n = mats[0].shape[0]
    s = np.zeros((n, n))
    for w, k in zip(d[active], [k for k, a in zip(mats, active) if a]):
        s += w * k
    alpha = None
    if active.any():
        try:
            alpha = cho_solve(cho_factor(s), fbar)
        except np.linalg.LinAlgError:
            alpha = None
    if alpha is None:
        w, v = eigh(s)
        keep = w > pinv_rtol * max(w[-1], 0.0) if w.size else np.zeros(0, bool)
        if not keep.any():
            if np.abs(fbar).max() > 1e-12:
                raise ValidationError("fbar outside the range of the combined kernel")
            alpha = np.zeros(n)
        else:
            proj = v[:, keep].T @ fbar
            alpha = v[:, keep] @ (proj / w[keep])
            resid = np.abs(s @ alpha - fbar).max()
            if resid > 1e-8 * max(1.0, np.abs(fbar).max()):
                raise ValidationError("fbar outside the range of the combined kernel")
    parts = []
    value = 0.0
    for m, k in enumerate(mats):
        if active[m]:
            fm = d[m] * (k @ alpha)
            value += d[m] * float(alpha @ k @ alpha)
        else:
            fm = np.zeros(n)
        parts.append(fm)
    return float(value), parts


@dataclasses.dataclass
class BayesGResult:
    value: float
    eta: np.ndarray
    grad_norm: float
    iterations: int
    clamped: bool


def bayes_g_numeric(bank, sigma2, x, tol=1e-7, max_iter=500, eta_clip=40.0):
    """Numeric block-norm penalty induced by the evidence objective.

    Minimizes psi(eta) = sum_m x_m e^{-eta_m} + log det(sigma2 I +
    sum_m e^{eta_m} K_m) over clamped eta by damped Newton steps and
    returns half its minimum.  Vanishing norms push the matching eta to
    the lower clamp; ``clamped`` records whether any coordinate ended
    pinned.
    """
    mats = as_matrices(bank)
    x = np.asarray(x, dtype=float)
    if x.shape != (len(mats),):
        raise ValidationError(f"expected {len(mats)} norms, got shape {x.shape}")
    if (x < 0).any():
        raise ValidationError("squared norms must be nonnegative")
    if not sigma2 > 0:
        raise ValidationError("noise variance must be positive")
    m = len(mats)
    n = mats[0].shape[0]
    eye = np.eye(n)

    def objective(eta):
        kbar = sigma2 * eye.copy()
        dm = np.exp(eta)
        for w, k in zip(dm, mats):
            kbar += w * k
        cho = cho_factor(kbar)
        logdet = 2.0 * float(np.log(np.diag(cho[0])).sum())
        return float((x * np.exp(-eta)).sum()) + logdet, cho, dm

    # a vanishing norm drops the fit term, leaving the log-det increasing
    # in that coordinate: its infimum sits at the lower clamp, where the
    # coordinate stays pinned
    zero = x == 0.0
    eta = np.where(zero, -eta_clip, 0.0)
    val, cho, dm = objective(eta)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        solves = [cho_solve(cho, k) for k in mats]
        traces = np.array([np.trace(a) for a in solves])
        grad = -x * np.exp(-eta) + dm * traces
        pinned_lo = (eta <= -eta_clip + 1e-12) & (grad > 0)
        pinned_hi = (eta >= eta_clip - 1e-12) & (grad < 0)
        res = np.where(pinned_lo | pinned_hi, 0.0, grad)
        grad_norm = float(np.linalg.norm(res))
        if grad_norm <= tol:
            break
        w = np.empty((m, m))
        for a in range(m):
            for b in range(a, m):
                w[a, b] = w[b, a] = dm[a] * dm[b] * float(np.sum(solves[a] * solves[b].T))
        hess = np.diag(x * np.exp(-eta) + dm * traces) - w
        hess = hess + (1e-12 * max(1.0, float(np.trace(hess)))) * np.eye(m)
        directions = []
        try:
            newton = np.linalg.solve(hess, grad)
            if float(grad @ newton) > 0:
                directions.append(newton)
        except np.linalg.LinAlgError:
            pass
        directions.append(grad / max(1.0, np.abs(grad).max()))
        moved = False
        for direction in directions:
            slope = float(grad @ direction)
            t = 1.0
            for _ in range(40):
                cand = np.clip(eta - t * direction, -eta_clip, eta_clip)
                cand[zero] = -eta_clip
                if np.array_equal(cand, eta):
                    break
                cval, ccho, cdm = objective(cand)
                if cval <= val - 1e-4 * t * slope or cval < val:
                    eta, val, cho, dm = cand, cval, ccho, cdm
                    moved = True
                    break
                t *= 0.5
            if moved:
                break
        if not moved:
            if grad_norm <= 10.0 * tol:
                break
            raise NumericalError(
                f"evidence penalty minimization stalled (residual {grad_norm:.3e})"
            )
    else:
        raise NumericalError(
            f"evidence penalty minimization hit the iteration cap ({max_iter})"
        )
    clamped = bool((np.abs(eta) >= eta_clip - 1e-9).any())
    return BayesGResult(0.5 * val, eta, grad_norm, it, clamped)


@dataclasses.dataclass
class ConjugateReport:
    """Outcome of one family/direction numeric correspondence check."""

    family: str
    direction: str
    points: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    max_rel_error: float
    tol: float
    passed: bool
    grid: GridSpec

    def to_dict(self):
        return {
            "family": self.family,
            "direction": self.direction,
            "points": np.asarray(self.points).tolist(),
            "analytic": np.asarray(self.analytic).tolist(),
            "numeric": np.asarray(self.numeric).tolist(),
            "rel_errors": np.asarray(self.rel_errors).tolist(),
            "max_rel_error": self.max_rel_error,
            "tol": self.tol,
            "passed": self.passed,
            "grid": {"lo": self.grid.lo, "hi": self.grid.hi, "points": self.grid.points},
        }


def default_family_instances():
    """Analytic family instances exercised by the correspondence suite."""
    mk = regfam.RegularizerSpec
    return {
        "block_one_norm": mk("block_one_norm"),
        "lp_tikhonov_p0.5": mk("lp_tikhonov", p=0.5),
        "lp_tikhonov_p2": mk("lp_tikhonov", p=2.0),
        "uniform": mk("uniform"),
        "block_q_norm_q3": mk("block_q_norm", q=3.0),
        "block_q_norm_q4": mk("block_q_norm", q=4.0),
        "elastic_net_l0.25": mk("elastic_net", lam=0.25),
        "elastic_net_l0.75": mk("elastic_net", lam=0.75),
    }


def _sample_weights(spec, rng, n_points):
    if spec.family == "uniform":
        return rng.uniform(0.05, 1.0, size=n_points)
    if spec.family == "elastic_net" and spec.lam > 0:
        return rng.uniform(0.05, 0.95 / spec.lam, size=n_points)
    lo, hi = np.log(0.05), np.log(20.0)
    return np.exp(rng.uniform(lo, hi, size=n_points))


def _rel_errors(numeric, analytic):
    numeric = np.asarray(numeric, dtype=float)
    analytic = np.asarray(analytic, dtype=float)
    return np.abs(numeric - analytic) / np.maximum(1.0, np.abs(analytic))


def run_conjugacy_suite(n_points=100, seed=0, tol=1e-3, families=None,
                        grid=None, include_wedge=True):
    """Run both correspondence directions for every analytic family.

    Returns a list of ConjugateReport, two per separable family instance
    plus (optionally) a duality-gap report for the wedge family.  The
    ``families`` filter keeps instances whose label starts with one of the
    given strings.
    """
    grid = grid or DEFAULT_GRID
    rng = np.random.default_rng(seed)
    reports = []
    instances = default_family_instances()
    for label, spec in instances.items():
        if families and not any(label.startswith(f) for f in families):
            continue
        mode = "sup" if spec.family == "block_q_norm" else "inf"
        xs = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n_points))
        num_g = np.array([
            numeric_conjugate_g(lambda t: regfam.h_scalar(spec, t), xv, grid=grid, mode=mode)
            for xv in xs
        ])
        ana_g = np.array([float(regfam.g_scalar(spec, xv)) for xv in xs])
        errs = _rel_errors(num_g, ana_g)
        reports.append(ConjugateReport(
            family=label, direction="weights_to_norms", points=xs,
            analytic=ana_g, numeric=num_g, rel_errors=errs,
            max_rel_error=float(errs.max()), tol=tol,
            passed=bool(errs.max() <= tol), grid=grid,
        ))
        ds = _sample_weights(spec, rng, n_points)
        num_h = np.array([
            numeric_conjugate_h(lambda t: regfam.g_scalar(spec, t), dv, grid=grid, mode=mode)
            for dv in ds
        ])
        ana_h = np.array([float(regfam.h_scalar(spec, dv)) for dv in ds])
        errs = _rel_errors(num_h, ana_h)
        reports.append(ConjugateReport(
            family=label, direction="norms_to_weights", points=ds,
            analytic=ana_h, numeric=num_h, rel_errors=errs,
            max_rel_error=float(errs.max()), tol=tol,
            passed=bool(errs.max() <= tol), grid=grid,
        ))
    if include_wedge and (not families or any("wedge".startswith(f) for f in families)):
        m = 4
        xs = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=(n_points, m)))
        primal = np.empty(n_points)
        dual = np.empty(n_points)
        for i, xv in enumerate(xs):
            d = wedge_weight_step(xv)
            primal[i] = float((xv / d).sum() + d.sum())
            dual[i] = 2.0 * wedge_g_numeric(xv).value
        errs = _rel_errors(primal, dual)
        reports.append(ConjugateReport(
            family="wedge", direction="duality_gap", points=xs,
            analytic=dual, numeric=primal, rel_errors=errs,
            max_rel_error=float(errs.max()), tol=tol,
            passed=bool(errs.max() <= tol), grid=grid,
        ))
    return reports

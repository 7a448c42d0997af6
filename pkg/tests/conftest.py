"""Shared helpers: random problem builders and independent slow oracles."""

import numpy as np
import pytest

from mklkit import KernelBank, build_bank


def random_psd(rng, n, scale=1.0):
    """Random symmetric PSD matrix with eigenvalues of order ``scale``."""
    a = rng.normal(size=(n, n + 2))
    k = a @ a.T / (n + 2)
    return scale * 0.5 * (k + k.T)


def random_bank(rng, n, m, scale=1.0):
    return [random_psd(rng, n, scale) for _ in range(m)]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_regression_problem(seed, n=20, noise=0.1):
    """Features, labels, and a 3-kernel bank over a smooth 1-d target."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] + noise * rng.normal(size=n)
    descriptors = [
        {"family": "gaussian", "gamma": 0.7},
        {"family": "gaussian", "gamma": 2.0},
        {"family": "linear"},
    ]
    bank = build_bank(x, descriptors, normalize="diagonal")
    return x, y, bank


def make_classification_problem(seed, n=24):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = np.where(x[:, 0] + x[:, 1] > 0, 1.0, -1.0)
    descriptors = [
        {"family": "gaussian", "gamma": 0.7},
        {"family": "gaussian", "gamma": 2.0},
        {"family": "linear"},
    ]
    bank = build_bank(x, descriptors, normalize="diagonal")
    return x, y, bank


def make_signal_noise_problem(seed=3, n=40, noise=0.05):
    """Two linear kernels: one on the generating feature, one on pure noise."""
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=n)
    distractor = rng.normal(size=n)
    x = np.column_stack([signal, distractor])
    y = signal + noise * rng.normal(size=n)
    bank = KernelBank(
        [np.outer(signal, signal), np.outer(distractor, distractor)],
        descriptors=[{"family": "linear", "columns": [0]},
                     {"family": "linear", "columns": [1]}],
    )
    return x, y, bank


def ordered_weights_oracle(x):
    """Exact minimizer of sum(x/d + d) over d_1 >= ... >= d_M >= 0.

    Pool-adjacent-violators: the objective is separable and convex in d,
    a pooled block takes the common value sqrt(mean of its x), and two
    adjacent blocks merge while a later block exceeds an earlier one.
    Trailing all-zero blocks stay at zero.
    """
    x = np.asarray(x, dtype=float)
    blocks = []  # (sum of x, count)
    for xm in x:
        blocks.append([float(xm), 1])
        while len(blocks) > 1:
            prev = np.sqrt(blocks[-2][0] / blocks[-2][1])
            cur = np.sqrt(blocks[-1][0] / blocks[-1][1])
            if cur <= prev:
                break
            s, c = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += c
    out = []
    for s, c in blocks:
        out.extend([np.sqrt(s / c)] * c)
    return np.array(out)


def wedge_objective(x, d):
    """sum(x/d + d) with the 0/0 -> 0 convention on switched-off entries."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    active = d > 0
    if (x[~active] != 0).any():
        return np.inf
    return float((x[active] / d[active]).sum() + d.sum())


def direct_block_norm_minimum(mats, y, spec_g, loss, C, fit_bias=True,
                              warm=None, n_random_starts=2, seed=0, eps=1e-12):
    """Oracle: minimize the block-norm objective directly over per-kernel
    coefficient blocks with L-BFGS, bypassing the alternating scheme.

    Parameterizes f_m = K_m beta_m so x_m = beta_m' K_m beta_m, smooths the
    squared norms by ``eps`` to keep gradients finite at zero, and returns
    the best objective value over all starts.
    """
    from scipy.optimize import minimize
    from scipy.special import expit

    from mklkit import g_value

    mats = [np.asarray(k, dtype=float) for k in mats]
    y = np.asarray(y, dtype=float)
    n = mats[0].shape[0]
    m = len(mats)
    fam, p, lam = spec_g.family, spec_g.p, spec_g.lam

    def gprime(x):
        if fam == "block_one_norm":
            return 0.5 / np.sqrt(x)
        if fam == "lp_tikhonov":
            return 0.5 * x ** (-1.0 / (1.0 + p))
        if fam == "elastic_net":
            return 0.5 * (1.0 - lam) / np.sqrt(x) + 0.5 * lam
        if fam == "uniform":
            return np.full_like(x, 0.5)
        raise NotImplementedError(fam)

    def fun_grad(theta):
        betas = theta[: m * n].reshape(m, n)
        b = theta[-1] if fit_bias else 0.0
        kb = np.array([k @ beta for k, beta in zip(mats, betas)])
        z = kb.sum(axis=0) + b
        x = np.maximum(np.einsum("mn,mn->m", betas, kb), 0.0) + eps
        if loss.kind == "squared":
            r = (z - y) / loss.sigma2
            lval = float(((z - y) ** 2).sum() / (2.0 * loss.sigma2))
        else:
            s = expit(-y * z)
            r = -y * s
            lval = float(np.logaddexp(0.0, -y * z).sum())
        gp = gprime(x)
        grad = np.empty_like(theta)
        for j in range(m):
            grad[j * n:(j + 1) * n] = mats[j] @ r + 2.0 * C * gp[j] * kb[j]
        grad[-1] = float(r.sum()) if fit_bias else 0.0
        return lval + C * float(g_value(spec_g, x)), grad

    rng = np.random.default_rng(seed)
    dim = m * n + 1
    starts = [np.zeros(dim)]
    if warm is not None:
        starts.append(np.asarray(warm, dtype=float))
    starts += [0.1 * rng.standard_normal(dim) for _ in range(n_random_starts)]
    best = np.inf
    for theta0 in starts:
        res = minimize(fun_grad, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 4000, "ftol": 1e-14, "gtol": 1e-10})
        best = min(best, float(res.fun))
    return best


def model_as_direct_start(model):
    """The alternating solution in the oracle's parameterization
    (beta_m = d_m alpha, plus the bias)."""
    m = len(model.d)
    n = len(model.alpha)
    theta = np.empty(m * n + 1)
    for j in range(m):
        theta[j * n:(j + 1) * n] = model.d[j] * model.alpha
    theta[-1] = model.b
    return theta

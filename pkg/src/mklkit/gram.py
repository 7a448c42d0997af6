"""Kernel functions, Gram matrices, and kernel banks.

A kernel bank holds one dense symmetric PSD matrix per candidate kernel,
all over the same sample set.  The combined kernel used downstream is

    sigma_y^2 * I + sum_m d_m * K_m,   d_m >= 0.

Grams are built either from raw feature rows (``build_gram`` and the bank
builders) or loaded precomputed from CSV files listed in a JSON manifest.
"""

import csv
import hashlib
import json
import os

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-8

_CHI2_CHUNK = 256


def gaussian_kernel(q, qp, gamma):
    """Gaussian similarity exp(-sum_j (q_j - q'_j)^2 / (2 gamma^2))."""
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    if q.shape != qp.shape:
        raise ValidationError(f"vector length mismatch: {q.shape} vs {qp.shape}")
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    sq = float(np.sum((q - qp) ** 2))
    return float(np.exp(-sq / (2.0 * gamma * gamma)))


def chi2_kernel(q, qp, gamma):
    """Chi-squared histogram similarity.

    Computes exp(-gamma^2 * sum_j (q_j - q'_j)^2 / (q_j + q'_j)) for
    nonnegative inputs; bins empty in both histograms contribute zero.
    """
    q = np.asarray(q, dtype=float)
    qp = np.asarray(qp, dtype=float)
    if q.shape != qp.shape:
        raise ValidationError(f"vector length mismatch: {q.shape} vs {qp.shape}")
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    if (q < 0).any() or (qp < 0).any():
        raise ValidationError("chi2 kernel requires nonnegative entries")
    den = q + qp
    num = (q - qp) ** 2
    terms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(np.exp(-gamma * gamma * float(terms.sum())))


def _chi2_cross(a, b, gamma):
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], _CHI2_CHUNK):
        hi = min(lo + _CHI2_CHUNK, a.shape[0])
        diff = a[lo:hi, None, :] - b[None, :, :]
        den = a[lo:hi, None, :] + b[None, :, :]
        terms = np.where(den > 0, diff * diff / np.where(den > 0, den, 1.0), 0.0)
        out[lo:hi] = terms.sum(axis=2)
    return np.exp(-gamma * gamma * out)


def _select_columns(x, descriptor):
    cols = descriptor.get("columns")
    if cols is None:
        return x
    cols = list(cols)
    if not cols:
        raise ValidationError("descriptor 'columns' must be nonempty when given")
    for c in cols:
        if not 0 <= int(c) < x.shape[1]:
            raise ValidationError(f"column index {c} out of range for {x.shape[1]} features")
    return x[:, cols]


def _raw_gram(x, descriptor, x2):
    family = descriptor.get("family")
    a = _select_columns(x, descriptor)
    b = _select_columns(x2, descriptor)
    if family == "linear":
        return a @ b.T
    if family == "gaussian":
        gamma = descriptor.get("gamma")
        if gamma is None or not gamma > 0:
            raise ValidationError("gaussian kernel requires gamma > 0")
        sq = cdist(a, b, "sqeuclidean")
        return np.exp(-sq / (2.0 * gamma * gamma))
    if family == "chi2":
        gamma = descriptor.get("gamma")
        if gamma is None or not gamma > 0:
            raise ValidationError("chi2 kernel requires gamma > 0")
        if (a < 0).any() or (b < 0).any():
            raise ValidationError("chi2 kernel requires nonnegative features")
        return _chi2_cross(a, b, gamma)
    raise ValidationError(f"unknown kernel family: {family!r}")


def _self_similarity(x, descriptor):
    family = descriptor.get("family")
    if family in ("gaussian", "chi2"):
        return np.ones(x.shape[0])
    a = _select_columns(x, descriptor)
    return np.einsum("ij,ij->i", a, a)


def build_gram(x, descriptor, x2=None, normalize=None):
    """Build the Gram matrix k(x_i, x2_j) for one kernel descriptor.

    With ``x2=None`` the result is the symmetric self-Gram of ``x``.
    ``normalize`` is ``None`` (default), ``"diagonal"`` (unit self
    similarity), or ``"trace"`` (self-Gram trace scaled to N; cross
    Grams are scaled by the factor of the ``x2`` side).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("feature matrix must be 2-d")
    is_self = x2 is None
    x2 = x if is_self else np.asarray(x2, dtype=float)
    if x2.ndim != 2 or x2.shape[1] != x.shape[1]:
        raise ValidationError("feature matrices must share the column count")
    k = _raw_gram(x, descriptor, x2)
    if normalize is None:
        pass
    elif normalize == "diagonal":
        da = _self_similarity(x, descriptor)
        db = da if is_self else _self_similarity(x2, descriptor)
        if (da <= 0).any() or (db <= 0).any():
            raise ValidationError("diagonal normalization requires positive self-similarity")
        k = k / np.sqrt(np.outer(da, db))
    elif normalize == "trace":
        ref = np.trace(k) if is_self else np.trace(_raw_gram(x2, descriptor, x2))
        if not ref > 0:
            raise ValidationError("trace normalization requires positive trace")
        k = k * (x2.shape[0] / ref)
    else:
        raise ValidationError(f"unknown normalization: {normalize!r}")
    if is_self:
        k = 0.5 * (k + k.T)
    return k


class KernelBank:
    """A fixed collection of same-shape square Gram matrices.

    :param matrices: sequence of (N, N) arrays, at least one.
    :param descriptors: optional parallel list of descriptor dicts.
    :param precomputed: True when the Grams were loaded rather than built,
        in which case prediction needs user-supplied cross Grams.
    """

    def __init__(self, matrices, descriptors=None, precomputed=False):
        mats = [np.asarray(k, dtype=float) for k in matrices]
        if not mats:
            raise ValidationError("kernel bank needs at least one matrix")
        n = mats[0].shape[0]
        for k in mats:
            if k.ndim != 2 or k.shape != (n, n):
                raise ValidationError("bank matrices must be square and same-shape")
        if descriptors is None:
            descriptors = [{} for _ in mats]
        if len(descriptors) != len(mats):
            raise ValidationError("one descriptor per matrix required")
        self.matrices = mats
        self.descriptors = [dict(d) for d in descriptors]
        self.precomputed = bool(precomputed)

    @property
    def n(self):
        return self.matrices[0].shape[0]

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, m):
        return self.matrices[m]


def as_matrices(bank):
    """Coerce a KernelBank or a sequence of arrays to a list of arrays."""
    if isinstance(bank, KernelBank):
        return bank.matrices
    mats = [np.asarray(k, dtype=float) for k in bank]
    if not mats:
        raise ValidationError("empty kernel list")
    n = mats[0].shape[0]
    for k in mats:
        if k.ndim != 2 or k.shape != (n, n):
            raise ValidationError("kernel matrices must be square and same-shape")
    return mats


def build_bank(x, descriptors, normalize=None):
    """Build one Gram per descriptor over the same rows."""
    if not descriptors:
        raise ValidationError("at least one kernel descriptor required")
    mats = [build_gram(x, d, normalize=normalize) for d in descriptors]
    return KernelBank(mats, descriptors)


def build_cross_gram(x_new, descriptor, x_train, normalize=None,
                     tasks_new=None, tasks_train=None):
    """Cross Gram k(x_new_i, x_train_j) honoring multitask masks."""
    desc = dict(descriptor)
    mask_task = desc.pop("mask_task", None)
    k = build_gram(np.asarray(x_new, dtype=float), desc, x_train, normalize=normalize)
    if mask_task is not None:
        if tasks_new is None or tasks_train is None:
            raise ValidationError("masked kernel needs task labels on both sides")
        rows = (np.asarray(tasks_new) == mask_task).astype(float)
        cols = (np.asarray(tasks_train) == mask_task).astype(float)
        k = k * np.outer(rows, cols)
    return k


def build_overlap_linear_kernels(x, groups):
    """One linear kernel per (possibly overlapping) feature group.

    Each group is a list of 0-based column indices; the m-th Gram is the
    linear kernel restricted to those columns.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("feature matrix must be 2-d")
    if not groups:
        raise ValidationError("at least one feature group required")
    descriptors = []
    for g in groups:
        cols = list(g)
        if not cols:
            raise ValidationError("feature groups must be nonempty")
        descriptors.append({"family": "linear", "columns": cols})
    return build_bank(x, descriptors)


def build_multitask_bank(x, tasks, base_descriptor, n_tasks=None):
    """Masked per-task copies of a base kernel plus the shared base kernel.

    Task labels are integers in 1..n_tasks.  Kernel m < n_tasks couples
    only sample pairs both belonging to task m+1 (zeros elsewhere); the
    final kernel is the unmasked base Gram shared across tasks.
    """
    x = np.asarray(x, dtype=float)
    tasks = np.asarray(tasks)
    if tasks.shape != (x.shape[0],):
        raise ValidationError("one task label per sample required")
    if n_tasks is None:
        n_tasks = int(tasks.max()) if tasks.size else 0
    if n_tasks < 1:
        raise ValidationError("need at least one task")
    if ((tasks < 1) | (tasks > n_tasks)).any():
        raise ValidationError(f"task labels must lie in 1..{n_tasks}")
    base = build_gram(x, base_descriptor)
    mats = []
    descriptors = []
    for m in range(1, n_tasks + 1):
        sel = (tasks == m).astype(float)
        mats.append(base * np.outer(sel, sel))
        d = dict(base_descriptor)
        d["mask_task"] = m
        descriptors.append(d)
    mats.append(base)
    descriptors.append(dict(base_descriptor))
    return KernelBank(mats, descriptors)


def combine(bank, d, sigma2=0.0):
    """Weighted kernel sum sigma2 * I + sum_m d_m * K_m."""
    mats = as_matrices(bank)
    d = np.asarray(d, dtype=float)
    if d.shape != (len(mats),):
        raise ValidationError(f"expected {len(mats)} weights, got shape {d.shape}")
    if (d < 0).any():
        raise ValidationError("combination weights must be nonnegative")
    if sigma2 < 0:
        raise ValidationError("noise variance must be nonnegative")
    out = sigma2 * np.eye(mats[0].shape[0])
    for w, k in zip(d, mats):
        if w != 0.0:
            out += w * k
    return out


def validate_symmetry(k, rtol=SYMMETRY_RTOL):
    """Raise unless K is entrywise symmetric within rtol."""
    k = np.asarray(k, dtype=float)
    gap = np.abs(k - k.T)
    scale = np.maximum(1.0, np.abs(k))
    if (gap > rtol * scale).any():
        raise ValidationError("Gram matrix is not symmetric")


def check_psd(k, rtol=PSD_RTOL):
    """Spectral PSD test: smallest eigenvalue >= -rtol * largest.

    Returns (ok, min_eigenvalue, max_eigenvalue).
    """
    w = np.linalg.eigvalsh(np.asarray(k, dtype=float))
    lo, hi = float(w[0]), float(w[-1])
    return lo >= -rtol * max(hi, 0.0), lo, hi


def dataset_fingerprint(x, y):
    """Stable hex digest of the training arrays, for model/data pairing."""
    h = hashlib.sha256()
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    y = np.ascontiguousarray(np.asarray(y, dtype=float))
    h.update(str(x.shape).encode())
    h.update(x.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()[:16]


def load_csv_dataset(path, header=True):
    """Load a dataset CSV into (features, labels, tasks).

    With a header, the label column is named ``y`` and an optional integer
    ``task`` column is recognized; every other column is a feature.
    Headerless files take the last column as the label.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path}: empty dataset")
    tasks = None
    if header:
        names = [c.strip() for c in rows[0]]
        if "y" not in names:
            raise ValidationError(f"{path}: no 'y' column in header")
        body = rows[1:]
        if not body:
            raise ValidationError(f"{path}: no data rows")
        try:
            data = np.array([[float(v) for v in r] for r in body])
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric value ({exc})") from exc
        if data.shape[1] != len(names):
            raise ValidationError(f"{path}: ragged rows")
        y_col = names.index("y")
        y = data[:, y_col]
        drop = {y_col}
        if "task" in names:
            t_col = names.index("task")
            tasks = data[:, t_col].astype(int)
            if not np.allclose(data[:, t_col], tasks):
                raise ValidationError(f"{path}: task labels must be integers")
            drop.add(t_col)
        keep = [j for j in range(len(names)) if j not in drop]
        x = data[:, keep]
    else:
        try:
            data = np.array([[float(v) for v in r] for r in rows])
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric value ({exc})") from exc
        if data.shape[1] < 2:
            raise ValidationError(f"{path}: need at least one feature column")
        x, y = data[:, :-1], data[:, -1]
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise ValidationError(f"{path}: non-finite values")
    return x, y, tasks


def load_bank_manifest(path):
    """Load precomputed Grams from a JSON manifest.

    The manifest maps ``{"kernels": [{"path": csv, "descriptor": {...}}]}``;
    paths are resolved relative to the manifest file.
    """
    with open(path) as fh:
        spec = json.load(fh)
    entries = spec.get("kernels")
    if not entries:
        raise ValidationError(f"{path}: manifest lists no kernels")
    base = os.path.dirname(os.path.abspath(path))
    mats = []
    descriptors = []
    for e in entries:
        csv_path = e.get("path")
        if not csv_path:
            raise ValidationError(f"{path}: manifest entry without 'path'")
        full = csv_path if os.path.isabs(csv_path) else os.path.join(base, csv_path)
        k = np.loadtxt(full, delimiter=",", ndmin=2)
        validate_symmetry(k)
        mats.append(k)
        descriptors.append(e.get("descriptor", {}))
    return KernelBank(mats, descriptors, precomputed=True)

"""Command-line harness for training, prediction, and verification.

Subcommands: ``train``, ``predict``, ``cv``, ``weights``, ``bayes``,
``check-conjugate``.  Experiments are described by a JSON config (data
paths, kernel grid, regularizer, loss, hyperparameter grids, seed) and a
few flags can override config fields.  All outputs are deterministic
given the seed: JSON is written with sorted keys and no timestamps, CSV
floats use ``repr``.

Exit codes: 0 success, 1 validation/config error, 2 numerical failure,
3 correspondence-check failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import bayes as bayes_mod
from . import conjcheck, gram, regfam, solver
from .errors import NumericalError, ValidationError

DEFAULT_C_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_LAMBDA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
KERNEL_FAMILIES = ("linear", "gaussian", "chi2")

_MISSING = object()


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _field(cfg, path, default=_MISSING):
    """Fetch a (possibly nested) config field by dotted path."""
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is not _MISSING:
                return default
            raise ValidationError(f"config: missing required field '{path}'")
        node = node[part]
    return node


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return cfg


def expand_kernels(entries):
    """Expand the kernel grid into flat descriptors (one per parameter value)."""
    if not isinstance(entries, list) or not entries:
        raise ValidationError("config field 'kernels': expected a nonempty list")
    descs = []
    for i, entry in enumerate(entries):
        loc = f"kernels[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError(f"config field '{loc}': expected an object")
        family = entry.get("family")
        if family not in KERNEL_FAMILIES:
            raise ValidationError(
                f"config field '{loc}.family': expected one of {list(KERNEL_FAMILIES)}, "
                f"got {family!r}"
            )
        base = {"family": family}
        if "columns" in entry:
            cols = entry["columns"]
            if (not isinstance(cols, list) or not cols
                    or not all(isinstance(c, int) and not isinstance(c, bool) for c in cols)):
                raise ValidationError(
                    f"config field '{loc}.columns': expected a nonempty list of ints"
                )
            base["columns"] = list(cols)
        if family in ("gaussian", "chi2"):
            gam = entry.get("gamma")
            if gam is None:
                raise ValidationError(
                    f"config field '{loc}.gamma': required for {family} kernels"
                )
            gammas = gam if isinstance(gam, list) else [gam]
            if not gammas:
                raise ValidationError(f"config field '{loc}.gamma': grid must be nonempty")
            for j, g in enumerate(gammas):
                if not _is_number(g) or not g > 0:
                    raise ValidationError(
                        f"config field '{loc}.gamma[{j}]': expected a positive number"
                    )
                descs.append(dict(base, gamma=float(g)))
        else:
            descs.append(dict(base))
    return descs


def regularizer_from_config(cfg):
    node = _field(cfg, "regularizer")
    if not isinstance(node, dict):
        raise ValidationError("config field 'regularizer': expected an object")
    try:
        return regfam.RegularizerSpec(
            family=node.get("family"),
            side=node.get("side", regfam.KERNEL_WEIGHT),
            C=node.get("C", 1.0),
            p=node.get("p"),
            q=node.get("q"),
            lam=node.get("lambda"),
        )
    except ValidationError as exc:
        raise ValidationError(f"config field 'regularizer': {exc}") from exc


def loss_from_config(cfg):
    node = cfg.get("loss", {"kind": "squared"})
    if not isinstance(node, dict):
        raise ValidationError("config field 'loss': expected an object")
    try:
        return solver.LossSpec(kind=node.get("kind", "squared"),
                               sigma2=node.get("sigma2", 1.0))
    except ValidationError as exc:
        raise ValidationError(f"config field 'loss': {exc}") from exc


def _load_train_data(cfg):
    path = _field(cfg, "data.train")
    header = _field(cfg, "data.header", True)
    return gram.load_csv_dataset(path, header=bool(header)) + (path,)


def _build_bank(cfg, x, tasks):
    """Build the kernel bank from config: computed grid or precomputed manifest."""
    manifest = cfg.get("bank_manifest")
    if manifest is not None:
        bank = gram.load_bank_manifest(manifest)
        if bank.n != len(x):
            raise ValidationError(
                f"bank manifest size {bank.n} does not match the dataset ({len(x)} rows)"
            )
        return bank, None
    descs = expand_kernels(cfg.get("kernels"))
    normalize = cfg.get("normalize")
    if normalize not in (None, "diagonal", "trace"):
        raise ValidationError(
            "config field 'normalize': expected null, 'diagonal', or 'trace'"
        )
    if cfg.get("multitask"):
        if tasks is None:
            raise ValidationError("config field 'multitask': dataset has no task column")
        if normalize is not None:
            raise ValidationError("config field 'normalize': not supported with multitask")
        mats, out_descs = [], []
        n_tasks = int(np.max(tasks))
        for desc in descs:
            sub = gram.build_multitask_bank(x, tasks, desc, n_tasks=n_tasks)
            mats.extend(sub.matrices)
            out_descs.extend(sub.descriptors)
        return gram.KernelBank(mats, out_descs), None
    return gram.build_bank(x, descs, normalize=normalize), normalize


def _training_scores(model, x, tasks, bank):
    # computed on the prediction path so a later predict call on the
    # training data reproduces these values bit for bit
    if bank is not None and bank.precomputed:
        return solver.predict(model, cross=bank.matrices)
    return solver.predict(model, x, tasks=tasks)


def _write_scores_csv(path, scores, loss):
    lines = []
    if loss.kind == "logistic":
        lines.append("score,label")
        for s in scores:
            lines.append(f"{float(s)!r},{1 if s >= 0 else -1}")
    else:
        lines.append("score")
        lines.extend(f"{float(s)!r}" for s in scores)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _metric_name(loss):
    return "accuracy" if loss.kind == "logistic" else "rmse"


def _evaluate(loss, y_true, scores):
    if loss.kind == "logistic":
        pred = np.where(scores >= 0, 1.0, -1.0)
        return float(np.mean(pred == y_true))
    return float(np.sqrt(np.mean((y_true - scores) ** 2)))


# ---------------------------------------------------------------------------
# cross validation


def _plain_folds(rng, n, folds):
    return [np.sort(f) for f in np.array_split(rng.permutation(n), folds)]


def _stratified_folds(rng, y, folds):
    buckets = [[] for _ in range(folds)]
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, i in enumerate(idx):
            buckets[j % folds].append(i)
    return [np.sort(np.array(b, dtype=int)) for b in buckets]


def _make_folds(rng, y, folds, stratify):
    val_folds = (_stratified_folds(rng, y, folds) if stratify
                 else _plain_folds(rng, len(y), folds))
    if stratify and any(len(np.unique(y[f])) < 2 for f in val_folds if len(f)):
        print("warning: a fold has single-class labels; resampling once",
              file=sys.stderr)
        val_folds = _stratified_folds(rng, y, folds)
    return val_folds


@dataclasses.dataclass
class _Fold:
    bank: object
    cross: list
    y_train: np.ndarray
    y_val: np.ndarray


def _prepare_fold(cfg, x, y, tasks, bank_full, val_idx):
    n = len(y)
    tr_idx = np.setdiff1d(np.arange(n), val_idx)
    if bank_full is not None and bank_full.precomputed:
        mats = [k[np.ix_(tr_idx, tr_idx)] for k in bank_full.matrices]
        cross = [k[np.ix_(val_idx, tr_idx)] for k in bank_full.matrices]
        return _Fold(gram.KernelBank(mats, bank_full.descriptors), cross,
                     y[tr_idx], y[val_idx])
    x_tr, x_va = x[tr_idx], x[val_idx]
    t_tr = tasks[tr_idx] if tasks is not None else None
    t_va = tasks[val_idx] if tasks is not None else None
    sub_cfg_bank, normalize = _build_bank(cfg, x_tr, t_tr)
    cross = [
        gram.build_cross_gram(x_va, desc, x_tr, normalize=normalize,
                              tasks_new=t_va, tasks_train=t_tr)
        for desc in sub_cfg_bank.descriptors
    ]
    return _Fold(sub_cfg_bank, cross, y[tr_idx], y[val_idx])


def run_cv(cfg, x, y, tasks, spec, loss, c_grid, lam_grid, folds, repeats, seed,
           bank_full=None):
    """Grid cross-validation: mean/std of the fold metric per (C, lambda) cell.

    Selection maximizes accuracy (logistic) or minimizes RMSE (squared);
    exact ties keep the smallest C, then the smallest lambda, by visiting
    cells in that order and updating only on strict improvement.
    """
    if folds < 2:
        raise ValidationError("cross validation needs at least 2 folds")
    rng = np.random.default_rng(seed)
    stratify = loss.kind == "logistic"
    fold_data = []
    for _ in range(repeats):
        for val_idx in _make_folds(rng, y, folds, stratify):
            if len(val_idx) == 0:
                raise ValidationError("more folds than samples")
            fold_data.append(_prepare_fold(cfg, x, y, tasks, bank_full, val_idx))
    maximize = loss.kind == "logistic"
    cells = []
    best = None
    for c_val in sorted(c_grid):
        for lam in lam_grid:
            cell_spec = spec if lam is None else dataclasses.replace(spec, lam=lam)
            vals = []
            for fold in fold_data:
                model, _ = solver.fit(fold.bank, fold.y_train, cell_spec, loss, C=c_val)
                scores = solver.predict(model, cross=fold.cross)
                vals.append(_evaluate(loss, fold.y_val, scores))
            mean = float(np.mean(vals))
            cell = {"C": c_val, "lambda": lam, "mean": mean,
                    "std": float(np.std(vals)), "folds": vals}
            cells.append(cell)
            if best is None or (mean > best["mean"] if maximize else mean < best["mean"]):
                best = cell
    return {
        "metric": _metric_name(loss),
        "folds": folds,
        "repeats": repeats,
        "seed": seed,
        "cells": cells,
        "selected": {"C": best["C"], "lambda": best["lambda"]},
    }


# ---------------------------------------------------------------------------
# subcommands


def _default_trace_path(out_path):
    return os.path.splitext(out_path)[0] + "_trace.csv"


def _apply_overrides(cfg, args):
    if getattr(args, "data", None):
        cfg.setdefault("data", {})["train"] = args.data
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "C", None) is not None:
        cfg["C"] = args.C
    if getattr(args, "lam", None) is not None:
        cfg.setdefault("regularizer", {})["lambda"] = args.lam


def cmd_train(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    seed = int(cfg.get("seed", 0))
    x, y, tasks, train_path = _load_train_data(cfg)
    bank, normalize = _build_bank(cfg, x, tasks)
    spec = regularizer_from_config(cfg)
    loss = loss_from_config(cfg)
    c_val = cfg.get("C", spec.C)
    if not _is_number(c_val) or not c_val > 0:
        raise ValidationError("config field 'C': expected a positive number")
    metadata = {"seed": seed, "train_data": os.path.basename(train_path)}
    lam_grid = cfg.get("lambda_grid")
    if spec.family == "elastic_net" and lam_grid and getattr(args, "lam", None) is None:
        for j, lam in enumerate(lam_grid):
            if not _is_number(lam) or not 0.0 <= lam <= 1.0:
                raise ValidationError(
                    f"config field 'lambda_grid[{j}]': expected a number in [0, 1]"
                )
        cv_cfg = _field(cfg, "cv", {})
        table = run_cv(cfg, x, y, tasks, spec, loss, [c_val], list(lam_grid),
                       folds=int(cv_cfg.get("folds", 4)),
                       repeats=int(cv_cfg.get("repeats", 2)),
                       seed=seed, bank_full=bank if bank.precomputed else None)
        spec = dataclasses.replace(spec, lam=table["selected"]["lambda"])
        metadata["selected_lambda"] = table["selected"]["lambda"]
    model, trace = solver.fit(bank, y, spec, loss, C=c_val)
    model.fingerprint = gram.dataset_fingerprint(x, y)
    model.normalize = normalize
    model.x_train = x
    model.train_tasks = tasks
    metadata["converged"] = trace.converged
    metadata["n_outer"] = trace.n_outer
    metadata["training_scores"] = [float(s) for s in
                                   _training_scores(model, x, tasks, bank)]
    model.metadata = metadata
    model.save(args.out)
    trace_path = args.trace or _default_trace_path(args.out)
    trace.write_csv(trace_path)
    print(f"trained {spec.family} model on {len(y)} samples, "
          f"{len(bank)} kernels -> {args.out}")
    print(f"outer iterations: {trace.n_outer} (converged: {trace.converged}); "
          f"trace -> {trace_path}")
    return 0


def _load_features(path, header):
    """Features (and optional tasks/labels) for prediction inputs.

    Headered files may omit the label column; headerless files are taken
    as features only.
    """
    with open(path) as fh:
        first = fh.readline()
    if header and "y" in [c.strip() for c in first.split(",")]:
        x, y, tasks = gram.load_csv_dataset(path, header=True)
        return x, y, tasks
    data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    tasks = None
    if header:
        names = [c.strip() for c in first.split(",")]
        if len(names) != data.shape[1]:
            raise ValidationError(f"{path}: ragged rows")
        if "task" in names:
            t_col = names.index("task")
            tasks = data[:, t_col].astype(int)
            data = np.delete(data, t_col, axis=1)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: non-finite values")
    return data, None, tasks


def _load_cross_manifest(path, n_train):
    with open(path) as fh:
        spec = json.load(fh)
    entries = spec.get("kernels")
    if not entries:
        raise ValidationError(f"{path}: manifest lists no kernels")
    base = os.path.dirname(os.path.abspath(path))
    mats = []
    for e in entries:
        rel = e.get("path")
        if not rel:
            raise ValidationError(f"{path}: manifest entry without 'path'")
        full = rel if os.path.isabs(rel) else os.path.join(base, rel)
        k = np.loadtxt(full, delimiter=",", ndmin=2)
        if k.shape[1] != n_train:
            raise ValidationError(
                f"{full}: expected {n_train} columns (training size), got {k.shape[1]}"
            )
        mats.append(k)
    return mats


def cmd_predict(args):
    model = solver.MklModel.load(args.model)
    header = not args.no_header
    if args.cross:
        mats = _load_cross_manifest(args.cross, len(model.alpha))
        scores = solver.predict(model, cross=mats)
    else:
        if not args.train:
            raise ValidationError("predict needs --train (training CSV) or --cross")
        x_tr, y_tr, t_tr = gram.load_csv_dataset(args.train, header=header)
        fp = gram.dataset_fingerprint(x_tr, y_tr)
        if model.fingerprint and fp != model.fingerprint:
            raise ValidationError(
                "--train data does not match the model's training fingerprint"
            )
        model.x_train = x_tr
        model.train_tasks = t_tr
        x_new, _, t_new = _load_features(args.data, header)
        scores = solver.predict(model, x_new, tasks=t_new)
    _write_scores_csv(args.out, scores, model.loss)
    print(f"wrote {len(scores)} scores -> {args.out}")
    return 0


def cmd_cv(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    seed = int(cfg.get("seed", 0))
    x, y, tasks, _ = _load_train_data(cfg)
    bank, _ = _build_bank(cfg, x, tasks)
    spec = regularizer_from_config(cfg)
    loss = loss_from_config(cfg)
    c_grid = cfg.get("C_grid", list(DEFAULT_C_GRID))
    if not isinstance(c_grid, list) or not c_grid:
        raise ValidationError("config field 'C_grid': expected a nonempty list")
    for j, c_val in enumerate(c_grid):
        if not _is_number(c_val) or not c_val > 0:
            raise ValidationError(f"config field 'C_grid[{j}]': expected a positive number")
    if spec.family == "elastic_net":
        lam_grid = cfg.get("lambda_grid", list(DEFAULT_LAMBDA_GRID))
    else:
        lam_grid = [None]
    cv_cfg = _field(cfg, "cv", {})
    folds = int(cv_cfg.get("folds", args.folds))
    repeats = int(cv_cfg.get("repeats", args.repeats))
    table = run_cv(cfg, x, y, tasks, spec, loss, c_grid, lam_grid,
                   folds=folds, repeats=repeats, seed=seed,
                   bank_full=bank if bank.precomputed else None)
    with open(args.out, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sel = table["selected"]
    lam_part = "" if sel["lambda"] is None else f", lambda={sel['lambda']:g}"
    print(f"{table['metric']} over {repeats}x{folds}-fold CV: "
          f"selected C={sel['C']:g}{lam_part} -> {args.out}")
    return 0


def cmd_weights(args):
    try:
        with open(args.model) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{args.model}: corrupt model JSON at line {exc.lineno}: {exc.msg}"
        ) from exc
    if "d" not in data:
        raise ValidationError(f"{args.model}: model JSON has no weights")
    d = np.asarray(data["d"], dtype=float)
    descs = data.get("kernels") or [{} for _ in d]
    order = sorted(range(len(d)), key=lambda m: (-d[m], m))
    entries = [
        {"rank": r + 1, "index": m, "weight": float(d[m]), "descriptor": descs[m]}
        for r, m in enumerate(order)
    ]
    groups = {}
    for m, desc in enumerate(descs):
        label = ",".join(f"{k}={desc.get(k)}" for k in args.group_by)
        groups[label] = groups.get(label, 0.0) + float(d[m])
    report = {
        "entries": entries,
        "nonzero": int((d > regfam.PRUNE_THRESHOLD).sum()),
        "total_weight": float(d.sum()),
        "group_by": list(args.group_by),
        "groups": groups,
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"{report['nonzero']}/{len(d)} kernels above the prune threshold; "
          f"total weight {report['total_weight']:.6g}")
    for e in entries[:args.top]:
        print(f"  #{e['rank']:<3d} w={e['weight']:.6g}  {json.dumps(e['descriptor'], sort_keys=True)}")
    for label in sorted(groups):
        print(f"  group {label or '(all)'}: {groups[label]:.6g}")
    return 0


def cmd_bayes(args):
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    seed = int(cfg.get("seed", 0))
    x, y, tasks, train_path = _load_train_data(cfg)
    bank, normalize = _build_bank(cfg, x, tasks)
    loss = loss_from_config(cfg)
    if loss.kind != "squared":
        raise ValidationError("config field 'loss.kind': evidence weighting needs 'squared'")
    state, model = bayes_mod.fit_bayes(bank, y, loss.sigma2)
    model.fingerprint = gram.dataset_fingerprint(x, y)
    model.normalize = normalize
    model.x_train = x
    model.train_tasks = tasks
    model.metadata.update({
        "seed": seed,
        "train_data": os.path.basename(train_path),
        "converged": state.converged,
        "warned": state.warned,
        "n_iter": state.n_iter,
    })
    model.metadata["training_scores"] = [float(s) for s in
                                         _training_scores(model, x, tasks, bank)]
    model.save(args.out)
    trace_path = args.trace or _default_trace_path(args.out)
    with open(trace_path, "w") as fh:
        fh.write("iteration,nll\n")
        for i, v in enumerate(state.nll_trace):
            fh.write(f"{i},{float(v)!r}\n")
    print(f"evidence weighting: nll {state.nll_trace[0]:.6g} -> "
          f"{state.nll_trace[-1]:.6g} in {state.n_iter} updates -> {args.out}")
    return 0


def cmd_check(args):
    grid = None
    if args.grid_lo or args.grid_hi or args.grid_points:
        base = conjcheck.DEFAULT_GRID
        grid = conjcheck.GridSpec(
            lo=args.grid_lo or base.lo,
            hi=args.grid_hi or base.hi,
            points=args.grid_points or base.points,
        )
    reports = conjcheck.run_conjugacy_suite(
        n_points=args.points, seed=args.seed, tol=args.tol,
        families=args.family or None, grid=grid,
        include_wedge=not args.no_wedge,
    )
    if not reports:
        raise ValidationError(f"no families match the filter {args.family!r}")
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.family:<22s} {r.direction:<18s} "
              f"max rel err {r.max_rel_error:.3e} (tol {r.tol:g})  {status}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        for r in reports:
            name = f"{r.family}_{r.direction}.json"
            with open(os.path.join(args.out_dir, name), "w") as fh:
                json.dump(r.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        summary = {
            "passed": all(r.passed for r in reports),
            "n_reports": len(reports),
            "failures": [f"{r.family}/{r.direction}" for r in reports if not r.passed],
        }
        with open(os.path.join(args.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if all(r.passed for r in reports):
        print(f"all {len(reports)} checks passed")
        return 0
    print(f"{sum(not r.passed for r in reports)}/{len(reports)} checks FAILED")
    return 3


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mklkit",
        description="Train, inspect, and verify multi-kernel models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="model.json")
    p.add_argument("--trace", default=None, help="fit-trace CSV path")
    p.add_argument("--data", default=None, help="override data.train")
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lam", type=float, default=None,
                   help="fix the elastic-net mix (skips lambda_grid selection)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score new data with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV of points to score")
    p.add_argument("--train", default=None, help="training CSV (rebuilds cross Grams)")
    p.add_argument("--cross", default=None,
                   help="manifest of precomputed cross Grams (new x train)")
    p.add_argument("--out", default="scores.csv")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="cross-validate the hyperparameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="cv.json")
    p.add_argument("--data", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--repeats", type=int, default=2)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("weights", help="report per-kernel weights from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--group-by", nargs="+", default=["family"],
                   help="descriptor keys to sum weights by")
    p.add_argument("--top", type=int, default=10, help="entries to print")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("bayes", help="fit kernel weights by evidence maximization")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="model.json")
    p.add_argument("--trace", default=None, help="objective-trace CSV path")
    p.add_argument("--data", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_bayes)

    p = sub.add_parser("check-conjugate",
                       help="verify the analytic penalty pairs numerically")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", nargs="+", default=None,
                   help="restrict to families with these name prefixes")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--grid-lo", type=float, default=None)
    p.add_argument("--grid-hi", type=float, default=None)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--no-wedge", action="store_true")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 0
        return 1 if code == 2 else code
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    imapce synth   --out DIR [--kind synthetic|complex ...]
    imapce embed   --data FILE --method imapce|cpca [prior and solver flags] --out DIR
    imapce explore --data FILE [prior, solver and clustering flags] --out DIR
    imapce score   --kind laplacian|jaccard|nmi|clf ... --out DIR

Every flag may also be given in a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes, ``-`` or ``_`` both work).
Flags on the command line win over the file. The effective settings are
written to ``DIR/config.resolved``.

Errors go to stderr as ``imapce-error[<kind>]: <message>`` and the process
exits with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data_io, metrics, plotting
from .core import Dataset, Hyperparams, PriorSpec, ValidationError, center, resolve_prior
from .dpgmm import DpgmmConfig
from .exploration import explore
from .manifold import OptimizationError, SolverOptions
from .objectives import (ImapceProblem, auto_mu, cpca_alpha_select, cpca_project,
                         default_cpca_alphas, imapce_cost, solve_imapce)

log = logging.getLogger("imapce")

EXIT_ERROR = 1
EXIT_USAGE = 2


class CliError(Exception):
    kind = "input"


# --------------------------------------------------------------------------
# argument helpers


def parse_index_list(text: str) -> List[int]:
    """Parse ``"0,1,5-7"`` into ``[0, 1, 5, 6, 7]``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, "")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def read_config(path) -> Dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_data_flags(p):
    p.add_argument("--data", help="CSV file, or IDX image file")
    p.add_argument("--labels", help="IDX label file matching an IDX --data file")
    p.add_argument("--label-col", help="CSV label column(s); the first is the primary label, "
                   "e.g. label,dims14,dims56")
    p.add_argument("--sample", type=int, help="seeded subsample of this many rows")
    p.add_argument("--svd-dims", type=int, help="reduce to this many singular directions first")


def _add_prior_flags(p):
    p.add_argument("--prior-type", choices=("none", "attributes", "samples", "subset"), default="none")
    p.add_argument("--prior-cols", help="attribute prior columns, e.g. 0-3 or 0,2,5")
    p.add_argument("--prior-file", help="CSV of prior samples (same columns as --data)")
    p.add_argument("--prior-rows", help="subset prior row ids, inline list or a file of ids")


def _add_hp_flags(p):
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--auto-mu", type=int, choices=(-1, -2), metavar="{-1,-2}",
                   help="set mu to 10^EXP times the cPCA reconstruction error")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imapce", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a benchmark dataset")
    p.add_argument("--config")
    p.add_argument("--kind", choices=("synthetic", "complex"), default="synthetic")
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", help="IDX images superimposed on (complex kind)")
    p.add_argument("--reference-labels")
    p.add_argument("--background", help="IDX background images (complex kind)")
    p.add_argument("--background-labels")
    p.add_argument("--classes", default="8,9")
    p.add_argument("--n-prior", type=int, default=1000, help="background rows written as prior")
    p.add_argument("--out", required=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed", help="compute a projection and embeddings")
    p.add_argument("--config")
    p.add_argument("--method", choices=("imapce", "cpca"), default="imapce")
    p.add_argument("--select-alpha", action="store_true",
                   help="cpca only: choose alpha by spectral clustering of candidate subspaces")
    _add_data_flags(p)
    _add_prior_flags(p)
    _add_hp_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("explore", help="iterative cluster exploration")
    p.add_argument("--config")
    p.add_argument("--method", choices=("imapce", "cpca"), default="imapce")
    _add_data_flags(p)
    _add_prior_flags(p)
    _add_hp_flags(p)
    p.add_argument("--s", type=int, default=75, help="minimum acceptable cluster size")
    p.add_argument("--max-components", type=int, default=10)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--max-outer-iter", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("score", help="evaluate embeddings or clusters")
    p.add_argument("--config")
    p.add_argument("--kind", choices=("laplacian", "jaccard", "nmi", "clf"), required=False)
    p.add_argument("--embeddings", help="embeddings CSV written by embed")
    p.add_argument("--neighbors", default="10,20,30,40,50,60,70,80,90,100")
    p.add_argument("--clusters", help="distinct-cluster CSV (row,cluster) written by explore")
    _add_data_flags(p)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse flags, filling unset ones from the ``--config`` file."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        file_values = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise CliError(f"{args.config}: unknown key(s) {unknown}")
        flags = {a.dest for a in subparser._actions if isinstance(a, argparse._StoreTrueAction)}
        for key in flags & set(file_values):
            file_values[key] = file_values[key].lower() in ("1", "true", "yes", "on")
        subparser.set_defaults(**file_values)
        args = parser.parse_args(argv)
    if not args.out:
        raise CliError("--out is required")
    return args


def write_resolved(args, out: Path) -> None:
    lines = [f"{k} = {v}" for k, v in sorted(vars(args).items())
             if k not in ("func", "verbose") and v is not None]
    (out / "config.resolved").write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# data and prior plumbing


def _load(args) -> Dataset:
    if not args.data:
        raise CliError("--data is required")
    path = Path(args.data)
    if not path.exists():
        raise CliError(f"data file not found: {path}")
    if "idx" in path.name:
        data = data_io.load_idx(path, args.labels)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", data_io.DroppedRowsWarning)
            cols = [c for c in (args.label_col or "").split(",") if c]
            data = data_io.load_csv(path, label_col=cols[0] if cols else None,
                                    extra_label_cols=cols[1:])
        for w in caught:
            log.warning("%s", w.message)
    if args.sample:
        data = data_io.sample_rows(data, args.sample, args.seed)
    return data


def _prior(args, data: Dataset) -> PriorSpec:
    kind = args.prior_type
    if kind == "none":
        return PriorSpec.none()
    if kind == "attributes":
        if not args.prior_cols:
            raise CliError("--prior-cols is required for an attribute prior")
        return PriorSpec.attributes(parse_index_list(args.prior_cols))
    if kind == "samples":
        if not args.prior_file:
            raise CliError("--prior-file is required for a sample prior")
        path = Path(args.prior_file)
        if not path.exists():
            raise CliError(f"prior file not found: {path}")
        if "idx" in path.name:
            samples = data_io.load_idx(path).values
        else:
            samples = data_io.load_csv(path, numeric_cols=list(data.column_names or [])
                                       or None).values
        return PriorSpec.from_samples(samples)
    if not args.prior_rows:
        raise CliError("--prior-rows is required for a subset prior")
    src = Path(args.prior_rows)
    text = src.read_text().replace("\n", ",") if src.exists() else args.prior_rows
    return PriorSpec.subset(parse_index_list(text))


def _prepare(args):
    """Load data and prior, apply optional SVD reduction to both."""
    data = _load(args)
    prior = _prior(args, data)
    prior.validate(data.n, data.d)
    if args.svd_dims:
        reduced, prep = data_io.preprocess(data, svd_dims=args.svd_dims)
        log.info("svd to %d dims retains %.4f of the variance", args.svd_dims, prep.retained_variance)
        if prior.kind == "samples":
            prior = PriorSpec.from_samples(prep.apply(prior.samples))
        elif prior.kind == "attributes":
            raise CliError("--svd-dims cannot be combined with an attribute prior")
        data = reduced
    return data, prior


def _hyperparams(args, data: Dataset, prior: PriorSpec, **extra) -> Hyperparams:
    mu = args.mu
    if args.auto_mu is not None:
        res = resolve_prior(data, prior)
        Yc = center(res.Y) if res.Y.shape[0] else res.Y
        mu = auto_mu(center(res.X), Yc, Hyperparams(alpha=args.alpha).effective_alpha(prior),
                     args.k, args.auto_mu)
        log.info("auto mu = %.6g", mu)
    hp = Hyperparams(alpha=args.alpha, mu=mu, k=args.k, restarts=args.restarts,
                     seed=args.seed, max_iter=args.max_iter, **extra)
    hp.validate(data.d, prior)
    return hp


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def _label_columns(data: Dataset, rows) -> Dict[str, np.ndarray]:
    cols = {}
    if data.labels is not None:
        cols["label"] = data.labels[rows]
    for name, vec in data.extra_labels.items():
        cols[name] = vec[rows]
    return cols


def _write_embeddings(path: Path, Q, rows, data: Dataset) -> None:
    labels = _label_columns(data, rows)
    header = ["row"] + [f"q{j + 1}" for j in range(Q.shape[1])] + list(labels)
    _write_rows(path, header, ([int(r)] + [_fmt(v) for v in Q[i]] + [int(l[i]) for l in labels.values()]
                               for i, r in enumerate(rows)))


# --------------------------------------------------------------------------
# commands


def cmd_synth(args, out: Path) -> None:
    if args.kind == "synthetic":
        data = data_io.gen_synthetic(data_io.SyntheticSpec(n=args.n, seed=args.seed))
        data_io.save_csv(data, out / "synthetic.csv")
        return
    needed = ("reference", "reference_labels", "background", "background_labels")
    missing = [f"--{k.replace('_', '-')}" for k in needed if not getattr(args, k)]
    if missing:
        raise CliError(f"complex data needs {', '.join(missing)}")
    ref = data_io.load_idx(args.reference, args.reference_labels)
    bg = data_io.load_idx(args.background, args.background_labels)
    spec = data_io.ComplexSpec(classes=tuple(parse_index_list(args.classes)),
                               n_complex=args.n, seed=args.seed)
    data = data_io.superimpose(ref, bg, spec)
    names = [f"p{i}" for i in range(data.d)]
    data_io.save_csv(Dataset(data.values, data.labels, names, data.extra_labels), out / "complex.csv")
    prior = data_io.sample_rows(bg, args.n_prior, args.seed + 1)
    data_io.save_csv(Dataset(prior.values, prior.labels, names), out / "prior.csv")


def cmd_embed(args, out: Path) -> None:
    data, prior = _prepare(args)
    hp = _hyperparams(args, data, prior)
    res = resolve_prior(data, prior)
    X = center(res.X)
    Y = center(res.Y) if res.Y.shape[0] else res.Y
    alpha = hp.effective_alpha(prior)
    started = time.perf_counter()
    run = {"method": args.method, "n": data.n, "d": data.d, "k": hp.k, "mu": hp.mu}
    if args.method == "imapce":
        prob = ImapceProblem(X, Y, X[res.z_rows], alpha=alpha, mu=hp.mu)
        report = solve_imapce(prob, hp.k, SolverOptions(max_iter=hp.max_iter, grad_tol=hp.grad_tol,
                                                        restarts=hp.restarts, seed=hp.seed))
        V = report.V_star
        run.update(alpha=alpha, objective_value=report.objective_value,
                   best_restart=report.restart_index, objective_trace=report.trace,
                   restarts=[{"index": r.restart_index, "objective_value": r.objective_value,
                              "iterations": r.iterations, "stop_reason": r.stop_reason,
                              "error": r.error, "seconds": round(r.seconds, 3)}
                             for r in report.restarts])
    else:
        if args.select_alpha and Y.shape[0]:
            sel = cpca_alpha_select(X, Y, default_cpca_alphas(), k=hp.k, seed=hp.seed)
            V, alpha = sel.V, sel.alpha
        else:
            V = cpca_project(X, Y, alpha, hp.k)
        run.update(alpha=alpha, objective_value=imapce_cost(
            ImapceProblem(X, Y, X[res.z_rows], alpha=alpha, mu=hp.mu), V))
    run["seconds"] = round(time.perf_counter() - started, 3)
    rows = np.arange(data.n)
    Q = X @ V
    _write_embeddings(out / "embeddings.csv", Q, rows, data)
    _write_rows(out / "projection.csv", [f"v{j + 1}" for j in range(V.shape[1])],
                ([_fmt(v) for v in row] for row in V))
    (out / "run.json").write_text(json.dumps(run, indent=2) + "\n")
    (out / "scatter.svg").write_text(plotting.scatter_svg(Q, data.labels, f"{args.method} embedding"))


def cmd_explore(args, out: Path) -> None:
    data, prior = _prepare(args)
    hp = _hyperparams(args, data, prior, s=args.s)
    cfg = DpgmmConfig(max_components=args.max_components, concentration=args.concentration,
                      seed=args.seed)
    history = explore(data, prior, hp, cfg, method=args.method,
                      max_outer_iterations=args.max_outer_iter)
    X = center(data.values)
    for i, it in enumerate(history.iterations):
        d = out / f"iter_{i + 1:02d}"
        d.mkdir(exist_ok=True)
        z = it.embeddings.source_rows
        _write_embeddings(d / "embeddings.csv", it.embeddings.Q, z, data)
        _write_rows(d / "assignments.csv", ["row", "cluster"],
                    ([int(r), int(c)] for r, c in zip(z, it.cluster_model.assignments)))
        _write_rows(d / "distinct_rows.csv", ["row", "cluster"],
                    ([int(r), lab] for lab, rows in zip(it.distinct_labels, it.distinct_cluster_rows)
                     for r in rows))
        explored = np.setdiff1d(np.arange(data.n), z)
        mask = np.isin(it.cluster_model.assignments, it.distinct_labels)
        svg = plotting.triptych_svg(it.embeddings.Q, X[explored] @ it.V_star,
                                    it.cluster_model.assignments,
                                    None if data.labels is None else data.labels[z],
                                    mask, f"iteration {i + 1}")
        (d / "triptych.svg").write_text(svg)
    _write_rows(out / "distinct_clusters.csv", ["row", "cluster"],
                ([int(r), c] for c, rows in enumerate(history.distinct_clusters) for r in rows))
    summary = {"terminal_reason": history.terminal_reason,
               "iterations": len(history.iterations),
               "cluster_sizes": [int(len(c)) for c in history.distinct_clusters],
               "objective_values": [it.objective_value for it in history.iterations]}
    if data.labels is not None and history.distinct_clusters:
        summary["mean_jaccard"] = metrics.mean_jaccard(history.distinct_clusters, data.labels)
        summary["nmi"] = metrics.nmi(metrics.exploration_partition(history.distinct_clusters, data.n),
                                     data.labels)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def _read_embeddings(path, label_col):
    if not path or not Path(path).exists():
        raise CliError(f"embeddings file not found: {path}")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    qcols = [h for h in header if h.startswith("q") and h[1:].isdigit()]
    if label_col not in header:
        raise CliError(f"{path}: no column {label_col!r}")
    emb = data_io.load_csv(path, numeric_cols=qcols + [label_col])
    return emb.values[:, :-1], emb.values[:, -1].astype(int)


def _read_clusters(path) -> List[np.ndarray]:
    if not path or not Path(path).exists():
        raise CliError(f"clusters file not found: {path}")
    table = data_io.load_csv(path, numeric_cols=["row", "cluster"]).values.astype(int)
    return [table[table[:, 1] == c, 0] for c in np.unique(table[:, 1])]


def cmd_score(args, out: Path) -> None:
    if not args.kind:
        raise CliError("--kind is required")
    report = []
    if args.kind in ("laplacian", "clf"):
        Q, labels = _read_embeddings(args.embeddings, (args.label_col or "label").split(",")[0])
        if args.kind == "laplacian":
            sweep = metrics.laplacian_sweep(Q, labels, parse_index_list(args.neighbors))
            _write_rows(out / "laplacian_sweep.csv", ["n_neighbors", "laplacian_score"],
                        ([k, _fmt(v)] for k, v in sweep))
            report = [("laplacian", f"n_neighbors={k}", v, "") for k, v in sweep]
        else:
            mean, std = metrics.separability_accuracy(Q, labels, n_splits=args.splits, seed=args.seed)
            report = [("clf", f"splits={args.splits}", mean, std)]
    else:
        data = _load(args)
        if data.labels is None:
            raise CliError("--data must carry labels (use --label-col or --labels)")
        clusters = _read_clusters(args.clusters)
        if any(c.max(initial=-1) >= data.n for c in clusters):
            raise ValidationError("cluster rows exceed the number of data rows")
        if args.kind == "jaccard":
            report = [("jaccard", f"clusters={len(clusters)}",
                       metrics.mean_jaccard(clusters, data.labels), "")]
        else:
            part = metrics.exploration_partition(clusters, data.n)
            report = [("nmi", f"clusters={len(clusters)}", metrics.nmi(part, data.labels), "")]
    _write_rows(out / "report.csv", ["metric", "parameters", "value", "std"],
                ([m, p, _fmt(v), "" if s == "" else _fmt(s)] for m, p, v, s in report))


# --------------------------------------------------------------------------


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, (CliError, ValidationError, FileNotFoundError)):
        return "input"
    if isinstance(exc, data_io.DataFormatError):
        return "data"
    if isinstance(exc, OptimizationError):
        return "optimization"
    return "internal"


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    except Exception as exc:  # config file problems
        print(f"imapce-error[{_error_kind(exc)}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(args, out)
        args.func(args, out)
    except Exception as exc:
        print(f"imapce-error[{_error_kind(exc)}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

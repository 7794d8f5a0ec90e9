"""Command-line interface.

Exit status: 0 on success, 1 when a check fails or an input cannot be
processed, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .baselines import Polarity, ScoreVector
from .config import RunConfig, apply_overrides, load_kv_file, resolve
from .downstream import ReliabilityVector, ReliMetric, train_task_heads, ovo_tasks
from .errors import ReproError, ShapeError
from .evaluate import correlate, rank_models
from .experiments import METHODS, fit_mixtures, ground_truth, head_config, score, subsample_refs
from .synth import CounterexampleSpec, HarnessConfig, SynthConfig, gen_clustered_ensemble, gen_counterexample, theorem2_harness
from .tensor import Ensemble

logger = logging.getLogger("repreli")

SCORE_HEADER = ("point_index", "score", "polarity")
RELI_HEADER = ("point_index", "reliability", "metric")


def _load_ensemble(refs, tests) -> Ensemble:
    if len(refs) != len(tests):
        raise ShapeError(f"{len(refs)} reference files but {len(tests)} test files")
    return Ensemble([io.read_embeddings(p) for p in refs], [io.read_embeddings(p) for p in tests])


def _run_config(args) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    flags = {k: v for k, v in vars(args).items() if k in names}
    return resolve(RunConfig(), args.config, flags)


def _print_table(header, rows) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))


def cmd_score(args) -> int:
    cfg = _run_config(args)
    ens = _load_ensemble(args.refs, args.tests)
    ens, _ = subsample_refs(ens, cfg.n_ref, cfg.seed)
    models = io.load_models(args.models) if args.models else None
    sv = score(ens, args.method, cfg, models)
    rows = [(j, io.fmt(v), sv.polarity.value) for j, v in enumerate(sv.values)]
    text = io.write_table(args.out, SCORE_HEADER, rows)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    return 0


def cmd_fit_mixture(args) -> int:
    cfg = _run_config(args)
    refs = [io.read_embeddings(p) for p in args.refs]
    # a reference-only ensemble: test rows are placeholders
    ens = Ensemble(refs, [r[:1] for r in refs])
    if cfg.normalize:
        ens = ens.normalized()
    models = fit_mixtures(ens, cfg, args.kind)
    io.save_models(models, args.out)
    logger.info("wrote %d %s model(s) to %s", len(models), args.kind or cfg.mixture, args.out)
    return 0


def cmd_reli(args) -> int:
    cfg = _run_config(args)
    ens = _load_ensemble(args.refs, args.tests)
    if cfg.normalize:
        ens = ens.normalized()
    ref_labels = io.read_labels(args.ref_labels)
    test_labels = io.read_labels(args.test_labels)
    num_classes = args.num_classes or int(max(ref_labels.max(), test_labels.max())) + 1
    reli = ground_truth(ens, ref_labels, test_labels, num_classes, cfg)
    if args.heads_out:
        tasks = ["all"] if cfg.multiclass else ovo_tasks(num_classes)
        heads = train_task_heads(ens, ref_labels, tasks, head_config(cfg), num_classes)
        io.save_models([h for t in tasks for h in heads[t]], args.heads_out)
    rows = [(j, io.fmt(v), reli.metric.value) for j, v in enumerate(reli.values)]
    text = io.write_table(args.out, RELI_HEADER, rows)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    return 0


def _read_scores(path) -> ScoreVector:
    rows = sorted(io.read_table(path), key=lambda r: int(r["point_index"]))
    pols = {r["polarity"] for r in rows}
    if len(pols) != 1:
        raise ReproError(f"{path}: mixed polarity column")
    return ScoreVector(np.array([float(r["score"]) for r in rows]), Polarity(pols.pop()), Path(path).stem)


def _read_reli(path) -> ReliabilityVector:
    rows = sorted(io.read_table(path), key=lambda r: int(r["point_index"]))
    metrics = {r["metric"] for r in rows}
    if len(metrics) != 1:
        raise ReproError(f"{path}: mixed metric column")
    return ReliabilityVector(np.array([float(r["reliability"]) for r in rows]), ReliMetric(metrics.pop()))


def cmd_eval(args) -> int:
    sv = _read_scores(args.scores)
    reli = _read_reli(args.reli)
    report = correlate(sv, reli, args.method or sv.name, config=(Path(args.scores).read_bytes(), Path(args.reli).read_bytes()))
    row = report.as_row()
    header = tuple(row)
    io.write_table(args.out, header, [tuple(row.values())]) if args.out else None
    _print_table(header, [tuple(row.values())])
    return 0


def cmd_rank(args) -> int:
    if len(args.scores) != len(args.reli):
        raise ShapeError("need one reliability file per score file")
    names = args.names or [Path(p).stem for p in args.scores]
    if len(names) != len(args.scores):
        raise ShapeError("need one name per model")
    ranking = rank_models([_read_scores(p) for p in args.scores], [_read_reli(p) for p in args.reli])
    pred_pos = {int(m): i for i, m in enumerate(ranking.predicted_order)}
    true_pos = {int(m): i for i, m in enumerate(ranking.true_order)}
    header = ("model", "mean_score", "mean_reliability", "predicted_position", "true_position",
              "tau", "tau_of_mean_ranks", "points_used")
    rows = [
        (names[m], io.fmt(ranking.mean_score[m]), io.fmt(ranking.mean_reliability[m]), pred_pos[m], true_pos[m],
         io.fmt(ranking.tau), io.fmt(ranking.tau_of_mean_ranks), ranking.points_used)
        for m in range(len(names))
    ]
    if args.out:
        io.write_table(args.out, header, rows)
    _print_table(header, rows)
    return 0


def cmd_synth(args) -> int:
    names = {f.name for f in fields(SynthConfig)}
    cfg = SynthConfig()
    if args.config:
        cfg = apply_overrides(cfg, load_kv_file(args.config), f"file {args.config}")
    flags = {k: v for k, v in vars(args).items() if k in names and v is not None}
    cfg = apply_overrides(cfg, flags, "flags")
    data = gen_clustered_ensemble(cfg)
    out = io.ensure_dir(args.out_dir)
    ext = "." + args.format
    for i, (r, t) in enumerate(zip(data.ensemble.refs, data.ensemble.tests)):
        io.write_embeddings(r, out / f"ref_{i}{ext}")
        io.write_embeddings(t, out / f"test_{i}{ext}")
    io.write_labels(data.ref_labels, out / "ref_labels.txt")
    io.write_labels(data.test_labels, out / "test_labels.txt")
    io.write_labels(data.ood_mask.astype(int), out / "test_ood.txt")
    logger.info("wrote %d-member ensemble to %s", cfg.M, out)
    return 0


def cmd_certify(args) -> int:
    ok = True
    ce = gen_counterexample(CounterexampleSpec(d=args.ce_dim, M=args.ce_members, variance_target=args.variance_target,
                                               seed=args.seed))
    ce_ok = ce.feature_variance >= args.variance_target and ce.prediction_variance <= 1e-12
    ok &= ce_ok
    print(f"counterexample: feature_variance={ce.feature_variance:.6g} (target {args.variance_target:g}) "
          f"prediction_variance={ce.prediction_variance:.3g} -> {'PASS' if ce_ok else 'FAIL'}")

    reports = theorem2_harness(HarnessConfig(trials=args.trials, d=args.dim, M=args.members, seed=args.seed))
    per_trial = len(reports) // args.trials
    trials_ok = sum(all(r.satisfied for r in reports[i * per_trial:(i + 1) * per_trial]) for i in range(args.trials))
    bound_ok = trials_ok == args.trials
    ok &= bound_ok
    worst = max(reports, key=lambda r: r.lhs - r.rhs)
    print(f"neighbor bound: {trials_ok}/{args.trials} trials satisfied "
          f"(worst lhs-rhs={worst.lhs - worst.rhs:.3g}) -> {'PASS' if bound_ok else 'FAIL'}")
    if args.out:
        header = ("test_row", "neighbor", "eps_nb", "sigma", "lipschitz", "lhs", "rhs", "satisfied")
        io.write_table(args.out, header, [
            (r.test_row, r.neighbor, io.fmt(r.eps_nb), io.fmt(r.sigma), io.fmt(r.lipschitz),
             io.fmt(r.lhs), io.fmt(r.rhs), int(r.satisfied)) for r in reports
        ])
    return 0 if ok else 1


def _add_run_flags(p, *, method=False, mixture=False, heads=False):
    p.add_argument("--config", help="key=value config file (flags take precedence)")
    p.add_argument("--normalize", action="store_const", const=True, default=None,
                   help="L2-normalize every row once at load")
    p.add_argument("--seed", type=int)
    if method:
        p.add_argument("--method", choices=METHODS, required=True)
        p.add_argument("--k", type=int, help="neighborhood size for nc (default 100)")
        p.add_argument("--dist-k", dest="dist_k", type=int, help="k for the dist score (default 1)")
        p.add_argument("--eps", type=float, help="use an eps-neighborhood instead of k-NN for nc")
        p.add_argument("--metric", choices=("euclidean", "cosine"))
        p.add_argument("--sim", choices=("jaccard", "overlap"))
        p.add_argument("--normalized-nc", dest="normalized_nc", action="store_const", const=True, default=None,
                       help="divide nc by the number of member pairs instead of M^2")
        p.add_argument("--n-ref", dest="n_ref", type=int, help="subsample this many reference rows")
    if mixture:
        p.add_argument("--c-mix", dest="c_mix", type=int)
        p.add_argument("--mixture", choices=("auto", "gmm", "vmf"))
        p.add_argument("--em-max-iter", dest="em_max_iter", type=int)
        p.add_argument("--em-tol", dest="em_tol", type=float)
    if heads:
        p.add_argument("--reli-metric", dest="reli_metric", choices=[m.value for m in ReliMetric])
        p.add_argument("--multiclass", action="store_const", const=True, default=None)
        p.add_argument("--head-step", dest="head_step", type=float)
        p.add_argument("--head-l2", dest="head_l2", type=float)
        p.add_argument("--head-epochs", dest="head_epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repreli", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="per-test-point reliability scores")
    p.add_argument("--refs", nargs="+", required=True, help="one reference matrix per member")
    p.add_argument("--tests", nargs="+", required=True, help="one test matrix per member")
    p.add_argument("--models", help="model blob from fit-mixture (ll only)")
    p.add_argument("--out", help="output CSV (stdout if omitted)")
    _add_run_flags(p, method=True, mixture=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit-mixture", help="fit one mixture per reference file")
    p.add_argument("--refs", nargs="+", required=True)
    p.add_argument("--kind", choices=("gmm", "vmf"))
    p.add_argument("--out", required=True)
    _add_run_flags(p, mixture=True)
    p.set_defaults(func=cmd_fit_mixture)

    p = sub.add_parser("reli", help="ground-truth reliability from downstream heads")
    p.add_argument("--refs", nargs="+", required=True)
    p.add_argument("--tests", nargs="+", required=True)
    p.add_argument("--ref-labels", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--heads-out", help="also write the trained heads as a model blob")
    p.add_argument("--out")
    _add_run_flags(p, heads=True)
    p.set_defaults(func=cmd_reli)

    p = sub.add_parser("eval", help="Kendall tau-b between a score CSV and a reliability CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--reli", required=True)
    p.add_argument("--method")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", help="rank models by score and by reliability")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--reli", nargs="+", required=True)
    p.add_argument("--names", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("synth", help="write a synthetic ensemble with labels")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("emb", "csv"), default="emb")
    for f in fields(SynthConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(f.default))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("certify", help="run both theorem harnesses")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--members", type=int, default=4)
    p.add_argument("--ce-dim", type=int, default=16)
    p.add_argument("--ce-members", type=int, default=4)
    p.add_argument("--variance-target", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV of per-point bound reports")
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ReproError, OSError) as exc:
        print(f"repreli {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

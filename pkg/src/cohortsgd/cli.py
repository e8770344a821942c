"""Command-line entry point: ``cohortsgd <command> [flags]``.

Every command writes plain TSV.  Reports go to ``<out>/<command>.tsv`` when
``--out`` is given and to standard output otherwise.  Exit status is 0 on
success, 1 on data or runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, synth
from .core import _fmt, load_dataset, load_model, save_dataset, save_model
from .errors import CohortError
from .sgd import TrainConfig, score, stability_report, train
from .stats import silhouette_chart

log = logging.getLogger("cohortsgd")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("COHORTSGD_THREADS")
        try:
            n = int(env) if env else (os.cpu_count() or 1)
        except ValueError:
            raise UsageError(f"COHORTSGD_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("--threads must be at least 1")
    return n


def _train_config(args, delta=None) -> TrainConfig:
    try:
        return TrainConfig(eta=args.eta, delta=args.delta if delta is None else delta,
                           seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(args, report: evaluation.ExperimentReport, command: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{command}.tsv"
        report.write(path)
        print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(report.to_tsv())


def _write_pairs(path, pairs) -> None:
    with open(path, "w") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{_fmt(b) if isinstance(b, float) else b}\n")


# -- commands ---------------------------------------------------------------

_GEN_FLAGS = ("n", "m", "q_z", "t", "positive_rate", "gamma", "signal", "z_signal",
              "pi_noise", "state_skew")


def cmd_synth(args) -> int:
    overrides = {k: getattr(args, k) for k in _GEN_FLAGS if getattr(args, k) is not None}
    overrides["seed"] = args.seed
    try:
        cfg = synth.preset(args.preset, **overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if not args.out:
        raise UsageError("synth needs --out DIR")
    ds = synth.generate(cfg)
    manifest = save_dataset(ds, args.out)
    print(f"manifest\t{manifest}")
    print(f"n\t{ds.n}")
    print(f"features\t{ds.X.n_cols}")
    print(f"states\t{ds.t}")
    print(f"positives\t{int(ds.y_true.sum())}")
    print(f"disclosed\t{int(ds.y.sum())}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    ds = load_dataset(args.data)
    model, l, trace = train(ds, cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.model) if args.model else out / "model.tsv"
    save_model(model, model_path)
    _write_pairs(out / "likelihood.tsv", enumerate(l.tolist()))
    with open(out / "trace.tsv", "w") as fh:
        fh.write("iteration\tobjective\n")
        for it, val in trace.accepted_steps:
            fh.write(f"{it}\t{_fmt(val)}\n")
        fh.write(f"# final\tcorr={_fmt(trace.final.corr)}\trecall={_fmt(trace.final.recall)}"
                 f"\tcombined={_fmt(trace.final.combined)}\n")
    print(f"objective\t{_fmt(trace.final.combined)}")
    print(f"accepted\t{len(trace.accepted_steps)}")
    print(f"model\t{model_path}")
    return 0


def cmd_score(args) -> int:
    ds = load_dataset(args.data)
    l = score(load_model(args.model), ds.X)
    lines = "".join(f"{i}\t{_fmt(v)}\n" for i, v in enumerate(l.tolist()))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scores.tsv").write_text(lines)
    else:
        sys.stdout.write(lines)
    return 0


def cmd_sweep(args) -> int:
    cfg = _train_config(args, delta=args.deltas[0])
    for d in args.deltas:
        _train_config(args, delta=d)
    if any(not 0.0 <= g <= 1.0 for g in args.gammas):
        raise UsageError("gammas must lie in [0, 1]")
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    n_jobs = _threads(args)
    ds = load_dataset(args.data)
    report = evaluation.sweep_experiment(ds, args.gammas, args.deltas, k=args.folds, cfg=cfg,
                                         n_jobs=n_jobs, with_baselines=not args.no_baselines)
    _emit(args, report, "sweep")
    return 0


def _proc_rows(curve):
    return [(float(x), float(y)) for x, y in curve.points]


def cmd_prescreen(args) -> int:
    cfg = _train_config(args)
    ds = load_dataset(args.data)
    res = evaluation.prescreen_pipeline(ds, args.theta, cfg, k=args.folds)
    base = evaluation.siu_baseline(ds, res.likelihood, cfg, k=args.folds)
    report = evaluation.ExperimentReport(
        "prescreen", {"theta": args.theta, "delta": cfg.delta, "eta": cfg.eta,
                      "seed": cfg.seed, "folds": args.folds})
    report.add_curve("proc pipeline", ["pfpr", "ptpr"], _proc_rows(res.curve))
    report.add_curve("proc siu", ["pfpr", "ptpr"], _proc_rows(base.curve))
    report.summary.update({
        "pauc_pipeline": res.curve.pauc,
        "pauc_siu": base.curve.pauc,
        "optimal_pauc": res.curve.optimal_pauc,
        "n_positive": int(res.slices.positives.size),
        "n_negative": int(res.slices.negatives.size),
        "lambda": res.slices.lam,
    })
    _emit(args, report, "prescreen")
    return 0


def cmd_incidence(args) -> int:
    cfg = _train_config(args)
    if any(not 0.0 <= f <= 1.0 for f in args.fractions):
        raise UsageError("fractions must lie in [0, 1]")
    ds = load_dataset(args.data)
    res = evaluation.incidence_curve(ds, cfg, args.fractions, theta=args.theta, k=args.folds)
    report = evaluation.ExperimentReport(
        "incidence", {"theta": args.theta, "delta": cfg.delta, "eta": cfg.eta, "seed": cfg.seed})
    report.add_curve("correlation", ["fraction", "rho", "p_value", "n_positive"],
                     [tuple(p) for p in res.points])
    best = max(res.points, key=lambda p: p.rho)
    report.summary.update({"peak_fraction": best.fraction, "peak_rho": best.rho,
                           "peak_p_value": best.p_value,
                           "excluded_states": ",".join(map(str, res.excluded_states)) or "none"})
    _emit(args, report, "incidence")
    return 0


def cmd_stability(args) -> int:
    cfg = _train_config(args)
    if args.runs < 2:
        raise UsageError("--runs must be at least 2")
    ds = load_dataset(args.data)
    rep = stability_report(ds, cfg, args.runs)
    report = evaluation.ExperimentReport(
        "stability", {"runs": args.runs, "delta": cfg.delta, "eta": cfg.eta, "seed": cfg.seed})
    rows = [(rep.seeds[i], rep.seeds[j], float(rep.pairwise_rho[i, j]))
            for i in range(args.runs) for j in range(i + 1, args.runs)]
    report.add_curve("pairwise", ["seed_a", "seed_b", "spearman_rho"], rows)
    report.summary.update({"min_rho": rep.min_rho, "mean_rho": float(np.mean([r[2] for r in rows])),
                           "agreement_top_percentile_jaccard": rep.agreement})
    _emit(args, report, "stability")
    return 0


def cmd_similarity(args) -> int:
    cfg = _train_config(args)
    if not 0.0 < args.top < 1.0:
        raise UsageError("--top must lie in (0, 1)")
    ds = load_dataset(args.data)
    res = evaluation.similarity_report(ds, cfg, top=args.top)
    report = evaluation.ExperimentReport(
        "similarity", {"delta": cfg.delta, "eta": cfg.eta, "seed": cfg.seed, "top": args.top})
    report.add_curve("cosine", ["pair", "mean_cosine"], [
        ("siu-siu", res.within_siu), ("siu-nonsiu", res.between),
        ("nonsiu-nonsiu", res.within_non_siu)])
    chart = silhouette_chart(res.silhouette, res.groups)
    report.add_curve("silhouette", ["position", "group", "silhouette"],
                     [(i, "siu" if g else "nonsiu", v) for i, (g, v) in enumerate(chart)])
    report.summary.update({"n_siu": res.n_siu, "n_nonsiu": res.n_non_siu,
                           "mean_silhouette": float(np.mean(res.silhouette))
                           if res.silhouette.size else float("nan")})
    _emit(args, report, "similarity")
    return 0


# -- parser -----------------------------------------------------------------

def _global_flags(parser, suppress: bool) -> None:
    def dflt(v):
        return argparse.SUPPRESS if suppress else v
    parser.add_argument("--seed", type=int, default=dflt(0), help="random seed (default 0)")
    parser.add_argument("--threads", type=int, default=dflt(None),
                        help="worker processes (default: $COHORTSGD_THREADS or all cores)")
    parser.add_argument("--out", default=dflt(None), help="output directory")
    parser.add_argument("--verbose", action="store_true", default=dflt(False),
                        help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the command name.  The
    # subcommand copies are suppressed unless given, so they never reset a
    # value that appeared before the command.
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="cohortsgd", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def optimizer_flags(sp, delta=0.9):
        sp.add_argument("--data", required=True, help="dataset manifest")
        sp.add_argument("--delta", type=float, default=delta, help=f"learning percentile (default {delta})")
        sp.add_argument("--eta", type=int, default=30_000, help="iterations (default 30000)")

    sp = add("synth", cmd_synth, "generate a synthetic dataset")
    sp.add_argument("--preset", default="strong", choices=synth.preset_names())
    for name, typ in (("n", int), ("m", int), ("q_z", int), ("t", int),
                      ("positive_rate", float), ("gamma", float), ("signal", float),
                      ("z_signal", float), ("pi_noise", float), ("state_skew", float)):
        sp.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)

    sp = add("train", cmd_train, "fit a hyperplane")
    optimizer_flags(sp)
    sp.add_argument("--model", default=None, help="model path (default OUT/model.tsv)")

    sp = add("score", cmd_score, "score a dataset with a saved model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", required=True)

    sp = add("sweep", cmd_sweep, "cross-validated gamma x delta sweep with baselines")
    sp.add_argument("--data", required=True)
    sp.add_argument("--gammas", type=_floats, default=[0.1, 0.25, 0.5, 0.75])
    sp.add_argument("--deltas", type=_floats, default=[0.8, 0.85, 0.9, 0.95])
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--eta", type=int, default=30_000)
    sp.add_argument("--no-baselines", action="store_true")

    sp = add("prescreen", cmd_prescreen, "pre-event classifier scored by probabilistic ROC")
    optimizer_flags(sp)
    sp.add_argument("--theta", type=float, default=0.95)
    sp.add_argument("--folds", type=int, default=5)

    sp = add("incidence", cmd_incidence, "per-state incidence correlation curve")
    optimizer_flags(sp)
    sp.add_argument("--fractions", type=_floats, default=[0.05, 0.1, 0.2, 0.3, 0.5, 1.0])
    sp.add_argument("--theta", type=float, default=0.95)
    sp.add_argument("--folds", type=int, default=5)

    sp = add("stability", cmd_stability, "inter-run rank correlation and agreement")
    optimizer_flags(sp)
    sp.add_argument("--runs", type=int, default=10)

    sp = add("similarity", cmd_similarity, "cosine similarity and silhouette of top-ranked rows")
    optimizer_flags(sp, delta=0.95)
    sp.add_argument("--top", type=float, default=0.10)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cohortsgd: error: {exc}", file=sys.stderr)
        return 2
    except (CohortError, OSError, ValueError) as exc:
        print(f"cohortsgd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver for reproducible model-choice experiments.

Subcommands: ``simulate`` (reference-table generation), ``train``
(forest training + persistence), ``predict`` (model selection and
posterior probability for one observed dataset), ``benchmark`` (the
method-comparison table against the exact oracle), ``diagnose``
(practitioner diagnostics), and ``replay`` (re-run a recorded manifest).

Every command takes a single ``--seed``; all internal randomness is
derived from it by labeled hashing (see abcforest.seeding), so reruns and
``--threads`` changes reproduce outputs byte-for-byte. Each command
writes a RunManifest JSON beside its outputs sufficient to replay it.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, benchmark, data, ma, model_choice, report
from . import forest as forest_mod
from .errors import DegenerateInputError, NumericError, TableFormatError
from .forest import ForestConfig
from .seeding import derive_seed

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_manifest(path: Path, command: str, argv: list[str], seed: int | None,
                    inputs: list[str], outputs: list[str], t0: float) -> None:
    manifest = {
        "tool": "abcforest",
        "version": __version__,
        "command": command,
        "argv": argv,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "duration_s": round(time.time() - t0, 3),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _auto_int(label: str):
    def parse(text: str):
        if text == "auto":
            return None
        try:
            return int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"{label} must be an integer or 'auto', got {text!r}")
    return parse


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


# ---- simulate ----------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    t0 = time.time()
    config = ma.ToyConfig(series_length=args.length, n_lags=args.lags)
    table = ma.generate_table(args.n, config, args.seed, kind=args.summaries)
    data.save_table(table, args.out)
    _write_manifest(Path(str(args.out) + ".manifest.json"), "simulate", argv,
                    args.seed, [], [str(args.out)], t0)
    print(f"wrote {len(table)} records ({table.n_summaries} summaries) to {args.out}")
    return 0


# ---- train -------------------------------------------------------------------------


def _print_prior_error(rep) -> None:
    print(f"{rep.source} error rate: {rep.rate * 100:.2f}%")
    print("confusion matrix (rows: true model, columns: predicted):")
    for i, row in enumerate(rep.confusion, start=1):
        print(f"  model {i}: " + " ".join(f"{v:7d}" for v in row))


def cmd_train(args, argv) -> int:
    t0 = time.time()
    table = data.load_table(args.table)
    n_boot = args.nboot
    if args.nboot_tenth:
        n_boot = max(1, len(table) // 10)
    config = ForestConfig(n_tree=args.trees, n_boot=n_boot, n_try=args.ntry,
                          seed=args.seed, sampling=args.sampling)
    clf = model_choice.fit(table, config, threads=args.threads)
    forest_mod.save_forest(clf.forest, args.out)
    _print_prior_error(model_choice.prior_error_rate(clf))
    _write_manifest(Path(str(args.out) + ".manifest.json"), "train", argv,
                    args.seed, [str(args.table)], [str(args.out)], t0)
    print(f"wrote forest ({args.trees} trees) to {args.out}")
    return 0


# ---- predict -----------------------------------------------------------------------


def cmd_predict(args, argv) -> int:
    t0 = time.time()
    forest = forest_mod.load_forest(args.model)
    table = data.load_table(args.table)
    clf = model_choice.attach(forest, table)
    observed = data.load_observed(args.observed, table.summary_names)
    est = model_choice.posterior_probability(clf, observed, threads=args.threads)
    print(f"selected model: {est.selected_model}")
    votes = ", ".join(f"model {m + 1}: {int(c)}"
                      for m, c in enumerate(est.votes.counts))
    print(f"votes: {votes}")
    print(f"posterior probability of the selected model: {est.posterior_prob!r}")
    if args.out:
        header = (["selected_model", "posterior_prob"]
                  + [f"votes_model_{m + 1}" for m in range(clf.n_models)])
        row = [est.selected_model, est.posterior_prob] + [int(c) for c in est.votes.counts]
        report.write_csv(args.out, header, [row])
        _write_manifest(Path(str(args.out) + ".manifest.json"), "predict", argv,
                        None, [str(args.model), str(args.table), str(args.observed)],
                        [str(args.out)], t0)
    return 0


# ---- benchmark ---------------------------------------------------------------------


def cmd_benchmark(args, argv) -> int:
    t0 = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = ma.ToyConfig(series_length=args.length, n_lags=args.lags)
    result = benchmark.run_benchmark(
        n_train=args.train, n_valid=args.valid, n_test=args.test, config=config,
        seed=args.seed, n_tree=args.trees, threads=args.threads,
        extra_methods=args.extra_methods)
    report.write_csv(out / "benchmark.csv", ["method", "error", "detail"],
                     [(r.method, r.error, r.detail) for r in result.rows])
    report.save_method_errors(out / "benchmark.svg",
                              [r.method for r in result.rows],
                              [r.error for r in result.rows])
    report.write_csv(out / "rf_confusion.csv",
                     ["true_model"] + [f"predicted_{m + 1}"
                                       for m in range(result.rf_confusion.shape[1])],
                     [(i + 1, *row) for i, row in enumerate(result.rf_confusion)])
    report.write_csv(out / "rf_oob.csv", ["oob_error", "held_out_error"],
                     [(result.rf_oob_error, result.rf_test_error)])
    for row in result.rows:
        print(f"{row.method:24s} {row.error * 100:6.2f}%  {row.detail}")
    print(f"rf out-of-bag vs held-out: {result.rf_oob_error * 100:.2f}% "
          f"vs {result.rf_test_error * 100:.2f}%")
    _write_manifest(out / "manifest.json", "benchmark", argv, args.seed, [],
                    sorted(p.name for p in out.iterdir()
                           if p.name != "manifest.json"), t0)
    return 0


# ---- diagnose ----------------------------------------------------------------------


def cmd_diagnose(args, argv) -> int:
    t0 = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    forest = forest_mod.load_forest(args.model)
    table = data.load_table(args.table)
    clf = model_choice.attach(forest, table)
    observed = data.load_observed(args.observed, table.summary_names)

    curve = clf.forest.error_vs_trees()
    report.write_csv(out / "error_vs_trees.csv", ["n_trees", "oob_error"],
                     list(enumerate(curve, start=1)))
    report.save_error_curve(out / "error_vs_trees.svg", curve)

    full_err, sub_err = model_choice.subset_stability(
        table, args.subset_fraction, forest.config, threads=args.threads)
    n_sub = max(2, int(round(args.subset_fraction * len(table))))
    report.write_csv(out / "subset_stability.csv",
                     ["scope", "n_records", "oob_error"],
                     [("full", len(table), full_err), ("subset", n_sub, sub_err)])

    imp = clf.forest.importance()
    report.write_csv(out / "importance.csv", ["summary", "mean_impurity_decrease"],
                     imp.as_rows())
    names = imp.feature_names or tuple(f"f{j}" for j in range(imp.values.shape[0]))
    report.save_importance(out / "importance.svg", names, imp.values)

    proj = model_choice.compatibility_projection(table, observed)
    rows = [("simulated", int(m), *coord)
            for m, coord in zip(proj.models, proj.coords)]
    rows.append(("observed", 0, *proj.observed_coords))
    report.write_csv(out / "lda_projection.csv",
                     ["kind", "model", *proj.axis_names], rows)
    report.save_projection(out / "lda_projection.svg", proj.coords,
                           proj.observed_coords, proj.models, proj.axis_names)

    config = ma.ToyConfig(series_length=args.length)
    disc = ma.discrepancy_experiment(args.disc_n, args.disc_pool, config,
                                     derive_seed(args.seed, "diagnose"),
                                     threads=args.threads,
                                     kind=ma.summary_kind_of(table))
    report.write_csv(out / "discrepancy.csv",
                     ["exact_posterior_ma2", "summary_posterior_ma2"],
                     list(zip(disc.exact_p2, disc.summary_p2)))
    report.save_discrepancy_scatter(out / "discrepancy.svg", disc.exact_p2,
                                    disc.summary_p2, disc.models)

    print(f"final out-of-bag error: {curve[-1] * 100:.2f}%")
    print(f"subset stability: full {full_err * 100:.2f}% vs "
          f"{args.subset_fraction:.0%} subset {sub_err * 100:.2f}%")
    print(f"artifacts written to {out}")
    _write_manifest(out / "manifest.json", "diagnose", argv, args.seed,
                    [str(args.model), str(args.table), str(args.observed)],
                    sorted(p.name for p in out.iterdir()
                           if p.name != "manifest.json"), t0)
    return 0


# ---- replay ------------------------------------------------------------------------


def cmd_replay(args, argv) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    stored = list(manifest["argv"])
    if args.out:
        if "--out" not in stored:
            raise ValueError("manifest argv carries no --out to override")
        stored[stored.index("--out") + 1] = args.out
    print(f"replaying: abcforest {' '.join(stored)}")
    return main(stored)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abcforest",
        description="Likelihood-free Bayesian model choice with random forests")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a reference table")
    p.add_argument("--model", choices=["toy-ma"], required=True,
                   help="generative benchmark to draw from")
    p.add_argument("--n", type=_positive_int, required=True,
                   help="number of records")
    p.add_argument("--lags", type=_positive_int, default=7,
                   help="number of autocorrelation summaries")
    p.add_argument("--length", type=_positive_int, default=100,
                   help="series length")
    p.add_argument("--summaries", choices=[ma.AUTOCORRELATION, ma.AUTOCOVARIANCE],
                   default=ma.AUTOCORRELATION,
                   help="summary flavor (autocovariance keeps the variance "
                        "signal; the benchmark command uses it)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train and persist a model-choice forest")
    p.add_argument("--table", required=True, help="training reference table (CSV)")
    p.add_argument("--trees", type=_positive_int, default=500)
    p.add_argument("--ntry", type=_auto_int("--ntry"), default=None,
                   help="features per node; 'auto' = floor(sqrt(d))")
    p.add_argument("--nboot", type=_auto_int("--nboot"), default=None,
                   help="per-tree sample size; 'auto' = N")
    p.add_argument("--nboot-tenth", action="store_true",
                   help="use N/10 per-tree samples (low-dimension option)")
    p.add_argument("--sampling", choices=["bootstrap", "subsample"],
                   default="bootstrap")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", required=True, help="output model path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict",
                       help="select a model and estimate its posterior probability")
    p.add_argument("--model", required=True, help="persisted forest")
    p.add_argument("--table", required=True, help="the forest's training table")
    p.add_argument("--observed", required=True,
                   help="CSV holding the observed summary row")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", default=None, help="optional prediction CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark",
                       help="compare every classifier against the exact oracle")
    p.add_argument("--train", type=_positive_int, default=10_000)
    p.add_argument("--valid", type=_positive_int, default=10_000)
    p.add_argument("--test", type=_positive_int, default=10_000)
    p.add_argument("--lags", type=_positive_int, default=7)
    p.add_argument("--length", type=_positive_int, default=100)
    p.add_argument("--trees", type=_positive_int, default=500)
    p.add_argument("--extra-methods", action="store_true",
                   help="also calibrate knn and local logit (slow)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("diagnose", help="emit practitioner diagnostics")
    p.add_argument("--model", required=True, help="persisted forest")
    p.add_argument("--table", required=True, help="the forest's training table")
    p.add_argument("--observed", required=True,
                   help="CSV holding the observed summary row")
    p.add_argument("--subset-fraction", type=float, default=0.8)
    p.add_argument("--disc-n", type=_positive_int, default=1000,
                   help="series count for the discrepancy scatter")
    p.add_argument("--disc-pool", type=_positive_int, default=200_000,
                   help="pool size for the summary-based posterior")
    p.add_argument("--length", type=_positive_int, default=100,
                   help="series length for the discrepancy experiment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", help="manifest JSON written by a previous run")
    p.add_argument("--out", default=None, help="override the recorded --out")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, list(argv))
    except (TableFormatError, DegenerateInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``smiselect <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from .datasets import (SplitSpec, SyntheticConfig, budget_constraint, dominant_label,
                       feature_matrix, generate_synthetic, load_manifest, random_select,
                       report, save_manifest, skyline_select, split)
from .exceptions import DataError, NumericalDegeneracyError
from .experiments import SelectionTask, budget_sweep
from .features import MfccConfig, featurize_manifest
from .kernel import KernelConfig, build_kernel, dump_kernel
from .optimizer import GreedyConfig, brute_force_select, greedy_select
from .smi import SmiKind

logger = logging.getLogger("smiselect")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
VARIANT_FLAGS = {"plain": "plain_gain", "per-cost": "gain_per_cost"}
# keys never echoed into reports (they do not affect outputs)
_NOT_ECHOED = {"func", "config", "verbose", "quiet"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _gamma(text):
    if text == "median":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be 'median' or a positive number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return value


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _budget_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("budgets must be comma-separated numbers") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("budgets must be positive")
    return values


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _require_inputs(*paths):
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(f"input not found: {p}")


def _check_distinct_outputs(inputs, outputs):
    ins = {os.path.realpath(p) for p in inputs if p}
    for p in outputs:
        if p and p != "-" and os.path.realpath(p) in ins:
            raise UsageError(f"output {p} would overwrite an input")


def _summary(rep, out):
    lines = [f"{rep.function}: selected {rep.num_selected} utterances, "
             f"{rep.total_cost_s:.1f}s of {rep.budget_s:.1f}s budget "
             f"({100 * rep.utilization:.1f}%)"]
    if rep.objective_value == rep.objective_value:  # not nan
        lines.append(f"  objective value: {rep.objective_value:.6g}")
    for name in ("speaker", "accent"):
        p = getattr(rep, f"purity_by_{name}")
        if p is not None:
            lines.append(f"  {name} purity vs {getattr(rep, f'target_label_{name}')}: {p:.3f}")
    for w in rep.warnings:
        lines.append(f"  warning: {w}")
    out.write("\n".join(lines) + "\n")


# -- subcommands -------------------------------------------------------------

def cmd_featurize(args):
    _require_inputs(args.manifest)
    _check_distinct_outputs([args.manifest], [args.out])
    cfg = MfccConfig(frame_length_ms=args.frame_ms, frame_hop_ms=args.hop_ms,
                     preemphasis_coeff=args.preemph, num_mel_filters=args.num_filters,
                     num_cepstra=args.num_ceps, fft_size=args.fft_size,
                     delta_window=args.delta_window, mel_low_hz=args.low_hz,
                     mel_high_hz=args.high_hz)
    records = load_manifest(args.manifest)
    out = featurize_manifest(records, cfg, n_jobs=args.jobs)
    save_manifest(out, args.out)
    print(f"featurized {len(out)} records -> {args.out}")
    return EXIT_OK


def _kernel_cfg(args):
    return KernelConfig(gamma=args.gamma, standardize=args.standardize,
                        regularization_eps=args.eps, seed=args.seed)


def cmd_select(args):
    _require_inputs(args.ground, args.target)
    _check_distinct_outputs([args.ground, args.target], [args.out, args.report])
    ground, target = load_manifest(args.ground), load_manifest(args.target)
    if not ground:
        raise DataError("ground manifest is empty")
    kind = SmiKind.parse(args.function)
    kernel = build_kernel(feature_matrix(ground), feature_matrix(target), _kernel_cfg(args),
                          need_ground_ground=kind is SmiKind.LOGDMI)
    if args.dump_kernel:
        dump_kernel(kernel, args.dump_kernel)
    constraint = budget_constraint(ground, args.budget_s)
    if args.oracle:
        sel = brute_force_select(kind, kernel, constraint, args.eps)
    else:
        cfg = GreedyConfig(variant=VARIANT_FLAGS[args.variant], lazy=args.lazy,
                           min_gain=args.min_gain, eps=args.eps)
        sel = greedy_select(kind, kernel, constraint, cfg)
    rep = report(sel, ground, target, config=_echo(args))
    rep.config["gamma_resolved"] = kernel.gamma
    save_manifest([ground[i] for i in sel.selected], args.out)
    _write_json(rep.to_dict(), args.report)
    _summary(rep, sys.stdout if args.report not in (None, "-") else sys.stderr)
    return EXIT_OK


def cmd_baseline(args):
    _require_inputs(args.ground, args.target)
    _check_distinct_outputs([args.ground, args.target], [args.out, args.report])
    ground = load_manifest(args.ground)
    target = load_manifest(args.target) if args.target else []
    constraint = budget_constraint(ground, args.budget_s)
    if args.mode == "random":
        sel = random_select(ground, constraint, seed=args.seed)
    else:
        label = args.label or dominant_label(target, args.label_field)
        if label is None:
            raise UsageError("skyline needs --label or a target manifest with labels")
        sel = skyline_select(ground, label, args.label_field, constraint, seed=args.seed)
    rep = report(sel, ground, target, config=_echo(args))
    save_manifest([ground[i] for i in sel.selected], args.out)
    _write_json(rep.to_dict(), args.report)
    _summary(rep, sys.stdout if args.report not in (None, "-") else sys.stderr)
    return EXIT_OK


def cmd_synth(args):
    cfg = SyntheticConfig(num_clusters=args.clusters, points_per_cluster=args.per_cluster,
                          dim=args.dim, cluster_separation=args.separation,
                          duration_range=(args.min_duration, args.max_duration),
                          speakers_per_cluster=args.speakers_per_cluster,
                          speaker_spread=args.speaker_spread, seed=args.seed)
    records = generate_synthetic(cfg)
    save_manifest(records, args.out)
    print(f"wrote {len(records)} synthetic records -> {args.out}")
    return EXIT_OK


def cmd_split(args):
    _require_inputs(args.manifest)
    spec = SplitSpec(ground_fraction=args.ground_fraction, target_size=args.target_size,
                     test_dev_ratio=(args.test_parts, args.dev_parts), seed=args.seed,
                     target_label=args.target_label, label_field=args.label_field)
    parts = split(load_manifest(args.manifest), spec)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, recs in zip(("ground", "target", "dev", "test"), parts):
        path = os.path.join(args.out_dir, f"{name}.jsonl")
        _check_distinct_outputs([args.manifest], [path])
        save_manifest(recs, path)
        print(f"{name}: {len(recs)} records -> {path}")
    return EXIT_OK


def cmd_sweep(args):
    _require_inputs(args.ground, args.target)
    ground, target = load_manifest(args.ground), load_manifest(args.target)
    kinds = [SmiKind.parse(k).value for k in args.functions.split(",") if k.strip()]
    kernel = build_kernel(feature_matrix(ground), feature_matrix(target), _kernel_cfg(args),
                          need_ground_ground=SmiKind.LOGDMI.value in kinds)
    task = SelectionTask(ground, target, kernel, args.label_field)
    cfg = GreedyConfig(variant=VARIANT_FLAGS[args.variant], lazy=args.lazy, eps=args.eps)
    os.makedirs(args.out_dir, exist_ok=True)
    echo = _echo(args)
    echo["gamma_resolved"] = kernel.gamma

    for budget in args.budgets:
        constraint = budget_constraint(ground, budget)
        runs = [(k, greedy_select(k, kernel, constraint, cfg)) for k in kinds]
        runs.append(("random", random_select(ground, constraint, seed=args.seed)))
        for method, sel in runs:
            rep = report(sel, ground, target, config=dict(echo, budget_s=budget))
            rep.function = method
            _write_json(rep.to_dict(), os.path.join(args.out_dir, f"{method}_{budget:g}.json"))

    rows = budget_sweep(task, args.budgets, kinds, cfg, random_seed=args.seed)
    table = os.path.join(args.out_dir, "sweep.csv")
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    _write_json({"config": echo, "rows": rows}, os.path.join(args.out_dir, "sweep.json"))
    for row in rows:
        pur = "n/a" if row["purity"] is None else f"{row['purity']:.3f}"
        print(f"{row['method']:>7} B={row['budget_s']:>7g}s n={row['num_selected']:>4} "
              f"purity={pur} matched={row['matched_s']:.1f}s")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_kernel_flags(p):
    p.add_argument("--gamma", type=_gamma, default="median",
                   help="kernel bandwidth: 'median' heuristic or a positive float")
    p.add_argument("--standardize", dest="standardize", action="store_true", default=False,
                   help="z-score each feature dimension before the kernel")
    p.add_argument("--no-standardize", dest="standardize", action="store_false",
                   help="use features as given (default)")
    p.add_argument("--eps", type=_positive, default=1e-6,
                   help="diagonal regularization for log-determinants")
    p.add_argument("--variant", choices=sorted(VARIANT_FLAGS), default="plain",
                   help="greedy score: raw gain or gain per second")
    p.add_argument("--lazy", action="store_true", help="lazy (priority-queue) greedy")


def build_parser():
    parser = _Parser(prog="smiselect", description=__doc__.splitlines()[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("featurize", cmd_featurize, "compute 39-dim MFCC vectors for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-ms", type=_positive, default=25.0)
    p.add_argument("--hop-ms", type=_positive, default=10.0)
    p.add_argument("--preemph", type=float, default=0.97)
    p.add_argument("--num-filters", type=int, default=26)
    p.add_argument("--num-ceps", type=int, default=13)
    p.add_argument("--fft-size", type=int, default=None)
    p.add_argument("--delta-window", type=int, default=2)
    p.add_argument("--low-hz", type=float, default=0.0)
    p.add_argument("--high-hz", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: $SMISELECT_NUM_THREADS or 1)")

    p = add("select", cmd_select, "budgeted targeted selection with an SMI function")
    p.add_argument("--ground", default=None)
    p.add_argument("--target", default=None)
    p.add_argument("--budget-s", type=_positive, default=360.0)
    p.add_argument("--function", choices=[k.value for k in SmiKind], default="flmi")
    _add_kernel_flags(p)
    p.add_argument("--min-gain", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", action="store_true",
                   help="exhaustive search (ground sets of at most 20 items)")
    p.add_argument("--dump-kernel", default=None, help="write the kernel blocks to this file")
    p.add_argument("--out", default=None, help="selected records (manifest); required")
    p.add_argument("--report", default="-", help="JSON report path ('-' for stdout)")
    p.add_argument("--config", default=None,
                   help="report whose config echo supplies defaults for this run")

    p = add("baseline", cmd_baseline, "random or skyline (label-oracle) selection")
    p.add_argument("--mode", choices=["random", "skyline"], default="random")
    p.add_argument("--ground", default=None)
    p.add_argument("--target", default=None, help="target manifest (for purity and labels)")
    p.add_argument("--label-field", choices=["speaker", "accent"], default="speaker")
    p.add_argument("--label", default=None,
                   help="skyline label (default: dominant label of the target)")
    p.add_argument("--budget-s", type=_positive, default=360.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="selected records (manifest); required")
    p.add_argument("--report", default="-")
    p.add_argument("--config", default=None)

    p = add("synth", cmd_synth, "write a synthetic clustered manifest")
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--per-cluster", type=int, default=200)
    p.add_argument("--dim", type=int, default=39)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--speakers-per-cluster", type=int, default=1)
    p.add_argument("--speaker-spread", type=float, default=None)
    p.add_argument("--min-duration", type=_positive, default=2.0)
    p.add_argument("--max-duration", type=_positive, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "split a manifest into ground/target/dev/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ground-fraction", type=float, default=0.70)
    p.add_argument("--target-size", type=int, default=10)
    p.add_argument("--test-parts", type=int, default=27)
    p.add_argument("--dev-parts", type=int, default=3)
    p.add_argument("--target-label", default=None)
    p.add_argument("--label-field", choices=["speaker", "accent"], default="speaker")
    p.add_argument("--seed", type=int, default=0)

    p = add("sweep", cmd_sweep, "selection reports over a list of budgets")
    p.add_argument("--ground", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--budgets", type=_budget_list, required=True,
                   help="comma-separated budgets in seconds")
    p.add_argument("--functions", default="flmi,gcmi,logdmi")
    p.add_argument("--label-field", choices=["speaker", "accent"], default="speaker")
    _add_kernel_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path, encoding="utf-8") as fh:
        echo = json.load(fh)
    echo = echo.get("config", echo)
    if echo.get("command") not in (None, args.command):
        raise UsageError(f"{path} echoes a '{echo.get('command')}' run, not '{args.command}'")
    known = set(vars(args))
    defaults = {k: v for k, v in echo.items() if k in known and k not in _NOT_ECHOED}
    # re-parse so flags given explicitly on this command line still win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


_REQUIRED = {"select": ("ground", "target", "out"), "baseline": ("ground", "out")}


def _check_required(args):
    missing = [f"--{name}" for name in _REQUIRED.get(args.command, ())
               if getattr(args, name) is None]
    if missing:
        raise UsageError(f"missing required argument(s): {', '.join(missing)}")


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        _check_required(args)
    except UsageError as exc:
        print(f"smiselect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"smiselect: cannot read --config: {exc}", file=sys.stderr)
        return EXIT_DATA
    level = logging.WARNING - 10 * args.verbose if not args.quiet else logging.ERROR
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"smiselect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalDegeneracyError as exc:
        print(f"smiselect: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        print(f"smiselect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

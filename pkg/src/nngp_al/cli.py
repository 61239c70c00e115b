"""Command-line front end.

Verbs: run (execute strategy x seed experiments), compare (summarize run
directories), profile (Dolan-More curves across strategies), plot (learning
curves from curves.csv), inspect (validate configs, summarize records).

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import harness, reporting
from .errors import UsageError

ENV_SEED = "NNGP_AL_SEED"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nngp-al", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="execute all (strategy x seed) runs in a config")
    run_p.add_argument("-c", "--config", required=True)
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config value (repeatable)")
    run_p.add_argument("-o", "--out", default="out", help="output directory")
    run_p.add_argument("--force", action="store_true", help="overwrite existing run records")
    run_p.add_argument("--workers", type=int, default=1, help="parallel run workers")

    compare_p = sub.add_parser("compare", help="summarize final metrics across run dirs")
    compare_p.add_argument("run_dirs", nargs="+")
    compare_p.add_argument("--metric", choices=reporting.METRICS, default="rmse")
    compare_p.add_argument("-o", "--out", default=None, help="write compare.csv here")

    profile_p = sub.add_parser("profile", help="Dolan-More profile across strategies")
    profile_p.add_argument("run_dirs", nargs="*")
    profile_p.add_argument("--table", default=None,
                           help="CSV error table (header = algorithms, row = problem)")
    profile_p.add_argument("--metric", choices=reporting.METRICS, default="rmse")
    profile_p.add_argument("--aggregate", choices=("median", "mean", "none"), default="median",
                           help="how to fold seeds into problems")
    profile_p.add_argument("-o", "--out", default="out")

    plot_p = sub.add_parser("plot", help="render learning curves from curves.csv")
    plot_p.add_argument("curves", help="path to curves.csv")
    plot_p.add_argument("--metric", default="rmse")
    plot_p.add_argument("--aggregate", choices=("median", "mean"), default="median")
    plot_p.add_argument("-o", "--out", default=None, help="output SVG path")

    inspect_p = sub.add_parser("inspect", help="validate a config or summarize run records")
    inspect_p.add_argument("path", help="config JSON, run record .jsonl, or a run directory")

    return parser


def _execute_run(run_cfg, path_str, record_timings):
    record = harness.run_active_learning(run_cfg)
    path = Path(path_str)
    tmp = path.with_name(path.name + ".tmp")
    harness.write_record(record, tmp, record_timings)
    os.replace(tmp, path)
    return record


def cmd_run(args) -> int:
    cfg = config_mod.load_config(args.config, args.overrides)
    seeds = cfg.loop.seeds
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        seeds = (int(env_seed),)

    out_root = Path(args.out)
    jobs = []
    for strategy in cfg.acquisition.strategies:
        run_dir = out_root / "runs" / f"{cfg.output.name}-{strategy.value}"
        for seed in seeds:
            jobs.append((config_mod.RunConfig(cfg, strategy, seed), run_dir / f"{seed}.jsonl"))

    existing = [str(path) for _, path in jobs if path.exists()]
    if existing and not args.force:
        print(f"refusing to overwrite {len(existing)} existing run record(s), "
              f"e.g. {existing[0]} (use --force)", file=sys.stderr)
        return 1

    for _, path in jobs:
        path.parent.mkdir(parents=True, exist_ok=True)

    records = []
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_execute_run, rc, str(path), cfg.output.record_timings)
                       for rc, path in jobs]
            records = [f.result() for f in futures]
    else:
        records = [_execute_run(rc, str(path), cfg.output.record_timings)
                   for rc, path in jobs]

    curve_rows = []
    for (run_cfg, path), record in zip(jobs, records):
        curve_rows.extend(harness.record_curve_rows(record))
        last = record.entries[-1] if record.entries else {}
        status = " [ABORTED]" if record.aborted else ""
        print(f"run {record.strategy} seed={record.seed}: "
              f"{len(record.entries)} entries, final rmse={last.get('rmse', float('nan')):.6g}"
              f"{status} -> {path}")
    reporting.write_curves_csv(curve_rows, out_root / "curves.csv")
    print(f"curves -> {out_root / 'curves.csv'}")
    return 0


def _records_in(paths) -> list[harness.RunRecord]:
    records = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files = sorted(path.rglob("*.jsonl"))
            if not files:
                raise UsageError(f"no run records under {path}")
            records.extend(harness.read_record(f) for f in files)
        elif path.suffix == ".jsonl":
            records.append(harness.read_record(path))
        else:
            raise UsageError(f"{path} is neither a directory nor a .jsonl record")
    return records


def _problem_name(record: harness.RunRecord) -> str:
    cfg = record.config
    name = cfg.get("output", {}).get("name")
    if name:
        return name
    return cfg.get("oracle", {}).get("name", "problem")


def _final_errors(records, metric):
    """(problem, strategy) -> list of per-seed final errors."""
    table = {}
    for record in records:
        if not record.entries:
            continue
        key = (_problem_name(record), record.strategy)
        table.setdefault(key, []).append(record.entries[-1][metric])
    return table


def cmd_compare(args) -> int:
    records = _records_in(args.run_dirs)
    table = _final_errors(records, args.metric)
    strategies = sorted({s for _, s in table})
    problems = sorted({p for p, _ in table})
    print(f"median final {args.metric} over seeds:")
    header = ["problem", *strategies]
    print("  " + "  ".join(f"{h:>14}" for h in header))
    rows = []
    for problem in problems:
        cells = [problem]
        for strategy in strategies:
            values = table.get((problem, strategy))
            cells.append(f"{np.median(values):.6g}" if values else "-")
        rows.append(cells)
        print("  " + "  ".join(f"{c:>14}" for c in cells))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        import csv as _csv

        with open(out_dir / "compare.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"table -> {out_dir / 'compare.csv'}")
    return 0


def _errors_from_table_csv(path):
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        rows = [row for row in reader if row]
    if len(rows) < 2:
        raise UsageError(f"{path} must have a header and at least one problem row")
    names = tuple(rows[0])
    errors = np.asarray([[float(v) for v in row] for row in rows[1:]])
    return errors, names


def cmd_profile(args) -> int:
    if args.table:
        errors, names = _errors_from_table_csv(args.table)
    else:
        if not args.run_dirs:
            raise UsageError("profile needs run directories or --table")
        records = _records_in(args.run_dirs)
        table = _final_errors(records, args.metric)
        names = tuple(sorted({s for _, s in table}))
        problems = sorted({p for p, _ in table})
        if args.aggregate == "none":
            # every (problem, seed) pair is its own problem row
            seeds_by_problem = {
                p: sorted({r.seed for r in records if _problem_name(r) == p})
                for p in problems
            }
            by_seed = {}
            for record in records:
                if record.entries:
                    key = (_problem_name(record), record.seed)
                    by_seed.setdefault(key, {})[record.strategy] = record.entries[-1][args.metric]
            rows, labels = [], []
            for p in problems:
                for seed in seeds_by_problem[p]:
                    cells = by_seed.get((p, seed), {})
                    if set(names) <= set(cells):
                        rows.append([cells[s] for s in names])
                        labels.append(f"{p}/{seed}")
            errors = np.asarray(rows)
        else:
            reduce = np.median if args.aggregate == "median" else np.mean
            rows = []
            for p in problems:
                if not all((p, s) in table for s in names):
                    raise UsageError(f"problem {p!r} lacks runs for some strategies")
                rows.append([float(reduce(table[(p, s)])) for s in names])
            errors = np.asarray(rows)
    if errors.ndim != 2 or errors.shape[1] < 2:
        raise UsageError("profile needs at least 2 strategies")
    if errors.shape[0] < 1:
        raise UsageError("profile needs at least 1 problem with complete runs")

    ratios = errors / errors.min(axis=1, keepdims=True)
    tau_grid = np.unique(np.concatenate([[1.0], ratios.ravel()]))
    table_ = harness.dolan_more(errors, tau_grid, algorithms=names)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_dolan_more_csv(table_, out_dir / "dolan_more.csv")
    reporting.plot_dolan_more(table_, out_dir / "dolan_more.svg")
    best = {name: float(table_.rho[a, 0]) for a, name in enumerate(names)}
    print(f"problems: {errors.shape[0]}, algorithms: {len(names)}")
    print("rho(1): " + ", ".join(f"{n}={v:.3f}" for n, v in sorted(best.items())))
    print(f"profile -> {out_dir / 'dolan_more.csv'}, {out_dir / 'dolan_more.svg'}")
    return 0


def cmd_plot(args) -> int:
    rows = reporting.read_curves_csv(args.curves)
    out = Path(args.out) if args.out else Path(args.curves).parent / f"learning_curves_{args.metric}.svg"
    reporting.plot_learning_curves(rows, args.metric, out, args.aggregate)
    print(f"plot -> {out}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir() or path.suffix == ".jsonl":
        records = _records_in([path])
        for record in records:
            last = record.entries[-1] if record.entries else {}
            flags = []
            if record.aborted:
                flags.append("aborted")
            if record.pool_exhausted:
                flags.append("pool-exhausted")
            print(f"{_problem_name(record)} {record.strategy} seed={record.seed}: "
                  f"{len(record.entries)} iterations, final rmse={last.get('rmse', float('nan')):.6g}"
                  f"{' [' + ','.join(flags) + ']' if flags else ''}")
        return 0
    cfg = config_mod.load_config(path)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


_DISPATCH = {
    "run": cmd_run,
    "compare": cmd_compare,
    "profile": cmd_profile,
    "plot": cmd_plot,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.verb](args)
    except UsageError as err:  # covers configuration/ingestion errors too
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {err}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

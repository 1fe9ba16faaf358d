"""Command-line entry point: ``run``, ``summarize`` and ``validate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import (
    SpecError,
    load_spec,
    read_records,
    run_experiment,
    summarize,
    summary_csv,
    write_records,
)

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _apply_overrides(spec, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.algorithms:
        changes["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    if args.out is not None:
        changes["out"] = args.out
    return spec.replace(**changes) if changes else spec


def _cmd_run(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    records = []
    failed = 0

    def tracked():
        nonlocal failed
        for rec in run_experiment(spec):
            failed += bool(rec.error)
            records.append(rec)
            yield rec

    if spec.out:
        out = Path(spec.out)
        with out.open("w", encoding="utf-8") as fh:
            write_records(tracked(), fh)
        summary = out.with_suffix(".summary.csv")
        summary.write_text(summary_csv(summarize(records)), encoding="utf-8")
        print(f"wrote {len(records)} records to {out} and summary to {summary}", file=sys.stderr)
    else:
        write_records(tracked(), sys.stdout)
    if failed:
        print(f"{failed} trial(s) hit solver failures; see the 'error' field", file=sys.stderr)
        return EXIT_SOLVER
    return 0


def _cmd_summarize(args) -> int:
    with open(args.records, encoding="utf-8") as fh:
        records = read_records(fh)
    text = summary_csv(summarize(records))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    print(f"ok: sweep {spec.sweep} over {list(spec.values)}, {spec.trials} trial(s), "
          f"algorithms {', '.join(spec.algorithms)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsnoma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="base seed (trial i uses seed + i)")
        p.add_argument("--trials", type=int, help="trials per sweep value")
        p.add_argument("--algorithms", help="comma-separated algorithm labels")
        p.add_argument("--out", help="output path")

    run = sub.add_parser("run", help="run an experiment spec and emit JSON-lines records")
    run.add_argument("spec")
    common(run)
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="aggregate a records file into a CSV table")
    summ.add_argument("records")
    summ.add_argument("--out", help="write the CSV here instead of stdout")
    summ.set_defaults(func=_cmd_summarize)

    val = sub.add_parser("validate", help="check a spec file without running it")
    val.add_argument("spec")
    common(val)
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

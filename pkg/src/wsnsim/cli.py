"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 invariant violation,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import InvariantViolation
from .report import (
    comparison_table,
    render_figures,
    report_csv_text,
    report_json_text,
    write_comparison,
    write_report,
)
from .scenario import ScenarioError, parse_scenario
from .simulation import (
    COMPARISON_MODES,
    aggregate_reports,
    run_comparison,
    run_scenario,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


def _load(path: str):
    text = Path(path).read_text()
    return parse_scenario(text)


def _cmd_run(args) -> int:
    cfg = _load(args.scenario)
    if args.trace and args.out is None:
        raise ScenarioError("--trace needs --out DIR to hold the trace file")
    base_seed = args.seed if args.seed is not None else cfg.seed

    if args.seeds is not None:
        if args.seeds < 1:
            raise ScenarioError("--seeds must be >= 1")
        results = [
            run_scenario(cfg, check=args.check, trace=args.trace, seed=base_seed + i)
            for i in range(args.seeds)
        ]
        aggregate = aggregate_reports([r.report for r in results])
        if args.out is not None:
            out = Path(args.out)
            for r in results:
                write_report(r, args.format, out, trace=args.trace,
                             figures=False, stem=f"seed_{r.cfg.seed}")
            (out / "aggregate.json").write_text(
                json.dumps(aggregate, indent=2, sort_keys=True) + "\n"
            )
            render_figures(results[0], out)
        print(json.dumps(aggregate, indent=2, sort_keys=True))
        return EXIT_OK

    result = run_scenario(cfg, check=args.check, trace=args.trace, seed=base_seed)
    if args.out is not None:
        write_report(result, args.format, Path(args.out), trace=args.trace)
    text = report_json_text(result) if args.format == "json" else report_csv_text(result)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _load(args.scenario)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    rows = run_comparison(cfg, modes=modes, check=args.check, seed=args.seed)
    sys.stdout.write(comparison_table(rows))
    if args.out is not None:
        write_comparison(rows, Path(args.out))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args.scenario)
    print(
        f"OK: {cfg.n_nodes} nodes, mode={cfg.mode}, mac={cfg.mac}, "
        f"{len(cfg.flows)} flows, run_s={cfg.run_us / 1_000_000}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsnsim",
        description="Discrete-event simulator for multihop wireless sensor "
        "networks: multipath routing, duty-cycled MAC, discovery baselines, "
        "and per-node energy accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario (or a seed sweep)")
    run_p.add_argument("scenario", help="scenario file")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.add_argument("--seeds", type=int, metavar="N",
                       help="sweep N seeds starting at the base seed")
    run_p.add_argument("--check", action="store_true",
                       help="run inline invariant checkers (abort on violation)")
    run_p.add_argument("--trace", action="store_true",
                       help="write the full event trace (needs --out)")
    run_p.add_argument("--format", choices=["json", "csv"], default="json")
    run_p.add_argument("--out", metavar="DIR",
                       help="write reports and figures into DIR")
    run_p.set_defaults(fn=_cmd_run)

    cmp_p = sub.add_parser("compare", help="same scenario under several modes")
    cmp_p.add_argument("scenario")
    cmp_p.add_argument("--modes", default=",".join(COMPARISON_MODES),
                       help="comma list, e.g. aomdv+hmac,dsr+always_on,hello")
    cmp_p.add_argument("--seed", type=int)
    cmp_p.add_argument("--check", action="store_true")
    cmp_p.add_argument("--out", metavar="DIR")
    cmp_p.set_defaults(fn=_cmd_compare)

    val_p = sub.add_parser("validate", help="parse and validate a scenario file")
    val_p.add_argument("scenario")
    val_p.set_defaults(fn=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

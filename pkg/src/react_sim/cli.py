"""``react-sim`` command line: single runs, strategy matrices, map checks and self-tests.

Errors go to stderr as one line of ``key=value`` fields, for example::

    error kind=scenario key=robots line=- msg="robots=4 exceeds 3 spawn points"

Exit codes: 0 success, 1 self-test failure, 2 usage, 3 bad or unreadable
input, 4 invariant violation during a run.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine
from .config import ScenarioError, bundled_map_text, load_scenario, parse_override
from .engine import InvariantViolation, run, run_strategy_matrix, summary_row, write_outputs, write_summary
from .orchestrator import STRATEGIES
from .world import MapError, blind_spot_pockets, load_map, read_map, reachable_free, sweep_anchors

EXIT_OK, EXIT_SELFTEST, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.code, self.kind, self.key, self.line = code, kind, key, line

    def render(self) -> str:
        return (
            f"error kind={self.kind} key={self.key or '-'} line={self.line if self.line is not None else '-'} "
            f"msg={json.dumps(str(self))}"
        )


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def parse_seeds(text: str) -> list[int]:
    """``N`` or an inclusive range ``A..B``."""
    try:
        if ".." in text:
            a, b = (int(p) for p in text.split("..", 1))
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise CliError(EXIT_USAGE, "usage", f"bad seed spec {text!r}; expected N or A..B") from None


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        try:
            key, value = parse_override(item)
        except ScenarioError as exc:
            raise CliError(EXIT_USAGE, "usage", str(exc), key=exc.key) from None
        out[key] = value
    if getattr(args, "strategy", None):
        out["strategy"] = args.strategy
    if getattr(args, "always_on", False):
        out["always_on"] = True
    return out


def _load(path, overrides: dict, seed: int | None = None):
    values = dict(overrides)
    if seed is not None:
        values["seed"] = seed
    try:
        return load_scenario(path, values)
    except ScenarioError as exc:
        raise CliError(EXIT_INPUT, "scenario", f"{path}: {exc}", key=exc.key, line=exc.line) from None


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_INPUT, "io", f"cannot create output directory {str(out)!r}: {exc.strerror}") from None
    return out


def _run_one(scenario):
    try:
        return run(scenario)
    except InvariantViolation as exc:
        raise CliError(EXIT_INVARIANT, "invariant", str(exc)) from None


def cmd_run(args) -> int:
    seeds = parse_seeds(args.seed) if args.seed else [None]
    overrides = _overrides(args)
    out = _out_dir(args.out)
    rows = []
    for seed in seeds:
        sc = _load(args.scenario, overrides, seed)
        result = _run_one(sc)
        row = summary_row(result)
        rows.append(row)
        target = out if len(seeds) == 1 else out / f"seed_{sc.seed}"
        write_outputs(result, target, [row])
        print(
            f"{sc.strategy} R={sc.robots} seed={sc.seed} coverage={row['final_coverage']} "
            f"energy_j={row['total_energy_j']} end={result.end_reason}@{result.end_tick}"
        )
    if len(seeds) > 1:
        write_summary(out / "summary.csv", rows)
    return EXIT_OK


def cmd_matrix(args) -> int:
    paths = [Path(p) for p in args.scenario or []]
    if args.scenario_dir:
        d = Path(args.scenario_dir)
        if not d.is_dir():
            raise CliError(EXIT_INPUT, "io", f"scenario directory {str(d)!r} not found")
        paths.extend(sorted(d.glob("*.toml")))
    if not paths:
        raise CliError(EXIT_USAGE, "usage", "matrix needs --scenario or --scenario-dir with *.toml files")
    seeds = parse_seeds(args.seeds) if args.seeds else [None]
    overrides = _overrides(args)
    scenarios = [_load(p, overrides, seed) for p in paths for seed in seeds]
    out = _out_dir(args.out)

    def progress(sc, result):
        print(f"{sc.strategy} R={sc.robots} always_on={int(sc.always_on)} seed={sc.seed} "
              f"coverage={result.final_coverage:.6f}", flush=True)

    rows = run_strategy_matrix(scenarios, twins=not args.no_twins, on_result=progress)
    write_summary(out / "summary.csv", rows)
    failed = [r for r in rows if r.get("error")]
    if any(r["error"].startswith(InvariantViolation.__name__) for r in failed):
        raise CliError(EXIT_INVARIANT, "invariant", f"{len(failed)} run(s) failed; see summary.csv")
    if failed:
        raise CliError(EXIT_INPUT, "run", f"{len(failed)} run(s) failed; see summary.csv")
    return EXIT_OK


def cmd_validate_map(args) -> int:
    try:
        if Path(args.map).is_file():
            world = read_map(args.map)
        else:
            # bare names such as maps/factory.map fall back to the bundled copy
            world = load_map(bundled_map_text(Path(args.map).name))
    except (OSError, FileNotFoundError) as exc:
        raise CliError(EXIT_INPUT, "io", f"cannot read map {args.map!r}: {exc.strerror or 'not found'}") from None
    except MapError as exc:
        raise CliError(EXIT_INPUT, "map", str(exc), line=getattr(exc, "line", None)) from None
    pockets = blind_spot_pockets(world, sweep_anchors(world, args.subarea_size), min_cells=args.min_pocket_cells)
    print(f"size_m={world.width_m:g}x{world.height_m:g} cell_m={world.cell_size_m:g} raster={world.ny}x{world.nx}")
    print(f"free_cells={int(world.free.sum())} reachable_free_cells={int(reachable_free(world).sum())} "
          f"spawn_points={len(world.spawn_points)}")
    print(f"blind_spot_pockets={len(pockets)} sizes={','.join(str(len(p)) for p in pockets) or '-'}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selfcheck import run_checks

    ok_all = True
    for name, ok, detail in run_checks(args.seed):
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if ok_all else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="react-sim", description="Multi-robot exploration simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario key (repeatable)")
        sp.add_argument("--strategy", choices=STRATEGIES)
        sp.add_argument("--always-on", action="store_true", help="ignore sensing-off directives")
        sp.add_argument("--out", default="out", metavar="DIR")

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True, metavar="PATH")
    r.add_argument("--seed", metavar="N|A..B")
    common(r)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("matrix", help="run scenarios x seeds with always-on twins")
    m.add_argument("--scenario", action="append", metavar="PATH")
    m.add_argument("--scenario-dir", metavar="DIR")
    m.add_argument("--seeds", "--seed", dest="seeds", metavar="N|A..B")
    m.add_argument("--no-twins", action="store_true", help="skip the always-on twin runs")
    common(m)
    m.set_defaults(func=cmd_matrix)

    v = sub.add_parser("validate-map", help="check a map file and count blind-spot pockets")
    v.add_argument("map", metavar="PATH")
    v.add_argument("--subarea-size", type=float, default=10.0, metavar="M")
    v.add_argument("--min-pocket-cells", type=int, default=4, metavar="N")
    v.set_defaults(func=cmd_validate_map)

    s = sub.add_parser("selftest", help="compare fast paths against slow oracles")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    engine.configure_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(exc.render(), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

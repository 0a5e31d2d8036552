"""Command-line driver: parse, run, check-proof, verify, props."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .ast import EMP, EMPTY_CONTEXT, TRUE
from .modelcheck import ALIASES, SUITES, check_valid, initial_states, property_suite
from .parser import ParseError, Program, parse_file, show_program
from .proof import CSL, DCSL, check_derivation
from .sos import run_scheduled
from .state import DomainBounds, Value, make_bounds, state

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    subcommand: str
    paths: list[str]
    bounds: DomainBounds
    depth: int = 64
    seed: int = 0
    mode: str = CSL
    output: str = "human"
    jobs: int = 1
    max_steps: int = 1000
    cases: int = 100
    suites: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise UsageError("depth must be at least 1")
        if self.max_steps < 1:
            raise UsageError("max-steps must be at least 1")
        if self.cases < 0:
            raise UsageError("cases must be non-negative")
        if self.jobs < 1:
            raise UsageError("jobs must be at least 1")


def _parse_int_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def _parse_values(text: str) -> tuple[Value, ...]:
    out: list[Value] = []
    for p in text.split(","):
        p = p.strip()
        if p == "null":
            out.append(None)
            continue
        try:
            out.append(int(p))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value {p!r}") from None
    return tuple(out)


def _jobs_default() -> int:
    raw = os.environ.get("CSLV_JOBS", "")
    try:
        return int(raw) if raw else 1
    except ValueError:
        raise UsageError(f"CSLV_JOBS must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("output and bounds")
    g.add_argument("--format", choices=("human", "json"), default="human")
    g.add_argument("--jobs", type=int, default=None, help="worker processes (default: CSLV_JOBS or 1)")
    g.add_argument("--int-range", type=_parse_int_range, default=(-2, 2), metavar="LO,HI",
                   help="integer values; write --int-range=-2,2 for negative bounds")
    g.add_argument("--locations", type=int, default=8, metavar="N", help="locations 10..10+N-1")
    g.add_argument("--max-cells", type=int, default=2, metavar="K",
                   help="largest heap drawn from an assertion's models")
    g.add_argument("--quantifier-values", type=_parse_values, default=None, metavar="V,...",
                   help="values ranged over by quantifiers, 'null' allowed")

    top = _Parser(prog="cslv", description="Concurrent separation logic checker and model checker.")
    sub = top.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common], help="echo the canonical pretty-print")
    p.add_argument("file")

    p = sub.add_parser("run", parents=[common], help="one randomly scheduled execution")
    p.add_argument("file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1000)

    p = sub.add_parser("check-proof", parents=[common], help="check every derivation in a file")
    p.add_argument("file")
    p.add_argument("--mode", choices=(CSL, DCSL), default=CSL)

    p = sub.add_parser("verify", parents=[common], help="bounded validity check of every spec")
    p.add_argument("file")
    p.add_argument("--depth", type=int, default=64)

    p = sub.add_parser("props", parents=[common], help="run property suites")
    p.add_argument("--suite", action="append", required=True,
                   choices=sorted(set(SUITES) | set(ALIASES)))
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return top


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    try:
        bounds = make_bounds(
            int_range=ns.int_range,
            n_locations=ns.locations,
            max_heap_cells=ns.max_cells,
            quantifier_values=ns.quantifier_values,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(
        subcommand=ns.subcommand,
        paths=[ns.file] if hasattr(ns, "file") else [],
        bounds=bounds,
        depth=getattr(ns, "depth", 64),
        seed=getattr(ns, "seed", 0),
        mode=getattr(ns, "mode", CSL),
        output=ns.format,
        jobs=ns.jobs if ns.jobs is not None else _jobs_default(),
        max_steps=getattr(ns, "max_steps", 1000),
        cases=getattr(ns, "cases", 100),
        suites=list(getattr(ns, "suite", None) or []),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _emit(cfg: RunConfig, obj: dict, text: str) -> None:
    if cfg.output == "json":
        print(json.dumps(obj, sort_keys=True))
    else:
        print(text)


def _load(cfg: RunConfig) -> Program:
    prog = parse_file(cfg.paths[0])
    if prog.empty:
        raise UsageError(f"{cfg.paths[0]}: empty input")
    return prog


def cmd_parse(cfg: RunConfig) -> int:
    prog = _load(cfg)
    text = show_program(prog)
    _emit(cfg, {"source": prog.source, "program": text}, text)
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    prog = _load(cfg)
    runs = []
    if prog.main is not None:
        sigma = state({x: 0 for x in prog.variables})
        runs.append(("main", prog.main, sigma))
    for name, sp in prog.specs.items():
        starts = initial_states(sp.context, sp.pre, sp.cmd, sp.post, cfg.bounds, prog.preds,
                                prog.domains, sp.init, sp.always)
        if not starts:
            raise UsageError(f"{name}: precondition has no model within the bounds")
        runs.append((name, sp.cmd, starts[0]))
    if not runs:
        raise UsageError("nothing to run: no specs and no plain program")
    code = EXIT_OK
    for name, c, sigma in runs:
        trace = run_scheduled(c, sigma, cfg.bounds, seed=cfg.seed, max_steps=cfg.max_steps)
        lines = [f"0 INIT {sigma.dump()}"] + trace.lines
        if trace.status.startswith("abort"):
            code = EXIT_FAIL
        _emit(
            cfg,
            {"name": name, "seed": cfg.seed, "status": trace.status, "trace": lines},
            "\n".join([f"{name}:"] + lines + [f"STATUS {trace.status}"]),
        )
    return code


def cmd_check_proof(cfg: RunConfig) -> int:
    prog = _load(cfg)
    if not prog.derivations:
        raise UsageError("no derivations in file")
    code = EXIT_OK
    for name, d in prog.derivations.items():
        report = check_derivation(d, cfg.mode, cfg.bounds, prog.preds, prog.domains)
        if not report.accepted:
            code = EXIT_FAIL
        if cfg.output == "json":
            for line in report.json_lines(name):
                print(line)
        else:
            print(report.human(name))
    return code


def cmd_verify(cfg: RunConfig) -> int:
    prog = _load(cfg)
    jobs = []
    if prog.main is not None:
        jobs.append(("main", prog.main, None))
    jobs.extend((name, sp.cmd, sp) for name, sp in prog.specs.items())
    if not jobs:
        raise UsageError("nothing to verify: no specs and no plain program")
    code = EXIT_OK
    for name, c, sp in jobs:
        if sp is None:
            report = check_valid(EMPTY_CONTEXT, EMP, c, TRUE, cfg.bounds, cfg.depth,
                                 prog.preds, prog.domains, jobs=cfg.jobs)
        else:
            report = check_valid(sp.context, sp.pre, sp.cmd, sp.post, cfg.bounds, cfg.depth,
                                 prog.preds, prog.domains, sp.init, sp.always, jobs=cfg.jobs)
        if not report.ok:
            code = EXIT_FAIL
        _emit(cfg, {"spec": name, **report.to_json()}, report.human(name))
    return code


def cmd_props(cfg: RunConfig) -> int:
    code = EXIT_OK
    for suite in cfg.suites:
        report = property_suite(suite, cfg.cases, cfg.seed)
        if not report.ok:
            code = EXIT_FAIL
        _emit(cfg, report.to_json(), report.human())
    return code


COMMANDS = {
    "parse": cmd_parse,
    "run": cmd_run,
    "check-proof": cmd_check_proof,
    "verify": cmd_verify,
    "props": cmd_props,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = build_parser().parse_args(list(sys.argv[1:] if argv is None else argv))
        cfg = config_from_args(ns)
        return COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

"""Command line: validate, run, explore, oracle, example, tissue.

Exit codes are stable: 0 ok, 1 invalid input, 2 unreadable file, 3 step
budget exhausted, 4 recognizer answered ``invalid``, 5 exploration or oracle
bound exceeded, 6 oracle violation, 7 output membrane dissolved.
"""
from __future__ import annotations

import argparse
import json
import string
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import systems
from .dsl import ParseError, parse
from .engine import Engine, InvalidSpec, run
from .model import Multiset, PSystemSpec, Selection, validate_spec
from .oracle import DEFAULT_BOUND, OracleTooLarge, enumerate_selections, explore
from .parallel import default_workers
from .rng import Rng

OK, INVALID, UNREADABLE, BUDGET, ANSWER_INVALID, BOUND, VIOLATION, DISSOLVED = 0, 1, 2, 3, 4, 5, 6, 7
STATUS_EXIT = {"halted": OK, "budget-exhausted": BUDGET, "output-dissolved": DISSOLVED}


@dataclass
class CliConfig:
    command: str
    paths: list[str] = field(default_factory=list)
    seed: int = 0
    max_steps: int = 10000
    workers: int = 1
    trace: Optional[str] = None
    depth: int = 4
    max_nodes: int = 10000
    steps: int = 3
    trials: int = 100
    bound: int = DEFAULT_BOUND
    faults: Optional[str] = None
    format: str = "text"
    instances: int = 1
    fresh_seed: bool = False

    def __post_init__(self) -> None:
        for name in ("seed", "max_steps", "depth", "max_nodes", "steps", "trials", "instances", "bound"):
            if getattr(self, name) < 0:
                raise ValueError(f"--{name.replace('_', '-')} must be >= 0")
        if self.workers < 1:
            raise ValueError("--workers must be >= 1")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def load_spec(path: str) -> PSystemSpec:
    """Read, parse and validate; raises ``CliError`` with the exit code."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CliError(UNREADABLE, f"cannot read {path}: {e.strerror or e}")
    try:
        spec = parse(data)
    except ParseError as e:
        raise CliError(INVALID, "\n".join(f"{path}:{d}" for d in e.diagnostics))
    problems = validate_spec(spec)
    if problems:
        raise CliError(INVALID, "\n".join(f"{path}: error: {v}" for v in problems))
    return spec


def cmd_validate(cfg: CliConfig) -> int:
    code = OK
    for path in cfg.paths:
        try:
            load_spec(path)
        except CliError as e:
            _err(str(e))
            code = max(code, e.code)
            continue
        print(f"{path}: ok")
    return code


def cmd_run(cfg: CliConfig) -> int:
    spec = load_spec(cfg.paths[0])
    trace = run(spec, seed=cfg.seed, max_steps=cfg.max_steps, workers=cfg.workers)
    text = trace.to_jsonl()
    if cfg.trace:
        Path(cfg.trace).write_text(text)
    res = trace.result
    if cfg.format == "jsonl":
        sys.stdout.write(text)
    else:
        print(f"status: {res.status} answer: {res.answer} steps: {res.steps} "
              f"output: {res.output.serialize()}")
    if res.answer == "invalid":
        return ANSWER_INVALID
    return STATUS_EXIT[res.status]


def cmd_explore(cfg: CliConfig) -> int:
    spec = load_spec(cfg.paths[0])
    if cfg.max_nodes < 1:
        raise CliError(INVALID, "--max-nodes must be >= 1")
    tree = explore(spec, cfg.depth, max_nodes=cfg.max_nodes, bound=cfg.bound)
    summary = tree.summary()
    if cfg.format == "jsonl":
        print(json.dumps(summary, separators=(",", ":")))
    else:
        print(f"nodes: {summary['nodes']} halting leaves: {summary['halting_leaves']} "
              f"frontier: {summary['frontier']} truncated: {str(tree.truncated).lower()}")
        for r in summary["results"]:
            print(f"result: answer {r['answer']} output {Multiset(r['output']).serialize()}")
    return BOUND if tree.truncated else OK


def audit(spec: PSystemSpec, steps: int, trials: int, engine_factory: Callable = Engine,
          bound: int = DEFAULT_BOUND) -> Optional[tuple[int, int, Selection]]:
    """First ``(seed, step, selection)`` whose selection is not maximal, else None."""
    engine = engine_factory(spec)
    for seed in range(trials):
        rng = Rng(seed)
        config = engine.initial()
        for _ in range(steps):
            sel = engine.select(config, rng)
            if sel not in enumerate_selections(spec, config, bound):
                return seed, config.step + 1, sel
            if not sel:
                break
            config = engine.apply(config, sel, rng)
    return None


def cmd_oracle(cfg: CliConfig, engine_factory: Callable = Engine) -> int:
    spec = load_spec(cfg.paths[0])
    try:
        bad = audit(spec, cfg.steps, cfg.trials, engine_factory, bound=cfg.bound)
    except OracleTooLarge as e:
        _err(f"oracle bound exceeded: {e}")
        return BOUND
    if bad is not None:
        seed, step, sel = bad
        print(f"violation: seed {seed} step {step} selection {json.dumps(sel.to_json())}")
        print(f"reproduce: run {cfg.paths[0]} --seed {seed} --max-steps {step}")
        return VIOLATION
    print(f"ok: {cfg.trials} trials x {cfg.steps} steps")
    return OK


def cmd_example(name: str, out: Optional[str] = None) -> int:
    try:
        text = systems.canonical(name)
    except KeyError:
        listed = ", ".join(n for n in systems.names() if not n.startswith("even_k")) + \
            f", even_k0..even_k{systems.EVEN_MAX}"
        _err(f"unknown example {name!r}; available: {listed}")
        return INVALID
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def instance_names(n: int) -> list[str]:
    """A, B, ..., Z, AA, AB, ..."""
    letters = string.ascii_uppercase
    out = []
    for i in range(n):
        name, k = "", i
        while True:
            name = letters[k % 26] + name
            k = k // 26 - 1
            if k < 0:
                break
        out.append(name)
    return out


def parse_injection(text: str) -> tuple[str, int, str, Multiset]:
    """``B@2:3=a*3,b`` -> inject a*3 b into label 3 of B at clock 2."""
    try:
        who, rest = text.split("@", 1)
        clock, rest = rest.split(":", 1)
        label, objs = rest.split("=", 1)
        counts: dict[str, int] = {}
        for item in filter(None, objs.split(",")):
            sym, _, n = item.partition("*")
            counts[sym] = counts.get(sym, 0) + (int(n) if n else 1)
        return who, int(clock), label, Multiset(counts)
    except ValueError:
        raise CliError(INVALID, f"bad --inject {text!r}; expected NAME@CLOCK:LABEL=sym*n,...")


def cmd_tissue(cfg: CliConfig, events: Optional[str] = None, injections: Sequence[str] = ()) -> int:
    from .mos import MosError, Tissue, load_fault_plan, tissue_run

    specs = [(Path(p).stem, load_spec(p)) for p in cfg.paths]
    tissue = Tissue(fresh_seed=cfg.fresh_seed)
    names = iter(instance_names(cfg.instances * len(specs)))
    seed = cfg.seed
    for group, spec in specs:
        for _ in range(cfg.instances):
            tissue.add(group, next(names), spec, seed)
            seed += 1
    try:
        if cfg.faults:
            try:
                plan = load_fault_plan(Path(cfg.faults).read_text())
            except OSError as e:
                raise CliError(UNREADABLE, f"cannot read {cfg.faults}: {e.strerror or e}")
            except ValueError as e:
                raise CliError(INVALID, f"{cfg.faults}: {e}")
            tissue.set_faults(plan)
        for text in injections:
            who, clock, label, objs = parse_injection(text)
            tissue.schedule(who, clock, objs, label)
        report = tissue_run(tissue, cfg.max_steps)
    except MosError as e:
        raise CliError(INVALID, str(e))
    log = tissue.sink.to_jsonl()
    target = events or cfg.trace
    if target:
        Path(target).write_text(log)
    if cfg.format == "jsonl":
        sys.stdout.write(log)
    else:
        for group, rows in report.groups.items():
            for r in rows:
                print(f"{group} {r['instance']}: status {r['status']} clock {r['clock']} "
                      f"answer {r['answer']} output {Multiset(r['output']).serialize()}")
        print(f"events: {len(tissue.sink)}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="membrane", description="Membrane system simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps_default=10000):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-steps", type=int, default=steps_default)
        sp.add_argument("--workers", type=int, default=None,
                        help="default: $MEMBRANE_WORKERS or 1")
        sp.add_argument("--format", choices=("text", "jsonl"), default="text")

    v = sub.add_parser("validate", help="parse and check spec files")
    v.add_argument("paths", nargs="+")

    r = sub.add_parser("run", help="run one seeded computation")
    r.add_argument("paths", nargs=1, metavar="path")
    common(r)
    r.add_argument("--trace", help="write the JSON-lines trace here")

    e = sub.add_parser("explore", help="breadth-first computation tree")
    e.add_argument("paths", nargs=1, metavar="path")
    e.add_argument("--depth", type=int, default=4)
    e.add_argument("--max-nodes", type=int, default=10000)
    e.add_argument("--bound", type=int, default=DEFAULT_BOUND, help="oracle search nodes per configuration")
    e.add_argument("--format", choices=("text", "jsonl"), default="text")

    o = sub.add_parser("oracle", help="audit selections against exhaustive enumeration")
    o.add_argument("paths", nargs=1, metavar="path")
    o.add_argument("--steps", type=int, default=3)
    o.add_argument("--trials", type=int, default=100)
    o.add_argument("--bound", type=int, default=DEFAULT_BOUND, help="oracle search nodes per configuration")

    x = sub.add_parser("example", help="print a bundled system")
    x.add_argument("name")
    x.add_argument("-o", "--output")

    t = sub.add_parser("tissue", help="supervised group of independent instances")
    t.add_argument("paths", nargs="*")
    common(t, steps_default=100)
    t.add_argument("--instances", type=int, default=1, help="instances per spec file")
    t.add_argument("--faults", help="JSON fault plan")
    t.add_argument("--trace", "--events", dest="events", help="write the event log here")
    t.add_argument("--inject", action="append", default=[], metavar="NAME@CLOCK:LABEL=OBJS")
    t.add_argument("--fresh-seed", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "example":
        return cmd_example(args.name, args.output)
    workers = getattr(args, "workers", None)
    opts = {k: getattr(args, k) for k in ("seed", "max_steps", "depth", "max_nodes", "steps",
                                          "trials", "bound", "faults", "format", "instances", "fresh_seed")
            if getattr(args, k, None) is not None}
    if args.command == "run":
        opts["trace"] = args.trace
    try:
        cfg = CliConfig(args.command, list(args.paths),
                        workers=workers if workers is not None else default_workers(), **opts)
    except ValueError as e:
        _err(f"error: {e}")
        return INVALID
    try:
        if cfg.command == "validate":
            return cmd_validate(cfg)
        if cfg.command == "run":
            return cmd_run(cfg)
        if cfg.command == "explore":
            return cmd_explore(cfg)
        if cfg.command == "oracle":
            return cmd_oracle(cfg)
        return cmd_tissue(cfg, args.events, args.inject)
    except CliError as e:
        _err(str(e))
        return e.code
    except InvalidSpec as e:
        _err(f"error: {e}")
        return INVALID


if __name__ == "__main__":
    sys.exit(main())

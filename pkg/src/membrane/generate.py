"""Small random specs for property tests and audits.

Every generated spec is valid and stays small enough for exhaustive
enumeration over a few steps: at most 3 regions, 6 rules, 6 initial
objects, and right-hand sides of at most 2 objects.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .dsl import parse
from .model import PSystemSpec

SHAPES = ("[1]", "[1[2]]", "[1[2][3]]", "[1[2[3]]]")
CHILDREN = {
    "[1]": {"1": ()},
    "[1[2]]": {"1": ("2",), "2": ()},
    "[1[2][3]]": {"1": ("2", "3"), "2": (), "3": ()},
    "[1[2[3]]]": {"1": ("2",), "2": ("3",), "3": ()},
}


@dataclass(frozen=True)
class GenConfig:
    max_rules: int = 6
    max_objects: int = 6
    max_rhs: int = 2
    symbols: tuple[str, ...] = ("a", "b", "c")
    catalyst_p: float = 0.2
    priority_p: float = 0.3


def _mset(rng: random.Random, syms, n: int) -> list[str]:
    return [rng.choice(syms) for _ in range(n)]


def _init_lines(rng: random.Random, labels, syms, max_objects: int, extra=()) -> list[str]:
    lines = []
    total = rng.randint(1, max_objects)
    placed = {lab: [] for lab in labels}
    for s in extra:
        placed[rng.choice(labels)].append(s)
    for s in _mset(rng, syms, total):
        placed[rng.choice(labels)].append(s)
    for lab in labels:
        if placed[lab]:
            lines.append(f"init {lab}: " + " ".join(placed[lab]))
    return lines


def transition_text(rng: random.Random, cfg: GenConfig = GenConfig()) -> str:
    shape = rng.choice(SHAPES)
    kids = CHILDREN[shape]
    labels = list(kids)
    syms = list(cfg.symbols)
    catalyst = rng.random() < cfg.catalyst_p
    lines = ["model transition", "alphabet " + " ".join(syms + (["k"] if catalyst else [])), f"mu {shape}"]
    if catalyst:
        lines.append("catalysts k")
    lines += _init_lines(rng, labels, syms, cfg.max_objects - (1 if catalyst else 0),
                         extra=["k"] if catalyst else [])
    per_region: dict[str, list[str]] = {}
    for i in range(rng.randint(0, cfg.max_rules)):
        lab = rng.choice(labels)
        lhs = _mset(rng, syms, rng.randint(1, 2))
        rhs = []
        for s in _mset(rng, syms, rng.randint(0, cfg.max_rhs)):
            roll = rng.random()
            if roll < 0.2:
                rhs.append(f"{s}!out")
            elif roll < 0.4 and kids[lab]:
                rhs.append(f"{s}!in({rng.choice(kids[lab])})")
            else:
                rhs.append(s)
        if catalyst and rng.random() < 0.4:
            lhs = ["k"] + lhs[:1]
            rhs = ["k"] + rhs[:1]
        name = f"r{i}"
        per_region.setdefault(lab, []).append(name)
        lines.append(f"rule {lab} @{name}: {' '.join(lhs)} -> {' '.join(rhs) or '.'}")
    for lab, names in per_region.items():
        # declaration order is a strict order, so sampled pairs stay acyclic
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                if rng.random() < cfg.priority_p:
                    lines.append(f"prio {lab}: {names[i]} > {names[j]}")
    lines.append("output env")
    return "\n".join(lines) + "\n"


def active_text(rng: random.Random, cfg: GenConfig = GenConfig()) -> str:
    shape = rng.choice(SHAPES)
    kids = CHILDREN[shape]
    labels = list(kids)
    syms = list(cfg.symbols)
    lines = ["model active", "alphabet " + " ".join(syms), f"mu {shape}"]
    lines += _init_lines(rng, labels, syms, cfg.max_objects)
    for i in range(rng.randint(0, cfg.max_rules)):
        lab = rng.choice(labels)
        kinds = ["evo", "evo", "out"] + (["in", "dis", "div"] if lab != "1" else [])
        kind = rng.choice(kinds)
        trig = rng.choice(syms)
        opt = rng.choice(syms + ["."])
        if kind == "evo":
            rhs = " ".join(_mset(rng, syms, rng.randint(0, cfg.max_rhs))) or "."
        elif kind == "div":
            rhs = f"{rng.choice(syms)} | {rng.choice(syms)}"
        else:
            rhs = opt
        lines.append(f"arule {lab} {kind} @r{i}: {trig} -> {rhs}")
    lines.append("output env")
    return "\n".join(lines) + "\n"


def random_text(seed: int, cfg: GenConfig = GenConfig()) -> str:
    rng = random.Random(seed)
    return transition_text(rng, cfg) if rng.random() < 0.5 else active_text(rng, cfg)


def random_spec(seed: int, cfg: GenConfig = GenConfig()) -> PSystemSpec:
    return parse(random_text(seed, cfg))


def corpus(n: int = 200, start: int = 0, cfg: GenConfig = GenConfig()) -> list[PSystemSpec]:
    return [random_spec(s, cfg) for s in range(start, start + n)]


__all__ = ["GenConfig", "corpus", "random_spec", "random_text"]

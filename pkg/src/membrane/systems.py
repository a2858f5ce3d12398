"""Bundled example systems, as DSL text."""
from __future__ import annotations

from .dsl import parse, serialize
from .model import PSystemSpec

PC2 = """\
# Producer-consumer: region 3 makes a4, regions 2 and 1 pass it on, region 4 consumes.
model transition
alphabet a a4
mu [1[2[3]][4]]
init 3: a
rule 1 @route: a4 -> a4!in(4)
rule 2 @ship2: a4 -> a4!out
rule 3 @grow: a -> a a
rule 3 @pack: a a -> a4
rule 3 @ship3: a4 -> a4!out
rule 4 @consume: a4 a4 -> a4
output env
"""

# Constructed system: a single token c alternates between the two regions, and
# only the region holding it has an applicable rule.
SYNC = """\
model transition
alphabet a c
mu [1[2]]
init 1: a c
init 2: a
rule 1 @tick1: c a -> a a c!in(2)
rule 1 @fallback1: c -> c!in(2)
prio 1: tick1 > fallback1
rule 2 @tick2: c a -> a a c!out
rule 2 @fallback2: c -> c!out
prio 2: tick2 > fallback2
output env
"""

EVEN_TEMPLATE = """\
# Parity recognizer: answers yes iff the number of a's is even.
model transition
alphabet a t yes no
mu [1]
init 1: {init}
rule 1 @r1: a a -> .
rule 1 @r2: a t -> no!out
rule 1 @r3: t -> yes!out
prio 1: r1 > r2
prio 1: r1 > r3
prio 1: r2 > r3
output env
recognizer yes no
"""

DOUBLING = """\
# Every elementary membrane 2 divides at each step.
model active
alphabet a
mu [1[2]]
init 2: a
arule 2 div @d: a -> a | a
output env
"""

EVEN_MAX = 50


def even_text(k: int) -> str:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return EVEN_TEMPLATE.format(init=f"a*{k} t" if k else "t")


def names() -> list[str]:
    return ["pc2", "sync", "even", "doubling"] + [f"even_k{k}" for k in range(EVEN_MAX + 1)]


def source(name: str) -> str:
    """Raw bundled text (with comments)."""
    if name == "pc2":
        return PC2
    if name == "sync":
        return SYNC
    if name == "doubling":
        return DOUBLING
    if name == "even":
        return even_text(4)
    if name.startswith("even_k") and name[6:].isdigit() and int(name[6:]) <= EVEN_MAX:
        return even_text(int(name[6:]))
    raise KeyError(name)


def load(name: str) -> PSystemSpec:
    return parse(source(name))


def canonical(name: str) -> str:
    return serialize(load(name))


def independent_regions(n: int = 1024, init: str = "a") -> PSystemSpec:
    """A skin plus ``n - 1`` child regions, each cycling a -> b -> c -> d -> a
    on its own objects; no rule ever moves an object between regions."""
    labels = [f"r{i}" for i in range(n)]
    lines = ["model transition", "alphabet a b c d",
             "mu [" + labels[0] + "".join(f"[{x}]" for x in labels[1:]) + "]"]
    for lab in labels:
        lines.append(f"init {lab}: {init}")
        for name, lhs, rhs in (("ab", "a", "b"), ("bc", "b", "c"), ("cd", "c", "d"), ("da", "d", "a")):
            lines.append(f"rule {lab} @{name}: {lhs} -> {rhs}")
    return parse("\n".join(lines) + "\n")

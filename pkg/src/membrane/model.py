"""Domain types for cell-like membrane systems.

Everything here is an immutable value. Membrane instances carry a
creation-ordered integer id that is distinct from their label, since
division produces several membranes sharing one label.
"""
from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

TRANSITION = "transition"
ACTIVE = "active"
MODES = (TRANSITION, ACTIVE)

ENV = "env"

EVOLUTION = "evolution"
SEND_IN = "send-in"
SEND_OUT = "send-out"
DISSOLVE = "dissolve"
DIVIDE = "divide"
ACTIVE_KINDS = (EVOLUTION, SEND_IN, SEND_OUT, DISSOLVE, DIVIDE)
STRUCTURAL_KINDS = frozenset({SEND_IN, SEND_OUT, DISSOLVE, DIVIDE})

IDENT_RE = re.compile(r"[A-Za-z0-9_]+\Z")
RESERVED = frozenset({"->", "!", "|", "."})


def is_identifier(name: object) -> bool:
    return isinstance(name, str) and name not in RESERVED and IDENT_RE.match(name) is not None


class MultisetError(ValueError):
    """Raised when a multiset operation's precondition does not hold."""


class Multiset(Mapping):
    """Finite multiset over symbols, stored in canonical form (no zero counts).

    Accepts a mapping ``symbol -> count`` or an iterable of symbols::

        >>> Multiset("a a b".split()) == Multiset({"a": 2, "b": 1})
        True
    """

    __slots__ = ("_d", "_h", "_s")

    def __init__(self, items: Union[Mapping[str, int], Iterable[str], None] = None):
        d: dict[str, int] = {}
        if items is None:
            pass
        elif isinstance(items, Mapping):
            for sym, n in items.items():
                if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                    raise MultisetError(f"invalid count {n!r} for {sym!r}")
                if n:
                    d[sym] = n
        else:
            for sym in items:
                d[sym] = d.get(sym, 0) + 1
        self._d = d
        self._h = None
        self._s = None

    @classmethod
    def _wrap(cls, d: dict) -> "Multiset":
        # trusted constructor: caller guarantees positive int counts
        ms = cls.__new__(cls)
        ms._d = d
        ms._h = None
        ms._s = None
        return ms

    def __getitem__(self, sym: str) -> int:
        return self._d.get(sym, 0)

    def __contains__(self, sym: object) -> bool:
        return sym in self._d

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Multiset):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __repr__(self) -> str:
        return f"Multiset({dict(sorted(self._d.items()))!r})"

    def __bool__(self) -> bool:
        return bool(self._d)

    def size(self) -> int:
        return sum(self._d.values())

    def as_dict(self) -> dict[str, int]:
        return dict(self._d)

    def __add__(self, other: Mapping[str, int]) -> "Multiset":
        return union(self, other)

    def __sub__(self, other: Mapping[str, int]) -> "Multiset":
        return difference(self, other)

    def __mul__(self, k: int) -> "Multiset":
        return scale(self, k)

    __rmul__ = __mul__

    def __le__(self, other: Mapping[str, int]) -> bool:
        return contains(other, self)

    def __ge__(self, other: Mapping[str, int]) -> bool:
        return contains(self, other)

    def restrict(self, symbols: Iterable[str]) -> "Multiset":
        keep = set(symbols)
        return Multiset._wrap({s: n for s, n in self._d.items() if s in keep})

    def serialize(self) -> str:
        """Canonical text form, e.g. ``{a*2,b*1}``."""
        if self._s is None:
            self._s = "{" + ",".join(f"{s}*{self._d[s]}" for s in sorted(self._d)) + "}"
        return self._s


EMPTY = Multiset()


def union(a: Mapping[str, int], b: Mapping[str, int]) -> Multiset:
    d = dict(a.items())
    for s, n in b.items():
        if n:
            d[s] = d.get(s, 0) + n
    return Multiset._wrap(d)


def contains(a: Mapping[str, int], b: Mapping[str, int]) -> bool:
    """True when every element of ``b`` occurs in ``a`` with at least its multiplicity."""
    return all(a.get(s, 0) >= n for s, n in b.items())


def difference(a: Mapping[str, int], b: Mapping[str, int]) -> Multiset:
    if not contains(a, b):
        raise MultisetError(f"difference requires containment: {dict(b)} not in {dict(a)}")
    d = dict(a.items())
    for s, n in b.items():
        if not n:
            continue
        left = d[s] - n
        if left:
            d[s] = left
        else:
            del d[s]
    return Multiset._wrap(d)


def scale(a: Mapping[str, int], k: int) -> Multiset:
    if k < 0:
        raise MultisetError("scale factor must be nonnegative")
    if k == 0:
        return EMPTY
    return Multiset._wrap({s: n * k for s, n in a.items() if n})


@dataclass(frozen=True)
class Target:
    kind: str = "here"  # here | out | in
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("here", "out", "in"):
            raise ValueError(f"bad target kind {self.kind!r}")
        if (self.kind == "in") != (self.label is not None):
            raise ValueError("only in-targets carry a label")

    @classmethod
    def into(cls, label: str) -> "Target":
        return cls("in", label)

    def __str__(self) -> str:
        if self.kind == "here":
            return ""
        if self.kind == "out":
            return "!out"
        return f"!in({self.label})"


HERE = Target("here")
OUT = Target("out")


@dataclass(frozen=True)
class TransitionRule:
    name: str
    region: str
    lhs: Multiset
    rhs: tuple[tuple[str, Target], ...] = ()

    def products(self) -> Multiset:
        return Multiset(sym for sym, _ in self.rhs)


@dataclass(frozen=True)
class ActiveMembraneRule:
    """Rule of the active-membranes model.

    ``products`` depends on ``kind``: a Multiset for evolution, a symbol or
    None for send-in/send-out/dissolve, a pair of symbols for divide.
    """

    name: str
    label: str
    kind: str
    trigger: str
    products: Union[Multiset, str, tuple[str, str], None] = None

    @property
    def region(self) -> str:
        return self.label

    @property
    def structural(self) -> bool:
        return self.kind in STRUCTURAL_KINDS


Rule = Union[TransitionRule, ActiveMembraneRule]


@dataclass(frozen=True)
class PrioritySpec:
    region: str
    pairs: frozenset[tuple[str, str]]  # (higher, lower)


@dataclass(frozen=True)
class MembraneTemplate:
    label: str
    children: tuple["MembraneTemplate", ...] = ()

    def preorder(self) -> Iterator["MembraneTemplate"]:
        yield self
        for c in self.children:
            yield from c.preorder()

    def labels(self) -> list[str]:
        return [t.label for t in self.preorder()]

    def parent_map(self) -> dict[str, Optional[str]]:
        out: dict[str, Optional[str]] = {self.label: None}
        stack = [self]
        while stack:
            t = stack.pop()
            for c in t.children:
                out.setdefault(c.label, t.label)
                stack.append(c)
        return out


@dataclass(frozen=True)
class PSystemSpec:
    mode: str
    alphabet: frozenset[str]
    mu: MembraneTemplate
    initial: Mapping[str, Multiset] = field(default_factory=dict)
    rules: Mapping[str, tuple[Rule, ...]] = field(default_factory=dict)
    catalysts: frozenset[str] = frozenset()
    terminals: Optional[frozenset[str]] = None
    priorities: tuple[PrioritySpec, ...] = ()
    output: str = ENV
    recognizer: Optional[tuple[str, str]] = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "alphabet", frozenset(self.alphabet))
        set_(self, "catalysts", frozenset(self.catalysts))
        if self.terminals is not None:
            set_(self, "terminals", frozenset(self.terminals))
        set_(self, "initial", {k: Multiset(v) if not isinstance(v, Multiset) else v
                               for k, v in self.initial.items() if v})
        set_(self, "rules", {k: tuple(v) for k, v in self.rules.items() if v})
        merged: dict[str, set] = {}
        for p in self.priorities:
            merged.setdefault(p.region, set()).update(p.pairs)
        set_(self, "priorities", tuple(PrioritySpec(r, frozenset(merged[r]))
                                       for r in sorted(merged) if merged[r]))
        if self.recognizer is not None:
            set_(self, "recognizer", tuple(self.recognizer))

    __hash__ = None  # mappings inside; compare structurally only

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(self.mu.labels())

    @property
    def terminal_set(self) -> frozenset[str]:
        return self.alphabet if self.terminals is None else self.terminals

    def rules_for(self, label: str) -> tuple[Rule, ...]:
        return self.rules.get(label, ())

    def priority_pairs(self, label: str) -> frozenset[tuple[str, str]]:
        for p in self.priorities:
            if p.region == label:
                return p.pairs
        return frozenset()

    def all_rules(self) -> Iterator[Rule]:
        for label in self.mu.labels():
            yield from self.rules.get(label, ())


class MembraneInstance(NamedTuple):
    id: int
    label: str
    contents: Multiset = EMPTY
    children: tuple["MembraneInstance", ...] = ()

    def preorder(self) -> Iterator["MembraneInstance"]:
        stack = [self]
        while stack:
            m = stack.pop()
            yield m
            if m.children:
                stack.extend(reversed(m.children))


@dataclass(frozen=True)
class Configuration:
    skin: MembraneInstance
    environment: Multiset = EMPTY
    step: int = 0
    halted: bool = False
    next_id: int = 1

    @classmethod
    def initial(cls, spec: PSystemSpec) -> "Configuration":
        counter = iter(range(1 << 62))

        def build(t: MembraneTemplate) -> MembraneInstance:
            mid = next(counter)
            kids = tuple(build(c) for c in t.children)
            return MembraneInstance(mid, t.label, spec.initial.get(t.label, EMPTY), kids)

        skin = build(spec.mu)
        return cls(skin=skin, next_id=next(counter))

    def preorder(self) -> Iterator[MembraneInstance]:
        return self.skin.preorder()

    def walk(self) -> Iterator[tuple[MembraneInstance, Optional[MembraneInstance]]]:
        """Yield ``(membrane, parent)`` pairs in pre-order; the skin's parent is None."""
        stack: list[tuple[MembraneInstance, Optional[MembraneInstance]]] = [(self.skin, None)]
        while stack:
            m, p = stack.pop()
            yield m, p
            for c in reversed(m.children):
                stack.append((c, m))

    def find(self, mid: int) -> MembraneInstance:
        for m in self.preorder():
            if m.id == mid:
                return m
        raise KeyError(mid)

    def with_labels(self, label: str) -> list[MembraneInstance]:
        return [m for m in self.preorder() if m.label == label]

    def membrane_count(self) -> int:
        return sum(1 for _ in self.preorder())

    def replace_contents(self, mid: int, contents: Multiset) -> "Configuration":
        def rebuild(m: MembraneInstance) -> MembraneInstance:
            if m.id == mid:
                return MembraneInstance(m.id, m.label, contents, m.children)
            kids = tuple(rebuild(c) for c in m.children)
            return MembraneInstance(m.id, m.label, m.contents, kids)

        return Configuration(rebuild(self.skin), self.environment, self.step, self.halted, self.next_id)


def canonical_serialize(config: Configuration) -> str:
    """Deterministic text of a configuration: one ``id label {..}`` line per
    membrane in pre-order, then ``env {..}``. Step and halted flag are excluded."""
    lines = [f"{m.id} {m.label} {m.contents.serialize()}" for m in config.preorder()]
    lines.append(f"env {config.environment.serialize()}")
    return "\n".join(lines)


class Selection:
    """Rule applications chosen for one step, per membrane instance.

    ``in_targets`` optionally pins the child chosen for an in-target product,
    keyed by ``(membrane id, rule name, occurrence index)``.
    """

    __slots__ = ("per_membrane", "in_targets", "_key")

    def __init__(self, per_membrane: Optional[Mapping[int, Mapping[str, int]]] = None,
                 in_targets: Optional[Mapping[tuple[int, str, int], int]] = None):
        pm = {}
        for mid, rules in (per_membrane or {}).items():
            kept = {name: k for name, k in rules.items() if k}
            if kept:
                pm[mid] = kept
        self.per_membrane: dict[int, dict[str, int]] = pm
        self.in_targets = dict(in_targets or {})
        self._key = None

    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple((mid, tuple(sorted(self.per_membrane[mid].items())))
                              for mid in sorted(self.per_membrane))
        return self._key

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Selection):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __bool__(self) -> bool:
        return bool(self.per_membrane)

    def __repr__(self) -> str:
        return f"Selection({dict(self.key())!r})"

    def count(self, mid: int, name: str) -> int:
        return self.per_membrane.get(mid, {}).get(name, 0)

    def total(self, name: str) -> int:
        return sum(r.get(name, 0) for r in self.per_membrane.values())

    def to_json(self) -> list[dict]:
        return [{"membrane": mid, "rules": dict(sorted(self.per_membrane[mid].items()))}
                for mid in sorted(self.per_membrane)]


@dataclass(frozen=True)
class Violation:
    message: str
    label: Optional[str] = None
    rule: Optional[str] = None

    def __str__(self) -> str:
        where = []
        if self.label is not None:
            where.append(f"region {self.label}")
        if self.rule is not None:
            where.append(f"rule {self.rule}")
        return f"{self.message} ({', '.join(where)})" if where else self.message


def _rule_symbols(rule: Rule) -> list[str]:
    if isinstance(rule, TransitionRule):
        return list(rule.lhs) + [s for s, _ in rule.rhs]
    syms = [rule.trigger]
    p = rule.products
    if isinstance(p, Multiset):
        syms.extend(p)
    elif isinstance(p, tuple):
        syms.extend(p)
    elif p is not None:
        syms.append(p)
    return syms


def _has_cycle(pairs: Iterable[tuple[str, str]]) -> bool:
    graph: dict[str, set[str]] = {}
    for hi, lo in pairs:
        graph.setdefault(hi, set()).add(lo)
    state: dict[str, int] = {}

    def visit(n: str) -> bool:
        state[n] = 1
        for nxt in graph.get(n, ()):
            s = state.get(nxt, 0)
            if s == 1 or (s == 0 and visit(nxt)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in list(graph))


def validate_spec(spec: PSystemSpec) -> list[Violation]:
    """Return every structural violation in ``spec``; an empty list means valid."""
    out: list[Violation] = []
    add = out.append

    if spec.mode not in MODES:
        add(Violation(f"unknown mode {spec.mode!r}"))
    if not spec.alphabet:
        add(Violation("empty alphabet"))
    for s in sorted(spec.alphabet):
        if not is_identifier(s):
            add(Violation(f"bad symbol name {s!r}"))
    for s in sorted(spec.catalysts - spec.alphabet):
        add(Violation(f"catalyst {s} not in alphabet"))
    if spec.terminals is not None:
        for s in sorted(spec.terminals - spec.alphabet):
            add(Violation(f"terminal {s} not in alphabet"))

    mu_labels = spec.mu.labels()
    seen: set[str] = set()
    for lab in mu_labels:
        if not is_identifier(lab) or lab == ENV:
            add(Violation(f"bad label name {lab!r}", label=lab))
        if lab in seen:
            add(Violation("duplicate label in mu", label=lab))
        seen.add(lab)
    skin = spec.mu.label
    children_of: dict[str, set[str]] = {}
    for t in spec.mu.preorder():
        children_of.setdefault(t.label, set()).update(c.label for c in t.children)

    for lab, ms in spec.initial.items():
        if lab not in seen:
            add(Violation("initial multiset for undeclared label", label=lab))
        for s in ms:
            if s not in spec.alphabet:
                add(Violation(f"symbol {s} not in alphabet", label=lab))

    if spec.mode == ACTIVE:
        if spec.catalysts:
            add(Violation("catalysts are only allowed in transition mode"))
        if spec.priorities:
            add(Violation("priorities are only allowed in transition mode"))

    for lab, rules in spec.rules.items():
        if lab not in seen:
            add(Violation("rules for undeclared label", label=lab))
        names: set[str] = set()
        for r in rules:
            if not is_identifier(r.name):
                add(Violation(f"bad rule name {r.name!r}", label=lab, rule=r.name))
            if r.name in names:
                add(Violation("duplicate rule name in region", label=lab, rule=r.name))
            names.add(r.name)
            if r.region != lab:
                add(Violation("rule filed under a different region", label=lab, rule=r.name))
            for s in _rule_symbols(r):
                if s not in spec.alphabet:
                    add(Violation(f"symbol {s} not in alphabet", label=lab, rule=r.name))
            if spec.mode == TRANSITION:
                if not isinstance(r, TransitionRule):
                    add(Violation("active rule in transition mode", label=lab, rule=r.name))
                    continue
                if not r.lhs:
                    add(Violation("empty left-hand side", label=lab, rule=r.name))
                here = Multiset(s for s, t in r.rhs if t.kind == "here")
                for c in spec.catalysts:
                    if r.lhs[c] and here[c] != r.lhs[c]:
                        add(Violation(f"catalyst not conserved: {c}", label=lab, rule=r.name))
                for _, t in r.rhs:
                    if t.kind == "in" and t.label not in children_of.get(lab, ()):
                        add(Violation(f"in-target {t.label} is not a child region", label=lab, rule=r.name))
            else:
                if not isinstance(r, ActiveMembraneRule):
                    add(Violation("transition rule in active mode", label=lab, rule=r.name))
                    continue
                if r.kind not in ACTIVE_KINDS:
                    add(Violation(f"unknown rule kind {r.kind!r}", label=lab, rule=r.name))
                    continue
                if r.kind in (DISSOLVE, DIVIDE, SEND_IN) and lab == skin:
                    add(Violation(f"{r.kind} rule on the skin", label=lab, rule=r.name))
                p = r.products
                ok = {
                    EVOLUTION: isinstance(p, Multiset),
                    DIVIDE: isinstance(p, tuple) and len(p) == 2,
                }.get(r.kind, p is None or isinstance(p, str))
                if not ok:
                    add(Violation("products do not match rule kind", label=lab, rule=r.name))

    for p in spec.priorities:
        names = {r.name for r in spec.rules.get(p.region, ())}
        if p.region not in seen:
            add(Violation("priority for undeclared label", label=p.region))
        for hi, lo in sorted(p.pairs):
            for n in (hi, lo):
                if n not in names:
                    add(Violation("priority names an unknown rule", label=p.region, rule=n))
        if _has_cycle(p.pairs):
            add(Violation("priority relation has a cycle", label=p.region))

    if spec.output != ENV and spec.output not in seen:
        add(Violation(f"output label {spec.output} not in mu"))
    if spec.recognizer is not None:
        yes, no = spec.recognizer
        if spec.output != ENV:
            add(Violation("recognizer systems must output to the environment"))
        if yes == no:
            add(Violation("recognizer answers must differ"))
        for s in (yes, no):
            if s not in spec.alphabet:
                add(Violation(f"recognizer symbol {s} not in alphabet"))
    return out

"""Maximally parallel step semantics.

One step is a selection stage followed by an execution stage. Selection is a
seeded greedy loop run independently per contention component: repeatedly
collect every rule instance that still fits the remaining objects and free
structural slots, pick one uniformly and reserve one application, until
nothing fits. Execution applies the chosen applications in fixed phases
(consume, produce, communicate, dissolve, divide), all reading the pre-step
configuration.

Priorities are strong: a rule is blocked for the whole step when a strictly
higher rule of its region is applicable to the region's contents at the start
of that step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .model import (
    ACTIVE, DISSOLVE, DIVIDE, ENV, EVOLUTION, SEND_IN, SEND_OUT, TRANSITION,
    ActiveMembraneRule, Configuration, MembraneInstance, Multiset, PSystemSpec, Selection,
    TransitionRule, canonical_serialize, validate_spec,
)
from .parallel import contention_components
from .rng import Rng


class EngineError(Exception):
    pass


class SelectionMismatch(EngineError):
    """The selection does not fit the configuration it is applied to."""


class InvalidSpec(EngineError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class CompiledRule:
    rule: object
    name: str
    kind: str  # "transition" or one of the active kinds
    lhs: tuple[tuple[str, int], ...]
    structural: bool
    # transition products split by target; in-products keep rhs order
    here: tuple[tuple[str, int], ...] = ()
    out: tuple[tuple[str, int], ...] = ()
    into: tuple[tuple[str, str], ...] = ()  # (symbol, child label) per occurrence

    @property
    def from_parent(self) -> bool:
        return self.kind == SEND_IN


def _compile(rule) -> CompiledRule:
    if isinstance(rule, TransitionRule):
        here: dict[str, int] = {}
        out: dict[str, int] = {}
        into = []
        for sym, t in rule.rhs:
            if t.kind == "here":
                here[sym] = here.get(sym, 0) + 1
            elif t.kind == "out":
                out[sym] = out.get(sym, 0) + 1
            else:
                into.append((sym, t.label))
        return CompiledRule(rule, rule.name, TRANSITION, tuple(sorted(rule.lhs.items())), False,
                            tuple(here.items()), tuple(out.items()), tuple(into))
    assert isinstance(rule, ActiveMembraneRule)
    here = ()
    if rule.kind == EVOLUTION:
        here = tuple(sorted(rule.products.items()))
    return CompiledRule(rule, rule.name, rule.kind, ((rule.trigger, 1),), rule.structural, here)


def _closure(pairs) -> dict[str, frozenset[str]]:
    """Map each rule name to the set of names strictly above it."""
    above: dict[str, set[str]] = {}
    for hi, lo in pairs:
        above.setdefault(lo, set()).add(hi)
    changed = True
    while changed:
        changed = False
        for lo, his in above.items():
            extra = set()
            for h in his:
                extra |= above.get(h, set())
            if not extra <= his:
                his |= extra
                changed = True
    return {k: frozenset(v) for k, v in above.items()}


def _add(d: dict, items, k: int = 1) -> None:
    for s, n in items:
        d[s] = d.get(s, 0) + n * k


@dataclass(frozen=True)
class RunResult:
    status: str  # halted | budget-exhausted | output-dissolved
    answer: str = "none"  # yes | no | none | invalid
    output: Multiset = Multiset()
    steps: int = 0

    def to_json(self) -> dict:
        return {"status": self.status, "answer": self.answer,
                "output": dict(sorted(self.output.items())), "steps": self.steps}


@dataclass(frozen=True)
class StepRecord:
    step: int
    selection: Selection
    config: str

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "selections": self.selection.to_json(),
                           "config": self.config}, separators=(",", ":"))


@dataclass
class Trace:
    records: list[StepRecord]
    result: RunResult
    final: Configuration
    initial: Optional[Configuration] = field(default=None, repr=False)

    def to_jsonl(self) -> str:
        lines = [r.to_json() for r in self.records]
        lines.append(json.dumps(self.result.to_json(), separators=(",", ":")))
        return "\n".join(lines) + "\n"


MEMO_LIMIT = 1 << 17


class LocalEffect(NamedTuple):
    rem: dict  # own contents after non-structural consumption (read-only)
    local: Multiset  # rem plus products staged here
    out: tuple  # (symbol, count) sent to the parent region
    into: tuple  # (symbol, child label, rule name, occurrence) per in-target product
    structural: tuple  # structural CompiledRules selected on this membrane


def index_config(config: Configuration) -> dict[int, tuple[MembraneInstance, Optional[MembraneInstance]]]:
    return {m.id: (m, p) for m, p in config.walk()}


class Engine:
    """Step semantics bound to one spec."""

    def __init__(self, spec: PSystemSpec, check: bool = True):
        if check:
            problems = validate_spec(spec)
            if problems:
                raise InvalidSpec(problems)
        self.spec = spec
        self.rules: dict[str, list[CompiledRule]] = {
            lab: [_compile(r) for r in rules] for lab, rules in spec.rules.items()}
        self.by_name: dict[tuple[str, str], CompiledRule] = {
            (lab, cr.name): cr for lab, crs in self.rules.items() for cr in crs}
        self.above: dict[str, dict[str, frozenset[str]]] = {
            p.region: _closure(p.pairs) for p in spec.priorities}
        self._sel_memo: dict = {}
        self._comp_memo: tuple = (None, None)
        self._effects: dict = {}

    def initial(self) -> Configuration:
        return Configuration.initial(self.spec)

    # -- applicability -------------------------------------------------

    def applicable_count(self, config: Configuration, mid: int, name: str) -> int:
        """Largest multiplicity of rule ``name`` on membrane ``mid`` alone,
        ignoring structural-slot use by other rules and honouring priorities."""
        index = index_config(config)
        if mid not in index:
            raise EngineError(f"unknown membrane instance {mid}")
        m, parent = index[mid]
        cr = self.by_name.get((m.label, name))
        if cr is None:
            raise EngineError(f"unknown rule {name!r} for label {m.label}")
        if self.spec.mode == TRANSITION:
            above = self.above.get(m.label, {}).get(name, ())
            for hi in above:
                if _max_fit(self.by_name[(m.label, hi)].lhs, m.contents) > 0:
                    return 0
            return _max_fit(cr.lhs, m.contents)
        if not self._structure_ok(cr, m, parent):
            return 0
        pool = parent.contents if cr.from_parent else m.contents
        k = _max_fit(cr.lhs, pool)
        return min(k, 1) if cr.structural else k

    def _structure_ok(self, cr: CompiledRule, m: MembraneInstance, parent) -> bool:
        if cr.kind == DIVIDE:
            return not m.children and parent is not None
        if cr.kind in (DISSOLVE, SEND_IN):
            return parent is not None
        return True

    # -- selection -----------------------------------------------------

    def _candidates_of(self, m: MembraneInstance, parent, out: list) -> None:
        crs = self.rules.get(m.label)
        if not crs:
            return
        mid = m.id
        if self.spec.mode == TRANSITION:
            above = self.above.get(m.label)
            if above:
                d = m.contents._d
                live = {c.name for c in crs if _fits(c.lhs, d)}
                for c in crs:
                    if c.name in live and not (above.get(c.name, frozenset()) & live):
                        out.append((mid, c, mid))
            else:
                for c in crs:
                    out.append((mid, c, mid))
            return
        for c in crs:
            if self._structure_ok(c, m, parent):
                out.append((mid, c, parent.id if c.from_parent else mid))

    def candidates(self, index, members) -> list[tuple[int, CompiledRule, int]]:
        """Eligible rule instances ``(membrane id, rule, pool id)`` of a component."""
        out: list = []
        for mid in members:
            m, parent = index[mid]
            self._candidates_of(m, parent, out)
        return out

    def _greedy(self, cands, pools, stream_factory) -> tuple[dict[int, dict[str, int]], bool]:
        chosen: dict[int, dict[str, int]] = {}
        slots: set[int] = set()
        stream = None
        while True:
            fit = [c for c in cands
                   if not (c[1].structural and c[0] in slots) and _fits(c[1].lhs, pools[c[2]])]
            if not fit:
                break
            if len(fit) == 1:
                mid, cr, pid = fit[0]
                k = 1 if cr.structural else _max_fit(cr.lhs, pools[pid])
                _reserve(chosen, pools, slots, mid, cr, pid, k)
                break
            if stream is None:
                stream = stream_factory()
            mid, cr, pid = fit[stream.randrange(len(fit))]
            _reserve(chosen, pools, slots, mid, cr, pid, 1)
            cands = fit
        return chosen, stream is not None

    def select_component(self, index, members, stream_factory) -> dict[int, dict[str, int]]:
        """Greedy maximal selection for one contention component.

        ``stream_factory()`` is only called when a random choice is needed.
        Single-membrane results that needed no random choice are memoised by
        (label, contents, structure), since they are a pure function of those.
        """
        if len(members) == 1:
            m, parent = index[members[0]]
            if m.label not in self.rules:
                return {}
            key = (m.label, m.contents, bool(m.children), parent is None)
            hit = self._sel_memo.get(key)
            if hit is not None:
                return {m.id: hit} if hit else {}
        cands = self.candidates(index, members)
        if not cands:
            return {}
        pools = {}
        for _, _, pid in cands:
            if pid not in pools:
                pools[pid] = dict(index[pid][0].contents._d)
        chosen, drew = self._greedy(cands, pools, stream_factory)
        if len(members) == 1 and not drew:
            if len(self._sel_memo) > MEMO_LIMIT:
                self._sel_memo.clear()
            self._sel_memo[key] = chosen.get(members[0], {})
        return chosen

    def components(self, config: Configuration, index) -> list:
        """Contention components, reused while the membrane structure is unchanged."""
        # an id keeps its label for life, so ids plus parent links fix the
        # structure; transition mode needs only the ids
        if self.spec.mode == TRANSITION:
            key = tuple(index)
        else:
            key = tuple((mid, p.id if p is not None else -1) for mid, (_, p) in index.items())
        last_key, comps = self._comp_memo
        if key != last_key:
            comps = contention_components(config, self.spec, index=index)
            self._comp_memo = (key, comps)
        return comps

    def select(self, config: Configuration, rng: Rng) -> Selection:
        index = index_config(config)
        step = config.step + 1
        per: dict[int, dict[str, int]] = {}
        for comp in self.components(config, index):
            per.update(self.select_component(
                index, comp.members, lambda key=comp.key: rng.stream(step, f"sel:{key}")))
        return Selection(per)

    # -- execution -----------------------------------------------------

    def local_effect(self, label: str, contents: Multiset, sel: dict[str, int]) -> "LocalEffect":
        """Own-region part of applying ``sel``: consumption and products of the
        non-structural rules. Structural rules are only collected here."""
        key = (label, contents, tuple(sorted(sel.items())))
        hit = self._effects.get(key)
        if hit is not None:
            return hit
        for name in sel:
            if (label, name) not in self.by_name:
                raise SelectionMismatch(f"rule {name!r} does not belong to label {label}")
        rem = dict(contents._d)
        here: dict[str, int] = {}
        out: dict[str, int] = {}
        into = []
        structural = []
        for cr in self.rules.get(label, ()):
            k = sel.get(cr.name, 0)
            if not k:
                continue
            if cr.structural:
                if k != 1:
                    raise SelectionMismatch(f"structural rule {cr.name} applied {k} times")
                structural.append(cr)
                continue
            for s, n in cr.lhs:
                v = rem.get(s, 0) - n * k
                if v < 0:
                    raise SelectionMismatch(f"not enough {s} for {cr.name} x{k}")
                rem[s] = v
            _add(here, cr.here, k)
            _add(out, cr.out, k)
            width = len(cr.into)
            for app in range(k):
                for occ, (sym, lab) in enumerate(cr.into):
                    into.append((sym, lab, cr.name, app * width + occ))
        if len(structural) > 1:
            raise SelectionMismatch("structural slot used twice")
        rem = _clean(rem)
        eff = LocalEffect(rem, Multiset._wrap(_merge(rem, here)), tuple(out.items()),
                          tuple(into), tuple(structural))
        if len(self._effects) > MEMO_LIMIT:
            self._effects.clear()
        self._effects[key] = eff
        return eff

    def apply(self, config: Configuration, selection: Selection, rng: Rng) -> Configuration:
        index = index_config(config)
        step = config.step + 1
        per = selection.per_membrane
        env = dict(config.environment._d)
        effects: dict[int, LocalEffect] = {}
        for mid in sorted(per):
            if mid not in index:
                raise SelectionMismatch(f"no membrane instance {mid}")
            m = index[mid][0]
            effects[mid] = self.local_effect(m.label, m.contents, per[mid])

        taken: dict[int, dict[str, int]] = {}
        incoming: dict[int, dict[str, int]] = {}
        dissolving: dict[int, Optional[str]] = {}
        dividing: dict[int, tuple[str, str]] = {}

        def deliver(dest: Optional[int], sym: str, n: int = 1) -> None:
            d = env if dest is None else incoming.setdefault(dest, {})
            d[sym] = d.get(sym, 0) + n

        # in-target draws follow ascending membrane id, then rule declaration
        # order, application index and right-hand-side order
        for mid, eff in effects.items():
            m, parent = index[mid]
            up = parent.id if parent is not None else None
            for s, n in eff.out:
                deliver(up, s, n)
            stream = None
            for sym, lab, name, occ in eff.into:
                kids = [c.id for c in m.children if c.label == lab]
                if not kids:
                    raise SelectionMismatch(f"no child labelled {lab} under {mid}")
                pin = selection.in_targets.get((mid, name, occ))
                if pin is not None:
                    if pin not in kids:
                        raise SelectionMismatch(f"pinned target {pin} is not a child")
                    dest = pin
                elif len(kids) == 1:
                    dest = kids[0]
                else:
                    if stream is None:
                        stream = rng.stream(step, f"in:{mid}")
                    dest = kids[stream.randrange(len(kids))]
                deliver(dest, sym)
            for cr in eff.structural:
                if not self._structure_ok(cr, m, parent):
                    raise SelectionMismatch(f"{cr.name} not structurally applicable on {mid}")
                pid = parent.id if cr.from_parent else mid
                base = effects[pid].rem if pid in effects else index[pid][0].contents._d
                t = taken.setdefault(pid, {})
                trig = cr.lhs[0][0]
                if base.get(trig, 0) - t.get(trig, 0) < 1:
                    raise SelectionMismatch(f"not enough {trig} for {cr.name} on {mid}")
                t[trig] = t.get(trig, 0) + 1
                prod = cr.rule.products
                if cr.kind == SEND_OUT:
                    if prod is not None:
                        deliver(up, prod)
                elif cr.kind == SEND_IN:
                    if prod is not None:
                        deliver(mid, prod)
                elif cr.kind == DISSOLVE:
                    dissolving[mid] = prod
                else:
                    dividing[mid] = prod

        def final_of(m: MembraneInstance) -> Multiset:
            eff = effects.get(m.id)
            base = eff.local if eff is not None else m.contents
            t = taken.get(m.id)
            inc = incoming.get(m.id)
            if not t and not inc:
                return base
            d = dict(base._d)
            if t:
                for s, n in t.items():
                    d[s] -= n
            if inc:
                for s, n in inc.items():
                    d[s] = d.get(s, 0) + n
            return Multiset._wrap(_clean(d))

        # dissolve deepest first, so contents bubble up to the nearest survivor
        if dissolving:
            order = [mid for mid in (m.id for m in config.preorder()) if mid in dissolving]
            for mid in reversed(order):
                m, parent = index[mid]
                released = final_of(m)
                if dissolving[mid] is not None:
                    deliver(parent.id, dissolving[mid])
                for s, n in released.items():
                    deliver(parent.id, s, n)

        next_id = config.next_id
        twins: dict[int, tuple[int, int]] = {}
        for mid in sorted(dividing):
            twins[mid] = (next_id, next_id + 1)
            next_id += 2

        def build(m: MembraneInstance) -> list[MembraneInstance]:
            kids: list[MembraneInstance] = []
            same = True
            for c in m.children:
                r = build(c)
                if len(r) != 1 or r[0] is not c:
                    same = False
                kids.extend(r)
            if m.id in dissolving:
                return kids
            contents = final_of(m)
            if m.id in twins:
                first, second = dividing[m.id]
                a, b = dict(contents._d), dict(contents._d)
                a[first] = a.get(first, 0) + 1
                b[second] = b.get(second, 0) + 1
                id1, id2 = twins[m.id]
                return [MembraneInstance(id1, m.label, Multiset._wrap(a)),
                        MembraneInstance(id2, m.label, Multiset._wrap(b))]
            if same and contents is m.contents:
                return [m]
            return [MembraneInstance(m.id, m.label, contents, tuple(kids))]

        (skin,) = build(config.skin)
        return Configuration(skin, Multiset._wrap(_clean(env)), step, False, next_id)

    def step(self, config: Configuration, rng: Rng) -> tuple[Configuration, Selection]:
        """One maximally parallel step; returns the next configuration and the
        selection used. An empty selection marks the configuration halted."""
        if config.halted:
            raise EngineError("cannot step a halted configuration")
        sel = self.select(config, rng)
        if not sel:
            return replace(config, halted=True), sel
        return self.apply(config, sel, rng), sel

    # -- results -------------------------------------------------------

    def result(self, config: Configuration, status: Optional[str] = None) -> RunResult:
        spec = self.spec
        if status is None:
            status = "halted" if config.halted else "budget-exhausted"
        if spec.output == ENV:
            region = config.environment
        else:
            found = config.with_labels(spec.output)
            if not found:
                return RunResult("output-dissolved", "none", Multiset(), config.step)
            region = Multiset()
            for m in found:
                region = region + m.contents
        output = region.restrict(spec.terminal_set)
        answer = "none"
        if spec.recognizer is not None and status == "halted":
            yes, no = spec.recognizer
            y, n = config.environment[yes], config.environment[no]
            if y + n == 0:
                answer = "none"
            elif (y, n) == (1, 0):
                answer = "yes"
            elif (y, n) == (0, 1):
                answer = "no"
            else:
                answer = "invalid"
        return RunResult(status, answer, output, config.step)


def result(config: Configuration, spec: PSystemSpec) -> RunResult:
    return Engine(spec).result(config)


def _fits(lhs, pool: dict) -> bool:
    for s, n in lhs:
        if pool.get(s, 0) < n:
            return False
    return True


def _max_fit(lhs, pool) -> int:
    k = None
    for s, n in lhs:
        q = pool.get(s, 0) // n
        if k is None or q < k:
            k = q
    return k or 0


def _reserve(chosen, pools, slots, mid, cr, pid, k) -> None:
    pool = pools[pid]
    for s, n in cr.lhs:
        pool[s] -= n * k
    if cr.structural:
        slots.add(mid)
    per = chosen.setdefault(mid, {})
    per[cr.name] = per.get(cr.name, 0) + k


def _merge(a: dict, b: dict) -> dict:
    out = {s: n for s, n in a.items() if n}
    for s, n in b.items():
        if n:
            out[s] = out.get(s, 0) + n
    return out


def _clean(d: dict) -> dict:
    return {s: n for s, n in d.items() if n}


def run(spec: PSystemSpec, seed: int = 0, max_steps: int = 10000, workers: int = 1,
        record: bool = True, oversubscribe: bool = False) -> Trace:
    """Iterate steps until halting or the step budget runs out.

    The trace is byte-identical for equal (spec, seed, max_steps) regardless
    of ``workers``. Threads are capped at the available CPUs unless
    ``oversubscribe`` is set.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    engine = Engine(spec)
    rng = Rng(seed)
    config = engine.initial()
    start = config
    records: list[StepRecord] = []

    pool = None
    if workers > 1:
        from .parallel import WorkerPool, par_apply, par_select
        pool = WorkerPool(workers, oversubscribe=oversubscribe)
        if pool.threads == 1:
            # capped to one CPU: the phased path would run the same work
            # serially with extra bookkeeping
            pool.close()
            pool = None

    if pool is not None:
        def do_step(c):
            index = index_config(c)
            sel = par_select(engine, c, rng, pool, index=index)
            if not sel:
                return replace(c, halted=True), sel
            return par_apply(engine, c, sel, rng, pool, index=index), sel
    else:
        def do_step(c):
            return engine.step(c, rng)

    try:
        while config.step < max_steps:
            config, sel = do_step(config)
            if config.halted:
                break
            if record:
                records.append(StepRecord(config.step, sel, canonical_serialize(config)))
    finally:
        if pool is not None:
            pool.close()
    if not config.halted and not engine.select(config, rng):
        # halting is a property of the state, so a run ending on the budget
        # boundary in a dead configuration still counts as halted
        config = replace(config, halted=True)
    return Trace(records, engine.result(config), config, start)

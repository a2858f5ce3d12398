"""Runtime of independent engine instances with local clocks.

An instance owns one configuration, advances it one engine step per tick and
keeps an append-only log of the inputs it received, stamped with the local
clock. A replica built from the initial snapshot, the seed and a copy of the
log reaches the same configurations tick for tick. A tissue groups instances
under one supervisor; instances share nothing but the ordered event sink,
which carries control and monitoring records only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Union

from .engine import Engine, RunResult, StepRecord, Trace
from .model import Configuration, Multiset, PSystemSpec, canonical_serialize
from .rng import Rng, derive_seed

RUNNING, HALTED, FAILED = "running", "halted", "failed"
EVENT_KINDS = ("started", "stepped", "halted", "failed", "reproduced", "injected")


class MosError(Exception):
    pass


@dataclass(frozen=True)
class MonitorEvent:
    seq: int
    kind: str
    instance: str
    clock: int
    detail: str = ""

    def to_json(self) -> str:
        return json.dumps({"seq": self.seq, "kind": self.kind, "instance": self.instance,
                           "clock": self.clock, "detail": self.detail}, separators=(",", ":"))


class EventSink:
    """Ordered append-only event log; sequence numbers start at 0 with no gaps."""

    def __init__(self) -> None:
        self.events: list[MonitorEvent] = []

    def emit(self, kind: str, instance: str, clock: int, detail: str = "") -> MonitorEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ev = MonitorEvent(len(self.events), kind, instance, clock, detail)
        self.events.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def kinds(self) -> list[tuple[str, str, int]]:
        return [(e.kind, e.instance, e.clock) for e in self.events]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)


class Injection(NamedTuple):
    stamp: int
    objects: Multiset
    label: str


@dataclass(eq=False)
class MosInstance:
    name: str
    spec: PSystemSpec
    seed: int
    initial: Configuration
    current: Configuration
    engine: Engine = field(repr=False)
    log: list[Injection] = field(default_factory=list)
    status: str = RUNNING
    faults: frozenset = frozenset()
    sink: Optional[EventSink] = field(default=None, repr=False)
    records: list[StepRecord] = field(default_factory=list, repr=False)
    replicas: int = 0

    @property
    def clock(self) -> int:
        return self.current.step

    @property
    def running(self) -> bool:
        return self.status == RUNNING

    def _emit(self, kind: str, detail: str = "") -> None:
        if self.sink is not None:
            self.sink.emit(kind, self.name, self.clock, detail)

    def pending(self) -> list[Injection]:
        return [e for e in self.log if e.stamp == self.clock]

    def result(self) -> RunResult:
        return self.engine.result(self.current)

    def trace(self) -> Trace:
        return Trace(list(self.records), self.result(), self.current, self.initial)

    def canonical(self) -> str:
        return canonical_serialize(self.current)


def create_instance(name: str, spec: PSystemSpec, seed: int = 0, sink: Optional[EventSink] = None,
                    faults: Iterable[int] = ()) -> MosInstance:
    """New running instance at local clock 0; raises ``InvalidSpec`` on a bad spec."""
    engine = Engine(spec)
    start = engine.initial()
    inst = MosInstance(name, spec, seed, start, start, engine, faults=frozenset(faults), sink=sink)
    inst._emit("started", f"seed {seed}")
    return inst


def inject(inst: MosInstance, objects: Union[Multiset, dict], label: str) -> MosInstance:
    """Queue objects for the lowest-id membrane labelled ``label``.

    They land at the next step boundary, i.e. before the next tick's
    selection. Empty multisets are logged too.
    """
    if not inst.running:
        raise MosError(f"instance {inst.name} is {inst.status}")
    objects = objects if isinstance(objects, Multiset) else Multiset(objects)
    bad = sorted(set(objects) - inst.spec.alphabet)
    if bad:
        raise MosError(f"symbol not in alphabet: {bad[0]}")
    if not inst.current.with_labels(label):
        raise MosError(f"unknown label {label}")
    inst.log.append(Injection(inst.clock, objects, label))
    # the cord carries sizes, never the objects themselves
    inst._emit("injected", f"label {label} size {objects.size()}")
    return inst


def _land(config: Configuration, entries: list[Injection]) -> Configuration:
    for e in entries:
        target = min(config.with_labels(e.label), key=lambda m: m.id, default=None)
        if target is None:
            raise MosError(f"unknown label {e.label}")
        if e.objects:
            config = config.replace_contents(target.id, target.contents + e.objects)
    return config


def tick(inst: MosInstance) -> MosInstance:
    """Land pending injections, then advance one engine step."""
    if not inst.running:
        raise MosError(f"cannot tick {inst.status} instance {inst.name}")
    if inst.clock in inst.faults:
        inst.status = FAILED
        inst._emit("failed", "fault plan")
        return inst
    config = _land(inst.current, inst.pending())
    config, sel = inst.engine.step(config, Rng(inst.seed))
    inst.current = config
    if config.halted:
        inst.status = HALTED
        inst._emit("halted", "no rule applicable")
    else:
        inst.records.append(StepRecord(config.step, sel, canonical_serialize(config)))
        inst._emit("stepped", f"applications {sum(sum(r.values()) for r in sel.per_membrane.values())}")
    return inst


def reproduce(inst: MosInstance, sink: Optional[EventSink] = None, fresh_seed: bool = False) -> MosInstance:
    """Replica from the initial snapshot with the same seed and a copy of the log.

    The replica starts at clock 0; ``replay`` brings it up to date.
    """
    inst.replicas += 1
    name = f"{inst.name}.r{inst.replicas}"
    seed = derive_seed(inst.seed, 0, f"replica:{name}") if fresh_seed else inst.seed
    sink = sink if sink is not None else inst.sink
    twin = MosInstance(name, inst.spec, seed, inst.initial, inst.initial, Engine(inst.spec),
                       log=list(inst.log), sink=sink)
    if sink is not None:
        sink.emit("reproduced", name, 0, f"from {inst.name}")
    return twin


def replay(inst: MosInstance, clock: int) -> MosInstance:
    """Tick until the local clock reaches ``clock`` or the instance stops."""
    while inst.running and inst.clock < clock:
        tick(inst)
    return inst


def stop_at_budget(inst: MosInstance) -> None:
    # a dead configuration on the budget boundary is halted, as in ``run``
    if inst.running and not inst.pending() and not inst.engine.select(inst.current, Rng(inst.seed)):
        inst.current = replace(inst.current, halted=True)
        inst.status = HALTED
        inst._emit("halted", "no rule applicable")


class FaultPoint(NamedTuple):
    instance: str
    at: int


class ScriptedInjection(NamedTuple):
    instance: str
    at: int
    objects: Multiset
    label: str


def load_fault_plan(text: str) -> list[FaultPoint]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("fault plan must be a JSON list")
    out = []
    for item in data:
        if not isinstance(item, dict) or "instance" not in item or "at" not in item:
            raise ValueError("fault plan entries need 'instance' and 'at'")
        at = item["at"]
        if not isinstance(at, int) or isinstance(at, bool) or at < 0:
            raise ValueError(f"bad fault clock {at!r}")
        out.append(FaultPoint(str(item["instance"]), at))
    return out


@dataclass
class Tissue:
    groups: dict[str, list[MosInstance]] = field(default_factory=dict)
    sink: EventSink = field(default_factory=EventSink)
    faults: list[FaultPoint] = field(default_factory=list)
    script: list[ScriptedInjection] = field(default_factory=list)
    fresh_seed: bool = False
    aliases: dict[str, str] = field(default_factory=dict)  # original name -> current incarnation

    def names(self) -> list[str]:
        return [i.name for g in self.groups.values() for i in g]

    def add(self, group: str, name: str, spec: PSystemSpec, seed: int = 0) -> MosInstance:
        if name in self.aliases or name in self.names():
            raise MosError(f"duplicate instance name {name}")
        at = [f.at for f in self.faults if f.instance == name]
        inst = create_instance(name, spec, seed, self.sink, faults=at)
        self.groups.setdefault(group, []).append(inst)
        self.aliases[name] = name
        return inst

    def set_faults(self, plan: Iterable[FaultPoint]) -> None:
        plan = list(plan)
        known = set(self.aliases)
        for f in plan:
            if f.instance not in known:
                raise MosError(f"fault plan names unknown instance {f.instance}")
        self.faults = plan
        for group in self.groups.values():
            for inst in group:
                inst.faults = frozenset(f.at for f in plan if f.instance == inst.name)

    def schedule(self, instance: str, at: int, objects: Union[Multiset, dict], label: str) -> None:
        if instance not in self.aliases:
            raise MosError(f"unknown instance {instance}")
        objects = objects if isinstance(objects, Multiset) else Multiset(objects)
        self.script.append(ScriptedInjection(instance, at, objects, label))

    def find(self, name: str) -> MosInstance:
        """Current incarnation of ``name`` (original or replica name)."""
        name = self.aliases.get(name, name)
        for group in self.groups.values():
            for inst in group:
                if inst.name == name:
                    return inst
        raise MosError(f"unknown instance {name}")


@dataclass
class TissueReport:
    groups: dict[str, list[dict]]
    events: list[MonitorEvent]

    def to_json(self) -> dict:
        return {"groups": self.groups}


def tissue_run(tissue: Tissue, budget: int) -> TissueReport:
    """Advance every instance round-robin until halt or ``budget`` ticks.

    A failed instance is reproduced at once and its replica replayed to the
    failure clock; the replica then takes the original's place and continues.
    Scripted injections addressed to an original name follow it to replicas.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    done: set[int] = set()

    def scripted(origin: str, inst: MosInstance) -> None:
        for i, s in enumerate(tissue.script):
            if i not in done and s.instance == origin and s.at == inst.clock and inst.running:
                inject(inst, s.objects, s.label)
                done.add(i)

    order = [(g, i.name) for g, members in tissue.groups.items() for i in members]
    active = True
    while active:
        active = False
        for group, origin in order:
            inst = tissue.find(origin)
            if not inst.running or inst.clock >= budget:
                continue
            scripted(origin, inst)
            tick(inst)
            if inst.status == FAILED:
                twin = reproduce(inst, tissue.sink, fresh_seed=tissue.fresh_seed)
                replay(twin, inst.clock)
                members = tissue.groups[group]
                members[members.index(inst)] = twin
                tissue.aliases[origin] = twin.name
            active = True

    groups: dict[str, list[dict]] = {}
    for group, members in tissue.groups.items():
        rows = []
        for inst in members:
            stop_at_budget(inst)
            res = inst.result()
            status = inst.status if inst.status != RUNNING else "budget-exhausted"
            rows.append({"instance": inst.name, "status": status, "clock": inst.clock,
                         "answer": res.answer, "output": dict(sorted(res.output.items()))})
        groups[group] = rows
    return TissueReport(groups, list(tissue.sink.events))

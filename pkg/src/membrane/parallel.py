"""Worker parallelism for the selection and execution stages.

Selection runs the engine's greedy loop per contention component, with the
random stream keyed by component rather than by worker. Execution runs the
phases consume, produce, communicate, dissolve, divide in that order; every
phase is a batch of independent work items followed by a barrier, and all
writes go to per-item result buffers merged by the coordinating thread.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Callable, NamedTuple, Optional, Sequence, Union

from .model import (
    ACTIVE, DISSOLVE, DIVIDE, EVOLUTION, SEND_IN, SEND_OUT, Configuration, MembraneInstance,
    Multiset, PSystemSpec, Selection,
)

if TYPE_CHECKING:
    from .engine import Engine

PHASES = ("consume", "produce", "communicate", "dissolve", "divide")
COMMUNICATE_KINDS = (SEND_IN, SEND_OUT)


class ContentionComponent(NamedTuple):
    key: int
    members: tuple[int, ...]


def contention_components(config: Configuration, spec: PSystemSpec,
                          index=None) -> list[ContentionComponent]:
    """Partition membrane instances into groups whose selections can interact.

    In transition mode every region consumes only its own objects, so all
    components are singletons. In active mode a child whose label carries a
    send-in rule competes for its parent's objects and joins its component.
    """
    ids = list(index) if index is not None else [m.id for m in config.preorder()]
    if spec.mode != ACTIVE:
        return [ContentionComponent(i, (i,)) for i in sorted(ids)]
    send_in = {lab for lab, rules in spec.rules.items()
               if any(getattr(r, "kind", None) == SEND_IN for r in rules)}
    root = {i: i for i in ids}

    def find(i: int) -> int:
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    for m, parent in config.walk():
        if parent is not None and m.label in send_in:
            a, b = find(m.id), find(parent.id)
            if a != b:
                root[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for i in ids:
        groups.setdefault(find(i), []).append(i)
    comps = [ContentionComponent(min(g), tuple(sorted(g))) for g in groups.values()]
    comps.sort()
    return comps


def available_cpus() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def default_workers() -> int:
    env = os.environ.get("MEMBRANE_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


class WorkerPool:
    """Thread pool that runs one phase at a time.

    ``run_phase`` splits the items into at most ``threads`` contiguous chunks
    and returns only when every chunk finished, which is the barrier between
    phases. Threads are capped at the CPUs available to the process unless
    ``oversubscribe`` is set; results never depend on the thread count.
    With ``instrument=True`` every chunk start/end is logged to ``events``
    as ``(phase, "start"|"end")``.
    """

    def __init__(self, workers: int = 1, instrument: bool = False, oversubscribe: bool = False):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self.threads = workers if oversubscribe else min(workers, available_cpus())
        self.instrument = instrument
        self.events: list[tuple[str, str]] = []
        self.plans: list[PhasePlan] = []  # filled when instrumented
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _log(self, phase: str, what: str) -> None:
        if self.instrument:
            with self._lock:
                self.events.append((phase, what))

    def run_phase(self, phase: str, fn: Callable, items: Sequence, batch: bool = False) -> list:
        """Run ``fn`` on every item; with ``batch`` it maps a whole chunk to a list."""
        if not items:
            return []
        n = len(items)

        def work(chunk):
            self._log(phase, "start")
            try:
                return fn(chunk) if batch else [fn(x) for x in chunk]
            finally:
                self._log(phase, "end")

        if self._pool is None or n == 1:
            return work(items)
        parts = min(self.threads, n)
        bounds = [n * i // parts for i in range(parts + 1)]
        futures = [self._pool.submit(work, items[bounds[i]:bounds[i + 1]]) for i in range(parts)]
        out: list = []
        for f in futures:
            out.extend(f.result())
        return out


def _as_pool(workers: Union[int, WorkerPool]) -> tuple[WorkerPool, bool]:
    if isinstance(workers, WorkerPool):
        return workers, False
    return WorkerPool(workers), True


def par_select(engine: "Engine", config: Configuration, rng, workers: Union[int, WorkerPool] = 1,
               index=None) -> Selection:
    from .engine import index_config

    pool, owned = _as_pool(workers)
    try:
        if index is None:
            index = index_config(config)
        step = config.step + 1
        comps = engine.components(config, index)

        def chunk(comps: Sequence[ContentionComponent]) -> list:
            part: dict[int, dict[str, int]] = {}
            for key, members in comps:
                part.update(engine.select_component(
                    index, members, lambda key=key: rng.stream(step, f"sel:{key}")))
            return [part]

        per: dict[int, dict[str, int]] = {}
        for part in pool.run_phase("select", chunk, comps, batch=True):
            per.update(part)
        return Selection(per)
    finally:
        if owned:
            pool.close()


class PhasePlan(NamedTuple):
    """Work items of each execution phase, in phase order."""
    consume: tuple
    produce: tuple
    communicate: tuple
    dissolve: tuple
    divide: tuple

    def sizes(self) -> dict[str, int]:
        return {ph: len(getattr(self, ph)) for ph in PHASES}


def par_apply(engine: "Engine", config: Configuration, selection: Selection, rng,
              workers: Union[int, WorkerPool] = 1, index=None) -> Configuration:
    """Phased execution; equal to ``Engine.apply`` for every worker count.

    Phase work items: consume (own-region consumption and staged local
    products, one item per selected membrane), produce (out and in-target
    deliveries), communicate (send-in/send-out), dissolve, divide.
    """
    from .engine import SelectionMismatch, index_config

    pool, owned = _as_pool(workers)
    try:
        if index is None:
            index = index_config(config)
        step = config.step + 1
        per = selection.per_membrane
        for mid in per:
            if mid not in index:
                raise SelectionMismatch(f"no membrane instance {mid}")
        selected = sorted(per)

        local_effect = engine.local_effect

        def consume(mids):
            out = []
            for mid in mids:
                m = index[mid][0]
                out.append((mid, local_effect(m.label, m.contents, per[mid])))
            return out

        effects = dict(pool.run_phase("consume", consume, selected, batch=True))

        # structural consumption may draw on the parent's pool; checked after
        # the barrier since it spans items
        taken: dict[int, dict[str, int]] = {}
        structural: list[tuple[int, object]] = []
        for mid in selected:
            m, parent = index[mid]
            for cr in effects[mid].structural:
                if cr.kind == DIVIDE and (m.children or parent is None):
                    raise SelectionMismatch(f"{cr.name} needs an elementary non-skin membrane")
                if cr.kind in (DISSOLVE, SEND_IN) and parent is None:
                    raise SelectionMismatch(f"{cr.name} cannot apply to the skin")
                pid = parent.id if cr.from_parent else mid
                base = effects[pid].rem if pid in effects else index[pid][0].contents._d
                t = taken.setdefault(pid, {})
                trig = cr.lhs[0][0]
                if base.get(trig, 0) - t.get(trig, 0) < 1:
                    raise SelectionMismatch(f"not enough {trig} for {cr.name} on {mid}")
                t[trig] = t.get(trig, 0) + 1
                structural.append((mid, cr))

        def produce(mid):
            eff = effects[mid]
            m, parent = index[mid]
            up = parent.id if parent is not None else None
            out = [(up, s, n) for s, n in eff.out]
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
                out.append((dest, sym, 1))
            return out

        def communicate(item):
            mid, cr = item
            sym = cr.rule.products
            if sym is None:
                return []
            if cr.kind == SEND_IN:
                return [(mid, sym, 1)]
            parent = index[mid][1]
            return [(parent.id if parent is not None else None, sym, 1)]

        staged: dict[Optional[int], dict[str, int]] = {}

        def merge(deliveries) -> None:
            for dest, s, n in deliveries:
                d = staged.setdefault(dest, {})
                d[s] = d.get(s, 0) + n

        producing = [mid for mid in selected if effects[mid].out or effects[mid].into]
        for deliveries in pool.run_phase("produce", produce, producing):
            merge(deliveries)
        moving = [(mid, cr) for mid, cr in structural if cr.kind in COMMUNICATE_KINDS]
        for deliveries in pool.run_phase("communicate", communicate, moving):
            merge(deliveries)

        def contents_of(mid: int) -> Multiset:
            eff = effects.get(mid)
            base = eff.local if eff is not None else index[mid][0].contents
            t, inc = taken.get(mid), staged.get(mid)
            if not t and not inc:
                return base
            d = dict(base._d)
            for s, n in (t or {}).items():
                d[s] -= n
            for s, n in (inc or {}).items():
                d[s] = d.get(s, 0) + n
            return Multiset._wrap({s: n for s, n in d.items() if n})

        gone = {mid: cr.rule.products for mid, cr in structural if cr.kind == DISSOLVE}

        def dissolve(mid):
            up = index[mid][1]
            while up.id in gone:
                up = index[up.id][1]
            released = dict(contents_of(mid)._d)
            if gone[mid] is not None:
                released[gone[mid]] = released.get(gone[mid], 0) + 1
            return up.id, released

        # each dissolving membrane releases straight to its nearest surviving
        # ancestor, so nested dissolutions are independent items
        for dest, released in pool.run_phase("dissolve", dissolve, sorted(gone)):
            merge((dest, s, n) for s, n in released.items())

        dividing = sorted((mid, cr) for mid, cr in structural if cr.kind == DIVIDE)
        if pool.instrument:
            pool.plans.append(PhasePlan(tuple(selected), tuple(producing),
                                        tuple(mid for mid, _ in moving), tuple(sorted(gone)),
                                        tuple(mid for mid, _ in dividing)))
        next_id = config.next_id
        ids = {}
        for mid, _ in dividing:
            ids[mid] = (next_id, next_id + 1)
            next_id += 2

        def divide(item):
            mid, cr = item
            first, second = cr.rule.products
            base = contents_of(mid)._d
            a, b = dict(base), dict(base)
            a[first] = a.get(first, 0) + 1
            b[second] = b.get(second, 0) + 1
            label = index[mid][0].label
            id1, id2 = ids[mid]
            return mid, (MembraneInstance(id1, label, Multiset._wrap(a)),
                         MembraneInstance(id2, label, Multiset._wrap(b)))

        twins = dict(pool.run_phase("divide", divide, dividing))

        def build(m: MembraneInstance) -> list[MembraneInstance]:
            kids: list[MembraneInstance] = []
            same = True
            for c in m.children:
                r = build(c)
                if len(r) != 1 or r[0] is not c:
                    same = False
                kids.extend(r)
            if m.id in gone:
                return kids
            if m.id in twins:
                return list(twins[m.id])
            contents = contents_of(m.id)
            if same and contents is m.contents:
                return [m]
            return [MembraneInstance(m.id, m.label, contents, tuple(kids))]

        (skin,) = build(config.skin)
        env = dict(config.environment._d)
        for s, n in staged.get(None, {}).items():
            env[s] = env.get(s, 0) + n
        return Configuration(skin, Multiset._wrap({s: n for s, n in env.items() if n}),
                             step, False, next_id)
    finally:
        if owned:
            pool.close()

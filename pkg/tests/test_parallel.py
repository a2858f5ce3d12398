import pytest
from hypothesis import given, settings, strategies as st

from membrane import Multiset, Selection, canonical_serialize, parse, run, systems
from membrane.engine import Engine
from membrane.generate import random_spec
from membrane.model import EMPTY, Configuration, MembraneInstance
from membrane.parallel import (
    PHASES, WorkerPool, available_cpus, contention_components, default_workers, par_apply,
    par_select,
)
from membrane.rng import Rng

DIVIDER = "model active\nalphabet a b c\nmu [1[2]]\narule 2 div @d: a -> b | c\n"


def test_pc2_components(pc2):
    comps = contention_components(Engine(pc2).initial(), pc2)
    assert [c.members for c in comps] == [(0,), (1,), (2,), (3,)]


def test_send_in_joins_parent():
    spec = parse("model active\nalphabet a\nmu [1[2][3]]\narule 2 in @si: a -> a\n")
    comps = contention_components(Engine(spec).initial(), spec)
    assert [(c.key, c.members) for c in comps] == [(0, (0, 1)), (2, (2,))]


def test_single_membrane_component():
    spec = parse("model transition\nalphabet a\nmu [1]\n")
    assert [c.members for c in contention_components(Engine(spec).initial(), spec)] == [(0,)]


def test_components_partition_random():
    for seed in range(100):
        spec = random_spec(seed)
        c = Engine(spec).initial()
        ids = sorted(m.id for m in c.preorder())
        comps = contention_components(c, spec)
        flat = sorted(i for comp in comps for i in comp.members)
        assert flat == ids
        assert all(comp.key == min(comp.members) for comp in comps)


@pytest.mark.parametrize("workers", [1, 2, 8])
def test_par_select_matches_engine(pc2, workers):
    e = Engine(pc2)
    with WorkerPool(workers, oversubscribe=True) as pool:
        for seed in range(20):
            c, rng = e.initial(), Rng(seed)
            for _ in range(8):
                sel = e.select(c, rng)
                assert par_select(e, c, rng, pool) == sel
                if not sel:
                    break
                c = e.apply(c, sel, rng)


def test_empty_regions_empty_selection(pc2):
    e = Engine(pc2)
    c = e.initial().replace_contents(2, EMPTY)
    for w in (1, 8):
        assert not par_select(e, c, Rng(0), w)


def test_division_ids_ascending_parent_order():
    spec = parse(DIVIDER)
    e = Engine(spec)
    kids = tuple(MembraneInstance(i, "2", Multiset({"a": 1})) for i in (3, 5))
    cfg = Configuration(MembraneInstance(0, "1", EMPTY, kids), EMPTY, next_id=7)
    sel = Selection({3: {"d": 1}, 5: {"d": 1}})
    for w in (1, 2, 8):
        with WorkerPool(w, oversubscribe=True) as pool:
            out = par_apply(e, cfg, sel, Rng(0), pool)
        assert [(m.id, m.contents) for m in out.skin.children] == [
            (7, Multiset({"b": 1})), (8, Multiset({"c": 1})),
            (9, Multiset({"b": 1})), (10, Multiset({"c": 1}))]
        assert out.next_id == 11
        assert canonical_serialize(out) == canonical_serialize(e.apply(cfg, sel, Rng(0)))


def test_barrier_discipline(doubling):
    e = Engine(doubling)
    with WorkerPool(4, instrument=True, oversubscribe=True) as pool:
        c, rng = e.initial(), Rng(0)
        for _ in range(6):
            sel = par_select(e, c, rng, pool)
            c = par_apply(e, c, sel, rng, pool)
        events = pool.events
        assert pool.plans and all(set(p.sizes()) == set(PHASES) for p in pool.plans)
    # every chunk of a phase ends before any chunk of the next phase starts
    open_phase, running = None, 0
    for phase, what in events:
        if what == "start":
            if phase != open_phase:
                assert running == 0, f"{phase} started while {open_phase} running"
                open_phase = phase
            running += 1
        else:
            assert phase == open_phase
            running -= 1
    assert running == 0
    order = [p for p, w in events if w == "start"]
    steps, cur = [], []
    for p in order:
        if p == "select" and cur and cur[-1] != "select":
            steps.append(cur)
            cur = []
        if not cur or cur[-1] != p:
            cur.append(p)
    steps.append(cur)
    rank = {p: i for i, p in enumerate(("select",) + PHASES)}
    for phases in steps:
        assert [rank[p] for p in phases] == sorted(rank[p] for p in phases)


@pytest.mark.parametrize("name", ["pc2", "sync", "even", "doubling", "even_k7"])
def test_trace_worker_independent(name):
    spec = systems.load(name)
    for seed in range(5):
        base = run(spec, seed=seed, max_steps=12).to_jsonl()
        for w in (2, 8):
            assert run(spec, seed=seed, max_steps=12, workers=w).to_jsonl() == base


def test_real_threads_equivalence_random():
    pools = [WorkerPool(w, oversubscribe=True) for w in (2, 8)]
    try:
        for s in range(60):
            spec = random_spec(s)
            e = Engine(spec)
            c, rng = e.initial(), Rng(s)
            for _ in range(3):
                sel = e.select(c, rng)
                if not sel:
                    break
                ref = canonical_serialize(e.apply(c, sel, rng))
                for pool in pools:
                    assert par_select(e, c, rng, pool) == sel
                    assert canonical_serialize(par_apply(e, c, sel, rng, pool)) == ref
                c = e.apply(c, sel, rng)
    finally:
        for pool in pools:
            pool.close()


@settings(max_examples=80)
@given(st.integers(0, 10**6), st.integers(0, 2**40))
def test_par_apply_equivalence_property(spec_seed, seed):
    spec = random_spec(spec_seed)
    e = Engine(spec)
    c, rng = e.initial(), Rng(seed)
    for _ in range(3):
        sel = e.select(c, rng)
        if not sel:
            break
        nxt = e.apply(c, sel, rng)
        assert par_apply(e, c, sel, rng, 3) == nxt
        c = nxt


def test_worker_pool_validation():
    with pytest.raises(ValueError):
        WorkerPool(0)
    pool = WorkerPool(64)
    assert pool.threads == min(64, available_cpus())
    pool.close()
    pool = WorkerPool(3, oversubscribe=True)
    assert pool.threads == 3
    assert pool.run_phase("x", lambda v: v * 2, list(range(10))) == [v * 2 for v in range(10)]
    pool.close()


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("MEMBRANE_WORKERS", "6")
    assert default_workers() == 6
    monkeypatch.setenv("MEMBRANE_WORKERS", "junk")
    assert default_workers() == 1
    monkeypatch.delenv("MEMBRANE_WORKERS")
    assert default_workers() == 1

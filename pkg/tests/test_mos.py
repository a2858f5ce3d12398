import json

import pytest
from hypothesis import given, settings, strategies as st

from membrane import Multiset, canonical_serialize, parse, run, systems
from membrane.engine import InvalidSpec
from membrane.mos import (
    EventSink, FaultPoint, MosError, Tissue, create_instance, inject, load_fault_plan, replay,
    reproduce, tick, tissue_run,
)


def test_create_pc2(pc2):
    sink = EventSink()
    inst = create_instance("A", pc2, 7, sink)
    assert inst.clock == 0 and inst.status == "running"
    assert inst.current.find(2).contents == Multiset({"a": 1})
    assert sink.kinds() == [("started", "A", 0)]


def test_create_invalid_spec():
    with pytest.raises(InvalidSpec):
        create_instance("A", parse("model transition\nalphabet a\nmu [1[2][2]]\n"))


def test_ruleless_halts_on_first_tick():
    inst = create_instance("A", parse("model transition\nalphabet a\nmu [1]\n"))
    tick(inst)
    assert inst.status == "halted" and inst.clock == 0
    with pytest.raises(MosError):
        tick(inst)


def test_duplicate_name_in_tissue(pc2):
    t = Tissue()
    t.add("g", "A", pc2, 1)
    with pytest.raises(MosError):
        t.add("h", "A", pc2, 2)


def test_tick_pc2(pc2):
    inst = create_instance("A", pc2, 7)
    tick(inst)
    assert inst.clock == 1 and inst.current.find(2).contents == Multiset({"a": 2})


def test_inject_lands_at_next_boundary(pc2):
    sink = EventSink()
    inst = create_instance("A", pc2, 7, sink)
    tick(inst)
    tick(inst)
    before = inst.current.find(2).contents
    inject(inst, Multiset({"a": 3}), "3")
    assert inst.current.find(2).contents == before  # not yet
    assert inst.log[-1].stamp == 2
    tick(inst)
    # region 3 had `before` plus 3 a at the start of step 3
    ref = create_instance("R", pc2, 7)
    tick(ref)
    tick(ref)
    ref.current = ref.current.replace_contents(2, before + Multiset({"a": 3}))
    tick(ref)
    assert canonical_serialize(inst.current) == canonical_serialize(ref.current)
    assert ("injected", "A", 2) in sink.kinds()


def test_inject_empty_logged(pc2):
    inst = create_instance("A", pc2, 0)
    inject(inst, Multiset(), "3")
    assert len(inst.log) == 1


def test_inject_errors(pc2):
    inst = create_instance("A", pc2, 0)
    with pytest.raises(MosError, match="unknown label"):
        inject(inst, Multiset({"a": 1}), "9")
    with pytest.raises(MosError):
        inject(inst, Multiset({"zz": 1}), "3")
    inst.status = "failed"
    with pytest.raises(MosError):
        inject(inst, Multiset({"a": 1}), "3")


def test_inject_into_dissolved_label():
    spec = parse("model active\nalphabet a\nmu [1[2]]\ninit 2: a\narule 2 dis @x: a -> .\narule 1 evo @k: a -> a\n")
    inst = create_instance("A", spec, 0)
    tick(inst)
    with pytest.raises(MosError, match="unknown label"):
        inject(inst, Multiset({"a": 1}), "2")


def test_fault_point(pc2):
    sink = EventSink()
    inst = create_instance("A", pc2, 4, sink, faults=[3])
    for _ in range(3):
        tick(inst)
    tick(inst)
    assert inst.status == "failed" and inst.clock == 3
    assert sink.kinds()[-1] == ("failed", "A", 3)


def test_reproduce_names_and_twin(pc2):
    inst = create_instance("A", pc2, 5)
    r1, r2 = reproduce(inst), reproduce(inst)
    assert (r1.name, r2.name) == ("A.r1", "A.r2")
    assert r1.initial == inst.initial and r1.current == inst.current and r1.seed == inst.seed


def test_replay_reaches_failure_state(pc2):
    inst = create_instance("A", pc2, 4, faults=[12])
    while inst.status == "running":
        if inst.clock in (2, 5):
            inject(inst, Multiset({"a": 4}), "3")
        tick(inst)
    assert inst.status == "failed"
    twin = replay(reproduce(inst), inst.clock)
    assert twin.clock == inst.clock
    assert canonical_serialize(twin.current) == canonical_serialize(inst.current)


def test_fresh_seed_changes_seed(pc2):
    inst = create_instance("A", pc2, 5)
    assert reproduce(inst, fresh_seed=True).seed != 5


def test_tissue_isolation(pc2):
    t = Tissue()
    for name, seed in zip("ABC", (1, 2, 3)):
        t.add("pc2", name, pc2, seed)
    report = tissue_run(t, 100)
    for name, seed in zip("ABC", (1, 2, 3)):
        assert t.find(name).trace().to_jsonl() == run(pc2, seed=seed, max_steps=100).to_jsonl()
    assert [e.kind for e in report.events[:3]] == ["started"] * 3
    assert [e.seq for e in report.events] == list(range(len(report.events)))


def test_tissue_fault_and_reproduce(pc2):
    t = Tissue()
    for name, seed in zip("ABC", (3, 4, 5)):
        t.add("pc2", name, pc2, seed)
    t.set_faults([FaultPoint("B", 10)])
    report = tissue_run(t, 100)
    kinds = t.sink.kinds()
    i = kinds.index(("failed", "B", 10))
    assert kinds[i + 1] == ("reproduced", "B.r1", 0)
    replay_ticks = [k for k in kinds[i + 2:] if k[1] == "B.r1"]
    assert replay_ticks[:10] == [("stepped", "B.r1", c) for c in range(1, 11)]
    solo = run(pc2, seed=4, max_steps=100)
    assert canonical_serialize(t.find("B").current) == canonical_serialize(solo.final)
    names = [r["instance"] for r in report.groups["pc2"]]
    assert names == ["A", "B.r1", "C"]


def test_tissue_scripted_injections_follow_replica(pc2):
    def go(faults):
        t = Tissue()
        t.add("g", "A", pc2, 4)
        t.set_faults(faults)
        t.schedule("A", 2, {"a": 3}, "3")
        t.schedule("A", 12, {"a": 2}, "3")
        tissue_run(t, 100)
        return t
    clean, faulty = go([]), go([FaultPoint("A", 10)])
    assert faulty.find("A").name == "A.r1"
    assert canonical_serialize(faulty.find("A").current) == canonical_serialize(clean.find("A").current)
    assert len(faulty.find("A").log) == len(clean.find("A").log) == 2


def test_unknown_fault_instance(pc2):
    t = Tissue()
    t.add("g", "A", pc2, 1)
    with pytest.raises(MosError):
        t.set_faults([FaultPoint("Z", 3)])


def test_empty_tissue():
    report = tissue_run(Tissue(), 10)
    assert report.events == [] and report.groups == {}


def test_cord_purity(pc2):
    t = Tissue()
    t.add("g", "A", pc2, 4)
    t.add("g", "B", pc2, 8)
    t.schedule("A", 1, {"a": 5}, "3")
    t.set_faults([FaultPoint("B", 3)])
    tissue_run(t, 50)
    for line in t.sink.to_jsonl().splitlines():
        rec = json.loads(line)
        assert set(rec) == {"seq", "kind", "instance", "clock", "detail"}
        assert "{" not in rec["detail"] and "*" not in rec["detail"]


def test_fault_plan_loading():
    assert load_fault_plan('[{"instance":"B","at":10}]') == [FaultPoint("B", 10)]
    for bad in ('{}', '[{"instance":"B"}]', '[{"instance":"B","at":-1}]'):
        with pytest.raises(ValueError):
            load_fault_plan(bad)


@settings(max_examples=40)
@given(st.integers(0, 500), st.integers(1, 30), st.integers(0, 6), st.integers(1, 8))
def test_replay_fidelity_property(seed, at, inj_clock, amount):
    spec = systems.load("pc2")
    inst = create_instance("A", spec, seed, faults=[at])
    while inst.status == "running":
        if inst.clock == inj_clock:
            inject(inst, Multiset({"a": amount}), "3")
        tick(inst)
    twin = replay(reproduce(inst), inst.clock)
    assert canonical_serialize(twin.current) == canonical_serialize(inst.current)
    assert twin.clock == inst.clock

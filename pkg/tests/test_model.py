import dataclasses

import pytest
from hypothesis import given, strategies as st

from membrane import ParseError, parse, systems, validate_spec
from membrane.model import (
    EMPTY, Configuration, MembraneInstance, Multiset, MultisetError, canonical_serialize,
    contains, difference, scale, union,
)

msets = st.dictionaries(st.sampled_from("abcd"), st.integers(0, 5)).map(Multiset)


def test_union_example():
    assert union(Multiset({"a": 2}), Multiset({"a": 1, "b": 1})) == Multiset({"a": 3, "b": 1})


def test_difference_to_empty():
    d = difference(Multiset({"a": 2}), Multiset({"a": 2}))
    assert d == EMPTY and dict(d) == {}


def test_scale_example():
    assert scale(Multiset({"a": 1, "b": 2}), 3) == Multiset({"a": 3, "b": 6})


def test_difference_requires_containment():
    with pytest.raises(MultisetError):
        difference(Multiset({"a": 1}), Multiset({"a": 2}))
    assert not contains(Multiset({"a": 1}), Multiset({"a": 2}))


def test_no_zero_entries():
    m = Multiset({"a": 0, "b": 2})
    assert "a" not in m and m["a"] == 0 and len(m) == 1
    with pytest.raises(MultisetError):
        Multiset({"a": -1})


@given(msets, msets)
def test_union_commutes(a, b):
    assert a + b == b + a


@given(msets, msets, msets)
def test_union_associates(a, b, c):
    assert (a + b) + c == a + (b + c)


@given(msets, msets)
def test_difference_inverts_union(a, b):
    assert (a + b) - b == a
    assert contains(a + b, b) and contains(a + b, a)


@given(msets, st.integers(0, 4))
def test_scale_is_repeated_union(a, k):
    total = EMPTY
    for _ in range(k):
        total = total + a
    assert a * k == total


@given(msets)
def test_equal_multisets_hash_equal(a):
    b = Multiset(dict(a))
    assert a == b and hash(a) == hash(b) and a.serialize() == b.serialize()


def test_serialize_sorted():
    assert Multiset({"b": 1, "a": 2}).serialize() == "{a*2,b*1}"
    assert EMPTY.serialize() == "{}"


MINIMAL = "model transition\nalphabet a\nmu [1]\ninit 1: a\nrule 1 @r: a -> a\n"


def test_minimal_spec_valid():
    assert validate_spec(parse(MINIMAL)) == []


def test_duplicate_label_in_mu():
    spec = parse("model transition\nalphabet a\nmu [1[2][2]]\n")
    msgs = [v.message for v in validate_spec(spec)]
    assert any("duplicate label in mu" in m for m in msgs)


def test_catalyst_not_conserved():
    spec = parse("model transition\nalphabet a b c\ncatalysts c\nmu [1]\nrule 1 @r: c a -> b\n")
    vs = validate_spec(spec)
    assert any("catalyst not conserved" in v.message and v.rule == "r" for v in vs)


def test_catalyst_conserved_ok():
    spec = parse("model transition\nalphabet a b c\ncatalysts c\nmu [1]\nrule 1 @r: c a -> c b\n")
    assert validate_spec(spec) == []


@pytest.mark.parametrize("name", ["pc2", "sync", "even", "doubling", "even_k0", "even_k50"])
def test_bundled_valid(name):
    assert validate_spec(systems.load(name)) == []


def _mutations():
    pc2 = systems.PC2
    act = systems.DOUBLING
    even = systems.even_text(4)
    return {
        "in-target not a child": pc2.replace("a4!in(4)", "a4!in(3)"),
        "priority cycle": even + "prio 1: r3 > r1\n",
        "dissolve on skin": act + "arule 1 dis @x: a -> .\n",
        "divide on skin": act + "arule 1 div @y: a -> a | a\n",
        "send-in on skin": act + "arule 1 in @z: a -> a\n",
        "output label unknown": pc2.replace("output env", "output 9"),
        "recognizer needs env output": even.replace("output env", "output 1"),
    }


@pytest.mark.parametrize("what", list(_mutations()))
def test_single_mutations_rejected(what):
    text = _mutations()[what]
    try:
        spec = parse(text)
    except ParseError:
        return  # rejected by the parser already
    assert validate_spec(spec), what


def test_spec_symbol_outside_alphabet_rejected():
    spec = systems.load("pc2")
    bad = dataclasses.replace(spec, alphabet=frozenset({"a"}))
    assert any("not in alphabet" in v.message for v in validate_spec(bad))


def test_initial_ids_preorder(pc2):
    c = Configuration.initial(pc2)
    assert [(m.id, m.label) for m in c.preorder()] == [(0, "1"), (1, "2"), (2, "3"), (3, "4")]
    assert c.next_id == 4


def test_canonical_empty_skin():
    c = Configuration(MembraneInstance(0, "1"), EMPTY)
    assert canonical_serialize(c) == "0 1 {}\nenv {}"


def test_canonical_pc2_initial(pc2):
    lines = canonical_serialize(Configuration.initial(pc2)).split("\n")
    assert lines == ["0 1 {}", "1 2 {}", "2 3 {a*1}", "3 4 {}", "env {}"]


def test_canonical_child_order_matters():
    x = MembraneInstance(1, "2", Multiset({"a": 1}))
    y = MembraneInstance(2, "2", Multiset({"b": 1}))
    c1 = Configuration(MembraneInstance(0, "1", EMPTY, (x, y)), EMPTY)
    c2 = Configuration(MembraneInstance(0, "1", EMPTY, (y, x)), EMPTY)
    assert canonical_serialize(c1) != canonical_serialize(c2)


def test_canonical_ignores_step():
    c = Configuration.initial(systems.load("pc2"))
    assert canonical_serialize(c) == canonical_serialize(dataclasses.replace(c, step=9, halted=True))


def test_canonical_injective_on_explored(pc2):
    from membrane.oracle import explore
    tree = explore(pc2, 5)
    by_depth = {}
    for n in tree.nodes:
        by_depth.setdefault(n.depth, []).append(n)
    for nodes in by_depth.values():
        texts = [n.text for n in nodes]
        assert len(set(texts)) == len(texts)
        for a in nodes:
            for b in nodes:
                if a is not b:
                    assert a.config.skin != b.config.skin or a.config.environment != b.config.environment

import pytest
from hypothesis import given, settings, strategies as st

from membrane import ParseError, parse, serialize, systems
from membrane.dsl import MAX_DEPTH
from membrane.generate import random_spec, random_text

MINIMAL = "model transition\nalphabet a\nmu [1]\ninit 1: a\nrule 1 @r: a -> a a\n"


def diag(text):
    with pytest.raises(ParseError) as e:
        parse(text)
    return e.value.diagnostics


def test_minimal():
    spec = parse(MINIMAL)
    assert spec.labels == {"1"}
    assert [r.name for r in spec.rules_for("1")] == ["r"]


def test_pc2_nesting(pc2):
    mu = pc2.mu
    assert mu.label == "1"
    assert [c.label for c in mu.children] == ["2", "4"]
    assert [c.label for c in mu.children[0].children] == ["3"]
    assert mu.children[1].children == ()


def test_malformed_arrow_span():
    text = "model transition\nalphabet a b\nmu [1]\nrule 1 @r: a ->> b\n"
    (d,) = diag(text)
    assert "malformed rule arrow" in d.message
    line = text.split("\n")[d.span.line - 1]
    assert line[d.span.start - 1:d.span.end] == "->>"


@pytest.mark.parametrize("text,needle", [
    ("model transition\nalphabet a\nmu [1]\nfrobnicate 1\n", "unknown directive"),
    ("model transition\nalphabet a\nmu [1]\ninit 1: b\n", "undeclared symbol"),
    ("model transition\nalphabet a\nmu [1]\ninit 2: a\n", "undeclared label"),
    ("model transition\nalphabet a\nmu [1]\nrule 1 @r: a -> a\nrule 1 @r: a -> .\n", "duplicate rule name"),
    ("model transition\nmu [1]\n", "alphabet"),
    ("alphabet a\nmu [1]\n", "model"),
    ("model transition\nalphabet a\n", "mu"),
    ("model transition\nalphabet a\nmu [1\n", ""),
    ("model transition\nalphabet a\nmu [1]\ninit 1: a*x\n", ""),
])
def test_errors(text, needle):
    ds = diag(text)
    assert ds and all(d.severity == "error" for d in ds)
    assert any(needle in d.message for d in ds)


def test_same_rule_name_in_other_region_ok():
    parse("model transition\nalphabet a\nmu [1[2]]\nrule 1 @r: a -> a\nrule 2 @r: a -> a\n")


def test_invalid_utf8():
    ds = diag(b"model transition\n\xff\xfe\n")
    assert "UTF-8" in ds[0].message


def test_deep_nesting_reported():
    mu = "".join(f"[x{i}" for i in range(MAX_DEPTH + 5)) + "]" * (MAX_DEPTH + 5)
    diag(f"model transition\nalphabet a\nmu {mu}\n")


def test_comments_and_blank_lines():
    spec = parse("# hi\n\nmodel transition  # trailing\nalphabet a\n\nmu [1]\n")
    assert spec.alphabet == {"a"}


def test_serialize_minimal_stable():
    text = serialize(parse(MINIMAL))
    assert text == serialize(parse(text))
    assert text.startswith("model transition\nalphabet a\nmu [1]\n")


def test_serialize_order():
    spec = systems.load("even")
    lines = serialize(spec).splitlines()
    heads = [ln.split()[0] for ln in lines]
    order = ["model", "alphabet", "mu", "init", "rule", "prio", "output", "recognizer"]
    assert [h for h in order if h in heads] == sorted(set(heads), key=order.index)
    last_rule = max(i for i, h in enumerate(heads) if h == "rule")
    first_prio = min(i for i, h in enumerate(heads) if h == "prio")
    assert first_prio > last_rule


def test_alphabet_sorted():
    spec = parse("model transition\nalphabet c a b\nmu [1]\n")
    assert "alphabet a b c" in serialize(spec)


@pytest.mark.parametrize("name", ["pc2", "sync", "even", "doubling"] + [f"even_k{k}" for k in (0, 1, 50)])
def test_bundled_roundtrip(name):
    spec = systems.load(name)
    assert parse(serialize(spec)) == spec


def test_roundtrip_500_random():
    for seed in range(500):
        spec = random_spec(seed)
        assert parse(serialize(spec)) == spec, random_text(seed)


@given(st.integers(0, 10**6))
def test_roundtrip_random_property(seed):
    spec = random_spec(seed)
    text = serialize(spec)
    assert parse(text) == spec
    assert serialize(parse(text)) == text


TOKENS = ["model", "transition", "active", "alphabet", "mu", "init", "rule", "arule", "prio",
          "output", "env", "recognizer", "catalysts", "terminals", "evo", "in", "out", "dis",
          "div", "a", "b", "1", "2", "[", "]", ":", "@", "->", "->>", "=>", "!", "(", ")", "*",
          "|", ".", ">", " ", "\n", "#", "\t", "é"]


@settings(max_examples=300)
@given(st.lists(st.sampled_from(TOKENS), max_size=40))
def test_token_soup_never_crashes(parts):
    text = " ".join(parts)
    try:
        parse(text)
    except ParseError as e:
        lines = text.split("\n")
        for d in e.diagnostics:
            assert 1 <= d.span.line and d.span.start <= d.span.end
            if d.span.line <= len(lines):
                assert d.span.start >= 1


@settings(max_examples=300)
@given(st.binary(max_size=200))
def test_bytes_never_crash(data):
    try:
        parse(data)
    except ParseError:
        pass


@settings(max_examples=200)
@given(st.text(max_size=200))
def test_text_never_crash(text):
    try:
        parse(text)
    except ParseError:
        pass


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.data())
def test_mutated_specs_only_parse_errors(seed, data):
    text = serialize(random_spec(seed))
    i = data.draw(st.integers(0, len(text)))
    junk = data.draw(st.sampled_from(["->>", "[", "]", "@", "!in(", "*", "zz", "\n", ":", "|"]))
    try:
        parse(text[:i] + junk + text[i:])
    except ParseError as e:
        for d in e.diagnostics:
            assert d.span.end >= d.span.start >= 1


@pytest.mark.parametrize("text,token", [
    ("model transition\nalphabet a\nmu [1]\nfrobnicate 1\n", "frobnicate"),
    ("model transition\nalphabet a\nmu [1]\ninit 1: b\n", "b"),
    ("model transition\nalphabet a\nmu [1]\ninit 7: a\n", "7"),
    ("model transition\nalphabet a\nmu [1]\nrule 1 @r: a => a\n", "=>"),
    ("model transition\nalphabet a\nmu [1]\nrule 1 @r: a -> a\nrule 1 @r: a -> .\n", "r"),
])
def test_span_inside_token(text, token):
    (d, *_) = diag(text)
    line = text.split("\n")[d.span.line - 1]
    assert line[d.span.start - 1:d.span.end] == token

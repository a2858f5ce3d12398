"""Line-oriented text format (``.mps``) for membrane systems.

Grammar, one statement per line, ``#`` starts a comment::

    model transition | model active
    alphabet <sym>+
    catalysts <sym>*
    terminals <sym>*
    mu [<label> <tree>*]
    init <label>: <mset> | .
    rule <label> @<name>: <mset> -> <item>+ | .       item := sym | sym!out | sym!in(<label>)
    arule <label> <evo|in|out|dis|div> @<name>: <sym> -> <rhs>
    prio <label>: <name> > <name>
    output env | output <label>
    recognizer <yes> <no>

A multiset is a list of ``sym`` or ``sym*count`` items.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .model import (
    ACTIVE, DISSOLVE, DIVIDE, ENV, EVOLUTION, MODES, SEND_IN, SEND_OUT, TRANSITION,
    ActiveMembraneRule, MembraneTemplate, Multiset, PrioritySpec, PSystemSpec, Target,
    TransitionRule,
)

DSL_KINDS = {"evo": EVOLUTION, "in": SEND_IN, "out": SEND_OUT, "dis": DISSOLVE, "div": DIVIDE}
KIND_WORDS = {v: k for k, v in DSL_KINDS.items()}

DIRECTIVES = ("model", "alphabet", "catalysts", "terminals", "mu", "init", "rule",
              "arule", "prio", "output", "recognizer")
SINGLE = {"model", "alphabet", "catalysts", "terminals", "mu", "output", "recognizer"}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.start}-{self.end}"


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str
    message: str
    span: SourceSpan

    def __str__(self) -> str:
        return f"{self.span.line}:{self.span.start}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<ident>[A-Za-z0-9_]+)
  | (?P<arrow>[-=]+>*)
  | (?P<punct>[\[\]:@!()*|.>])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str  # ident | arrow | punct
    text: str
    col: int  # 1-based start column

    @property
    def end(self) -> int:
        return self.col + len(self.text) - 1


class _Fail(Exception):
    def __init__(self, message: str, tok: Optional[_Tok] = None, col: int = 1, width: int = 1):
        self.message = message
        if tok is not None:
            col, width = tok.col, len(tok.text)
        self.col = col
        self.width = max(width, 1)


def _tokenize(line: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise _Fail(f"unexpected character {line[pos]!r}", col=pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos + 1))
        pos = m.end()
    return toks


class _Line:
    """Cursor over the tokens of one statement."""

    def __init__(self, toks: list[_Tok], lineno: int, width: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.width = width

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise _Fail(f"expected {what} before end of line", col=max(self.width, 1))
        self.i += 1
        return tok

    def ident(self, what: str) -> _Tok:
        tok = self.next(what)
        if tok.kind != "ident":
            raise _Fail(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def punct(self, ch: str) -> _Tok:
        tok = self.next(f"'{ch}'")
        if tok.text != ch:
            if tok.kind == "arrow" and ch == ">":
                raise _Fail("malformed priority marker", tok)
            raise _Fail(f"expected '{ch}', found {tok.text!r}", tok)
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def end(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise _Fail(f"unexpected {tok.text!r}", tok)

    def arrow(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise _Fail("malformed rule arrow: missing '->'", col=max(self.width, 1))
        self.i += 1
        if tok.kind != "arrow" or tok.text != "->":
            raise _Fail("malformed rule arrow", tok)
        return tok


def _count(cur: _Line) -> int:
    tok = cur.ident("count")
    if not tok.text.isdigit() or int(tok.text) < 1:
        raise _Fail(f"count must be a positive integer, found {tok.text!r}", tok)
    return int(tok.text)


def _mset(cur: _Line, stop: tuple[str, ...] = ()) -> list[tuple[_Tok, int]]:
    """Parse ``.`` or ``(sym | sym*n)+`` up to end of line or a stop token."""
    if cur.at("."):
        cur.next(".")
        return []
    items = []
    while not cur.done() and not (cur.peek().text in stop or cur.peek().kind == "arrow"):
        sym = cur.ident("symbol")
        n = 1
        if cur.at("*"):
            cur.next("*")
            n = _count(cur)
        items.append((sym, n))
    if not items:
        tok = cur.peek()
        if tok is None:
            raise _Fail("expected a multiset or '.'", col=max(cur.width, 1))
        raise _Fail(f"expected a multiset or '.', found {tok.text!r}", tok)
    return items


MAX_DEPTH = 200


def _tree(cur: _Line, depth: int = 0) -> tuple:
    opening = cur.punct("[")
    if depth >= MAX_DEPTH:
        raise _Fail("membrane nesting too deep", opening)
    lab = cur.ident("label")
    kids = []
    while cur.at("["):
        kids.append(_tree(cur, depth + 1))
    cur.punct("]")
    return (lab, kids)


@dataclass
class _Stmt:
    directive: str
    lineno: int
    payload: object


def parse(text: Union[str, bytes]) -> PSystemSpec:
    """Parse DSL text into a spec. Raises ParseError with every diagnostic found.

    Structural validation beyond the grammar is left to ``validate_spec``.
    """
    diags: list[ParseDiagnostic] = []

    def err(lineno: int, message: str, col: int, width: int = 1):
        diags.append(ParseDiagnostic("error", message, SourceSpan(lineno, col, col + width - 1)))

    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            head = bytes(text)[: e.start]
            lineno = head.count(b"\n") + 1
            col = len(head) - (head.rfind(b"\n") + 1) + 1
            err(lineno, "invalid UTF-8", col)
            raise ParseError(diags)

    stmts: list[_Stmt] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0]
        try:
            toks = _tokenize(line)
            if not toks:
                continue
            cur = _Line(toks, lineno, len(line.rstrip()))
            head = toks[0]
            if head.kind != "ident" or head.text not in DIRECTIVES:
                raise _Fail(f"unknown directive {head.text!r}", head)
            cur.next("directive")
            stmts.append(_Stmt(head.text, lineno, _statement(head.text, cur)))
        except _Fail as f:
            err(lineno, f.message, f.col, f.width)

    if diags:
        raise ParseError(diags)
    return _assemble(stmts, err, diags)


def _statement(d: str, cur: _Line):
    if d == "model":
        tok = cur.ident("mode")
        if tok.text not in MODES:
            raise _Fail(f"unknown mode {tok.text!r}", tok)
        cur.end()
        return tok
    if d in ("alphabet", "catalysts", "terminals"):
        syms = []
        while not cur.done():
            syms.append(cur.ident("symbol"))
        if d == "alphabet" and not syms:
            raise _Fail("alphabet needs at least one symbol", col=max(cur.width, 1))
        return syms
    if d == "mu":
        tree = _tree(cur)
        cur.end()
        return tree
    if d == "init":
        lab = cur.ident("label")
        cur.punct(":")
        items = _mset(cur)
        cur.end()
        return lab, items
    if d == "rule":
        lab = cur.ident("label")
        cur.punct("@")
        name = cur.ident("rule name")
        cur.punct(":")
        lhs = _mset(cur)
        if cur.at("."):
            raise _Fail("malformed rule arrow", cur.peek())
        cur.arrow()
        rhs = []
        if cur.at("."):
            cur.next(".")
        else:
            while not cur.done():
                sym = cur.ident("symbol")
                target: tuple = ("here", None)
                if cur.at("!"):
                    cur.next("!")
                    where = cur.ident("target")
                    if where.text == "out":
                        target = ("out", None)
                    elif where.text == "in":
                        cur.punct("(")
                        target = ("in", cur.ident("label"))
                        cur.punct(")")
                    else:
                        raise _Fail(f"unknown target {where.text!r}", where)
                rhs.append((sym, target))
            if not rhs:
                raise _Fail("expected right-hand side or '.'", col=max(cur.width, 1))
        cur.end()
        return lab, name, lhs, rhs
    if d == "arule":
        lab = cur.ident("label")
        kind = cur.ident("rule kind")
        if kind.text not in DSL_KINDS:
            raise _Fail(f"unknown rule kind {kind.text!r}", kind)
        cur.punct("@")
        name = cur.ident("rule name")
        cur.punct(":")
        trig = cur.ident("trigger symbol")
        cur.arrow()
        k = DSL_KINDS[kind.text]
        if k == EVOLUTION:
            rhs = _mset(cur)
        elif k == DIVIDE:
            first = cur.ident("symbol")
            cur.punct("|")
            rhs = (first, cur.ident("symbol"))
        elif cur.at("."):
            cur.next(".")
            rhs = None
        else:
            rhs = cur.ident("symbol")
        cur.end()
        return lab, kind, name, trig, rhs
    if d == "prio":
        lab = cur.ident("label")
        cur.punct(":")
        hi = cur.ident("rule name")
        cur.punct(">")
        lo = cur.ident("rule name")
        cur.end()
        return lab, hi, lo
    if d == "output":
        tok = cur.ident("label or env")
        cur.end()
        return tok
    if d == "recognizer":
        yes = cur.ident("yes symbol")
        no = cur.ident("no symbol")
        cur.end()
        return yes, no
    raise AssertionError(d)


def _assemble(stmts: list[_Stmt], err, diags: list[ParseDiagnostic]) -> PSystemSpec:
    def fail(st: _Stmt, msg: str, tok: Optional[_Tok] = None):
        if tok is None:
            err(st.lineno, msg, 1)
        else:
            err(st.lineno, msg, tok.col, len(tok.text))

    seen: dict[str, _Stmt] = {}
    for st in stmts:
        if st.directive in SINGLE:
            if st.directive in seen:
                fail(st, f"duplicate '{st.directive}' directive")
            seen.setdefault(st.directive, st)
    if "model" not in seen:
        err(1, "missing 'model' directive", 1)
    if "alphabet" not in seen:
        err(1, "missing 'alphabet' directive", 1)
    if "mu" not in seen:
        err(1, "missing 'mu' directive", 1)
    if diags:
        raise ParseError(diags)

    mode = seen["model"].payload.text
    alphabet = {t.text for t in seen["alphabet"].payload}

    def check_sym(st: _Stmt, tok: _Tok) -> str:
        if tok.text not in alphabet:
            fail(st, f"undeclared symbol {tok.text!r}", tok)
        return tok.text

    def to_tree(node) -> MembraneTemplate:
        lab, kids = node
        return MembraneTemplate(lab.text, tuple(to_tree(k) for k in kids))

    mu = to_tree(seen["mu"].payload)
    labels = set(mu.labels())

    def check_label(st: _Stmt, tok: _Tok) -> str:
        if tok.text not in labels:
            fail(st, f"undeclared label {tok.text!r}", tok)
        return tok.text

    def mset(st: _Stmt, items) -> Multiset:
        d: dict[str, int] = {}
        for tok, n in items:
            s = check_sym(st, tok)
            d[s] = d.get(s, 0) + n
        return Multiset(d)

    catalysts: set[str] = set()
    terminals = None
    if "catalysts" in seen:
        catalysts = {check_sym(seen["catalysts"], t) for t in seen["catalysts"].payload}
    if "terminals" in seen:
        terminals = frozenset(check_sym(seen["terminals"], t) for t in seen["terminals"].payload)

    initial: dict[str, Multiset] = {}
    rules: dict[str, list] = {}
    names: dict[str, set[str]] = {}
    prios: dict[str, set] = {}
    output = ENV
    recognizer = None

    for st in stmts:
        d = st.directive
        if d == "init":
            lab, items = st.payload
            label = check_label(st, lab)
            if label in initial:
                fail(st, f"duplicate init for label {label!r}", lab)
            initial[label] = mset(st, items)
        elif d in ("rule", "arule"):
            if (d == "rule") != (mode == TRANSITION):
                fail(st, f"'{d}' not allowed in {mode} mode")
                continue
            if d == "rule":
                lab, name, lhs, rhs = st.payload
            else:
                lab, kind, name, trig, rhs = st.payload
            label = check_label(st, lab)
            if name.text in names.setdefault(label, set()):
                fail(st, f"duplicate rule name {name.text!r} in region {label}", name)
            names[label].add(name.text)
            if d == "rule":
                items = []
                for sym, (tkind, tlab) in rhs:
                    target = Target(tkind, check_label(st, tlab) if tlab is not None else None)
                    items.append((check_sym(st, sym), target))
                rule = TransitionRule(name.text, label, mset(st, lhs), tuple(items))
            else:
                k = DSL_KINDS[kind.text]
                if k == EVOLUTION:
                    prod = mset(st, rhs)
                elif k == DIVIDE:
                    prod = (check_sym(st, rhs[0]), check_sym(st, rhs[1]))
                else:
                    prod = None if rhs is None else check_sym(st, rhs)
                rule = ActiveMembraneRule(name.text, label, k, check_sym(st, trig), prod)
            rules.setdefault(label, []).append(rule)
        elif d == "prio":
            lab, hi, lo = st.payload
            prios.setdefault(check_label(st, lab), set()).add((hi.text, lo.text))
        elif d == "output":
            tok = st.payload
            output = ENV if tok.text == ENV else check_label(st, tok)
        elif d == "recognizer":
            yes, no = st.payload
            recognizer = (check_sym(st, yes), check_sym(st, no))

    for st in stmts:
        if st.directive == "prio":
            lab, hi, lo = st.payload
            for tok in (hi, lo):
                if lab.text in labels and tok.text not in names.get(lab.text, set()):
                    fail(st, f"unknown rule {tok.text!r} in region {lab.text}", tok)

    if diags:
        raise ParseError(diags)
    return PSystemSpec(
        mode=mode,
        alphabet=frozenset(alphabet),
        mu=mu,
        initial=initial,
        rules={k: tuple(v) for k, v in rules.items()},
        catalysts=frozenset(catalysts),
        terminals=terminals,
        priorities=tuple(PrioritySpec(k, frozenset(v)) for k, v in prios.items()),
        output=output,
        recognizer=recognizer,
    )


def _mset_text(ms: Multiset) -> str:
    if not ms:
        return "."
    return " ".join(s if ms[s] == 1 else f"{s}*{ms[s]}" for s in sorted(ms))


def _tree_text(t: MembraneTemplate) -> str:
    return "[" + t.label + "".join(_tree_text(c) for c in t.children) + "]"


def rule_text(rule) -> str:
    if isinstance(rule, TransitionRule):
        rhs = " ".join(f"{s}{t}" for s, t in rule.rhs) or "."
        return f"rule {rule.region} @{rule.name}: {_mset_text(rule.lhs)} -> {rhs}"
    p = rule.products
    if rule.kind == EVOLUTION:
        rhs = _mset_text(p)
    elif rule.kind == DIVIDE:
        rhs = f"{p[0]} | {p[1]}"
    else:
        rhs = "." if p is None else p
    return f"arule {rule.label} {KIND_WORDS[rule.kind]} @{rule.name}: {rule.trigger} -> {rhs}"


def serialize(spec: PSystemSpec) -> str:
    """Canonical DSL text; ``parse(serialize(s)) == s`` for valid specs."""
    out = [f"model {spec.mode}", "alphabet " + " ".join(sorted(spec.alphabet))]
    if spec.catalysts:
        out.append("catalysts " + " ".join(sorted(spec.catalysts)))
    if spec.terminals is not None:
        out.append(("terminals " + " ".join(sorted(spec.terminals))).rstrip())
    out.append("mu " + _tree_text(spec.mu))
    order = spec.mu.labels()
    for lab in order:
        if lab in spec.initial:
            out.append(f"init {lab}: {_mset_text(spec.initial[lab])}")
    for lab in order:
        for r in spec.rules.get(lab, ()):
            out.append(rule_text(r))
        for hi, lo in sorted(spec.priority_pairs(lab)):
            out.append(f"prio {lab}: {hi} > {lo}")
    out.append(f"output {spec.output}")
    if spec.recognizer is not None:
        out.append(f"recognizer {spec.recognizer[0]} {spec.recognizer[1]}")
    return "\n".join(out) + "\n"

"""Exhaustive reference semantics used to audit the greedy selector.

``enumerate_selections`` backtracks over every rule instance and
multiplicity and keeps the maximal, slot-consistent, priority-respecting
combinations. It works straight from the PSystemSpec rule objects and shares no
code with the engine's selection loop.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import (
    DISSOLVE, DIVIDE, SEND_IN, TRANSITION, ActiveMembraneRule, Configuration, Multiset,
    PSystemSpec, Selection, TransitionRule, canonical_serialize,
)
from .rng import Rng

DEFAULT_BOUND = 10**6


class OracleTooLarge(Exception):
    """The backtracking search exceeded its node budget."""


def _above(pairs) -> dict[str, set[str]]:
    graph: dict[str, set[str]] = {}
    for hi, lo in pairs:
        graph.setdefault(lo, set()).add(hi)
    out: dict[str, set[str]] = {}
    for start in graph:
        seen: set[str] = set()
        todo = list(graph[start])
        while todo:
            n = todo.pop()
            if n not in seen:
                seen.add(n)
                todo.extend(graph.get(n, ()))
        out[start] = seen
    return out


def _need(rule) -> Multiset:
    if isinstance(rule, TransitionRule):
        return rule.lhs
    return Multiset([rule.trigger])


def _instances(spec: PSystemSpec, config: Configuration) -> list[tuple[int, object, int, bool]]:
    """Every rule instance allowed this step: ``(subject id, rule, pool id, structural)``."""
    out = []
    for m, parent in config.walk():
        rules = spec.rules_for(m.label)
        if spec.mode == TRANSITION:
            above = _above(spec.priority_pairs(m.label))
            live = {r.name for r in rules if m.contents >= r.lhs}
            for r in rules:
                if above.get(r.name, set()) & live:
                    continue
                out.append((m.id, r, m.id, False))
            continue
        for r in rules:
            assert isinstance(r, ActiveMembraneRule)
            if r.kind in (DISSOLVE, SEND_IN, DIVIDE) and parent is None:
                continue
            if r.kind == DIVIDE and m.children:
                continue
            pool = parent.id if r.kind == SEND_IN else m.id
            out.append((m.id, r, pool, r.structural))
    return out


def enumerate_selections(spec: PSystemSpec, config: Configuration,
                         bound: int = DEFAULT_BOUND) -> set[Selection]:
    """All maximal selections for ``config``. ``{Selection()}`` means halting."""
    insts = _instances(spec, config)
    pools0 = {m.id: m.contents.as_dict() for m in config.preorder()}
    found: set[Selection] = set()
    nodes = 0
    counts = [0] * len(insts)

    def fits(i: int, pools, slots) -> int:
        mid, rule, pid, structural = insts[i]
        if structural and mid in slots:
            return 0
        k = min(pools[pid].get(s, 0) // n for s, n in _need(rule).items())
        return min(k, 1) if structural else k

    def leaf(pools, slots) -> None:
        if any(fits(i, pools, slots) for i in range(len(insts))):
            return
        per: dict[int, dict[str, int]] = {}
        for i, k in enumerate(counts):
            if k:
                mid, rule = insts[i][0], insts[i][1]
                per.setdefault(mid, {})[rule.name] = k
        found.add(Selection(per))

    def go(i: int, pools, slots) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > bound:
            raise OracleTooLarge(f"more than {bound} search nodes")
        if i == len(insts):
            leaf(pools, slots)
            return
        mid, rule, pid, structural = insts[i]
        top = fits(i, pools, slots)
        need = _need(rule)
        for k in range(top, -1, -1):
            counts[i] = k
            if k:
                pool = dict(pools[pid])
                for s, n in need.items():
                    pool[s] -= n * k
                sub = dict(pools)
                sub[pid] = pool
                go(i + 1, sub, slots | {mid} if structural else slots)
            else:
                go(i + 1, pools, slots)
        counts[i] = 0

    go(0, pools0, frozenset())
    return found


@dataclass
class TreeNode:
    id: int
    depth: int
    config: Configuration
    text: str
    halting: bool = False
    expanded: bool = False
    result: Optional[object] = None  # RunResult for halting nodes


@dataclass
class ComputationTree:
    nodes: list[TreeNode] = field(default_factory=list)
    edges: list[tuple[int, Selection, int]] = field(default_factory=list)
    truncated: bool = False

    @property
    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.halting]

    @property
    def frontier(self) -> list[TreeNode]:
        """Non-halting nodes that were not expanded (depth bound or truncation)."""
        return [n for n in self.nodes if not n.halting and not n.expanded]

    def answers(self) -> set[str]:
        return {n.result.answer for n in self.leaves}

    def summary(self) -> dict:
        results = sorted({(n.result.answer, tuple(sorted(n.result.output.items())))
                          for n in self.leaves})
        return {
            "nodes": len(self.nodes),
            "edges": len(self.edges),
            "halting_leaves": len(self.leaves),
            "frontier": len(self.frontier),
            "truncated": self.truncated,
            "results": [{"answer": a, "output": dict(o)} for a, o in results],
        }


def explore(spec: PSystemSpec, max_depth: int, max_nodes: int = 10000,
            bound: int = DEFAULT_BOUND) -> ComputationTree:
    """Breadth-first computation tree; equal configurations at one depth are merged.

    ``OracleTooLarge`` from a node is caught and reported as truncation.
    In-target choices among equally labelled children are not branched on.
    """
    from .engine import Engine

    if max_depth < 0 or max_nodes < 1:
        raise ValueError("bounds must be positive")
    engine = Engine(spec)
    tree = ComputationTree()
    root = engine.initial()
    tree.nodes.append(TreeNode(0, 0, root, canonical_serialize(root)))
    level = deque([tree.nodes[0]])
    rng = Rng(0)
    while level:
        nxt: dict[str, TreeNode] = {}
        for node in level:
            try:
                sels = enumerate_selections(spec, node.config, bound)
            except OracleTooLarge:
                tree.truncated = True
                continue
            if sels == {Selection()}:
                node.halting = True
                node.config = replace(node.config, halted=True)
                node.result = engine.result(node.config)
                continue
            if node.depth >= max_depth:
                continue
            if tree.truncated:
                continue
            node.expanded = True
            for sel in sorted(sels, key=Selection.key):
                child_cfg = engine.apply(node.config, sel, rng)
                text = canonical_serialize(child_cfg)
                child = nxt.get(text)
                if child is None:
                    if len(tree.nodes) >= max_nodes:
                        tree.truncated = True
                        node.expanded = False
                        break
                    child = TreeNode(len(tree.nodes), node.depth + 1, child_cfg, text)
                    tree.nodes.append(child)
                    nxt[text] = child
                tree.edges.append((node.id, sel, child.id))
        level = deque(nxt.values())
    return tree

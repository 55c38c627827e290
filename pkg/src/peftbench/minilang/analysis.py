"""Structural signals extracted from parsed programs.

Subtree fingerprints feed the syntactic-match metric; def-use edges feed the
semantic dataflow-match metric. Both erase identifier spellings so that
renaming variables or functions changes neither signal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .parser import LEAF_KINDS, Node

UNKNOWN_DEF = -1  # def-site id for uses of never-defined variables


def _skeleton(node: Node) -> str:
    """Kind-only serialization of a subtree; no names, operators or values."""
    if not node.children:
        return node.kind
    return node.kind + "(" + ",".join(_skeleton(c) for c in node.children) + ")"


def _fingerprint(node: Node) -> str:
    """Canonical fingerprint of the subtree rooted at an internal node.

    The root contributes its kind plus its operator (so `1+2` and `1*2`
    differ exactly at their BinOp), descendants contribute kinds only.
    """
    head = node.kind if node.op is None else f"{node.kind}:{node.op}"
    return head + "(" + ",".join(_skeleton(c) for c in node.children) + ")"


def subtrees(ast: Node) -> Counter:
    """Multiset of fingerprints, one per internal node of the tree."""
    out: Counter = Counter()
    for node in ast.walk():
        if node.kind not in LEAF_KINDS:
            out[_fingerprint(node)] += 1
    return out


@dataclass(frozen=True)
class DataflowGraph:
    """Def-use edges as (def node id, use node id, variable slot).

    Node ids are preorder indices into the program walk; slots number
    variables by first definition (first encounter for never-defined
    names), so the graph carries no identifier spellings. `kinds` maps the
    participating node ids to their node kinds for cross-program matching.
    """

    edges: frozenset[tuple[int, int, int]]
    kinds: dict[int, str]

    def edge_signatures(self) -> Counter:
        """Multiset of (slot, def kind, use kind) triples for matching."""
        sig: Counter = Counter()
        for def_id, use_id, slot in self.edges:
            def_kind = "Unknown" if def_id == UNKNOWN_DEF else self.kinds[def_id]
            sig[(slot, def_kind, self.kinds[use_id])] += 1
        return sig


class _FlowAnalysis:
    """Reaching-definitions walk over one function body (or the top level).

    Branch joins union the reaching sets from both arms; loop bodies are
    re-analyzed to a fixed point so definitions can reach uses through the
    back edge. Edges accumulate in a set, so re-walks only add.
    """

    def __init__(self, ids: dict[int, int], kinds: dict[int, str], slots: dict[str, int],
                 edges: set, slot_counter: list[int]):
        self.ids = ids
        self.kinds = kinds
        self.slots = slots
        self.edges = edges
        self.slot_counter = slot_counter

    def slot_of(self, name: str) -> int:
        if name not in self.slots:
            self.slots[name] = self.slot_counter[0]
            self.slot_counter[0] += 1
        return self.slots[name]

    def uses(self, expr: Node, env: dict[str, frozenset[int]]) -> None:
        for node in expr.walk():
            if node.kind == "Var":
                slot = self.slot_of(node.name)
                for def_id in env.get(node.name, frozenset({UNKNOWN_DEF})):
                    self.edges.add((def_id, self.ids[id(node)], slot))

    def define(self, name: str, node: Node, env: dict) -> dict:
        self.slot_of(name)
        env = dict(env)
        env[name] = frozenset({self.ids[id(node)]})
        return env

    @staticmethod
    def merge(a: dict, b: dict) -> dict:
        out = dict(a)
        for name, defs in b.items():
            out[name] = out.get(name, frozenset()) | defs
        return out

    def run(self, stmts: tuple[Node, ...], env: dict) -> dict:
        for stmt in stmts:
            k = stmt.kind
            if k == "Let" or k == "Assign":
                self.uses(stmt.children[0], env)
                env = self.define(stmt.name, stmt, env)
            elif k == "Return" or k == "Call":
                for child in (stmt.children if k == "Call" else stmt.children[:1]):
                    self.uses(child, env)
            elif k == "If":
                self.uses(stmt.children[0], env)
                then_env = self.run(stmt.children[1].children, env)
                else_env = (self.run(stmt.children[2].children, env)
                            if len(stmt.children) == 3 else env)
                env = self.merge(then_env, else_env)
            elif k == "While":
                cond, body = stmt.children
                env_in = env
                while True:
                    self.uses(cond, env_in)
                    body_out = self.run(body.children, env_in)
                    nxt = self.merge(env, body_out)
                    if nxt == env_in:
                        break
                    env_in = nxt
                env = env_in
            elif k == "FnDef":
                pass  # nested definitions are not part of the grammar
            else:
                self.uses(stmt, env)
        return env


def dataflow(ast: Node) -> DataflowGraph:
    """Extract the def-use graph of a parsed program.

    Each function is analyzed independently (parameters define at the FnDef
    node); stray top-level statements are analyzed as one straight-line
    unit. Slot numbers run program-wide so units never collide.
    """
    ids = {id(node): i for i, node in enumerate(ast.walk())}
    kinds = {i: node.kind for i, node in enumerate(ast.walk())}
    edges: set = set()
    slot_counter = [0]

    toplevel = tuple(c for c in ast.children if c.kind != "FnDef")
    if toplevel:
        flow = _FlowAnalysis(ids, kinds, {}, edges, slot_counter)
        flow.run(toplevel, {})
    for fn in ast.children:
        if fn.kind == "FnDef":
            flow = _FlowAnalysis(ids, kinds, {}, edges, slot_counter)
            env: dict = {}
            for param in fn.params:
                env = flow.define(param, fn, env)
            flow.run(fn.children, env)
    return DataflowGraph(edges=frozenset(edges), kinds=kinds)

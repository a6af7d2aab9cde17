"""Rooted trees: finite, homogeneous, and rule-generated infinite trees.

Nodes are identified by their child-index path from the root (the root is the
empty tuple); paths serialize as dot-joined indices ("" = root, "0.2" = third
child of first child).  Child ordering is the declaration order of the spec,
so node names are stable across runs.

Every spec also assigns each node a structural *state*: two nodes with the
same state at the same level have isomorphic weighted subtrees.  The solver
modules memoize per (state, level), which is what makes depth-64 certified
computations cheap on rule-generated trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import SchemaError

NodeId = Tuple[int, ...]
ROOT: NodeId = ()


def path_str(path: NodeId) -> str:
    return ".".join(str(i) for i in path)


def parse_path(s: str) -> NodeId:
    s = s.strip()
    if s == "":
        return ()
    try:
        return tuple(int(part) for part in s.split("."))
    except ValueError:
        raise SchemaError("tree_core", f"malformed node path {s!r}")


class TreeSpec:
    """Abstract tree description; concrete kinds below."""

    kind: str = "?"
    finite: bool = False
    allow_leaves: bool = False

    def root_state(self):
        raise NotImplementedError

    def child_groups(self, state, level: int) -> Tuple[Tuple[object, int], ...]:
        """Ordered (child_state, count) groups for a node of `state` at `level`."""
        raise NotImplementedError

    def n_children(self, state, level: int) -> int:
        return sum(c for _, c in self.child_groups(state, level))

    def child_state(self, state, level: int, index: int):
        for st, c in self.child_groups(state, level):
            if index < c:
                return st
            index -= c
        raise SchemaError("tree_core", "child index out of range", state=str(state),
                          level=level, index=index)

    def to_json(self) -> dict:
        raise NotImplementedError

    def validate(self) -> None:
        pass


class FiniteTreeSpec(TreeSpec):
    kind = "finite"
    finite = True
    allow_leaves = True

    def __init__(self, children: Dict[NodeId, int]):
        # prefix-closure: parent of every listed node must be reachable
        self.counts = dict(children)
        self.validate()

    def validate(self) -> None:
        for path, c in self.counts.items():
            if c < 0:
                raise SchemaError("tree_core", "negative child count", node=path_str(path))
            cur: NodeId = ()
            for idx in path:
                n = self.counts.get(cur, 0)
                if idx >= n:
                    raise SchemaError("tree_core", "orphan node in finite spec",
                                      node=path_str(path))
                cur = cur + (idx,)

    def root_state(self):
        return ()

    def child_groups(self, state, level):
        n = self.counts.get(state, 0)
        return tuple(((state + (i,)), 1) for i in range(n))

    def max_depth(self) -> int:
        depth = 0
        for path, c in self.counts.items():
            if c > 0:
                depth = max(depth, len(path) + 1)
        return depth

    def to_json(self):
        return {"kind": "finite",
                "children": {path_str(p): c for p, c in sorted(self.counts.items())}}


class HomogeneousTreeSpec(TreeSpec):
    """Root with p+1 children, every other node with p children."""

    kind = "homogeneous"

    def __init__(self, p: int):
        if p < 1:
            raise SchemaError("tree_core", "homogeneous tree needs p >= 1", p=p)
        self.p = p

    def root_state(self):
        return "r"

    def child_groups(self, state, level):
        n = self.p + 1 if state == "r" else self.p
        return (("i", n),)

    def to_json(self):
        return {"kind": "homogeneous", "p": self.p}


class ByLevelTreeSpec(TreeSpec):
    """Child count depends on the level only; eventually-constant tail."""

    kind = "branching"

    def __init__(self, counts: Sequence[int], tail: int):
        self.counts = tuple(int(c) for c in counts)
        self.tail = int(tail)
        if self.tail < 1 or any(c < 1 for c in self.counts):
            raise SchemaError("tree_core",
                              "zero-child interior node in an infinite kind",
                              counts=list(self.counts), tail=self.tail)

    def count_at(self, level: int) -> int:
        return self.counts[level] if level < len(self.counts) else self.tail

    def root_state(self):
        return "n"

    def child_groups(self, state, level):
        return (("n", self.count_at(level)),)

    def to_json(self):
        return {"kind": "branching",
                "rule": {"type": "by_level", "counts": list(self.counts), "tail": self.tail}}


class StateTreeSpec(TreeSpec):
    """Finite-state branching rule: state -> ordered (child state, count) groups."""

    kind = "branching"

    def __init__(self, root: str, states: Dict[str, Sequence[Tuple[str, int]]],
                 allow_leaves: bool = False):
        self.root = root
        self.states = {s: tuple((str(cs), int(c)) for cs, c in groups)
                       for s, groups in states.items()}
        self.allow_leaves = allow_leaves
        self.validate()

    def validate(self) -> None:
        seen = {self.root}
        stack = [self.root]
        while stack:
            s = stack.pop()
            if s not in self.states:
                raise SchemaError("tree_core", f"undeclared state {s!r}")
            groups = self.states[s]
            if not groups and not self.allow_leaves:
                raise SchemaError("tree_core",
                                  "zero-child interior node in an infinite kind", state=s)
            for cs, c in groups:
                if c < 1:
                    raise SchemaError("tree_core", "child group with count < 1", state=s)
                if cs not in seen:
                    seen.add(cs)
                    stack.append(cs)

    def root_state(self):
        return self.root

    def child_groups(self, state, level):
        return self.states[state]

    def to_json(self):
        return {"kind": "branching",
                "rule": {"type": "states", "root": self.root,
                         "states": {s: [[cs, c] for cs, c in g] for s, g in self.states.items()},
                         "allow_leaves": self.allow_leaves}}


class PowerSpineTreeSpec(TreeSpec):
    """Spine node at each level with one spine child and one subtree child;
    subtree nodes at level l carry base**(l+1) children.

    With doubling weight gaps this is the accessible-but-irregular fixture.
    """

    kind = "branching"

    def __init__(self, base: int = 2):
        if base < 2:
            raise SchemaError("tree_core", "power spine needs base >= 2", base=base)
        self.base = base

    def root_state(self):
        return "spine"

    def child_groups(self, state, level):
        if state == "spine":
            return (("spine", 1), ("cell", 1))
        return (("cell", self.base ** (level + 1)),)

    def to_json(self):
        return {"kind": "branching", "rule": {"type": "power_spine", "base": self.base}}


def spec_from_json(obj: dict) -> TreeSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SchemaError("tree_core", "tree spec must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "finite":
        raw = obj.get("children", {})
        counts: Dict[NodeId, int] = {}
        for key, val in raw.items():
            c = len(val) if isinstance(val, list) else int(val)
            counts[parse_path(key)] = c
        counts.setdefault((), counts.get((), 0))
        return FiniteTreeSpec(counts)
    if kind == "homogeneous":
        return HomogeneousTreeSpec(int(obj["p"]))
    if kind == "branching":
        rule = obj.get("rule") or {}
        rtype = rule.get("type")
        if rtype == "by_level":
            return ByLevelTreeSpec(rule.get("counts", []), rule["tail"])
        if rtype == "states":
            states = {s: [(cs, c) for cs, c in groups] for s, groups in rule["states"].items()}
            return StateTreeSpec(rule["root"], states, bool(rule.get("allow_leaves", False)))
        if rtype == "power_spine":
            return PowerSpineTreeSpec(int(rule.get("base", 2)))
        raise SchemaError("tree_core", f"unknown branching rule type {rtype!r}")
    raise SchemaError("tree_core", f"unknown tree kind {kind!r}")


@dataclass
class RootedTree:
    """Realized view of a tree spec.

    Node states are resolved lazily and memoized; realization is append-only,
    so issued node ids stay valid and concurrent readers are safe.
    """

    spec: TreeSpec
    depth_cap: int = 0
    _states: Dict[NodeId, object] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._states[ROOT] = self.spec.root_state()

    # -- structure -----------------------------------------------------------

    def state_of(self, path: NodeId):
        st = self._states.get(path)
        if st is not None or path == ROOT:
            return st
        parent_state = self.state_of(path[:-1])
        st = self.spec.child_state(parent_state, len(path) - 1, path[-1])
        self._states[path] = st
        return st

    def exists(self, path: NodeId) -> bool:
        try:
            self.state_of(path)
            return True
        except SchemaError:
            return False

    def n_children(self, path: NodeId) -> int:
        return self.spec.n_children(self.state_of(path), len(path))

    def children(self, path: NodeId) -> List[NodeId]:
        return [path + (i,) for i in range(self.n_children(path))]

    def is_leaf(self, path: NodeId) -> bool:
        return self.n_children(path) == 0

    @staticmethod
    def level(path: NodeId) -> int:
        return len(path)

    @staticmethod
    def parent(path: NodeId) -> NodeId:
        if not path:
            raise SchemaError("tree_core", "root has no parent in the tree")
        return path[:-1]

    def require(self, path: NodeId) -> NodeId:
        if not self.exists(path):
            raise SchemaError("tree_core", "unrealized or nonexistent node",
                              node=path_str(path))
        return path

    # -- orders, meets, geodesics ---------------------------------------------

    @staticmethod
    def meet(i: NodeId, j: NodeId) -> NodeId:
        n = 0
        for a, b in zip(i, j):
            if a != b:
                break
            n += 1
        return i[:n]

    @staticmethod
    def is_ancestor(i: NodeId, j: NodeId) -> bool:
        return len(i) <= len(j) and j[: len(i)] == i

    def geodesic(self, i: NodeId, j: NodeId) -> List[NodeId]:
        self.require(i), self.require(j)
        m = self.meet(i, j)
        up = [i[:k] for k in range(len(i), len(m) - 1, -1)]
        down = [j[:k] for k in range(len(m) + 1, len(j) + 1)]
        return up + down

    def geodesic_length(self, i: NodeId, j: NodeId) -> int:
        m = self.meet(i, j)
        return len(i) + len(j) - 2 * len(m)

    # -- enumeration -----------------------------------------------------------

    def level_nodes(self, n: int) -> List[NodeId]:
        """All nodes at level n, in canonical (path) order."""
        if n == 0:
            return [ROOT]
        out: List[NodeId] = []
        stack: List[NodeId] = [ROOT]
        while stack:
            node = stack.pop()
            if len(node) == n - 1:
                out.extend(self.children(node))
            else:
                stack.extend(reversed(self.children(node)))
        out.sort()
        return out

    def nodes_upto(self, n: int) -> List[NodeId]:
        out = [ROOT]
        frontier = [ROOT]
        for _ in range(n):
            nxt: List[NodeId] = []
            for node in frontier:
                nxt.extend(self.children(node))
            out.extend(nxt)
            frontier = nxt
        out.sort()
        return out

    def subtree_nodes(self, top: NodeId, max_level: int) -> List[NodeId]:
        out = [top]
        frontier = [top]
        while frontier and len(frontier[0]) < max_level:
            nxt: List[NodeId] = []
            for node in frontier:
                nxt.extend(self.children(node))
            out.extend(nxt)
            frontier = nxt
        return sorted(out)

    def count_nodes(self, max_level: Optional[int] = None) -> int:
        if self.spec.finite:
            max_level = max_level if max_level is not None else 10 ** 9
            total, frontier = 1, [ROOT]
            level = 0
            while frontier and level < max_level:
                frontier = [c for n in frontier for c in self.children(n)]
                total += len(frontier)
                level += 1
            return total
        if max_level is None:
            raise SchemaError("tree_core", "node count of an infinite tree needs a level cap")
        return len(self.nodes_upto(max_level))

    # -- boundary cylinders -----------------------------------------------------

    def cylinder_atoms(self, n: int) -> List[NodeId]:
        """Nodes indexing the level-n partition of the boundary."""
        if self.spec.finite:
            spec = self.spec
            assert isinstance(spec, FiniteTreeSpec)
            if n > spec.max_depth():
                raise SchemaError("tree_core",
                                  "cylinder level beyond the finite tree depth", level=n)
        return self.level_nodes(n)


def build_tree(spec: TreeSpec, depth_cap: int = 0) -> RootedTree:
    """Realize a tree to `depth_cap`; infinite kinds keep extending on demand."""
    if depth_cap < 0:
        raise SchemaError("tree_core", "depth_cap must be >= 0", depth_cap=depth_cap)
    tree = RootedTree(spec, depth_cap=depth_cap)
    if spec.finite:
        tree.count_nodes()  # walks everything; validates the children map
    else:
        tree.nodes_upto(min(depth_cap, 12))  # eager prefix, kept small on wide trees
    return tree


class BoundaryRay:
    """A boundary point known to finite resolution, extendable on demand.

    `rule(level, node_path) -> child index` generates further steps; rays
    recorded from simulations carry no rule and refuse to extend.
    """

    def __init__(self, tree: RootedTree, indices: Sequence[int] = (),
                 rule=None):
        self.tree = tree
        self._indices: List[int] = [int(i) for i in indices]
        self.rule = rule
        tree.require(tuple(self._indices))

    @property
    def resolution(self) -> int:
        return len(self._indices)

    def node(self, n: int) -> NodeId:
        """ξ(n): the unique level-n node on the ray."""
        while n > len(self._indices):
            if self.rule is None:
                raise SchemaError("tree_core",
                                  "ray resolution exhausted and no extension rule",
                                  resolution=len(self._indices), wanted=n)
            cur = tuple(self._indices)
            idx = int(self.rule(len(cur), cur))
            if not 0 <= idx < self.tree.n_children(cur):
                raise SchemaError("tree_core", "ray rule produced an invalid child index",
                                  node=path_str(cur), index=idx)
            self._indices.append(idx)
        return tuple(self._indices[:n])

    def prefix(self) -> NodeId:
        return tuple(self._indices)

    def meet_level(self, other: "BoundaryRay", max_scan: int = 10 ** 6) -> Optional[int]:
        """|ξ∧η| for distinct rays; None when they agree to available resolution."""
        n = 0
        while True:
            try:
                a, b = self.node(n + 1), other.node(n + 1)
            except SchemaError:
                return None
            if a != b:
                return n
            n += 1
            if n > max_scan:
                return None

    def meet_level_with_node(self, i: NodeId) -> int:
        """|i∧ξ|."""
        n = 0
        for k in range(1, len(i) + 1):
            try:
                if self.node(k) != i[:k]:
                    break
            except SchemaError:
                break
            n = k
        return n


def fixed_ray(tree: RootedTree, pattern: Sequence[int] = (0,)) -> BoundaryRay:
    """Ray following a repeating child-index pattern (clamped to valid indices)."""
    pat = list(pattern)

    def rule(level: int, path: NodeId) -> int:
        want = pat[level % len(pat)]
        return min(want, tree.n_children(path) - 1)

    return BoundaryRay(tree, (), rule)

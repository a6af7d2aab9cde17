"""Ultrametric matrices: validation, hypotheses, minimal tree extension,
neighbor/basin structure, the induced certified generator, harmonic extension,
and the boundary of the index set inside the extension.

Finite inputs are dense symmetric arrays; infinite inputs are word families
over a finite alphabet with entry w(length of the common prefix).  Classes of
the threshold relations are computed by union-find per distinct value,
descending, which matches their disjoint-or-nested structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import DomainError, HypothesisError, SchemaError
from .treematrix import build_generator
from .trees import (FiniteTreeSpec, NodeId, RootedTree, StateTreeSpec, build_tree,
                    path_str)
from .weights import WeightSequence, finite_weights


# ---------------------------------------------------------------- validation --

def verify_ultrametric(U: np.ndarray, tol: float = 1e-12) -> Optional[Tuple[int, int, int]]:
    """Exhaustive triple check; returns the first violating (i, j, k) or None."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise SchemaError("ultrametric", "matrix must be square")
    if not np.allclose(U, U.T, atol=tol * max(1.0, np.abs(U).max())):
        raise SchemaError("ultrametric", "matrix must be symmetric")
    n = U.shape[0]
    slack = tol * max(1.0, float(np.abs(U).max()))
    for k in range(n):
        lows = np.minimum.outer(U[:, k], U[k, :])
        bad = np.argwhere(U < lows - slack)
        if bad.size:
            i, j = map(int, bad[0])
            return (i, j, k)
    return None


def _uf_classes(items: Sequence[int], related) -> List[List[int]]:
    parent = {i: i for i in items}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    its = list(items)
    for a in range(len(its)):
        for b in range(a + 1, len(its)):
            if related(its[a], its[b]):
                ra, rb = find(its[a]), find(its[b])
                if ra != rb:
                    parent[ra] = rb
    groups: Dict[int, List[int]] = {}
    for i in items:
        groups.setdefault(find(i), []).append(i)
    return [sorted(g) for g in groups.values()]


@dataclass
class HypothesesReport:
    h1: bool
    h1_witness: Optional[Tuple[int, int]]
    h2: str            # certified | assumed
    values: List[float]
    h3: bool
    class_counts: Dict[float, int]
    h4: str            # certified | refuted | undetermined
    h4_detail: str = ""

    def ok(self) -> bool:
        return self.h1 and self.h3 and self.h4 != "refuted"

    def to_json(self) -> dict:
        return {"H1": self.h1, "H1_witness": self.h1_witness, "H2": self.h2,
                "H3": self.h3, "H4": self.h4, "H4_detail": self.h4_detail,
                "values": self.values,
                "class_counts": {f"{v:.17g}": c for v, c in self.class_counts.items()}}


def check_hypotheses(U: np.ndarray, tol: float = 1e-12) -> HypothesesReport:
    """H1 (separation), H2 (value set), H3 (finite class counts), H4 (finite case)."""
    bad = verify_ultrametric(U, tol)
    if bad is not None:
        raise HypothesisError("ultrametric", "input is not ultrametric", triple=bad)
    n = U.shape[0]
    scale = max(1.0, float(np.abs(U).max()))
    h1_witness = None
    for i in range(n):
        for j in range(i + 1, n):
            if abs(U[i, i] - U[i, j]) <= tol * scale and abs(U[j, j] - U[i, j]) <= tol * scale:
                h1_witness = (i, j)
                break
        if h1_witness:
            break
    values = _dedupe_values(U, tol * scale)
    counts = {}
    for v in values:
        members = [i for i in range(n) if U[i, i] >= v - tol * scale]
        classes = _uf_classes(members, lambda a, b: U[a, b] >= v - tol * scale)
        counts[v] = len(classes)
    return HypothesesReport(h1_witness is None, h1_witness, "certified", values,
                            True, counts, "certified", "finite index set")


def _dedupe_values(U: np.ndarray, slack: float) -> List[float]:
    vals = sorted(float(v) for v in np.unique(U))
    out: List[float] = []
    for v in vals:
        if not out or v - out[-1] > slack:
            out.append(v)
    return out


# ---------------------------------------------------------- minimal extension --

@dataclass
class TreeExtension:
    """Minimal tree-matrix extension of a finite ultrametric matrix."""

    tree: RootedTree
    w: WeightSequence
    embed: Dict[int, NodeId]          # index -> node path
    members: Dict[NodeId, Tuple[int, ...]]  # node -> indices of its class
    embedded_nodes: Set[NodeId]
    values: List[float]

    @property
    def added_nodes(self) -> List[NodeId]:
        all_nodes = self.tree.nodes_upto(len(self.values) - 1)
        return [p for p in all_nodes if p not in self.embedded_nodes]

    def restriction_residual(self, U: np.ndarray) -> float:
        worst = 0.0
        idx = sorted(self.embed)
        for a in idx:
            for b in idx:
                meet = self.tree.meet(self.embed[a], self.embed[b])
                worst = max(worst, abs(self.w.w(len(meet)) - U[a, b]))
        return worst

    def extension_matrix(self) -> Tuple[List[NodeId], np.ndarray]:
        order = self.tree.nodes_upto(len(self.values) - 1)
        out = np.empty((len(order), len(order)))
        for x, p in enumerate(order):
            for y, q in enumerate(order):
                out[x, y] = self.w.w(len(self.tree.meet(p, q)))
        return order, out

    def to_json(self) -> dict:
        return {"tree": self.tree.spec.to_json(),
                "weights": self.w.to_json(),
                "embedding": {str(i): path_str(p) for i, p in sorted(self.embed.items())},
                "added": [path_str(p) for p in self.added_nodes]}


def minimal_tree_extension(U: np.ndarray, tol: float = 1e-12) -> TreeExtension:
    """Nodes are (class, value) pairs of the threshold relations; consecutive
    values with nested classes are joined by edges; indices embed at their
    diagonal value."""
    rep = check_hypotheses(U, tol)
    if not rep.h1:
        raise HypothesisError("ultrametric", "H1 fails: indistinguishable indices",
                              witness=rep.h1_witness)
    n = U.shape[0]
    values = rep.values
    scale = max(1.0, float(np.abs(U).max()))
    slack = tol * scale
    # classes per level, top value first not needed: build level by level
    level_classes: List[List[Tuple[int, ...]]] = []
    for v in values:
        members = [i for i in range(n) if U[i, i] >= v - slack]
        classes = _uf_classes(members, lambda a, b: U[a, b] >= v - slack)
        classes.sort(key=lambda c: c[0])
        level_classes.append([tuple(c) for c in classes])
    if len(level_classes[0]) != 1:
        raise HypothesisError("ultrametric",
                              "threshold classes at the bottom value are not connected")
    # assign paths: children of a class at level l are the level-(l+1) classes it contains
    paths: Dict[Tuple[int, int], NodeId] = {(0, 0): ()}
    counts: Dict[NodeId, int] = {}
    members_map: Dict[NodeId, Tuple[int, ...]] = {(): level_classes[0][0]}
    for lvl in range(1, len(values)):
        per_parent: Dict[NodeId, int] = {}
        for ci, cls in enumerate(level_classes[lvl]):
            probe = cls[0]
            parent = None
            for pj, pcls in enumerate(level_classes[lvl - 1]):
                if probe in pcls:
                    parent = paths[(lvl - 1, pj)]
                    break
            if parent is None:
                raise HypothesisError("ultrametric", "orphan threshold class",
                                      level=lvl)
            k = per_parent.get(parent, 0)
            per_parent[parent] = k + 1
            p = parent + (k,)
            paths[(lvl, ci)] = p
            members_map[p] = cls
        for parent, c in per_parent.items():
            counts[parent] = c
    spec = FiniteTreeSpec({p: counts.get(p, 0) for p in members_map})
    tree = build_tree(spec)
    embed: Dict[int, NodeId] = {}
    for lvl, v in enumerate(values):
        for ci, cls in enumerate(level_classes[lvl]):
            for i in cls:
                if abs(U[i, i] - v) <= slack:
                    embed[i] = paths[(lvl, ci)]
    if len(embed) != n:
        raise HypothesisError("ultrametric", "embedding failed to place every index")
    return TreeExtension(tree, finite_weights(values), embed, members_map,
                         set(embed.values()), values)


# -------------------------------------------------------- neighbors and basins --

def attraction_basin(ext: TreeExtension, i: int) -> List[NodeId]:
    """Extension nodes reachable from index i without crossing other indices."""
    start = ext.embed[i]
    embedded = ext.embedded_nodes
    seen = {start}
    out = [start]
    stack = [start]
    tree = ext.tree
    while stack:
        node = stack.pop()
        nbrs = ([node[:-1]] if node else []) + tree.children(node)
        for nb in nbrs:
            if nb in seen:
                continue
            seen.add(nb)
            out.append(nb)
            if nb not in embedded:
                stack.append(nb)
    return sorted(out)


def u_neighbors(ext: TreeExtension, i: int) -> List[int]:
    """Indices j whose geodesic to i meets no other index."""
    rev = {p: k for k, p in ext.embed.items()}
    basin = attraction_basin(ext, i)
    return sorted(rev[p] for p in basin if p in rev and rev[p] != i)


def _added_component(ext: TreeExtension, start: NodeId
                     ) -> Tuple[List[NodeId], List[NodeId]]:
    """Connected added nodes containing `start`, plus the embedded boundary."""
    embedded = ext.embedded_nodes
    tree = ext.tree
    comp = [start]
    seen = {start}
    boundary: List[NodeId] = []
    stack = [start]
    while stack:
        node = stack.pop()
        nbrs = ([node[:-1]] if node else []) + tree.children(node)
        for nb in nbrs:
            if nb in seen:
                continue
            seen.add(nb)
            if nb in embedded:
                boundary.append(nb)
            else:
                comp.append(nb)
                stack.append(nb)
    return sorted(comp), sorted(boundary)


def _stopped_hitting(ext: TreeExtension, comp: List[NodeId], boundary: List[NodeId]
                     ) -> Dict[NodeId, Dict[NodeId, float]]:
    """For each added node in `comp`, the law of the chain stopped on the
    embedded boundary (mass may also leak to the cemetery through the root)."""
    gen = build_generator(ext.tree, ext.w, "absorbed")
    idx = {p: k for k, p in enumerate(comp)}
    A = np.zeros((len(comp), len(comp)))
    B = np.zeros((len(comp), len(boundary)))
    bidx = {p: k for k, p in enumerate(boundary)}
    for p in comp:
        a = idx[p]
        A[a, a] = gen.diag(p)
        for nb, rate in gen.row(p):
            if nb in idx:
                A[a, idx[nb]] = rate
            elif nb in bidx:
                B[a, bidx[nb]] = rate
    probs = np.linalg.solve(-A, B)
    out: Dict[NodeId, Dict[NodeId, float]] = {}
    for p in comp:
        out[p] = {b: float(probs[idx[p], bidx[b]]) for b in boundary}
    return out


@dataclass
class UltraGenerator:
    Q: np.ndarray
    symmetry_residual: float
    inverse_residual: float
    row_sum_max: float
    support_matches_neighbors: bool
    certified: bool
    hitting: Dict[NodeId, Dict[NodeId, float]]

    def to_json(self) -> dict:
        return {"Q": self.Q.tolist(),
                "symmetry_residual": self.symmetry_residual,
                "inverse_residual": self.inverse_residual,
                "row_sum_max": self.row_sum_max,
                "support_matches_neighbors": self.support_matches_neighbors,
                "certified": self.certified}


def ultrametric_generator(U: np.ndarray, tol: float = 1e-10) -> UltraGenerator:
    """Generator of U through the minimal extension, with certification.

    Edges of the extension contribute their rates directly; rates into added
    nodes are redistributed over the embedded boundary by the stopped-chain
    hitting law, which keeps the result symmetric and supported exactly on the
    neighbor structure."""
    ext = minimal_tree_extension(U)
    n = U.shape[0]
    gen = build_generator(ext.tree, ext.w, "absorbed")
    rev = {p: k for k, p in ext.embed.items()}
    hitting: Dict[NodeId, Dict[NodeId, float]] = {}
    done: Set[NodeId] = set()
    for p in ext.added_nodes:
        if p in done:
            continue
        comp, boundary = _added_component(ext, p)
        hit = _stopped_hitting(ext, comp, boundary)
        hitting.update(hit)
        done.update(comp)
    Q = np.zeros((n, n))
    for i in range(n):
        pi = ext.embed[i]
        Q[i, i] += gen.diag(pi)
        for nb, rate in gen.row(pi):
            if nb in rev:
                Q[i, rev[nb]] += rate
            else:
                for b, prob in hitting[nb].items():
                    Q[i, rev[b]] += rate * prob
    sym = float(np.abs(Q - Q.T).max())
    inv = float(np.abs((-Q) @ U - np.eye(n)).max())
    row_max = float((Q.sum(axis=1)).max())
    support_ok = True
    for i in range(n):
        nbrs = set(u_neighbors(ext, i))
        for j in range(n):
            if i == j:
                continue
            if (abs(Q[i, j]) > 1e-12) != (j in nbrs):
                support_ok = False
    certified = sym <= tol and inv <= tol and row_max <= tol and support_ok
    return UltraGenerator(Q, sym, inv, row_max, support_ok, certified, hitting)


def extend_harmonic(ext: TreeExtension, h: Dict[int, float],
                    hitting: Optional[Dict[NodeId, Dict[NodeId, float]]] = None
                    ) -> Dict[NodeId, float]:
    """Unique extension-generator-harmonic extension of h: added nodes take the
    hitting-law average of the boundary values."""
    if hitting is None:
        hitting = {}
        done: Set[NodeId] = set()
        for p in ext.added_nodes:
            if p in done:
                continue
            comp, boundary = _added_component(ext, p)
            hitting.update(_stopped_hitting(ext, comp, boundary))
            done.update(comp)
    rev = {p: k for k, p in ext.embed.items()}
    out: Dict[NodeId, float] = {p: h[i] for i, p in ext.embed.items()}
    for p, law in hitting.items():
        out[p] = sum(prob * h[rev[b]] for b, prob in law.items())
    return out


# ------------------------------------------------------------- word families --

@dataclass
class WordFamily:
    """Infinite index family: words over a finite alphabet, entry w(common-prefix length)."""

    kind: str                  # ends_with | body_then_end
    alphabet: Tuple[str, ...]
    end: str
    w: WeightSequence
    body: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("ends_with", "body_then_end"):
            raise SchemaError("ultrametric", f"unknown word family kind {self.kind!r}")
        if self.end not in self.alphabet:
            raise SchemaError("ultrametric", "end letter must belong to the alphabet")
        if self.kind == "body_then_end":
            self.body = tuple(b for b in self.alphabet if b != self.end)

    def extension_spec(self) -> StateTreeSpec:
        if self.kind == "ends_with":
            groups = tuple((("e" if a == self.end else "o"), 1) for a in self.alphabet)
            return StateTreeSpec("o", {"o": groups, "e": groups})
        groups = tuple((("t" if a == self.end else "b"), 1) for a in self.alphabet)
        return StateTreeSpec("b", {"b": groups, "t": ()}, allow_leaves=True)

    @property
    def embedded_states(self) -> Set[str]:
        return {"e"} if self.kind == "ends_with" else {"t"}

    def word_of(self, path: NodeId) -> str:
        return "".join(self.alphabet[i] for i in path)

    def to_json(self) -> dict:
        return {"kind": self.kind, "alphabet": list(self.alphabet), "end": self.end,
                "weights": self.w.to_json()}

    @staticmethod
    def from_json(obj: dict) -> "WordFamily":
        return WordFamily(obj["kind"], tuple(obj["alphabet"]), obj["end"],
                          WeightSequence.from_json(obj["weights"]))


def check_hypotheses_family(family: WordFamily, window_size: int = 64,
                            h4_tol: float = 1e-6) -> HypothesesReport:
    """Hypotheses for an infinite word family.

    H1 holds structurally (distinct words differ before their common length);
    it is verified on a finite window anyway.  H2/H3 are certified by the rule
    (declared value set, finitely many prefixes per length).  H4 is bounded by
    the certified escape-before-hitting probability of the extension walk.
    """
    spec = family.extension_spec()
    tree = build_tree(spec, 2)
    words = []
    frontier = [()]
    embedded = family.embedded_states
    while frontier and len(words) < window_size:
        node = frontier.pop(0)
        if tree.state_of(node) in embedded:
            words.append(node)
        frontier.extend(tree.children(node))
    h1_witness = None
    for a in range(len(words)):
        for b in range(a + 1, len(words)):
            i, j = words[a], words[b]
            meet = len(RootedTree.meet(i, j))
            if family.w.w(meet) == family.w.w(len(i)) == family.w.w(len(j)):
                h1_witness = (a, b)
    bound = family_h4_escape_bound(family)
    h4 = "certified" if bound <= h4_tol else "undetermined"
    counts = {family.w.w(n): len(tree.level_nodes(n)) for n in range(3)}
    return HypothesesReport(h1_witness is None, h1_witness, "certified",
                            [family.w.w(n) for n in range(4)], True, counts, h4,
                            f"escape-before-hit bound {bound:.2e}")


def neighbor_finiteness_criterion(U: np.ndarray, tol: float = 1e-12) -> bool:
    """Finite-basin criterion: for every value w there is a finite window I_w
    such that every index outside it dominates some window diagonal above w."""
    ext = minimal_tree_extension(U, tol)
    n = U.shape[0]
    scale = max(1.0, float(np.abs(U).max()))
    for w in ext.values:
        low = [j for j in range(n) if U[j, j] <= w + tol * scale]
        window = set()
        for j in low:
            window.add(j)
            window.update(u_neighbors(ext, j))
        for i in range(n):
            if i in window:
                continue
            if not any(U[i, j] >= U[j, j] - tol * scale and U[j, j] > w + tol * scale
                       for j in window):
                return False
    return True


def family_h4_escape_bound(family: WordFamily, probe_depth: int = 40) -> float:
    """Upper bound on the probability that the extension chain, started from an
    added node at level 1, escapes before hitting an embedded node or the
    cemetery: P{reach probe_depth first}, computed by class elimination."""
    spec = family.extension_spec()
    w = family.w
    embedded = family.embedded_states
    coeffs: Dict[Tuple[str, int], Tuple[float, float]] = {}

    def ab(state: str, level: int) -> Tuple[float, float]:
        if state in embedded:
            return 0.0, 0.0
        if level >= probe_depth:
            return 1.0, 0.0
        got = coeffs.get((state, level))
        if got is not None:
            return got
        lam_up = 1.0 / w.delta(level) if level else 1.0 / w.w(0)
        groups = spec.child_groups(state, level)
        lam_dn = 1.0 / w.delta(level + 1) if groups else 0.0
        denom = lam_up
        num_a = 0.0
        for cs, c in groups:
            a_c, b_c = ab(cs, level + 1)
            denom += c * lam_dn * (1.0 - b_c)
            num_a += c * lam_dn * a_c
        res = (num_a / denom, lam_up / denom)
        coeffs[(state, level)] = res
        return res

    # value at an added level-1 node: v = a + b v(root); root has cemetery value 0 above
    root_state = spec.root_state()
    a_r, _ = ab(root_state, 0)
    worst = a_r
    for cs, _ in spec.child_groups(root_state, 0):
        if cs in embedded:
            continue
        a, b = ab(cs, 1)
        worst = max(worst, a + b * a_r)
    return worst


@dataclass
class UBoundaryReport:
    resolution: int
    probe_depth: int
    cylinders: Dict[str, dict]      # per-cylinder diagnostics
    empty_flag: bool
    i_free_mass: float
    h4_status: str
    h4_escape_bound: float
    lemma_cross_check_consistent: bool
    transience: str

    def to_json(self) -> dict:
        return {"resolution": self.resolution, "probe_depth": self.probe_depth,
                "cylinders": self.cylinders, "boundary_empty_flag": self.empty_flag,
                "i_free_mass_estimate": self.i_free_mass,
                "H4": self.h4_status, "H4_escape_bound": self.h4_escape_bound,
                "full_measure_cross_check_consistent": self.lemma_cross_check_consistent,
                "transience": self.transience}


def u_boundary(family, resolution: int = 2, probe_depth: int = 10,
               h4_tol: float = 1e-6) -> UBoundaryReport:
    """Which extension cylinders can carry maximal index chains, with the
    mass of the index-free part and the H4 cross-report.

    A cylinder is compatible when descending paths keep accumulating embedded
    nodes all the way to the probe depth; it is index-free beyond some level
    when the best achievable count saturates.
    """
    if not isinstance(family, WordFamily):
        raise DomainError("ultrametric",
                          "a finite index set has no boundary; "
                          "u_boundary needs an infinite word family")
    spec = family.extension_spec()
    tree = build_tree(spec, resolution + 2)
    from .boundary import exit_measure as _exit_measure

    embedded = family.embedded_states

    def maxcount(path: NodeId, depth: int) -> int:
        state = tree.state_of(path)
        memo: Dict[Tuple[object, int], int] = {}

        def rec(state, level) -> int:
            if level >= depth:
                return 0
            key = (state, level)
            got = memo.get(key)
            if got is not None:
                return got
            groups = spec.child_groups(state, level)
            if not groups:
                memo[key] = -10 ** 9  # dead end: no ray continues here
                return memo[key]
            best_c = max((1 if cs in embedded else 0) + rec(cs, level + 1)
                         for cs, _ in groups)
            memo[key] = best_c
            return best_c

        return max(rec(state, len(path)), 0)

    mu = _exit_measure(tree, family.w, resolution, tol=1e-9)
    from .chain import classify_transience

    transience = classify_transience(tree, family.w).classification
    cylinders: Dict[str, dict] = {}
    i_free_mass = 0.0
    any_compatible = False
    for node in tree.level_nodes(resolution):
        deep = maxcount(node, probe_depth)
        shallow = maxcount(node, probe_depth - 3)
        compatible = deep > shallow  # still accumulating embedded nodes
        mass = mu.mass(node).mid
        if not compatible:
            i_free_mass += mass
        else:
            any_compatible = True
        cylinders[path_str(node)] = {"word_prefix": family.word_of(node),
                                     "embedded_count_at_probe": deep,
                                     "compatible": compatible, "mass": mass}
    h4_bound = family_h4_escape_bound(family, probe_depth=max(probe_depth, 40))
    h4_status = "certified" if h4_bound <= h4_tol else "undetermined"
    consistent = not (h4_status == "certified" and i_free_mass > 1e-6)
    return UBoundaryReport(resolution, probe_depth, cylinders, not any_compatible,
                           i_free_mass, h4_status, h4_bound, consistent, transience)


def dense_from_csv(text: str) -> np.ndarray:
    rows = [r for r in text.strip().splitlines() if r.strip()]
    data = [[float(x) for x in r.split(",")] for r in rows]
    return np.array(data)


def random_dendrogram_matrix(rng: np.random.Generator, max_indices: int = 40,
                             max_children: int = 3, depth: int = 4
                             ) -> np.ndarray:
    """Random finite tree matrix restricted to a random node subset: the
    canonical way to draw a valid ultrametric arrangement satisfying H1."""
    counts: Dict[NodeId, int] = {}
    frontier = [()]
    for lvl in range(depth):
        nxt = []
        for node in frontier:
            c = int(rng.integers(0, max_children + 1)) if lvl else int(rng.integers(2, max_children + 1))
            if lvl == depth - 1:
                c = 0
            counts[node] = c
            nxt.extend(node + (k,) for k in range(c))
        frontier = nxt
        if not frontier:
            break
    for node in frontier:
        counts.setdefault(node, 0)
    spec = FiniteTreeSpec(counts)
    tree = build_tree(spec)
    levels = max(len(p) for p in counts) + 1
    vals = np.cumsum(rng.uniform(0.2, 1.5, size=levels)) + 0.5
    w = finite_weights(vals.tolist())
    nodes = tree.nodes_upto(levels - 1)
    take = min(max_indices, len(nodes))
    sel = sorted(rng.choice(len(nodes), size=take, replace=False).tolist())
    chosen = [nodes[k] for k in sel]
    U = np.empty((take, take))
    for a, p in enumerate(chosen):
        for b, q in enumerate(chosen):
            U[a, b] = w.w(len(tree.meet(p, q)))
    return U

"""Tree matrices, their generators, exact finite potentials, and the
harmonic decomposition on level windows.

The matrix attached to (tree, w) has entries u(x, y) = w_{|x∧y|}, extended to
boundary rays through ray meets.  Its generator is the symmetric q-matrix
supported on tree edges and the diagonal; the root is defective (absorbed
mode, cemetery rate 1/w_0) or conservative (reflected mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, SchemaError
from .trees import BoundaryRay, NodeId, RootedTree, path_str
from .weights import WeightSequence

Site = Union[NodeId, BoundaryRay]


def u_entry(tree: RootedTree, w: WeightSequence, x: Site, y: Site) -> float:
    """w at the meet level of two nodes/rays; symmetric by construction."""
    if isinstance(x, BoundaryRay) and isinstance(y, BoundaryRay):
        if x is y:
            level = None
        else:
            level = x.meet_level(y)
        if level is None:
            lim = w.limit()
            if np.isinf(lim):
                raise DomainError("tree_matrix",
                                  "diagonal-at-infinity undefined: rays agree to available "
                                  "resolution and the weights are unbounded")
            return lim
        return w.w(level)
    if isinstance(x, BoundaryRay):
        x, y = y, x
    if isinstance(y, BoundaryRay):
        return w.w(y.meet_level_with_node(tree.require(x)))
    tree.require(x), tree.require(y)
    return w.w(len(tree.meet(x, y)))


@dataclass
class SparseGenerator:
    """q-matrix supported on tree edges and the diagonal.

    Off-diagonal rate between i and its parent is 1/Δ_{|i|}(w).  Row sums
    vanish except at the root, which leaks 1/w_0 to the cemetery in absorbed
    mode.
    """

    tree: RootedTree
    w: WeightSequence
    root_mode: str = "absorbed"

    def __post_init__(self):
        if self.root_mode not in ("absorbed", "reflected"):
            raise SchemaError("tree_matrix", f"unknown root mode {self.root_mode!r}")

    def edge_rate(self, child: NodeId) -> float:
        return 1.0 / self.w.delta(len(child))

    def cemetery_rate(self, path: NodeId) -> float:
        if path == () and self.root_mode == "absorbed":
            return 1.0 / self.w.w(0)
        return 0.0

    def diag(self, path: NodeId) -> float:
        level = len(path)
        n = self.tree.n_children(path)
        total = n / self.w.delta(level + 1) if n else 0.0
        if path:
            total += 1.0 / self.w.delta(level)
        else:
            total += self.cemetery_rate(path)
        return -total

    def row(self, path: NodeId) -> List[Tuple[NodeId, float]]:
        """Off-diagonal entries of the row at `path` (tree neighbors only)."""
        out = []
        if path:
            out.append((path[:-1], self.edge_rate(path)))
        if self.tree.n_children(path):
            rate = 1.0 / self.w.delta(len(path) + 1)
            out.extend((c, rate) for c in self.tree.children(path))
        return out

    def row_sum(self, path: NodeId) -> float:
        return self.diag(path) + sum(r for _, r in self.row(path))

    def total_rate(self, path: NodeId) -> float:
        return -self.diag(path)

    def apply(self, h, path: NodeId) -> float:
        """(Qh)(path) for h: NodeId -> float (h(cemetery) = 0)."""
        val = self.diag(path) * h(path)
        for nb, rate in self.row(path):
            val += rate * h(nb)
        return val


def build_generator(tree: RootedTree, w: WeightSequence,
                    root_mode: str = "absorbed") -> SparseGenerator:
    return SparseGenerator(tree, w, root_mode)


def window_nodes(tree: RootedTree, n: int) -> List[NodeId]:
    return tree.nodes_upto(n)


def u_matrix(tree: RootedTree, w: WeightSequence, rows: Sequence[NodeId],
             cols: Optional[Sequence[NodeId]] = None) -> np.ndarray:
    cols = rows if cols is None else cols
    out = np.empty((len(rows), len(cols)))
    for a, i in enumerate(rows):
        for b, j in enumerate(cols):
            out[a, b] = w.w(len(tree.meet(i, j)))
    return out


def dense_q(tree: RootedTree, w: WeightSequence, n: int,
            root_mode: str = "absorbed") -> Tuple[List[NodeId], np.ndarray]:
    """Q restricted to the level-n window, as a dense matrix (oracle use)."""
    gen = build_generator(tree, w, root_mode)
    order = window_nodes(tree, n)
    index = {p: k for k, p in enumerate(order)}
    Q = np.zeros((len(order), len(order)))
    for p in order:
        a = index[p]
        Q[a, a] = gen.diag(p)
        for nb, rate in gen.row(p):
            b = index.get(nb)
            if b is not None:
                Q[a, b] = rate
    return order, Q


def inverse_residual(tree: RootedTree, w: WeightSequence, node_set: Sequence[NodeId],
                     root_mode: str = "absorbed") -> float:
    """max |((−Q)U − I)_{ik}| over node_set², using exact sparse rows of Q.

    Rows reach tree neighbors outside the window; u-entries for those are
    evaluated directly, so the identity is checked with the true rows.
    """
    gen = build_generator(tree, w, root_mode)
    order = list(node_set)
    index = {p: k for k, p in enumerate(order)}
    U = u_matrix(tree, w, order)
    R = np.zeros((len(order), len(order)))
    for a, i in enumerate(order):
        row_acc = gen.diag(i) * U[a, :].copy()
        for j, rate in gen.row(i):
            b = index.get(j)
            if b is not None:
                row_acc += rate * U[b, :]
            else:
                uj = np.array([u_entry(tree, w, j, k) for k in order])
                row_acc += rate * uj
        row_acc = -row_acc
        row_acc[a] -= 1.0
        R[a, :] = row_acc
    return float(np.abs(R).max())


def _eliminate_column(gen: SparseGenerator, order: List[NodeId],
                      source: Dict[NodeId, float], n: int) -> Dict[NodeId, float]:
    """Solve (−Q_{window}) v = source by leaf-to-root then root-to-leaf passes."""
    tree = gen.tree
    alpha: Dict[NodeId, float] = {}
    beta: Dict[NodeId, float] = {}
    for x in reversed(order):  # deepest first (order is sorted; reversed is fine per level)
        level = len(x)
        d = -gen.diag(x)
        num = source.get(x, 0.0)
        if level < n:
            rate = 1.0 / gen.w.delta(level + 1)
            for c in tree.children(x):
                d -= rate * beta[c]
                num += rate * alpha[c]
        if x:
            beta[x] = (1.0 / gen.w.delta(level)) / d
            alpha[x] = num / d
        else:
            if d <= 0:
                raise DomainError("tree_matrix", "singular window restriction")
            alpha[x] = num / d
            beta[x] = 0.0
    v: Dict[NodeId, float] = {(): alpha[()]}
    for x in order:
        if x:
            v[x] = alpha[x] + beta[x] * v[x[:-1]]
    return v


def finite_potential(tree: RootedTree, w: WeightSequence, n: int,
                     root_mode: str = "absorbed") -> Tuple[List[NodeId], np.ndarray]:
    """V = −(Q restricted to levels ≤ n)⁻¹ by tree elimination, O(|window|) per column."""
    if root_mode != "absorbed":
        raise SchemaError("tree_matrix", "finite potential is defined for the absorbed chain")
    gen = build_generator(tree, w, root_mode)
    order = window_nodes(tree, n)
    V = np.empty((len(order), len(order)))
    index = {p: k for k, p in enumerate(order)}
    for j, col in enumerate(order):
        v = _eliminate_column(gen, order, {col: 1.0}, n)
        for p, val in v.items():
            V[index[p], j] = val
    return order, V


@dataclass
class HarmonicDecomposition:
    order: List[NodeId]
    potential: np.ndarray      # V on the window
    harmonic: np.ndarray       # H = U − V
    rank: int
    btilde: List[NodeId]       # level-n nodes with successors
    qbar_residual: float       # max |(Q̄ H)_{ij}| over rows off btilde


def harmonic_decomposition(tree: RootedTree, w: WeightSequence, n: int,
                           rank_tol: float = 1e-8) -> HarmonicDecomposition:
    order, V = finite_potential(tree, w, n)
    U = u_matrix(tree, w, order)
    H = U - V
    btilde = [p for p in tree.level_nodes(n) if tree.n_children(p) > 0]
    if H.size:
        svals = np.linalg.svd(H, compute_uv=False)
        scale = max(svals[0], 1.0)
        rank = int(np.sum(svals > rank_tol * scale))
    else:
        rank = 0
    gen = build_generator(tree, w, "absorbed")
    index = {p: k for k, p in enumerate(order)}
    btilde_set = set(btilde)
    resid = 0.0
    for i in order:
        if i in btilde_set:
            continue
        row = [(i, gen.diag(i))] + [(nb, r) for nb, r in gen.row(i) if nb in index]
        for j in range(len(order)):
            s = sum(r * H[index[nb], j] for nb, r in row)
            resid = max(resid, abs(s))
    return HarmonicDecomposition(order, V, H, rank, btilde, resid)


@dataclass
class HittingMatrices:
    order: List[NodeId]
    btilde: List[NodeId]
    level_below: List[NodeId]   # nodes at level n+1
    W: np.ndarray               # P_i{chain first meets btilde at k}
    E: np.ndarray               # P_i{chain first meets level n+1 at l}
    D: np.ndarray               # E · Mᵗ, grouped by parent in btilde
    M: np.ndarray               # btilde × level-(n+1) incidence


def hitting_matrices(tree: RootedTree, w: WeightSequence, n: int) -> HittingMatrices:
    order = window_nodes(tree, n)
    btilde = [p for p in tree.level_nodes(n) if tree.n_children(p) > 0]
    if not btilde:
        raise DomainError("tree_matrix", "no level-n node has successors", level=n)
    below = [c for p in btilde for c in tree.children(p)]
    U_ib = u_matrix(tree, w, order, btilde)
    U_bb = u_matrix(tree, w, btilde, btilde)
    W = np.linalg.solve(U_bb.T, U_ib.T).T
    U_il = u_matrix(tree, w, order, below)
    U_ll = u_matrix(tree, w, below, below)
    E = np.linalg.solve(U_ll.T, U_il.T).T
    M = np.zeros((len(btilde), len(below)))
    for a, k in enumerate(btilde):
        for b, l in enumerate(below):
            if l[:-1] == k:
                M[a, b] = 1.0
    D = E @ M.T
    return HittingMatrices(order, btilde, below, W, E, D, M)


def matrix_csv(order: Sequence[NodeId], M: np.ndarray) -> str:
    """CSV dump (row id, col id, value), canonical path order, round-trip-safe floats."""
    lines = ["row,col,value"]
    for a, i in enumerate(order):
        for b, j in enumerate(order):
            lines.append(f"{path_str(i)},{path_str(j)},{M[a, b]:.17g}")
    return "\n".join(lines) + "\n"

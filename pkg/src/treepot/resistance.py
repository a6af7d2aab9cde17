"""Certified potential-theory solves via the electrical-network view.

The chain attached to (tree, w) is reversible with edge conductance
1/Δ_{|i|}(w) between i and its parent, plus (absorbed mode) a conductance
1/w_0 from the root to the cemetery.  Everything the bracketed operations
need reduces to effective resistances:

* R(x) — resistance from x to infinity inside the subtree [x, ∞);
* C_up(x) — conductance from x to all grounds through its parent side;

from which hitting probabilities, absorption probabilities, exit-measure
masses and potential entries follow by series/parallel reduction.

Enclosures: R(x) is memoized per structural (state, level) class.  When the
subtree below a class is spherically symmetric (single live child state),
R = Σ_{k>level} Δ_k / N_k exactly, with N_k the descendant counts; the tail
is summed with exact per-period term ratios derived from the declared weight
and branching tail rules (divergence, hence recurrence, is detected exactly).
Non-symmetric classes recurse to a horizon and seed [0, structural upper
bound]; widening the horizon shrinks the enclosure.  All bounds are exact
modulo floating-point roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .errors import SchemaError
from .intervals import INF, Iv, ONE, ZERO, exact, iv_sum
from .trees import (ByLevelTreeSpec, HomogeneousTreeSpec, NodeId,
                    PowerSpineTreeSpec, RootedTree, StateTreeSpec, TreeSpec)
from .weights import WeightSequence

MAX_SERIES_TERMS = 60000


@dataclass
class SymTail:
    """Descendant-count structure below a spherically symmetric class.

    count(k) is the exact children count of a level-(k−1) descendant, valid
    for k > level; beyond `stable_from` the counts are periodic with the given
    period (period 1 covers constants) or grow by an exact per-step factor.
    """

    count: Callable[[int], int]
    period: int
    stable_from: int
    growth: float  # exact per-step multiplicative growth of count(k) beyond stable_from


def live_states(spec: StateTreeSpec) -> set:
    """States whose subtree is infinite (can reach a cycle in the state digraph)."""
    states = spec.states
    on_cycle = set()
    for start in states:
        # DFS from start looking for a cycle containing start
        stack = [(start, iter([cs for cs, _ in states[start]]))]
        seen = {start}
        found = False
        while stack and not found:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt == start:
                    found = True
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, iter([cs for cs, _ in states[nxt]])))
                    advanced = True
                    break
            if not advanced and not found:
                stack.pop()
        if found:
            on_cycle.add(start)
    live = set(on_cycle)
    changed = True
    while changed:
        changed = False
        for s, groups in states.items():
            if s not in live and any(cs in live for cs, _ in groups):
                live.add(s)
                changed = True
    return live


def state_blocks(spec: StateTreeSpec, live: set) -> Dict[str, int]:
    """Coarsest partition of live states with congruent live-child structure.

    Dead (finite-subtree) children carry zero conductance, so states differing
    only in dead appendages are resistance-equivalent; merging them exposes
    spherical symmetry that the raw state labels hide."""
    block = {s: 0 for s in spec.states if s in live}
    while True:
        sig = {}
        for s in block:
            counts: Dict[int, int] = {}
            for cs, c in spec.states[s]:
                if cs in live:
                    counts[block[cs]] = counts.get(block[cs], 0) + c
            sig[s] = tuple(sorted(counts.items()))
        relabel: Dict[Tuple, int] = {}
        new_block = {}
        for s in block:
            key = (block[s], sig[s])
            if key not in relabel:
                relabel[key] = len(relabel)
            new_block[s] = relabel[key]
        if new_block == block:
            return block
        block = new_block


def sym_tail_of(spec: TreeSpec, state, level: int,
                live: Optional[set] = None,
                blocks: Optional[Dict[str, int]] = None) -> Optional[SymTail]:
    """Symmetric-subtree descriptor for (state, level), or None."""
    if isinstance(spec, HomogeneousTreeSpec):
        p = spec.p
        if state == "r":
            return SymTail(lambda k: p + 1 if k == 1 else p, 1, level + 2, 1.0)
        return SymTail(lambda k: p, 1, level + 1, 1.0)
    if isinstance(spec, ByLevelTreeSpec):
        return SymTail(lambda k: spec.count_at(k - 1), 1,
                       max(level + 1, len(spec.counts) + 1), 1.0)
    if isinstance(spec, PowerSpineTreeSpec):
        if state == "cell":
            return SymTail(lambda k: spec.base ** k, 1, level + 1, float(spec.base))
        return None  # spine has two live child states
    if isinstance(spec, StateTreeSpec):
        if live is None:
            live = live_states(spec)
        if state not in live:
            return None
        if blocks is None:
            blocks = state_blocks(spec, live)
        rep_of = {}
        for s, b in blocks.items():
            rep_of.setdefault(b, s)
        orbit: List[int] = []
        index_of: Dict[int, int] = {}
        cur = blocks[state]
        while True:
            groups = [(cs, c) for cs, c in spec.states[rep_of[cur]] if cs in live]
            if not groups:
                return None
            child_blocks = {blocks[cs] for cs, _ in groups}
            if len(child_blocks) != 1:
                return None
            nxt = child_blocks.pop()
            if cur in index_of:
                cycle_start = index_of[cur]
                cycle = orbit[cycle_start:]
                prefix = orbit[:cycle_start]

                def count(k: int, prefix=tuple(prefix), cycle=tuple(cycle), lv=level):
                    i = k - lv - 1
                    if i < len(prefix):
                        return prefix[i]
                    return cycle[(i - len(prefix)) % len(cycle)]

                return SymTail(count, len(cycle), level + len(prefix) + 1, 1.0)
            index_of[cur] = len(orbit)
            orbit.append(sum(c for _, c in groups))
            cur = nxt
    return None


def _gap_growth(w: WeightSequence) -> Optional[float]:
    """Exact per-step growth factor of Δ_{k+1}/Δ_k beyond the prefix, or None."""
    kind = w.tail.kind
    if kind in ("arithmetic", "geometric_gap", "bounded"):
        return 1.0
    if kind == "doubling_gap":
        return 2.0
    return None  # custom / finite: no certificate


class Network:
    """Certified solves on one (tree, weights, root mode) triple.

    `horizon` bounds the depth explored for non-symmetric classes; widen it
    (e.g. over a depth schedule) to shrink enclosures.
    """

    def __init__(self, tree: RootedTree, w: WeightSequence, root_mode: str = "absorbed",
                 horizon: int = 48):
        if root_mode not in ("absorbed", "reflected"):
            raise SchemaError("chain_sim", f"unknown root mode {root_mode!r}")
        self.tree = tree
        self.spec = tree.spec
        self.w = w
        self.root_mode = root_mode
        if not w.finite:
            # deep levels beyond the representable weight range contribute
            # conductance ≤ 1/Δ there, far below any tolerance; clamp
            horizon = max(4, min(horizon, w.max_safe_index() - 4))
        self.horizon = horizon
        self.g_root = 1.0 / w.w(0) if root_mode == "absorbed" else 0.0
        self._live = live_states(self.spec) if isinstance(self.spec, StateTreeSpec) else None
        self._blocks = (state_blocks(self.spec, self._live)
                        if isinstance(self.spec, StateTreeSpec) else None)
        self._R_class: Dict[Tuple[object, int], Iv] = {}
        self._c_up: Dict[NodeId, Iv] = {}
        self._sym_cache: Dict[Tuple[object, int], Optional[SymTail]] = {}

    # ------------------------------------------------------------------ R --

    def _sym(self, state, level: int) -> Optional[SymTail]:
        key = (state, level)
        if key not in self._sym_cache:
            self._sym_cache[key] = sym_tail_of(self.spec, state, level, self._live,
                                               self._blocks)
        return self._sym_cache[key]

    def _is_dead(self, state, level: int) -> bool:
        if isinstance(self.spec, StateTreeSpec):
            return state not in (self._live or ())
        return False

    def class_resistance(self, state, level: int) -> Iv:
        """Enclosure of the resistance to infinity below a (state, level) node."""
        if self.spec.finite:
            return Iv(INF, INF)
        key = (state, level)
        got = self._R_class.get(key)
        if got is not None:
            return got
        if self._is_dead(state, level):
            res = Iv(INF, INF)
        else:
            st = self._sym(state, level)
            if st is not None:
                res = self._sym_series(st, level)
            else:
                res = self._recursive_resistance(state, level)
        self._R_class[key] = res
        return res

    def _sym_series(self, st: SymTail, level: int) -> Iv:
        """Σ_{k>level} Δ_k / N_k with a certified tail.

        Beyond the structural start, term(k+P)/term(k) has an exact value f
        (P = count period) and an exact per-period growth γ = (gΔ/gC)^{P²}
        (gΔ = gap-ratio growth, gC = count growth).  γ > 1, or γ = 1 with
        f ≥ 1, certifies divergence; otherwise block sums decay at least
        geometrically with ratio f, giving the tail bound.
        """
        w = self.w
        P = max(st.period, 1)
        partial = 0.0
        inv_n = 1.0  # 1/N_k
        k = level
        k_struct = max(st.stable_from, len(w.prefix) + 1)
        gap_growth = _gap_growth(w)
        while True:
            k += 1
            c = st.count(k)
            if c <= 0:
                return Iv(INF, INF)  # dead end: no conductance onward
            inv_n /= c
            term = w.delta(k) * inv_n
            partial += term
            if k >= k_struct and (k - k_struct) % P == 0:
                if gap_growth is None:
                    if term < 1e-17 * max(partial, 1e-300):
                        # numerically converged but rule gives no certificate
                        return Iv(partial, INF)
                    if k - level > MAX_SERIES_TERMS:
                        return Iv(partial, INF)
                    continue
                # exact P-step term factor at k (rule ratios, not subtracted
                # deltas: rounding noise must not flip the divergence test)
                # and the next block sum
                block = 0.0
                inv2 = inv_n
                f = 1.0
                for j in range(1, P + 1):
                    cj = st.count(k + j)
                    if cj <= 0:
                        return Iv(INF, INF)
                    inv2 /= cj
                    block += w.delta(k + j) * inv2
                    ratio = w.gap_ratio_exact(k + j - 1)
                    if ratio is None:
                        ratio = w.delta(k + j) / w.delta(k + j - 1)
                    f *= ratio / cj
                gamma = (gap_growth / st.growth) ** (P * P)
                if gamma > 1.0 or (gamma == 1.0 and f >= 1.0):
                    return Iv(INF, INF)
                if f >= 1.0:
                    # still climbing toward the decaying regime (γ < 1)
                    if k - level > MAX_SERIES_TERMS:
                        return Iv(partial, INF)
                    continue
                tail_hi = block / (1.0 - f)
                if gamma == 1.0:
                    v = partial + tail_hi  # factor exactly constant: closed tail
                    return Iv(v, v)
                if tail_hi - block <= 1e-14 * max(partial + block, 1e-300) \
                        or k - level > MAX_SERIES_TERMS:
                    return Iv(partial + block, partial + tail_hi)

    def _recursive_resistance(self, state, level: int) -> Iv:
        if level >= self.horizon:
            return Iv(0.0, self._seed_upper(state, level, frozenset()))
        groups = self._live_groups(state, level)
        if not groups:
            return Iv(INF, INF)
        d = self.w.delta(level + 1)
        cond = iv_sum((exact(d) + self.class_resistance(cs, level + 1)).recip() * c
                      for cs, c in groups)
        return cond.recip()

    def _live_groups(self, state, level: int):
        groups = self.spec.child_groups(state, level)
        if self._live is None:
            return groups
        return tuple((cs, c) for cs, c in groups if cs in self._live)

    def _seed_upper(self, state, level: int, visited: frozenset) -> float:
        """Structural upper bound on the subtree resistance (Rayleigh pruning)."""
        st = self._sym(state, level)
        if st is not None:
            return self._sym_series(st, level).hi
        if state in visited:
            return INF
        best = INF
        for cs, _ in self._live_groups(state, level):
            sub = self._seed_upper(cs, level + 1, visited | {state})
            best = min(best, self.w.delta(level + 1) + sub)
        return best

    # ------------------------------------------------------- node quantities --

    def node_resistance(self, path: NodeId) -> Iv:
        return self.class_resistance(self.tree.state_of(path), len(path))

    def up_prob(self, path: NodeId) -> Iv:
        """P_x{hit the parent ever} = R(x)/(Δ + R(x))."""
        if not path:
            raise SchemaError("chain_sim", "root has no parent")
        d = self.w.delta(len(path))
        return (ONE + exact(d) / self.node_resistance(path)).recip().clamp01()

    def escape_below_prob(self, path: NodeId) -> Iv:
        """P_x{escape inside [x,∞) without ever hitting the parent}."""
        d = self.w.delta(len(path))
        return (ONE + self.node_resistance(path) / exact(d)).recip().clamp01()

    def children_conductance(self, path: NodeId, minus_index: Optional[int] = None) -> Iv:
        level = len(path)
        d = self.w.delta(level + 1)
        state = self.tree.state_of(path)
        total = ZERO
        for cs, c in self._live_groups_with_dead(state, level):
            total = total + (exact(d) + self.class_resistance(cs, level + 1)).recip() * c
        if minus_index is not None:
            cs = self.spec.child_state(state, level, minus_index)
            total = (total - (exact(d) + self.class_resistance(cs, level + 1)).recip()).pos()
        return total

    def _live_groups_with_dead(self, state, level):
        # dead children carry zero conductance; including them is harmless and
        # keeps index bookkeeping simple
        return self.spec.child_groups(state, level)

    def up_conductance(self, path: NodeId) -> Iv:
        """Conductance from `path` to all grounds through its parent side."""
        if not path:
            return exact(self.g_root)
        got = self._c_up.get(path)
        if got is not None:
            return got
        parent = path[:-1]
        rest = self.up_conductance(parent) + self.children_conductance(parent,
                                                                       minus_index=path[-1])
        d = self.w.delta(len(path))
        res = (exact(d) + rest.recip()).recip()
        self._c_up[path] = res
        return res

    def hit_down_prob(self, parent: NodeId, child_index: int) -> Iv:
        """P_parent{ever hit the given child}."""
        d = self.w.delta(len(parent) + 1)
        c_other = self.up_conductance(parent) + self.children_conductance(
            parent, minus_index=child_index)
        return (ONE + c_other * exact(d)).recip().clamp01()

    def hit_prob(self, i: NodeId, j: NodeId) -> Iv:
        """P_i{T_j < ∞}, by strong-Markov factorization along the geodesic."""
        if i == j:
            return ONE
        m = self.tree.meet(i, j)
        out = ONE
        cur = i
        while cur != m:
            out = out * self.up_prob(cur)
            cur = cur[:-1]
        for k in range(len(m), len(j)):
            out = out * self.hit_down_prob(j[:k], j[k])
        return out.clamp01()

    def root_absorption(self) -> Iv:
        """P_r{hit the cemetery ever}; 0 in reflected mode."""
        if self.g_root == 0.0:
            return ZERO
        c_children = self.children_conductance(())
        return (ONE + c_children * exact(1.0 / self.g_root)).recip().clamp01()

    def root_escape(self) -> Iv:
        if self.g_root == 0.0:
            # transient iff children conductance > 0; escape probability is 1
            # whenever the chain is transient, 0 otherwise
            c = self.children_conductance(())
            if c.hi == 0.0:
                return ZERO
            if c.lo > 0.0:
                return ONE
            return Iv(0.0, 1.0)
        c_children = self.children_conductance(())
        return (ONE + exact(self.g_root) / c_children).recip().clamp01()

    def absorption(self, i: NodeId) -> Iv:
        """ḡ(i) = P_i{hit the cemetery ever}."""
        out = self.root_absorption()
        cur = i
        while cur:
            out = out * self.up_prob(cur)
            cur = cur[:-1]
        return out.clamp01()

    # ------------------------------------------------------------ exit masses --

    def own_cylinder_mass(self, j: NodeId) -> Iv:
        """P_j{X_ζ lands in the boundary piece below j} (unnormalized)."""
        if not j:
            return self.root_escape()
        e = self.escape_below_prob(j)
        if e.hi == 0.0:
            return ZERO
        back = self.up_prob(j) * self.hit_down_prob(j[:-1], j[-1])
        # 1 − back ≥ 1 − P{hit parent} = e, which also floors the denominator
        denom = Iv(max(1.0 - back.hi, e.lo, 0.0), max(1.0 - back.lo, e.lo, 1e-300))
        return (e / denom).clamp01()

    def exit_mass(self, j: NodeId, start: NodeId = ()) -> Iv:
        """P_start{X_ζ ∈ ∂∞(j)} (unnormalized by escape)."""
        if self.tree.is_ancestor(j, start):
            # complement over the level-|j| partition
            level = len(j)
            total = ZERO
            for other in self.tree.level_nodes(level):
                if other != j:
                    total = total + self.hit_prob(start, other) * self.own_cylinder_mass(other)
            escape_i = (ONE - self.absorption(start)).clamp01()
            return (escape_i - total).clamp01()
        return (self.hit_prob(start, j) * self.own_cylinder_mass(j)).clamp01()

    # ------------------------------------------------------------- potential --

    def total_rate(self, path: NodeId) -> float:
        level = len(path)
        n = self.tree.n_children(path)
        rate = n / self.w.delta(level + 1) if n else 0.0
        if path:
            rate += 1.0 / self.w.delta(level)
        else:
            rate += self.g_root
        return rate

    def potential_diag(self, j: NodeId) -> Iv:
        """V_jj = expected total time at j = holding / (1 − return probability)."""
        q = self.total_rate(j)
        level = len(j)
        ret = ZERO
        n = self.tree.n_children(j)
        d_child = self.w.delta(level + 1) if n else None
        for idx in range(n):
            ret = ret + exact((1.0 / d_child) / q) * self.up_prob(j + (idx,))
        if j:
            ret = ret + exact((1.0 / self.w.delta(level)) / q) * self.hit_down_prob(j[:-1], j[-1])
        ret = ret.clamp01()
        denom = Iv(max(1.0 - ret.hi, 0.0), max(1.0 - ret.lo, 0.0))
        if denom.lo == 0.0 and denom.hi == 0.0:
            return Iv(INF, INF)
        return exact(1.0 / q) / denom

    def potential_entry(self, i: NodeId, j: NodeId) -> Iv:
        return self.hit_prob(i, j) * self.potential_diag(j)


DEFAULT_SCHEDULE = (8, 16, 24, 32, 40, 48, 56, 64)

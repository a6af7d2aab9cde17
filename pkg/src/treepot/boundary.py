"""Exit measure on boundary cylinders, the G-process, the kernel operator W
with its inverse on simple functions, the Dirichlet form, and boundary-point
classification.

The measure is stored only on cylinders (a pre-measure on the semi-algebra of
cylinder sets); every consumer works on finite cylinder partitions.  Masses
carry certified interval enclosures from the resistance engine.  Tail sums over
deep cylinders use a geometric fit over three consecutive certified levels
with a safety factor of 2, flagged when uncertifiable — the structure gives no
computable convergence rate in general, so the fit is the documented stand-in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .chain import classify_transience
from .errors import DomainError, UncertifiedError
from .intervals import INF, Iv, ZERO, exact, iv_sum
from .resistance import DEFAULT_SCHEDULE, Network
from .trees import BoundaryRay, NodeId, RootedTree, path_str
from .weights import WeightSequence

FIT_SAFETY = 2.0


@dataclass
class ExitMeasure:
    """Cylinder masses of the escape law, conditioned on escape.

    `mass(path)` returns a certified enclosure of the mass of the boundary
    piece below `path`; entries beyond the build resolution are computed on
    demand through the retained network handle, so rays can be followed
    arbitrarily deep.
    """

    tree: RootedTree
    w: WeightSequence
    mode: str
    resolution: int
    escape: Iv
    net: Network
    converged: bool
    depth_used: int
    _mass: Dict[NodeId, Iv] = field(default_factory=dict)

    def mass(self, path: NodeId) -> Iv:
        got = self._mass.get(path)
        if got is None:
            got = (self.net.exit_mass(path) / self.escape).clamp01()
            self._mass[path] = got
        return got

    def ray_mass(self, ray: BoundaryRay, k: int) -> Iv:
        return self.mass(ray.node(k))

    def child_masses(self, path: NodeId) -> List[Tuple[NodeId, Iv]]:
        return [(c, self.mass(c)) for c in self.tree.children(path)]

    def additivity_residual(self, upto_level: int) -> float:
        worst = 0.0
        for lvl in range(upto_level):
            for node in self.tree.level_nodes(lvl):
                kids = iv_sum(m for _, m in self.child_masses(node))
                parent = self.mass(node)
                gap = max(kids.lo - parent.hi, parent.lo - kids.hi, 0.0)
                worst = max(worst, gap)
        return worst

    def max_mass_at(self, level: int) -> float:
        return max(self.mass(p).hi for p in self.tree.level_nodes(level))

    def to_json(self) -> dict:
        entries = {}
        for lvl in range(self.resolution + 1):
            for node in self.tree.level_nodes(lvl):
                m = self.mass(node)
                entries[path_str(node)] = [m.mid, m.err]
        return {"mode": self.mode, "resolution": self.resolution,
                "escape_probability": [self.escape.mid, self.escape.err],
                "converged": self.converged, "masses": entries}


def exit_measure(tree: RootedTree, w: WeightSequence, resolution: int,
                 depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
                 tol: float = 1e-10, mode: str = "absorbed") -> ExitMeasure:
    """Cylinder masses for all nodes up to `resolution`, certified to `tol` if possible."""
    report = classify_transience(tree, w)
    if report.classification == "recurrent":
        raise DomainError("boundary_measure", "exit measure undefined: recurrent input")
    nodes = [n for lvl in range(resolution + 1) for n in tree.level_nodes(lvl)]
    net = None
    depth = 0
    for depth in depth_schedule:
        net = Network(tree, w, mode, horizon=depth)
        escape = net.root_escape()
        worst = escape.width
        masses = {}
        for node in nodes:
            m = (net.exit_mass(node) / escape).clamp01()
            masses[node] = m
            worst = max(worst, m.width)
        if worst <= tol:
            em = ExitMeasure(tree, w, mode, resolution, escape, net, True, depth)
            em._mass.update(masses)
            return em
    em = ExitMeasure(tree, w, mode, resolution, net.root_escape(), net, False, depth)
    return em


def series_with_fitted_tail(term: Callable[[int], Iv], start: int,
                            rel_tol: float = 1e-13, abs_tol: float = 0.0,
                            max_terms: int = 3000) -> Tuple[Iv, bool]:
    """Σ_{k≥start} term(k) for eventually-geometric positive terms.

    The decay ratio is fitted from three consecutive certified ratios; the
    resulting geometric tail is doubled (safety factor) and the fit is only
    trusted while the ratios are stable and below 0.9.  Terms whose enclosure
    degenerates (a solve horizon was reached) stop the accumulation: the fit
    closes the series there or the result is flagged uncertified.
    """
    partial = ZERO
    history: List[Iv] = []
    k = start
    while k < start + max_terms:
        t = term(k)
        degenerate = (t.lo <= 0.0 and history and t.hi > 100.0 * max(history[-1].hi, 1e-300)) \
            or (t.lo > 0.0 and t.hi / t.lo > 1.5)
        if not degenerate:
            partial = partial + t
            history.append(t)
            if t.hi == 0.0:
                return partial, True
        bound = None
        if len(history) >= 4:
            ratios = []
            ok = True
            for a, b in zip(history[-4:-1], history[-3:]):
                if a.lo <= 0.0:
                    ok = False
                    break
                ratios.append(b.hi / a.lo)
            if ok:
                r = max(ratios)
                if r < 0.9 and max(ratios) - min(ratios) < 0.1:
                    bound = FIT_SAFETY * history[-1].hi * r / (1.0 - r)
        if bound is not None:
            if degenerate or bound <= max(rel_tol * max(partial.hi, 1e-300), abs_tol):
                return Iv(partial.lo, partial.hi + bound), True
        if degenerate:
            return Iv(partial.lo, INF), False
        k += 1
    return Iv(partial.lo, INF), False


@dataclass
class GProcess:
    """Telescoped cylinder tail sums G_n = Σ_{k≥n} Δ_k · mass(level-k cylinder).

    Two routes: the per-ray series with a fitted tail, and the per-atom form
    G_0 − Σ_{k<n} Δ_k mass(C^k), measurable one level up.  In absorbed mode
    G_0 = w_0 / escape; reflected mode yields the same series (it also equals
    V_rr + w_0); the conservative boundary generator treats 1/G_0 as 0.
    """

    mu: ExitMeasure
    mode: str = "absorbed"

    @property
    def w(self) -> WeightSequence:
        return self.mu.w

    def g0(self) -> Iv:
        w0 = self.w.w(0)
        if self.mu.mode == "reflected":
            # the same series; equals the reflected potential diagonal plus w_0
            return self.mu.net.potential_diag(()) + exact(w0)
        return exact(w0) / self.mu.escape

    def value(self, ray: BoundaryRay, n: int, rel_tol: float = 1e-13) -> Iv:
        """Series route along a ray; raises if the tail cannot be certified."""
        iv, certified = series_with_fitted_tail(
            lambda k: exact(self.w.delta(k)) * self.mu.ray_mass(ray, k), n, rel_tol)
        if not certified:
            raise UncertifiedError("boundary_measure",
                                   "G tail uncertifiable at requested range", level=n)
        return iv

    def at_atom(self, path: NodeId, n: int) -> Iv:
        """G_n on the atom below `path` (needs n ≤ level(path) + 1)."""
        if n > len(path) + 1:
            raise DomainError("boundary_measure",
                              "G level exceeds atom measurability", level=n,
                              atom=path_str(path))
        out = self.g0()
        for k in range(n):
            out = out - exact(self.w.delta(k)) * self.mu.mass(path[:k])
        return out.pos()

    def inv_at_atom(self, path: NodeId, n: int) -> Iv:
        g = self.at_atom(path, n)
        if g.hi <= 0.0:
            raise DomainError("boundary_measure", "G vanishes on a zero-mass atom",
                              atom=path_str(path), level=n)
        return g.recip()


@dataclass
class SimpleFn:
    """Function measurable at a cylinder level: one value per level atom."""

    level: int
    values: Dict[NodeId, float]

    def at(self, path: NodeId) -> float:
        return self.values[path[: self.level]]

    def refine(self, tree: RootedTree, level: int) -> "SimpleFn":
        if level < self.level:
            raise DomainError("boundary_measure", "cannot coarsen a simple function")
        if level == self.level:
            return self
        vals = {p: self.values[p[: self.level]] for p in tree.level_nodes(level)}
        return SimpleFn(level, vals)


def indicator(tree: RootedTree, node: NodeId, level: Optional[int] = None) -> SimpleFn:
    level = len(node) if level is None else level
    vals = {p: (1.0 if p[: len(node)] == node else 0.0) for p in tree.level_nodes(level)}
    return SimpleFn(level, vals)


def const_fn(tree: RootedTree, value: float, level: int = 0) -> SimpleFn:
    return SimpleFn(level, {p: value for p in tree.level_nodes(level)})


@dataclass
class IvFn:
    level: int
    values: Dict[NodeId, Iv]

    def mid(self) -> SimpleFn:
        return SimpleFn(self.level, {p: v.mid for p, v in self.values.items()})

    def max_err(self) -> float:
        return max((v.err for v in self.values.values()), default=0.0)

    def max_abs_diff(self, other: "IvFn") -> float:
        return max(abs(self.values[p].mid - other.values[p].mid) for p in self.values)


def integrate(mu: ExitMeasure, f: SimpleFn) -> Iv:
    return iv_sum(mu.mass(p) * exact(v) for p, v in f.values.items())


def conditional_U(mu: ExitMeasure, w: WeightSequence, i: NodeId, ray: BoundaryRay,
                  k: int) -> Iv:
    """Cylinder-average of u(i, ·) over the level-k cylinder of the ray."""
    tree = mu.tree
    node_k = ray.node(k)
    if not tree.is_ancestor(node_k, i):
        return exact(w.w(len(tree.meet(i, node_k))))
    denom = mu.mass(node_k)
    if denom.hi <= 0.0:
        raise DomainError("boundary_measure", "conditional average on a zero-mass atom",
                          atom=path_str(node_k))
    total = ZERO
    for j in tree.level_nodes(len(i)):
        if tree.is_ancestor(node_k, j):
            total = total + exact(w.w(len(tree.meet(i, j)))) * mu.mass(j)
    return total / denom


def _cyl_integral(mu: ExitMeasure, f: SimpleFn, path: NodeId) -> Iv:
    """∫ f dμ over the cylinder below `path` (path no deeper than f's level)."""
    if len(path) >= f.level:
        return mu.mass(path) * exact(f.at(path))
    return iv_sum(mu.mass(p) * exact(v)
                  for p, v in f.values.items() if p[: len(path)] == path)


def apply_W(mu: ExitMeasure, w: WeightSequence, f: SimpleFn) -> IvFn:
    """Wf = Σ_k Δ_k mass(C^k(·)) E(f | level k), exact on level-m atoms.

    For k ≥ m the conditional expectation equals f, so the series collapses
    to a finite sum plus f·G_m with G_m in its atom-measurable form.
    """
    g = GProcess(mu)
    out: Dict[NodeId, Iv] = {}
    for atom in mu.tree.level_nodes(f.level):
        acc = ZERO
        for k in range(f.level):
            acc = acc + exact(w.delta(k)) * _cyl_integral(mu, f, atom[:k])
        acc = acc + g.at_atom(atom, f.level) * exact(f.at(atom))
        out[atom] = acc
    return IvFn(f.level, out)


def apply_W_martingale(mu: ExitMeasure, w: WeightSequence, f: SimpleFn) -> IvFn:
    """Martingale-difference route Σ_n G_n (E_n f − E_{n−1} f); equals apply_W."""
    g = GProcess(mu)
    out: Dict[NodeId, Iv] = {}
    for atom in mu.tree.level_nodes(f.level):
        acc = ZERO
        prev: Iv = ZERO
        for n in range(f.level + 1):
            top = atom[:n]
            mass = mu.mass(top)
            if mass.hi <= 0.0:
                en = prev
            else:
                en = _cyl_integral(mu, f, top) / mass
            acc = acc + g.at_atom(atom, n) * (en - prev)
            prev = en
        out[atom] = acc
    return IvFn(f.level, out)


def apply_W_inverse_simple(mu: ExitMeasure, w: WeightSequence, phi: SimpleFn) -> IvFn:
    """W⁻¹φ for φ simple at level n, by the telescoped inverse expansion.

    Round-trips with apply_W to identity on simple functions; zero-mass atoms
    inside the support are an error (the expansion divides by their G)."""
    g = GProcess(mu)
    tree = mu.tree
    atoms = tree.level_nodes(phi.level)
    n = phi.level
    support = [a for a in atoms if phi.values[a] != 0.0]
    for a in support:
        if mu.mass(a).hi <= 0.0:
            raise DomainError("boundary_measure", "zero-mass atom in the support of φ",
                              atom=path_str(a))
    out: Dict[NodeId, Iv] = {}
    for b in atoms:
        acc = ZERO
        for a in support:
            c = exact(phi.values[a])
            meet = len(tree.meet(a, b))
            coeff = g.inv_at_atom(a, n) if a == b else ZERO
            for k in range(0, min(n - 1, meet) + 1):
                frac = mu.mass(a) / mu.mass(a[:k])
                step = (g.inv_at_atom(a, k) - g.inv_at_atom(a, k + 1)) * frac
                coeff = coeff + step
            acc = acc + coeff * c
        out[b] = acc
    return IvFn(n, out)


def w_inverse_kernel(mu: ExitMeasure, w: WeightSequence, xi: BoundaryRay,
                     eta: BoundaryRay) -> Iv:
    """Off-diagonal inverse kernel −Σ_{k≤|ξ∧η|} Δ_k/(G_k G_{k+1}); strictly negative."""
    m = xi.meet_level(eta)
    if m is None:
        raise DomainError("boundary_measure",
                          "inverse kernel needs two distinct rays")
    g = GProcess(mu)
    total = ZERO
    for k in range(m + 1):
        path = xi.node(k)  # G_{k+1} is measurable at level k
        total = total + exact(w.delta(k)) * g.inv_at_atom(path, k) * g.inv_at_atom(path, k + 1)
    return -total


def dirichlet_H(mu: ExitMeasure, w: WeightSequence, xi: BoundaryRay,
                eta: BoundaryRay) -> Iv:
    """Jump kernel of the form: Σ_{n≤|ξ∧η|} (1/mass(C^n)) (1/G_{n+1} − 1/G_n) ≥ 0."""
    m = xi.meet_level(eta)
    if m is None:
        raise DomainError("boundary_measure", "jump kernel needs two distinct rays")
    return _H_meet(mu, w, xi.node(m), m)


def _H_meet(mu: ExitMeasure, w: WeightSequence, meet_node: NodeId, m: int) -> Iv:
    g = GProcess(mu)
    total = ZERO
    for n in range(m + 1):
        path = meet_node[:n]  # G_{n+1} is measurable at level n
        inv_diff = g.inv_at_atom(path, n + 1) - g.inv_at_atom(path, n)
        total = total + inv_diff / mu.mass(path)
    return total.pos()


def dirichlet_form(mu: ExitMeasure, w: WeightSequence, f: SimpleFn, g_fn: SimpleFn,
                   mode: str = "absorbed") -> Iv:
    """E(f,g) = ∫ g · W⁻¹f dμ; conservative mode subtracts the killing part."""
    tree = mu.tree
    level = max(f.level, g_fn.level)
    f2, g2 = f.refine(tree, level), g_fn.refine(tree, level)
    winv = apply_W_inverse_simple(mu, w, f2)
    total = ZERO
    for b in tree.level_nodes(level):
        total = total + mu.mass(b) * exact(g2.values[b]) * winv.values[b]
    if mode in ("reflected", "conservative"):
        gproc = GProcess(mu)
        total = total - gproc.g0().recip() * integrate(mu, f2) * integrate(mu, g2)
    return total


def dirichlet_form_jump_route(mu: ExitMeasure, w: WeightSequence, f: SimpleFn,
                              g_fn: SimpleFn, mode: str = "absorbed") -> Iv:
    """Double-integral route: ½ ΣΣ (f(a)−f(b))(g(a)−g(b)) H(a,b) μ(a)μ(b) [+ killing]."""
    tree = mu.tree
    level = max(f.level, g_fn.level)
    f2, g2 = f.refine(tree, level), g_fn.refine(tree, level)
    atoms = tree.level_nodes(level)
    total = ZERO
    for a in atoms:
        for b in atoms:
            if a == b:
                continue
            df = f2.values[a] - f2.values[b]
            dg = g2.values[a] - g2.values[b]
            if df == 0.0 or dg == 0.0:
                continue
            m = len(tree.meet(a, b))
            h = _H_meet(mu, w, a, m)
            total = total + exact(0.5 * df * dg) * h * mu.mass(a) * mu.mass(b)
    if mode == "absorbed":
        gproc = GProcess(mu)
        kill = iv_sum(mu.mass(a) * exact(f2.values[a] * g2.values[a]) for a in atoms)
        total = total + gproc.g0().recip() * kill
    return total


def dirichlet_H_csv(mu: ExitMeasure, w: WeightSequence, level: int) -> str:
    """CSV of (atom pair, jump-kernel value) over the level partition."""
    tree = mu.tree
    atoms = tree.level_nodes(level)
    lines = ["atom_a,atom_b,H"]
    for a in atoms:
        for b in atoms:
            if a >= b:
                continue
            h = _H_meet(mu, w, a, len(tree.meet(a, b)))
            lines.append(f"{path_str(a)},{path_str(b)},{h.mid:.17g}")
    return "\n".join(lines) + "\n"


@dataclass
class RegularityReport:
    status: str                    # regular | irregular | undetermined
    absorption_trace: List[Tuple[int, float, float]]  # (level, lower, upper)

    def to_json(self) -> dict:
        return {"status": self.status,
                "absorption_trace": [[n, lo, hi] for n, lo, hi in self.absorption_trace]}


def ray_regularity(tree: RootedTree, w: WeightSequence, ray: BoundaryRay,
                   depth: int, tol: float = 1e-6,
                   horizon: Optional[int] = None) -> RegularityReport:
    """Classify a ray by the absorption probabilities along it."""
    net = Network(tree, w, "absorbed", horizon=(horizon or max(depth + 16, 48)))
    trace = []
    levels = sorted(set(list(range(1, min(depth, 8) + 1)) + [depth // 2, depth - 1, depth]))
    for nlev in levels:
        if nlev < 1:
            continue
        iv = net.absorption(ray.node(nlev))
        trace.append((nlev, iv.lo, iv.hi))
    uppers = [hi for _, _, hi in trace]
    lowers = [lo for _, lo, _ in trace]
    if uppers[-1] <= tol and all(u2 <= u1 + 1e-12 for u1, u2 in zip(uppers, uppers[1:])):
        return RegularityReport("regular", trace)
    # irregular: absorption stays bounded away from 0, i.e. the per-level decay
    # dies out while the value is still above tol
    if lowers[-1] > tol and lowers[-2] > 0.0 and lowers[-1] / lowers[-2] >= 0.9:
        return RegularityReport("irregular", trace)
    return RegularityReport("undetermined", trace)


def inaccessible_components(mu: ExitMeasure, max_level: int) -> List[NodeId]:
    """Maximal cylinders with certified zero mass."""
    out: List[NodeId] = []
    stack = [()]
    while stack:
        node = stack.pop()
        if len(node) > max_level:
            continue
        for child in mu.tree.children(node):
            if mu.mass(child).hi <= 0.0:
                out.append(child)
            else:
                stack.append(child)
    return sorted(out)


def exit_integral_of_u(net: Network, w: WeightSequence, i: NodeId, target: NodeId) -> Iv:
    """∫ u(η, target) d(exit law from i)(η), exact finite sum (unnormalized).

    The integrand is constant on the meet-level slices of the path to `target`,
    and constant on the whole cylinder below it, so no tail estimate is needed.
    """
    masses = [net.exit_mass(target[:k], start=i) for k in range(len(target) + 1)]
    total = ZERO
    for k in range(len(target)):
        total = total + exact(w.w(k)) * (masses[k] - masses[k + 1])
    total = total + exact(w.w(len(target))) * masses[len(target)]
    return total


def exit_integral_of_u_ray(net: Network, w: WeightSequence, i: NodeId,
                           ray: BoundaryRay, rel_tol: float = 1e-11) -> Tuple[Iv, bool]:
    """∫ u(η, ξ) d(exit law from i)(η) for a ray ξ (unnormalized).

    Finite slice sum to a cut level plus the exact telescoped remainder
    w_K·m(C^K) + Σ_{k>K} Δ_k m(C^k), whose tail is fitted with the safety
    guard.  Returns (value, certified flag).
    """
    K = 6
    masses = [net.exit_mass(ray.node(k), start=i) for k in range(K + 1)]
    head = ZERO
    for k in range(K):
        head = head + exact(w.w(k)) * (masses[k] - masses[k + 1])
    head = head + exact(w.w(K)) * masses[K]
    tail, certified = series_with_fitted_tail(
        lambda k: exact(w.delta(k)) * net.exit_mass(ray.node(k), start=i), K + 1, rel_tol)
    return head + tail, certified


def potential_split_residual(tree: RootedTree, w: WeightSequence, i: NodeId, j: NodeId,
                             horizon: int = 48) -> Iv:
    """Enclosure of u(i,j) − V_ij − ∫ u(η,j) d(exit law from i); contains 0."""
    net = Network(tree, w, "absorbed", horizon=horizon)
    u = exact(u_val(tree, w, i, j))
    v = net.potential_entry(i, j)
    integral = exit_integral_of_u(net, w, i, j)
    return u - v - integral


def u_val(tree: RootedTree, w: WeightSequence, i: NodeId, j: NodeId) -> float:
    return w.w(len(tree.meet(i, j)))

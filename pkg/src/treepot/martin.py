"""Martin kernels (absorbed, reflected, irregular branches), harmonic functions
from boundary data, and level measures extracted from increasing harmonic
functions.

Two independent routes are kept for the absorbed kernel: the hitting-ratio
form (default, cheapest) and the telescoped series over conditional cylinder
averages (verification route); their agreement is itself a test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

from .boundary import (ExitMeasure, GProcess, SimpleFn, apply_W_inverse_simple,
                       conditional_U, exit_integral_of_u_ray)
from .chain import classify_transience
from .errors import DomainError
from .intervals import Iv, ONE, ZERO, exact
from .resistance import Network
from .treematrix import build_generator
from .trees import BoundaryRay, NodeId, RootedTree, path_str
from .weights import WeightSequence

IRREGULAR_DENOM_FLOOR = 1e-6


@dataclass
class MartinValue:
    value: Iv
    mode_used: str
    flagged: bool = False
    note: str = ""

    def to_json(self) -> dict:
        return {"value": self.value.mid, "error": self.value.err,
                "mode": self.mode_used, "flagged": self.flagged, "note": self.note}


def martin_kernel(tree: RootedTree, w: WeightSequence, mu: Optional[ExitMeasure],
                  i: NodeId, ray: BoundaryRay, mode: str = "absorbed",
                  horizon: int = 48) -> MartinValue:
    """Martin kernel κ(i, ray) in the requested mode.

    Recurrent inputs return u(i,·)/w_0 under a distinct mode tag rather than
    failing silently.
    """
    if i == ():
        return MartinValue(ONE, mode + "|root")
    report = classify_transience(tree, w)
    if report.classification == "recurrent":
        meet_level = ray.meet_level_with_node(i)
        return MartinValue(exact(w.w(meet_level) / w.w(0)), "recurrent")
    if mode == "absorbed":
        net = Network(tree, w, "absorbed", horizon=horizon)
        meet = ray.node(ray.meet_level_with_node(i))
        num = net.hit_prob(i, meet)
        den = net.hit_prob((), meet)
        return MartinValue(num / den, "absorbed|hitting-ratio")
    if mode == "absorbed-series":
        if mu is None:
            raise DomainError("martin_harmonic", "series route needs the exit measure")
        return MartinValue(_series_kernel(mu, w, i, ray, reflected=False),
                           "absorbed|series")
    if mode == "reflected":
        if mu is None:
            raise DomainError("martin_harmonic", "reflected route needs the exit measure")
        return MartinValue(_series_kernel(mu, w, i, ray, reflected=True), "reflected")
    if mode == "absorbed-irregular":
        return _irregular_kernel(tree, w, i, ray, horizon)
    raise DomainError("martin_harmonic", f"unknown Martin kernel mode {mode!r}")


def _series_kernel(mu: ExitMeasure, w: WeightSequence, i: NodeId, ray: BoundaryRay,
                   reflected: bool) -> Iv:
    """Telescoped conditional-average route; reflected mode starts the ladder at 1."""
    g = GProcess(mu)
    n = ray.meet_level_with_node(i)
    total = ONE if reflected else ZERO
    prev = ZERO  # E(U_{i·} | level −1) := 0; reflected mode replaces the k=0 term by 1
    for k in range(0, n + 2):
        ek = conditional_U(mu, w, i, ray, k)
        if reflected and k == 0:
            prev = ek
            continue
        ginv = g.inv_at_atom(ray.node(k), k)
        total = total + ginv * (ek - prev)
        prev = ek
    if not reflected:
        total = total / mu.escape
    return total


def _irregular_kernel(tree: RootedTree, w: WeightSequence, i: NodeId, ray: BoundaryRay,
                      horizon: int) -> MartinValue:
    net = Network(tree, w, "absorbed", horizon=horizon)
    meet_level = ray.meet_level_with_node(i)
    u_i = exact(w.w(meet_level))
    num_int, cert_n = exit_integral_of_u_ray(net, w, i, ray)
    den_int, cert_d = exit_integral_of_u_ray(net, w, (), ray)
    num = u_i - num_int
    den = exact(w.w(0)) - den_int
    flagged = not (cert_n and cert_d)
    note = ""
    if den.mid < IRREGULAR_DENOM_FLOOR:
        flagged = True
        note = "denominator below floor: point is (near-)regular, value unreliable"
    return MartinValue(num / den, "absorbed|irregular", flagged, note)


@dataclass
class HarmonicFn:
    """Function on realized nodes with claimed (and checkable) Q-harmonicity."""

    tree: RootedTree
    w: WeightSequence
    evaluate: Callable[[NodeId], Iv]
    provenance: str

    def value(self, path: NodeId) -> Iv:
        return self.evaluate(path)

    def residual(self, nodes, root_mode: str = "absorbed") -> float:
        """max |Qh| over the given nodes (the cemetery value is 0 by convention)."""
        gen = build_generator(self.tree, self.w, root_mode)
        worst = 0.0
        for i in nodes:
            val = gen.diag(i) * self.evaluate(i).mid
            for nb, rate in gen.row(i):
                val += rate * self.evaluate(nb).mid
            worst = max(worst, abs(val))
        return worst

    def is_increasing(self, upto_level: int, slack: float = 1e-12) -> bool:
        for lvl in range(upto_level):
            for p in self.tree.level_nodes(lvl):
                hp = self.evaluate(p).mid
                for c in self.tree.children(p):
                    if self.evaluate(c).mid < hp - slack:
                        return False
        return True


def harmonic_from_simple(mu: ExitMeasure, w: WeightSequence, phi: SimpleFn) -> HarmonicFn:
    """h(i) = ∫ u(i,ξ) (W⁻¹φ)(ξ) μ(dξ): the boundary-data representation."""
    psi = apply_W_inverse_simple(mu, w, phi)
    tree = mu.tree
    cache: Dict[NodeId, Iv] = {}

    def ev(i: NodeId) -> Iv:
        got = cache.get(i)
        if got is not None:
            return got
        total = ZERO
        for a, coeff in psi.values.items():
            total = total + coeff * _u_cyl_integral(mu, w, i, a)
        cache[i] = total
        return total

    return HarmonicFn(tree, w, ev, f"from-boundary-simple(level {phi.level})")


def _u_cyl_integral(mu: ExitMeasure, w: WeightSequence, i: NodeId, a: NodeId) -> Iv:
    """∫_{cylinder a} u(i, ξ) μ(dξ)."""
    tree = mu.tree
    if not tree.is_ancestor(a, i):
        return exact(w.w(len(tree.meet(i, a)))) * mu.mass(a)
    total = ZERO
    for j in tree.level_nodes(len(i)):
        if tree.is_ancestor(a, j):
            total = total + exact(w.w(len(tree.meet(i, j)))) * mu.mass(j)
    return total


def u_column_harmonic(tree: RootedTree, w: WeightSequence, ray: BoundaryRay) -> HarmonicFn:
    """h = u(·, ξ) for a fixed ray ξ; harmonic and increasing, represented by δ_ξ."""
    def ev(i: NodeId) -> Iv:
        return exact(w.w(ray.meet_level_with_node(i)))

    return HarmonicFn(tree, w, ev, "from-column")


def harmonic_from_values(tree: RootedTree, w: WeightSequence,
                         values: Dict[NodeId, float]) -> HarmonicFn:
    def ev(i: NodeId) -> Iv:
        try:
            return exact(values[i])
        except KeyError:
            raise DomainError("martin_harmonic", "harmonic function not realized at node",
                              node=path_str(i))

    return HarmonicFn(tree, w, ev, "user-supplied")


@dataclass
class LevelMeasure:
    levels: Dict[int, Dict[NodeId, float]]
    consistency_residual: float
    total_masses: Dict[int, float]
    variation_stats: Dict[int, float]

    def to_json(self) -> dict:
        return {
            "levels": {str(n): {path_str(p): v for p, v in lv.items()}
                       for n, lv in self.levels.items()},
            "consistency_residual": self.consistency_residual,
            "total_masses": {str(n): v for n, v in self.total_masses.items()},
            "variation_stats": {str(n): v for n, v in self.variation_stats.items()},
        }


def harmonic_limit_measure(h: HarmonicFn, max_level: int,
                           harmonicity_tol: float = 1e-8) -> LevelMeasure:
    """Per-level signed masses (h(j) − h(j⁻))/Δ_n representing h, with diagnostics.

    The per-level variation statistic Δ_n⁻¹ Σ |h(j) − h(j⁻)| is monotone in n
    for harmonic h; its boundedness is the representability criterion.
    """
    tree, w = h.tree, h.w
    interior = [p for lvl in range(max_level) for p in tree.level_nodes(lvl)]
    resid = h.residual(interior)
    if resid > harmonicity_tol:
        raise DomainError("martin_harmonic", "input is not harmonic on the window",
                          residual=resid)
    levels: Dict[int, Dict[NodeId, float]] = {0: {(): h.value(()).mid / w.w(0)}}
    variation: Dict[int, float] = {}
    totals: Dict[int, float] = {0: levels[0][()]}
    for n in range(1, max_level + 1):
        lv: Dict[NodeId, float] = {}
        s = 0.0
        for j in tree.level_nodes(n):
            diff = h.value(j).mid - h.value(j[:-1]).mid
            lv[j] = diff / w.delta(n)
            s += abs(diff)
        levels[n] = lv
        variation[n] = s / w.delta(n)
        totals[n] = sum(lv.values())
    worst = 0.0
    for n in range(max_level):
        for k, mass in levels[n].items():
            child_sum = sum(levels[n + 1][j] for j in tree.children(k))
            worst = max(worst, abs(mass - child_sum))
    return LevelMeasure(levels, worst, totals, variation)


def harmonic_csv(h: HarmonicFn, max_level: int) -> str:
    lines = ["node,value"]
    for lvl in range(max_level + 1):
        for p in h.tree.level_nodes(lvl):
            lines.append(f"{path_str(p)},{h.value(p).mid:.17g}")
    return "\n".join(lines) + "\n"


def variation_csv(lm: LevelMeasure) -> str:
    lines = ["level,variation_statistic"]
    for n, s in sorted(lm.variation_stats.items()):
        lines.append(f"{n},{s:.17g}")
    return "\n".join(lines) + "\n"


def reflected_split_residual(tree: RootedTree, w: WeightSequence, i: NodeId, j: NodeId,
                             ray: BoundaryRay, horizon: int = 48) -> Iv:
    """u(i,j) − V_ij − ∫(u(η,j) + u(i,ξ) − u(η,ξ)) d(exit law from i), reflected mode.

    The value is independent of the regular ray ξ used; an enclosure of 0.
    """
    from .boundary import exit_integral_of_u

    net = Network(tree, w, "reflected", horizon=horizon)
    u_ij = exact(w.w(len(tree.meet(i, j))))
    v_ij = net.potential_entry(i, j)
    int_uj = exit_integral_of_u(net, w, i, j)
    escape_i = (ONE - net.absorption(i)).clamp01()
    meet_level = ray.meet_level_with_node(i)
    int_ui = exact(w.w(meet_level)) * escape_i
    int_ueta, _ = exit_integral_of_u_ray(net, w, i, ray)
    return u_ij - v_ij - (int_uj + int_ui - int_ueta)

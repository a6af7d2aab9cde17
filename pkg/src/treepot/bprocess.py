"""The jump process on the tree boundary: exact transition kernel, semigroup
action on simple functions, exit rates, exponential split/merge, and the
cascade Monte Carlo simulator (absorbed and reflected variants).

The simulator flattens the level recursion iteratively: hold in the current
resolution-N cylinder for an exp(1/G_N) time (the level-N piece never moves a
resolution-N observable), then walk a Bernoulli ladder B_p ~ Ber(1 − G_p/G_{p−1})
from p = N down; the first success at p restarts from the measure conditioned
on the level-(p−1) cylinder, sampled child-by-child down to resolution N; no
success kills the path.  The reflected variant never dies: the ladder's last
rung always fires and restarts from the unconditioned measure (renewals).
This is exact in law at cylinder resolution N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .boundary import ExitMeasure, GProcess, IvFn, SimpleFn, _cyl_integral
from .chain import rng_for
from .errors import DomainError, SchemaError
from .intervals import Iv, ZERO, exact
from .trees import BoundaryRay, NodeId, RootedTree, path_str
from .weights import WeightSequence

KILLED = "killed"
HORIZON = "horizon"


@dataclass
class BoundaryKernel:
    """Closed-form transition kernel data: measure, weights, G accessors, mode."""

    mu: ExitMeasure
    mode: str = "absorbed"

    def __post_init__(self):
        if self.mode not in ("absorbed", "reflected"):
            raise SchemaError("boundary_process", f"unknown mode {self.mode!r}")
        self.g = GProcess(self.mu, self.mode)

    @property
    def tree(self) -> RootedTree:
        return self.mu.tree

    @property
    def w(self) -> WeightSequence:
        return self.mu.w

    def inv_g(self, path: NodeId, n: int) -> Iv:
        """1/G_n at the atom below `path`; the conservative variant has 1/G_0 = 0."""
        if n == 0 and self.mode == "reflected":
            return ZERO
        return self.g.inv_at_atom(path, n)


def _exp_of(minus_x: Iv) -> Iv:
    """e^{−x} for a nonnegative enclosure x."""
    return Iv(math.exp(-minus_x.hi), math.exp(-minus_x.lo))


def kernel_p(bk: BoundaryKernel, t: float, xi: BoundaryRay, eta: BoundaryRay) -> Iv:
    """p(t, ξ, η) = Σ_{n ≤ |ξ∧η|} (e^{−t/G_n} − e^{−t/G_{n+1}})/mass(C^n(ξ))."""
    if t <= 0:
        raise DomainError("boundary_process", "kernel defined for t > 0")
    m = xi.meet_level(eta)
    if m is None:
        raise DomainError("boundary_process", "rays agree to available resolution")
    return _kernel_meet(bk, t, xi.node(m), m)


def _kernel_meet(bk: BoundaryKernel, t: float, meet_node: NodeId, m: int) -> Iv:
    total = ZERO
    for n in range(m + 1):
        path = meet_node[:n]
        mass = bk.mu.mass(path)
        if mass.hi <= 0.0:
            raise DomainError("boundary_process", "zero-mass cylinder on the path",
                              atom=path_str(path))
        e_n = _exp_of(exact(t) * bk.inv_g(path, n))
        e_n1 = _exp_of(exact(t) * bk.inv_g(path, n + 1))
        total = total + (e_n - e_n1) / mass
    return total.pos()


def green_identity_residual(bk: BoundaryKernel, xi: BoundaryRay, eta: BoundaryRay) -> Iv:
    """∫₀^∞ p(t,ξ,η) dt − u(ξ,η), by the exact telescoping sum; encloses 0."""
    if bk.mode != "absorbed":
        raise DomainError("boundary_process",
                          "the conservative variant has no finite Green kernel")
    m = xi.meet_level(eta)
    if m is None:
        raise DomainError("boundary_process", "rays agree to available resolution")
    total = ZERO
    for n in range(m + 1):
        path = xi.node(n)
        g_n = bk.g.at_atom(path, n)
        g_n1 = bk.g.at_atom(path, n + 1)
        total = total + (g_n - g_n1) / bk.mu.mass(path)
    return total - exact(bk.w.w(m))


def green_quadrature(bk: BoundaryKernel, xi: BoundaryRay, eta: BoundaryRay,
                     upper: float = 200.0) -> float:
    """Numeric ∫ p dt (midpoint kernel), for the two-route agreement check."""
    from scipy.integrate import quad

    val, _ = quad(lambda t: kernel_p(bk, t, xi, eta).mid, 0.0, upper, limit=400)
    return val


def semigroup_apply(bk: BoundaryKernel, t: float, f: SimpleFn) -> IvFn:
    """P_t f = Σ_n e^{−t/G_n} (E_n f − E_{n−1} f) on level-m atoms (finite sum)."""
    if t < 0:
        raise DomainError("boundary_process", "negative time")
    mu = bk.mu
    out: Dict[NodeId, Iv] = {}
    for atom in mu.tree.level_nodes(f.level):
        acc = ZERO
        prev: Iv = ZERO
        for n in range(f.level + 1):
            top = atom[:n]
            mass = mu.mass(top)
            en = (_cyl_integral(mu, f, top) / mass) if mass.hi > 0 else prev
            edecay = _exp_of(exact(t) * bk.inv_g(atom, n)) if t > 0 else exact(1.0)
            acc = acc + edecay * (en - prev)
            prev = en
        out[atom] = acc
    return IvFn(f.level, out)


def semigroup_apply_kernel_route(bk: BoundaryKernel, t: float, f: SimpleFn) -> IvFn:
    """Collapsed kernel-integral route: Σ_{n<m}(e^{−t/G_n}−e^{−t/G_{n+1}}) E_n f + e^{−t/G_m} f."""
    mu = bk.mu
    out: Dict[NodeId, Iv] = {}
    for atom in mu.tree.level_nodes(f.level):
        acc = ZERO
        for n in range(f.level):
            top = atom[:n]
            mass = mu.mass(top)
            en = (_cyl_integral(mu, f, top) / mass) if mass.hi > 0 else ZERO
            diff = _exp_of(exact(t) * bk.inv_g(atom, n)) - _exp_of(exact(t) * bk.inv_g(atom, n + 1))
            acc = acc + diff * en
        acc = acc + _exp_of(exact(t) * bk.inv_g(atom, f.level)) * exact(f.at(atom))
        out[atom] = acc
    return IvFn(f.level, out)


def exit_rate(bk: BoundaryKernel, n: int, ray: BoundaryRay) -> Iv:
    """Exponential rate of the exit time from the level-n cylinder of the ray."""
    mu = bk.mu
    path = ray.node(n)
    mass_n = mu.mass(path)
    if mass_n.hi <= 0.0:
        raise DomainError("boundary_process", "zero-mass cylinder", atom=path_str(path))
    acc = bk.inv_g(path, 0)
    for k in range(1, n + 1):
        inv_mass_gap = mu.mass(path[:k]).recip() - mu.mass(path[:k - 1]).recip()
        acc = acc + bk.g.inv_at_atom(path, k) * inv_mass_gap
    return mass_n * acc


def exp_merge(theta1: float, theta0: float, b: int) -> float:
    """Γ = Θ₁ + B·Θ₀ (exp[λ₁] + Ber·exp[λ₀] merges to exp[λ₀] for λ₀ < λ₁)."""
    return theta1 + (theta0 if b else 0.0)


def exp_split(lam0: float, lam1: float, rng: np.random.Generator
              ) -> Tuple[float, float, int]:
    """Split Γ₀ ~ exp[λ₀] into (Θ₁, Θ₀, B) with Θ₁ ~ exp[λ₁], Θ₀ ~ exp[λ₀],
    B ~ Ber(1 − λ₀/λ₁) independent, so that Θ₁ + B Θ₀ reproduces Γ₀ exactly."""
    if not 0 < lam0 < lam1:
        raise DomainError("boundary_process", "split needs 0 < λ₀ < λ₁",
                          lam0=lam0, lam1=lam1)
    gamma0 = rng.exponential(1.0 / lam0)
    gamma0p = rng.exponential(1.0 / lam0)
    z1 = rng.exponential(1.0 / (lam1 - lam0))
    if z1 >= gamma0:
        return gamma0, gamma0p, 0
    return z1, gamma0 - z1, 1


@dataclass
class BoundaryPath:
    """Piecewise-constant boundary trajectory at simulation resolution."""

    segments: List[Tuple[float, NodeId]]  # (start time, ray prefix at resolution N)
    status: str                           # killed | horizon
    end_time: float
    seed: int
    path_index: int
    resolution: int
    renewals: int = 0                     # level-0 restarts (reflected bookkeeping)

    @property
    def lifetime(self) -> float:
        return self.end_time

    def ray_at(self, t: float) -> Optional[NodeId]:
        if t >= self.end_time and self.status == KILLED:
            return None
        cur = None
        for start, ray in self.segments:
            if start > t:
                break
            cur = ray
        return cur

    def exit_time_from(self, node: NodeId) -> Optional[float]:
        """First jump time at which the path leaves the cylinder below `node`."""
        k = len(node)
        if not self.segments or self.segments[0][1][:k] != node:
            return 0.0
        for start, ray in self.segments[1:]:
            if ray[:k] != node:
                return start
        if self.status == KILLED:
            return self.end_time
        return None  # never exited before the horizon

    def to_csv(self) -> str:
        lines = ["t_start,ray"]
        for start, ray in self.segments:
            lines.append(f"{start:.17g},{path_str(ray)}")
        return "\n".join(lines) + "\n"


class CascadeSimulator:
    """Shared tables for fast repeated cascade runs at one resolution.

    Holds only plain tables (floats, tuples), so instances pickle cleanly and
    batches can be distributed over a process pool."""

    def __init__(self, bk: BoundaryKernel, resolution: int):
        self.mode = bk.mode
        self.N = resolution
        mu = bk.mu
        tree = bk.tree
        leaves = tree.level_nodes(resolution)
        if not leaves:
            raise DomainError("boundary_process", "no cylinders at the resolution")
        self.leaf_index: Dict[NodeId, int] = {p: k for k, p in enumerate(leaves)}
        self.leaves = leaves
        # mean holding times G_n and ladder probabilities per leaf (plain lists:
        # the run loop is pure python for speed)
        self.g_mid: List[List[float]] = []
        self.ladder: List[List[float]] = []
        for p in leaves:
            g_row = []
            for n in range(resolution + 1):
                gn = bk.g.at_atom(p, n)
                if gn.mid <= 0.0:
                    raise DomainError("boundary_process", "zero-mass cylinder on a leaf path",
                                      atom=path_str(p))
                g_row.append(gn.mid)
            lad = [0.0] + [1.0 - g_row[q] / g_row[q - 1] for q in range(1, resolution + 1)]
            if bk.mode == "reflected" and resolution >= 1:
                lad[1] = 1.0
            self.g_mid.append(g_row)
            self.ladder.append(lad)
        # child sampling tables: cumulative conditional masses per internal node
        self.children: Dict[NodeId, Tuple[List[NodeId], List[float]]] = {}
        for lvl in range(resolution):
            for node in tree.level_nodes(lvl):
                kids = tree.children(node)
                masses = [max(mu.mass(c).mid, 0.0) for c in kids]
                tot = sum(masses)
                if tot <= 0.0:
                    continue
                cum, acc = [], 0.0
                for m in masses:
                    acc += m / tot
                    cum.append(acc)
                self.children[node] = (kids, cum)

    def sample_within(self, node: NodeId, rng_u) -> NodeId:
        """Conditional child-by-child ray sampling from `node` down to resolution N."""
        cur = node
        while len(cur) < self.N:
            kids, cum = self.children[cur]
            u = rng_u()
            for idx, edge in enumerate(cum):
                if u <= edge:
                    break
            cur = kids[idx]
        return cur

    def run(self, start: NodeId, horizon: float, seed: int, path_index: int
            ) -> BoundaryPath:
        if start not in self.leaf_index or (len(start) > 0 and start[:-1] not in self.children):
            raise DomainError("boundary_process",
                              "start ray lies in a zero-mass cylinder",
                              ray=path_str(start))
        rng = rng_for(seed, path_index)
        N = self.N
        reflected = self.mode == "reflected"
        buf_u = rng.random(128)
        buf_e = rng.standard_exponential(128)
        pos = [0, 0]

        def next_u() -> float:
            nonlocal buf_u
            if pos[0] >= buf_u.size:
                buf_u = rng.random(128)
                pos[0] = 0
            v = buf_u[pos[0]]
            pos[0] += 1
            return v

        def next_e() -> float:
            nonlocal buf_e
            if pos[1] >= buf_e.size:
                buf_e = rng.standard_exponential(128)
                pos[1] = 0
            v = buf_e[pos[1]]
            pos[1] += 1
            return v

        cur = start
        t = 0.0
        segments: List[Tuple[float, NodeId]] = [(0.0, cur)]
        renewals = 0
        while True:
            leaf = self.leaf_index[cur]
            t += self.g_mid[leaf][N] * next_e()
            if t >= horizon:
                return BoundaryPath(segments, HORIZON, horizon, seed, path_index, N,
                                    renewals)
            restart_level = None
            ladder = self.ladder[leaf]
            for p in range(N, 0, -1):
                if next_u() < ladder[p]:
                    restart_level = p - 1
                    break
            if restart_level is None:
                if reflected:  # unreachable: rung 1 always fires
                    restart_level = 0
                else:
                    return BoundaryPath(segments, KILLED, t, seed, path_index, N,
                                        renewals)
            if restart_level == 0:
                renewals += 1
            cur = self.sample_within(cur[:restart_level], next_u)
            segments.append((t, cur))


def simulate_boundary(bk: BoundaryKernel, xi: BoundaryRay, resolution: int,
                      horizon: float, rng_seed: int, path_index: int = 0,
                      sim: Optional[CascadeSimulator] = None) -> BoundaryPath:
    """One exact-in-law cascade trajectory at cylinder resolution N."""
    sim = sim or CascadeSimulator(bk, resolution)
    return sim.run(xi.node(resolution), horizon, rng_seed, path_index)


def simulate_boundary_reflected(bk: BoundaryKernel, xi: BoundaryRay, resolution: int,
                                horizon: float, rng_seed: int, path_index: int = 0,
                                sim: Optional[CascadeSimulator] = None) -> BoundaryPath:
    if bk.mode != "reflected":
        raise SchemaError("boundary_process", "kernel is not in reflected mode")
    sim = sim or CascadeSimulator(bk, resolution)
    return sim.run(xi.node(resolution), horizon, rng_seed, path_index)


def _run_chunk(sim: CascadeSimulator, start: NodeId, horizon: float, seed: int,
               indices, from_measure: bool) -> List[BoundaryPath]:
    out = []
    for i in indices:
        if from_measure:
            rng0 = rng_for(seed ^ 0x9E3779B97F4A7C15, i)
            s = sim.sample_within((), lambda: rng0.random())
        else:
            s = start
        out.append(sim.run(s, horizon, seed, i))
    return out


def batch_paths(bk: BoundaryKernel, start: NodeId, resolution: int, horizon: float,
                n_paths: int, seed: int, from_measure: bool = False,
                workers: int = 1) -> Tuple[CascadeSimulator, List[BoundaryPath]]:
    """Replayable batch; optional initial rays drawn from the exit measure itself.

    Paths are keyed by (seed, index), so distributing index chunks over a
    process pool leaves every artifact bit-identical to the serial run."""
    sim = CascadeSimulator(bk, resolution)
    if workers > 1 and n_paths >= 4 * workers:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [range(k, n_paths, workers) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [sim] * workers, [start] * workers,
                                  [horizon] * workers, [seed] * workers, chunks,
                                  [from_measure] * workers))
        merged: List[BoundaryPath] = [None] * n_paths  # type: ignore[list-item]
        for chunk, part in zip(chunks, parts):
            for i, path in zip(chunk, part):
                merged[i] = path
        return sim, merged
    return sim, _run_chunk(sim, start, horizon, seed, range(n_paths), from_measure)


def occupancy_statistic(paths: Sequence[BoundaryPath], t: float,
                        node: NodeId) -> Tuple[int, int]:
    """(# alive at t inside the cylinder below node, # alive at t)."""
    alive = 0
    inside = 0
    for p in paths:
        ray = p.ray_at(t)
        if ray is None:
            continue
        alive += 1
        if ray[: len(node)] == node:
            inside += 1
    return inside, alive

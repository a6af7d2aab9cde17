"""Continuous-time chain on the tree: trajectory simulation and certified
absorption/transience/hitting brackets.

RNG contract: counter-based Philox keyed by (seed, path_index), so a (seed,
index) pair fully determines a trajectory and simulations are embarrassingly
parallel and replayable bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SchemaError
from .intervals import Iv
from .resistance import DEFAULT_SCHEDULE, Network
from .trees import NodeId, RootedTree, path_str
from .weights import WeightSequence

ABSORBED = "absorbed-at-root-cemetery"
ESCAPED = "escaped-to-boundary"
CAP_TIME = "cap-hit-time"


def rng_for(seed: int, path_index: int = 0) -> np.random.Generator:
    key = np.array([seed & (2 ** 64 - 1), path_index & (2 ** 64 - 1)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class ProbBracket:
    lower: float
    upper: float
    depth: int
    converged: bool

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "mid": self.mid,
                "depth": self.depth, "converged": self.converged}

    @staticmethod
    def from_iv(iv: Iv, depth: int, converged: bool) -> "ProbBracket":
        return ProbBracket(iv.lo, min(iv.hi, 1.0), depth, converged)


@dataclass
class Trajectory:
    steps: List[Tuple[NodeId, float]]
    status: str
    ray_prefix: Optional[NodeId]
    seed: int
    path_index: int
    total_time: float

    def to_csv(self) -> str:
        lines = ["step,node,holding"]
        for k, (node, hold) in enumerate(self.steps):
            lines.append(f"{k},{path_str(node)},{hold:.17g}")
        return "\n".join(lines) + "\n"


def simulate_chain(tree: RootedTree, w: WeightSequence, start: NodeId,
                   rng_seed: int, root_mode: str = "absorbed",
                   max_level: Optional[int] = 64, max_time: Optional[float] = None,
                   path_index: int = 0) -> Trajectory:
    """One chain trajectory: exponential holding at rate −Q_ii, jumps along the row."""
    if max_level is None and max_time is None and not tree.spec.finite:
        raise SchemaError("chain_sim", "need max_level or max_time on an infinite tree")
    tree.require(start)
    rng = rng_for(rng_seed, path_index)
    path = list(start)
    t = 0.0
    steps: List[Tuple[NodeId, float]] = []
    g_root = 1.0 / w.w(0) if root_mode == "absorbed" else 0.0
    while True:
        node = tuple(path)
        level = len(path)
        n = tree.n_children(node)
        rate_up = (1.0 / w.delta(level)) if level else g_root
        rate_dn = (1.0 / w.delta(level + 1)) if n else 0.0
        total = rate_up + n * rate_dn
        if total <= 0.0:  # isolated root of a reflected one-node tree
            steps.append((node, float("inf")))
            return Trajectory(steps, CAP_TIME, None, rng_seed, path_index, float("inf"))
        hold = rng.exponential(1.0 / total)
        steps.append((node, hold))
        t += hold
        if max_time is not None and t >= max_time:
            return Trajectory(steps, CAP_TIME, None, rng_seed, path_index, t)
        u = rng.random() * total
        if u < rate_up:
            if level == 0:
                return Trajectory(steps, ABSORBED, None, rng_seed, path_index, t)
            path.pop()
        else:
            idx = min(int((u - rate_up) / rate_dn), n - 1)
            path.append(idx)
            if max_level is not None and len(path) >= max_level:
                return Trajectory(steps, ESCAPED, tuple(path), rng_seed, path_index, t)


def sample_exit_statistics(tree: RootedTree, w: WeightSequence, start: NodeId,
                           n_paths: int, seed: int, resolution: int,
                           root_mode: str = "absorbed",
                           max_level: int = 64, workers: int = 1) -> Dict[str, object]:
    """Skeleton-only batch runner: absorption count and escape-prefix frequencies.

    Holding times are not drawn (the jump chain decides absorption vs escape),
    which keeps 1e5-path runs cheap.  Counter-based per-path seeding makes the
    aggregation identical whether chunks run serially or on a process pool.
    """
    if workers > 1 and n_paths >= 4 * workers:
        from concurrent.futures import ProcessPoolExecutor

        counts = [n_paths // workers + (1 if k < n_paths % workers else 0)
                  for k in range(workers)]
        offsets = [sum(counts[:k]) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_exit_stats_chunk, [tree] * workers, [w] * workers,
                                  [start] * workers, counts, [seed] * workers, offsets,
                                  [resolution] * workers, [root_mode] * workers,
                                  [max_level] * workers))
        absorbed = sum(p["absorbed"] for p in parts)
        freq: Dict[NodeId, int] = {}
        for p in parts:
            for key, c in p["exit_frequencies"].items():
                freq[key] = freq.get(key, 0) + c
        return {"paths": n_paths, "absorbed": absorbed, "escaped": n_paths - absorbed,
                "exit_frequencies": freq}
    return _exit_stats_chunk(tree, w, start, n_paths, seed, 0, resolution, root_mode,
                             max_level)


def _exit_stats_chunk(tree: RootedTree, w: WeightSequence, start: NodeId,
                      n_paths: int, seed: int, index_offset: int, resolution: int,
                      root_mode: str, max_level: int) -> Dict[str, object]:
    g_root = 1.0 / w.w(0) if root_mode == "absorbed" else 0.0
    lim = max_level + 2
    if w.finite:
        lim = min(lim, len(w.prefix))
    deltas = [w.delta(k) for k in range(lim)]
    absorbed = 0
    freq: Dict[NodeId, int] = {}
    n_children = tree.n_children
    for i in range(index_offset, index_offset + n_paths):
        rng = rng_for(seed, i)
        path = list(start)
        uniforms = rng.random(256)
        pos = 0
        while True:
            if pos >= uniforms.size:
                uniforms = rng.random(256)
                pos = 0
            node = tuple(path)
            level = len(path)
            n = n_children(node)
            rate_up = (1.0 / deltas[level]) if level else g_root
            rate_dn = (1.0 / deltas[level + 1]) if n else 0.0
            total = rate_up + n * rate_dn
            u = uniforms[pos] * total
            pos += 1
            if u < rate_up:
                if level == 0:
                    absorbed += 1
                    break
                path.pop()
            else:
                path.append(min(int((u - rate_up) / rate_dn), n - 1))
                if len(path) >= max_level:
                    prefix = tuple(path[:resolution])
                    freq[prefix] = freq.get(prefix, 0) + 1
                    break
    return {"paths": n_paths, "absorbed": absorbed, "escaped": n_paths - absorbed,
            "exit_frequencies": freq}


def absorption_probability(tree: RootedTree, w: WeightSequence, i: NodeId,
                           depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
                           tol: float = 1e-8) -> ProbBracket:
    """Certified bracket for the probability of ever reaching the cemetery from i."""
    last = Iv(0.0, 1.0)
    depth = 0
    for depth in depth_schedule:
        net = Network(tree, w, "absorbed", horizon=depth)
        last = net.absorption(i)
        if last.width <= tol:
            return ProbBracket.from_iv(last, depth, True)
    return ProbBracket.from_iv(last, depth, False)


def hitting_probability(tree: RootedTree, w: WeightSequence, i: NodeId, j: NodeId,
                        root_mode: str = "absorbed",
                        depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
                        tol: float = 1e-8) -> ProbBracket:
    last = Iv(0.0, 1.0)
    depth = 0
    for depth in depth_schedule:
        net = Network(tree, w, root_mode, horizon=depth)
        last = net.hit_prob(i, j)
        if last.width <= tol:
            return ProbBracket.from_iv(last, depth, True)
    return ProbBracket.from_iv(last, depth, False)


@dataclass
class TransienceReport:
    classification: str  # transient | recurrent | undetermined
    bracket: ProbBracket  # ḡ(r)
    shortcut: Optional[str] = None

    def to_json(self) -> dict:
        out = {"classification": self.classification, "gbar_root": self.bracket.to_json()}
        if self.shortcut:
            out["shortcut"] = self.shortcut
        return out


def classify_transience(tree: RootedTree, w: WeightSequence,
                        depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
                        tol: float = 1e-8) -> TransienceReport:
    """Certified transient/recurrent/undetermined, with the root absorption bracket."""
    if tree.spec.finite:
        return TransienceReport("recurrent", ProbBracket(1.0, 1.0, 0, True),
                                shortcut="finite tree")
    shortcut = None
    if not np.isinf(w.limit()):
        shortcut = "bounded weights imply transience"
    br = absorption_probability(tree, w, (), depth_schedule, tol)
    if shortcut and br.upper >= 1.0 - tol:
        # the certified bracket did not resolve it, but boundedness does
        return TransienceReport("transient", br, shortcut)
    if br.upper < 1.0 - tol:
        return TransienceReport("transient", br, shortcut)
    if br.lower >= 1.0 - tol and br.width <= tol:
        return TransienceReport("recurrent", br)
    return TransienceReport("undetermined", br)


def trajectory_summary(trajectories: Iterable[Trajectory], resolution: int = 2) -> dict:
    counts = {ABSORBED: 0, ESCAPED: 0, CAP_TIME: 0}
    freq: Dict[str, int] = {}
    for tr in trajectories:
        counts[tr.status] = counts.get(tr.status, 0) + 1
        if tr.status == ESCAPED and tr.ray_prefix is not None:
            key = path_str(tr.ray_prefix[:resolution])
            freq[key] = freq.get(key, 0) + 1
    return {"status_counts": counts, "exit_frequencies": freq}

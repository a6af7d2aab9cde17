"""Randomized self-consistency checks of the certified solve engine.

Random finite-state branching machines crossed with random weight tails;
every invariant below is a theorem for the exact quantities, so a violation
beyond the enclosure widths is an engine bug.
"""

import numpy as np
import pytest

from treepot.intervals import iv_sum
from treepot.resistance import Network
from treepot.trees import StateTreeSpec, build_tree
from treepot.weights import arithmetic, bounded, geometric_gap


def _random_case(rng):
    n_states = int(rng.integers(1, 4))
    names = [f"s{k}" for k in range(n_states)]
    states = {}
    for s in names:
        groups = [(cs, int(c)) for cs in names if (c := rng.integers(0, 3))]
        states[s] = groups or [(s, 1)]
    spec = StateTreeSpec(names[0], states)
    kind = rng.integers(0, 3)
    if kind == 0:
        w = arithmetic([float(rng.uniform(0.3, 2.0))], float(rng.uniform(0.2, 2.0)))
    elif kind == 1:
        w = geometric_gap([1.0, 1.0 + float(rng.uniform(0.1, 1.0))],
                          float(rng.uniform(0.3, 1.6)))
    else:
        w0 = float(rng.uniform(0.3, 1.5))
        w = bounded([w0], w0 + float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.2, 0.8)))
    return build_tree(spec, 3), w


@pytest.mark.parametrize("seed", [123, 777])
def test_engine_invariants_on_random_machines(seed):
    rng = np.random.default_rng(seed)
    for _ in range(25):
        tree, w = _random_case(rng)
        for mode in ("absorbed", "reflected"):
            net = Network(tree, w, mode, horizon=40)
            esc, ab = net.root_escape(), net.root_absorption()
            tot = esc + ab
            if not (mode == "reflected" and esc.hi == 0.0):
                # the chain terminates one way or the other
                assert tot.lo <= 1.0 + 1e-9
                assert tot.hi + tot.width >= 1.0 - 1e-9
            for lvl in (1, 2):
                kids = iv_sum(net.exit_mass(p) for p in tree.level_nodes(lvl))
                assert kids.lo - 1e-9 <= esc.hi
                assert kids.hi + 1e-9 + kids.width + esc.width >= esc.lo
            nodes = tree.nodes_upto(2)[:5]
            for i in nodes:
                for j in nodes:
                    a, b = net.potential_entry(i, j), net.potential_entry(j, i)
                    if np.isinf(a.mid):
                        continue
                    assert abs(a.mid - b.mid) <= 1e-7 * max(1.0, a.mid) + a.width + b.width
            i, j = (0,), tree.level_nodes(2)[-1]
            mid = tree.meet(i, j)
            h1 = net.hit_prob(i, j)
            h2 = net.hit_prob(i, mid) * net.hit_prob(mid, j)
            assert abs(h1.mid - h2.mid) <= 1e-9 + h1.width + h2.width


def test_exact_divergence_immune_to_gap_rounding():
    # arithmetic gaps whose floating-point deltas differ from d at the last ulp
    # must still classify the single-ray chain as recurrent (infinite resistance)
    tree, _ = _random_case(np.random.default_rng(0))
    ray = build_tree(StateTreeSpec("s", {"s": [("s", 1)]}), 3)
    for d in (1.6805606613148152, 0.1, 0.3333333333333333):
        w = arithmetic([d], d)
        net = Network(ray, w, "reflected", horizon=40)
        assert net.node_resistance((0, 0)).lo == np.inf

import numpy as np
import pytest

from treepot.boundary import const_fn, exit_measure, indicator
from treepot.fixtures import FIXTURES, load_tree_spec
from treepot.martin import (harmonic_csv, harmonic_from_simple, harmonic_limit_measure,
                            martin_kernel, reflected_split_residual, u_column_harmonic,
                            variation_csv)
from treepot.trees import BoundaryRay, ByLevelTreeSpec, build_tree, fixed_ray
from treepot.weights import arithmetic


def test_reflected_kernel_closed_form(homog2, homog2_measure_reflected):
    tree, w = homog2
    mu = homog2_measure_reflected
    ray = fixed_ray(tree, [0])
    for m in range(4):
        for n in range(m + 1):
            i = tuple([0] * n + [1] * (m - n)) if n < m else tuple([0] * m)
            if not tree.exists(i):
                continue
            kv = martin_kernel(tree, w, mu, i, ray, "reflected")
            assert abs(kv.value.mid - 2.0 ** (2 * n - m)) <= 1e-9


def test_absorbed_kernel_two_routes(homog2, homog2_measure):
    tree, w = homog2
    ray = fixed_ray(tree, [0])
    ratio = martin_kernel(tree, w, homog2_measure, (0,), ray, "absorbed")
    series = martin_kernel(tree, w, homog2_measure, (0,), ray, "absorbed-series")
    assert abs(ratio.value.mid - 3.0) <= 1e-9
    assert abs(series.value.mid - 3.0) <= 1e-9


def test_kernel_at_root_is_one(homog2, homog2_measure):
    tree, w = homog2
    ray = fixed_ray(tree, [1])
    for mode in ("absorbed", "absorbed-series", "reflected"):
        mu = homog2_measure
        kv = martin_kernel(tree, w, mu, (), ray, mode)
        assert kv.value.mid == 1.0


def test_recurrent_kernel_tagged():
    tree = build_tree(ByLevelTreeSpec([1], 1), 4)
    w = arithmetic([1.0], 1.0)
    ray = fixed_ray(tree, [0])
    kv = martin_kernel(tree, w, None, (0, 0), ray, "absorbed")
    assert kv.mode_used == "recurrent"
    assert abs(kv.value.mid - w.w(2) / w.w(0)) <= 1e-12


def test_irregular_mode_flags_near_regular(homog2):
    tree, w = homog2
    ray = fixed_ray(tree, [0])
    kv = martin_kernel(tree, w, None, (0,), ray, "absorbed-irregular")
    assert kv.flagged  # regular point: denominator below the floor


def test_irregular_mode_on_spine():
    spec, w = load_tree_spec(FIXTURES["spine"])
    tree = build_tree(spec, 4)
    spine_ray = BoundaryRay(tree, (), rule=lambda l, p: 0)
    kv = martin_kernel(tree, w, None, (0,), spine_ray, "absorbed-irregular")
    assert not kv.flagged
    assert kv.value.mid > 0.0


def test_harmonic_from_simple(homog2, homog2_measure):
    tree, w = homog2
    mu = homog2_measure
    h = harmonic_from_simple(mu, w, const_fn(tree, 1.0))
    assert abs(h.value(()).mid - 0.6) <= 1e-10
    assert abs(h.value((0,)).mid - 0.8) <= 1e-10
    assert h.residual(tree.nodes_upto(2)) <= 1e-10
    hC = harmonic_from_simple(mu, w, indicator(tree, (0,)))
    assert abs(hC.value(()).mid - 0.2) <= 1e-10
    assert hC.residual(tree.nodes_upto(2)) <= 1e-10
    h0 = harmonic_from_simple(mu, w, const_fn(tree, 0.0, 1))
    assert all(abs(h0.value(p).mid) <= 1e-12 for p in tree.nodes_upto(2))


def test_limit_measure_of_u_column(homog2):
    tree, w = homog2
    ray = fixed_ray(tree, [0])
    h = u_column_harmonic(tree, w, ray)
    lm = harmonic_limit_measure(h, 3)
    for n in (1, 2, 3):
        on_ray = {p: v for p, v in lm.levels[n].items() if abs(v) > 1e-12}
        assert on_ray == {ray.node(n): pytest.approx(1.0)}
        assert abs(lm.variation_stats[n] - 1.0) <= 1e-12
    assert lm.consistency_residual <= 1e-10


def test_limit_measure_total_mass(homog2, homog2_measure):
    tree, w = homog2
    h = harmonic_from_simple(homog2_measure, w, const_fn(tree, 1.0))
    lm = harmonic_limit_measure(h, 3)
    for n, total in lm.total_masses.items():
        assert abs(total - h.value(()).mid / w.w(0)) <= 1e-9
    # nonnegative representation of an increasing harmonic function
    assert h.is_increasing(2)
    assert all(v >= -1e-12 for lv in lm.levels.values() for v in lv.values())


def test_variation_stat_monotone(homog2, homog2_measure):
    tree, w = homog2
    h = harmonic_from_simple(homog2_measure, w, indicator(tree, (0, 0)))
    lm = harmonic_limit_measure(h, 4)
    stats = [lm.variation_stats[n] for n in sorted(lm.variation_stats)]
    assert all(b >= a - 1e-10 for a, b in zip(stats, stats[1:]))


def test_route_equality_invariant(homog2, homog2_measure):
    tree, w = homog2
    mu = homog2_measure
    for prefix in ([0], [1], [2]):
        ray = fixed_ray(tree, prefix)
        for i in ((0,), (1,), (0, 0), (2, 1)):
            a = martin_kernel(tree, w, mu, i, ray, "absorbed").value.mid
            b = martin_kernel(tree, w, mu, i, ray, "absorbed-series").value.mid
            assert abs(a - b) <= 1e-6


def test_reflected_split_identity(homog2):
    tree, w = homog2
    xi = fixed_ray(tree, [0])
    eta = fixed_ray(tree, [2])
    for i, j in (((1,), (1, 0)), ((0,), (1,))):
        r1 = reflected_split_residual(tree, w, i, j, xi)
        r2 = reflected_split_residual(tree, w, i, j, eta)
        assert abs(r1.mid) <= max(r1.width, 1e-8)
        assert abs(r1.mid - r2.mid) <= 1e-8  # independent of the regular ray


def test_csv_emission(homog2, homog2_measure):
    tree, w = homog2
    h = harmonic_from_simple(homog2_measure, w, const_fn(tree, 1.0))
    text = harmonic_csv(h, 2)
    assert text.splitlines()[0] == "node,value"
    lm = harmonic_limit_measure(h, 2)
    assert variation_csv(lm).splitlines()[0] == "level,variation_statistic"


def test_reflected_cross_route_on_asym():
    from treepot.fixtures import FIXTURES, load_tree_spec
    from treepot.resistance import Network

    spec, w = load_tree_spec(FIXTURES["asym23"])
    tree = build_tree(spec, 4)
    mu = exit_measure(tree, w, 4, mode="reflected")
    net = Network(tree, w, "reflected", horizon=48)
    ray = fixed_ray(tree, [0])
    for i in ((0,), (1,), (0, 0), (1, 2), (0, 1, 1)):
        if not tree.exists(i):
            continue
        series = martin_kernel(tree, w, mu, i, ray, "reflected").value.mid
        meet = ray.node(ray.meet_level_with_node(i))
        ratio = (net.hit_prob(i, meet) / net.hit_prob((), meet)).mid
        assert abs(series - ratio) <= 1e-6

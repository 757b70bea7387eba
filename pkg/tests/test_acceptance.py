"""Acceptance gate: one test per solver contract, at the stated tolerance.

Every instance stream is seeded, so each run examines the same cases. The
counts and tolerances here are the package's external promises; nothing in
this module may loosen them to make a run pass.
"""

import dataclasses
import json

import numpy as np

from conftest import (
    GRAPH_FAMILY,
    U_UNIQUE_GRAPHS,
    evolution_instance,
    forward_instance,
    ordered_sibling,
    random_space,
    sibling_phi,
)
from nldiff.cli import run
from nldiff.evolution import (
    EvolutionProblem,
    dtn_apply,
    mild_solve,
    strong_residual,
)
from nldiff.flux import divergence, p_laplacian_flux, pairing_identity
from nldiff.monotone import make_identity
from nldiff.oracle import (
    DenseInstance,
    dense_gp_oracle,
    linear_evolution_oracle,
    schur_dtn_oracle,
)
from nldiff.space import DomainPartition, is_m_connected, m_boundary
from nldiff.stationary import contraction_gap, solve_approximate, solve_gp


def test_resolvent_t_contraction():
    """200 paired solves: positive-part gap of v bounded by the data gap."""
    for seed in range(200):
        problem, _, _ = forward_instance(seed)
        other = dataclasses.replace(
            problem, phi=sibling_phi(problem, seed + 10_000))
        pair1 = solve_gp(problem)
        pair2 = solve_gp(other)
        v_gap, phi_gap = contraction_gap(problem, other, pair1, pair2)
        assert v_gap <= phi_gap + 1e-8, "instance %d: %g > %g" % (
            seed, v_gap, phi_gap)


def test_comparison_principle():
    """100 ordered data pairs produce ordered states, u and v alike."""
    for seed in range(100):
        lower, _, _ = forward_instance(seed + 50_000)
        upper = ordered_sibling(lower, seed + 60_000)
        assert np.all(lower.phi <= upper.phi) and np.any(lower.phi < upper.phi)
        lo = solve_gp(lower)
        hi = solve_gp(upper)
        assert np.all(lo.v <= hi.v + 1e-8), "v order broke at %d" % seed
        assert np.all(lo.u <= hi.u + 1e-8), "u order broke at %d" % seed


def test_dense_oracle_equivalence():
    """50 small instances agree with the dense reference to 1e-6 in u.

    The reference routes jumps through nested bisection (up to 3 nodes)
    and strictly increasing graphs through multistart Newton (up to 8),
    so the sampling stays inside those validity regions.
    """
    plans = (
        (25, dict(max_nodes=3, graph_names=U_UNIQUE_GRAPHS)),
        (25, dict(min_nodes=4, max_nodes=8,
                  graph_names=("identity", "power2"))),
    )
    cases = 0
    for block, (count, plan) in enumerate(plans):
        for j in range(count):
            problem, _, _ = forward_instance(j + 1_000 * (block + 1), **plan)
            pair = solve_gp(problem)
            ref = dense_gp_oracle(DenseInstance.from_space(problem.space),
                                  problem)
            gap = float(np.max(np.abs(pair.u - ref.u)))
            assert gap <= 1e-6, "block %d case %d: gap %g" % (block, j, gap)
            cases += 1
    assert cases == 50


def test_mass_conservation():
    """Stationary solves conserve data mass; evolution ledgers close."""
    for seed in range(50):
        problem, _, _ = forward_instance(seed + 90_000, max_nodes=12)
        pair = solve_gp(problem)
        omega = problem.partition.omega
        nu = problem.space.nu[omega]
        lhs = float(nu @ pair.v[omega])
        rhs = float(nu @ problem.phi[omega])
        assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(rhs)), "seed %d" % seed

    runs = 0
    for k in range(25):
        for mode in ("dynamical", "static_boundary"):
            problem, steps = evolution_instance(
                3_000 + 2 * k + (mode == "static_boundary"), mode=mode)
            sol = mild_solve(problem, steps)
            nu = problem.space.nu
            o2 = problem.partition.omega2
            tau = problem.horizon / steps
            for i in range(steps):
                inflow = tau * float(nu @ sol.f_averages[i])
                drift = sol.mass_series[i + 1] - sol.mass_series[i] - inflow
                if mode == "static_boundary" and o2.size:
                    drift += tau * float(nu[o2] @ sol.w[i + 1])
                scale = abs(sol.mass_series[i + 1])
                assert abs(drift) <= 1e-9 * (1.0 + scale), (
                    "%s run %d step %d drifts %g" % (mode, k, i, drift))
            runs += 1
    assert runs == 50


def test_linear_evolution_first_order_exactness():
    """Quadratic-flux identity evolution converges at first order.

    Against the eigendecomposition reference, the sup-over-time L1 error
    must halve with each doubling of the step count (ratio in [0.4, 0.6]).
    """
    rng = np.random.default_rng(5)
    space = random_space(rng, 8)
    partition = DomainPartition(list(range(6)), [6, 7])
    problem = EvolutionProblem(
        space=space, partition=partition, flux=p_laplacian_flux(2.0),
        gamma=make_identity(), beta=make_identity(), mode="dynamical",
        v0=rng.uniform(-1.0, 1.0, 6), w0=rng.uniform(-1.0, 1.0, 2),
        horizon=1.0,
    )
    inst = DenseInstance.from_space(space)
    nu1 = space.nu[partition.omega1]
    nu2 = space.nu[partition.omega2]
    errors = []
    for n in (32, 64, 128, 256):
        sol = mild_solve(problem, n)
        ref = linear_evolution_oracle(inst, problem, sol.times)
        worst = max(
            float(nu1 @ np.abs(sol.v[i] - ref[i][partition.omega1]))
            + float(nu2 @ np.abs(sol.w[i] - ref[i][partition.omega2]))
            for i in range(n + 1)
        )
        errors.append(worst)
    for coarse, fine in zip(errors, errors[1:]):
        ratio = fine / coarse
        assert 0.4 <= ratio <= 0.6, "halving ratio %g (errors %s)" % (
            ratio, errors)


def test_dtn_matches_schur_oracle():
    """Quadratic-flux boundary map equals the Schur complement, 20 graphs."""
    produced = 0
    seed = 0
    while produced < 20:
        seed += 1
        rng = np.random.default_rng(40_000 + seed)
        n = int(rng.integers(4, 9))
        space = random_space(rng, n)
        size = int(rng.integers(1, n - 1))
        w_nodes = space.node_set(rng.choice(n, size=size, replace=False))
        bd = m_boundary(space, w_nodes)
        if bd.size == 0:
            continue
        fb = rng.standard_normal(bd.size)
        out = dtn_apply(space, w_nodes, p_laplacian_flux(2.0), fb)
        schur = schur_dtn_oracle(DenseInstance.from_space(space), w_nodes)
        gap = float(np.max(np.abs(out - (schur @ fb) / space.nu[bd])))
        assert gap <= 1e-8, "graph %d: gap %g" % (seed, gap)
        produced += 1


def test_infeasible_data_exits_two(tmp_path):
    """Out-of-range data and escaping mass trajectories exit with code 2."""
    stationary = {
        "kind": "stationary",
        "space": {"type": "weighted_graph", "weights": [[0, 1], [1, 0]]},
        "partition": {"omega1": [0], "omega2": [1]},
        "flux": {"type": "p_laplacian", "p": 2.0},
        "gamma": {"type": "hele_shaw"},
        "beta": {"type": "hele_shaw"},
    }
    # above the range, below it, and exactly on the edge (non-strict)
    for name, phi in (("above", [3.0, 3.0]), ("below", [-1.0, -1.0]),
                      ("edge", [1.0, 1.0])):
        cfg = tmp_path / ("%s.json" % name)
        cfg.write_text(json.dumps(dict(stationary, phi=phi)))
        assert run(str(cfg)) == 2, "stationary case %r" % name

    evolve = {
        "kind": "evolve-dynamical",
        "space": {"type": "weighted_graph", "weights": [[1.0]]},
        "partition": {"omega1": [0], "omega2": []},
        "flux": {"type": "p_laplacian", "p": 2.0},
        "gamma": {"type": "hele_shaw"},
        "horizon": 1.0,
        "n_steps": 8,
    }
    for name, extra in (("escape", {"v0": [0.5], "f": [2.0]}),
                        ("attop", {"v0": [1.0]})):
        cfg = tmp_path / ("%s.json" % name)
        cfg.write_text(json.dumps(dict(evolve, **extra)))
        assert run(str(cfg)) == 2, "evolution case %r" % name


def test_yosida_regularization_suite():
    """Per built-in graph: Lipschitz, monotone limits, tails, duality.

    Checks over 10^3 sampled points per graph: the 2-lambda Lipschitz
    bound, monotone growth of |regularization| toward the minimal
    section, the affine tail beyond a bounded domain to 1e-12 (full
    domains satisfy it vacuously), and Fenchel-Young equality on graph
    pairs.
    """
    for idx, name in enumerate(sorted(GRAPH_FAMILY)):
        graph = GRAPH_FAMILY[name]()
        rng = np.random.default_rng(8_000 + idx)
        pts = np.sort(np.concatenate([rng.uniform(-5, 5, 997),
                                      [-1.0, 0.0, 1.0]]))
        sections = np.array([graph.minimal_section(s) for s in pts])

        for lam in (0.5, 2.0, 37.0):
            vals = np.array([graph.yosida(lam, s) for s in pts])
            steps = np.abs(np.diff(vals)) - 2.0 * lam * np.diff(pts)
            assert np.max(steps) <= 1e-9, "%s not 2*lambda-Lipschitz" % name

        prev = np.zeros_like(pts)
        for lam in (0.25, 4.0, 64.0, 1024.0, 16384.0):
            vals = np.array([graph.yosida(lam, s) for s in pts])
            assert np.all(vals * np.sign(pts) >= -1e-12), name
            assert np.all(np.abs(vals) >= prev - 1e-10), (
                "%s regularization shrank along lambda" % name)
            finite = np.isfinite(sections)
            assert np.all(np.abs(vals[finite]) <= np.abs(sections[finite])
                          + 1e-10), name
            prev = np.abs(vals)

        # pointwise limit, spot-checked away from the kink neighborhoods
        knots = np.asarray(graph.breakpoints, dtype=float)
        big = np.array([graph.yosida(1e8, s) for s in pts])
        for s, m, v in zip(pts, sections, big):
            if not np.isfinite(m):
                continue
            dist = float(np.min(np.abs(knots - s))) if knots.size else np.inf
            if dist >= 1e-2 or dist == 0.0:
                assert abs(v - m) <= 1e-3 * (1.0 + abs(m)), (
                    "%s limit misses section at %g" % (name, s))

        dlo, dhi = graph.domain
        if np.isfinite(dhi):
            m_star = graph.minimal_section(dhi)
            for lam in (0.5, 2.0, 37.0):
                for bump in (1e-6, 0.37, 2.0, 11.0):
                    r = dhi + m_star / lam + bump
                    expected = lam * (r - dhi)
                    gap = abs(graph.yosida(lam, r) - expected)
                    assert gap <= 1e-12 * max(1.0, abs(expected)), (
                        "%s tail gap %g" % (name, gap))

        lo = max(dlo, -5.0)
        hi = min(dhi, 5.0)
        rs = np.clip(pts, lo, hi)
        draws = rng.random(rs.size)
        for r, t in zip(rs, draws):
            vlo, vhi = graph.interval(r)
            vlo = max(vlo, -50.0)
            vhi = min(vhi, 50.0)
            v = vlo + t * (vhi - vlo)
            lhs = graph.primitive(r) + graph.conjugate(v)
            assert abs(lhs - r * v) <= 1e-10 * (1.0 + abs(r * v)), (
                "%s duality gap at r=%g" % (name, r))


def test_summation_by_parts():
    """100 random pairings close to 1e-10 relative, on both pair sets."""
    rng = np.random.default_rng(99)
    for case in range(100):
        n = int(rng.integers(2, 13))
        space = random_space(rng, n)
        nodes = rng.permutation(n)
        omega = np.sort(nodes[: int(rng.integers(1, n + 1))])
        u = rng.standard_normal(n)
        w = rng.standard_normal(n)
        flux = p_laplacian_flux(float(rng.choice((1.5, 2.0, 3.0))))
        omega2 = omega[rng.random(omega.size) < 0.4]
        for iset in ("Q1", ("Q2", omega2)):
            lhs, rhs = pairing_identity(space, flux, u, w, omega, iset)
            gap = abs(lhs - rhs)
            assert gap <= 1e-10 * max(1.0, abs(lhs), abs(rhs)), (
                "case %d on %r: gap %g" % (case, iset, gap))
        # w constant collapses the identity to divergence mass-neutrality
        lhs, rhs = pairing_identity(space, flux, u, np.ones(n), omega, "Q1")
        div = divergence(space, flux, u, Omega=omega)
        scale = 1.0 + float(np.abs(div).max())
        assert rhs == 0.0
        assert abs(lhs) <= 1e-10 * scale
        assert abs(float(space.nu[omega] @ div)) <= 1e-10 * scale


def test_bounded_states_stay_bounded():
    """Saturating graphs keep states in range; melting dissipates energy."""
    for k in range(20):
        problem, steps = evolution_instance(
            70_000 + k, graph_names=("hele_shaw",))
        sol = mild_solve(problem, steps)
        assert np.all(sol.v >= -1e-8) and np.all(sol.v <= 1.0 + 1e-8), (
            "run %d left [0,1]" % k)
        if sol.w.size:
            finite = np.isfinite(sol.w)
            assert np.all(sol.w[finite] >= -1e-8)
            assert np.all(sol.w[finite] <= 1.0 + 1e-8)

    for k in range(20):
        problem, steps = evolution_instance(
            80_000 + k, graph_names=("stefan",), allow_forcing=False)
        sol = mild_solve(problem, steps)
        assert np.all(np.isfinite(sol.v))
        report = strong_residual(problem, sol)
        assert report.passed, "run %d ledger failed" % k
        o1 = problem.partition.omega1
        o2 = problem.partition.omega2
        nu = problem.space.nu
        series = []
        for i in range(steps + 1):
            total = sum(nu[x] * problem.gamma.conjugate(sol.v[i, j])
                        for j, x in enumerate(o1))
            total += sum(nu[x] * problem.beta.conjugate(sol.w[i, j])
                         for j, x in enumerate(o2))
            series.append(total)
        for earlier, later in zip(series, series[1:]):
            assert later <= earlier + 1e-8, (
                "run %d conjugate energy rose: %s" % (k, series))


def test_split_index_monotonicity():
    """Regularized solutions order along both schedule indices."""
    levels = (1, 4, 16, 64)
    for seed in (11, 22, 33, 44, 55):
        problem, _, _ = forward_instance(seed, max_nodes=5, min_nodes=5)
        omega = problem.partition.omega
        table = {
            (ni, ki): solve_approximate(problem, ni, ki)[omega]
            for ni in levels for ki in levels
        }
        for ki in levels:
            for a, b in zip(levels, levels[1:]):
                assert np.all(table[(a, ki)] <= table[(b, ki)] + 1e-9), (
                    "seed %d: not nondecreasing in the minus index" % seed)
        for ni in levels:
            for a, b in zip(levels, levels[1:]):
                assert np.all(table[(ni, a)] >= table[(ni, b)] - 1e-9), (
                    "seed %d: not nonincreasing in the plus index" % seed)


def test_connectivity_matches_exhaustive_bipartitions():
    """Union-find connectivity equals the zero-interaction split test."""
    checked = 0
    for block in range(5):
        rng = np.random.default_rng(12_000 + block)
        space = random_space(rng, 10, density=0.35)
        weighted = space.nu[:, None] * space.kernel
        for _ in range(40):
            size = int(rng.integers(1, 11))
            subset = np.sort(rng.choice(10, size=size, replace=False))
            sub = weighted[np.ix_(subset, subset)]
            connected = True
            for mask in range((1 << (size - 1)) - 1):
                left = [0] + [i for i in range(1, size)
                              if (mask >> (i - 1)) & 1]
                right = [i for i in range(1, size) if i not in left]
                if sub[np.ix_(left, right)].sum() == 0.0:
                    connected = False
                    break
            assert is_m_connected(space, subset) == connected, (
                "subset %s" % subset)
            checked += 1
    assert checked == 200

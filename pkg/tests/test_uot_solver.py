import math

import numpy as np
import pytest

from groundot import (
    NumericalError,
    UotParams,
    brute_force_solve,
    loss_gradient_wrt_density,
    solve_uot,
    uot_objective,
)


def random_instance(seed, n_max=16, m_max=4, a_scale=1.5):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    C = rng.uniform(1.0, 5.0, size=(n, m))
    a = rng.uniform(0.0, a_scale, size=n)
    return a, np.ones(m), C


class TestObjective:
    def test_zero_plan_zero_density(self):
        C = np.ones((3, 2))
        params = UotParams(epsilon=0.1, tau=1.5)
        val = uot_objective(np.zeros((3, 2)), np.zeros(3), np.ones(2), C, params)
        assert val == pytest.approx(1.5 * 2)

    def test_zero_plan_d1_only(self):
        C = np.ones((3, 2))
        a = np.array([0.3, 0.4, 0.5])
        params = UotParams(epsilon=0.1, tau=2.0)
        val = uot_objective(np.zeros((3, 2)), a, np.zeros(2), C, params)
        assert val == pytest.approx(2.0 * float(a @ a))

    def test_single_unit_entry(self):
        c, eps = 3.7, 0.25
        params = UotParams(epsilon=eps, tau=1.0)
        val = uot_objective(np.array([[1.0]]), np.ones(1), np.ones(1),
                            np.array([[c]]), params)
        assert val == pytest.approx(c - eps)

    def test_shape_mismatch(self):
        params = UotParams()
        with pytest.raises(ValueError):
            uot_objective(np.zeros((2, 2)), np.zeros(3), np.ones(2), np.ones((2, 2)), params)


class TestClosedFormTauZero:
    def test_plan_and_loss(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            n, m = int(rng.integers(2, 12)), int(rng.integers(1, 4))
            C = rng.uniform(0.5, 6.0, size=(n, m))
            a = rng.uniform(0, 1, size=n)
            params = UotParams(epsilon=0.07, tau=0.0)
            res = solve_uot(a, np.ones(m), C, params)
            K = np.exp(-C / 0.07)
            assert np.max(np.abs(res.plan.values - K)) < 1e-6
            assert res.loss == pytest.approx(-0.07 * K.sum(), abs=1e-6)
            assert np.array_equal(res.grad_density, np.zeros(n))


def grid_search_2x1(a, C, eps, tau):
    """Independent oracle for the 2-cell, 1-point instance: coarse grid over
    P in [0, 1.5]^2 at step 1e-3, then alternating 1D golden-section descent."""
    def obj(p1, p2):
        ent = sum(p * (math.log(p) - 1.0) if p > 0 else 0.0 for p in (p1, p2))
        return (C[0] * p1 + C[1] * p2 + eps * ent
                + tau * ((p1 - a[0]) ** 2 + (p2 - a[1]) ** 2)
                + tau * abs(p1 + p2 - 1.0))

    grid = np.arange(0.0, 1.5 + 1e-9, 1e-3)
    best = None
    for p1 in grid:
        col = [obj(p1, p2) for p2 in grid]
        j = int(np.argmin(col))
        if best is None or col[j] < best[0]:
            best = (col[j], p1, grid[j])
    _, p1, p2 = best

    def golden(f, lo, hi, iters=120):
        phi = (math.sqrt(5) - 1) / 2
        c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
        for _ in range(iters):
            if f(c) < f(d):
                hi, d = d, c
                c = hi - phi * (hi - lo)
            else:
                lo, c = c, d
                d = lo + phi * (hi - lo)
        return 0.5 * (lo + hi)

    for _ in range(60):
        p1 = golden(lambda p: obj(p, p2), max(p1 - 2e-3, 1e-12), p1 + 2e-3)
        p2 = golden(lambda p: obj(p1, p), max(p2 - 2e-3, 1e-12), p2 + 2e-3)
    return obj(p1, p2), (p1, p2)


class TestAgainstIndependentOracles:
    def test_two_cell_instance_grid_search(self):
        a = np.array([0.5, 0.5])
        C = np.array([[1.0], [2.0]])
        eps, tau = 0.1, 1.0
        params = UotParams(epsilon=eps, tau=tau)
        oracle_loss, oracle_p = grid_search_2x1(a, C[:, 0], eps, tau)
        res = solve_uot(a, np.ones(1), C, params)
        assert res.loss == pytest.approx(oracle_loss, abs=1e-5)
        assert res.plan.values[:, 0] == pytest.approx(oracle_p, abs=1e-3)
        bf = brute_force_solve(a, np.ones(1), C, params)
        assert bf.loss == pytest.approx(oracle_loss, abs=1e-5)

    def test_one_by_one_instance_grid_newton(self):
        # minimize P + 0.1*P*(log P - 1) + (P - 1)^2 + |P - 1| over P > 0
        def obj(p):
            return p + 0.1 * p * (math.log(p) - 1.0) + (p - 1.0) ** 2 + abs(p - 1.0)

        grid = np.arange(1e-4, 3.0, 1e-4)
        vals = [obj(p) for p in grid]
        p0 = grid[int(np.argmin(vals))]
        # Newton refinement on each smooth side, keeping the kink candidate
        best_p, best_v = 1.0, obj(1.0)
        for side in (-1.0, 1.0):
            p = max(p0 + side * 1e-5, 1e-8)
            for _ in range(60):
                dp = 1.0 + 0.1 * math.log(p) + 2.0 * (p - 1.0) + side
                d2p = 0.1 / p + 2.0
                p = max(p - dp / d2p, 1e-12)
            if (p - 1.0) * side > 0 and obj(p) < best_v:
                best_p, best_v = p, obj(p)
        params = UotParams(epsilon=0.1, tau=1.0)
        res = solve_uot(np.ones(1), np.ones(1), np.array([[1.0]]), params)
        assert best_v == pytest.approx(0.9, abs=1e-9)  # analytic optimum at P = 1
        assert res.loss == pytest.approx(best_v, abs=1e-6)
        bf = brute_force_solve(np.ones(1), np.ones(1), np.array([[1.0]]), params)
        assert bf.loss == pytest.approx(best_v, abs=1e-6)

    def test_zero_density_against_oracle(self):
        rng = np.random.default_rng(42)
        C = rng.uniform(1.0, 5.0, size=(4, 1))
        params = UotParams(epsilon=0.05, tau=1.0)
        res = solve_uot(np.zeros(4), np.ones(1), C, params)
        bf = brute_force_solve(np.zeros(4), np.ones(1), C, params)
        assert res.loss == pytest.approx(bf.loss, rel=1e-4)

    def test_oracle_matches_tau_zero_closed_form(self):
        rng = np.random.default_rng(9)
        C = rng.uniform(1.0, 4.0, size=(5, 2))
        a = rng.uniform(0, 1, size=5)
        params = UotParams(epsilon=0.1, tau=0.0)
        bf = brute_force_solve(a, np.ones(2), C, params)
        assert np.max(np.abs(bf.plan.values - np.exp(-C / 0.1))) < 1e-6

    def test_oracle_never_worse_than_solver(self):
        for seed in range(20):
            a, b, C = random_instance(seed, n_max=8, m_max=3)
            params = UotParams(epsilon=[0.05, 0.1][seed % 2], tau=[0.5, 1.0][seed % 2])
            res = solve_uot(a, b, C, params)
            bf = brute_force_solve(a, b, C, params, seed=seed)
            assert bf.loss <= res.loss + 1e-5

    def test_oracle_rejects_large_instances(self):
        with pytest.raises(ValueError):
            brute_force_solve(np.ones(9), np.ones(8), np.ones((9, 8)), UotParams())


class TestGradient:
    def test_tau_zero_gradient_is_zero(self):
        a, b, C = random_instance(3)
        res = solve_uot(a, b, C, UotParams(epsilon=0.1, tau=0.0))
        assert np.array_equal(loss_gradient_wrt_density(res, a, UotParams(epsilon=0.1, tau=0.0)),
                              np.zeros_like(a))

    def test_matched_marginals_give_zero(self):
        a, b, C = random_instance(5)
        params = UotParams(epsilon=0.1, tau=1.0)
        res = solve_uot(a, b, C, params)
        g = loss_gradient_wrt_density(res, res.row_marginal, params)
        assert np.max(np.abs(g)) < 1e-15

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(77)
        C = rng.uniform(1.0, 5.0, size=(8, 2))
        a = rng.uniform(0.1, 1.2, size=8)
        b = np.ones(2)
        params = UotParams(epsilon=0.1, tau=1.0, tolerance=1e-11)
        res = solve_uot(a, b, C, params)
        h = 1e-5
        for i in range(8):
            ap, am = a.copy(), a.copy()
            ap[i] += h
            am[i] -= h
            fd = (solve_uot(ap, b, C, params).loss - solve_uot(am, b, C, params).loss) / (2 * h)
            assert abs(fd - res.grad_density[i]) / max(abs(fd), 1e-12) < 1e-3

    def test_dimension_mismatch(self):
        a, b, C = random_instance(6)
        res = solve_uot(a, b, C, UotParams())
        with pytest.raises(ValueError):
            loss_gradient_wrt_density(res, np.ones(len(a) + 1), UotParams())


class TestResultInvariants:
    def test_marginals_and_gradient_consistency(self):
        for seed in (1, 2, 3):
            a, b, C = random_instance(seed)
            params = UotParams(epsilon=0.08, tau=1.0)
            res = solve_uot(a, b, C, params)
            P = res.plan.values
            assert np.max(np.abs(res.row_marginal - P.sum(axis=1))) < 1e-9
            assert np.max(np.abs(res.col_marginal - P.sum(axis=0))) < 1e-9
            assert np.max(np.abs(res.grad_density - 2.0 * params.tau * (a - res.row_marginal))) < 1e-9
            assert np.all(P >= 0)
            assert res.loss == pytest.approx(uot_objective(P, a, b, C, params), abs=1e-12)

    def test_monotone_descent(self):
        for seed in range(5):
            rng = np.random.default_rng(300 + seed)
            n, m = int(rng.integers(8, 40)), int(rng.integers(1, 6))
            C = rng.uniform(1, 8, size=(n, m))
            a = rng.uniform(0, 1.5, size=n)
            params = UotParams(epsilon=[0.05, 0.1][seed % 2], tau=[0.5, 1.0, 2.0][seed % 3])
            res = solve_uot(a, np.ones(m), C, params, objective_every=10)
            trace = np.array(res.objective_trace)
            if trace.size > 1:
                assert np.max(np.diff(trace)) <= 1e-7

    def test_zeroed_masses(self):
        a, b, C = random_instance(8)
        params = UotParams(epsilon=0.05, tau=1.0)
        res = solve_uot(0.0 * a, 0.0 * b, C, params)
        assert res.loss == pytest.approx(uot_objective(res.plan, 0 * a, 0 * b, C, params), abs=1e-12)
        assert res.loss <= params.tau * len(b) + 1e-6

    def test_stability_with_huge_costs(self):
        rng = np.random.default_rng(13)
        C = np.exp(np.minimum(rng.uniform(0.0, 60.0, size=(40, 5)), 60.0))
        assert C.max() > 1e20
        a = rng.uniform(0, 1, size=40)
        res = solve_uot(a, np.ones(5), C, UotParams(epsilon=0.05, tau=1.0, stabilize=True))
        assert np.isfinite(res.loss)
        assert np.all(np.isfinite(res.plan.values))

    def test_determinism(self):
        a, b, C = random_instance(21)
        params = UotParams(epsilon=0.05, tau=1.0)
        r1 = solve_uot(a, b, C, params)
        r2 = solve_uot(a, b, C, params)
        assert r1.loss == r2.loss
        assert np.array_equal(r1.plan.values, r2.plan.values)
        assert r1.iterations == r2.iterations

    def test_warm_start_consistency(self):
        a, b, C = random_instance(33)
        params = UotParams(epsilon=0.08, tau=1.0)
        cold = solve_uot(a, b, C, params)
        warm = solve_uot(a, b, C, params, init_duals=cold.duals)
        assert warm.iterations <= 2
        assert warm.loss == pytest.approx(cold.loss, rel=1e-9)


class TestValidation:
    def test_negative_density(self):
        with pytest.raises(ValueError):
            solve_uot(np.array([-0.1, 1.0]), np.ones(1), np.ones((2, 1)), UotParams())

    def test_non_finite_cost(self):
        C = np.array([[1.0], [np.inf]])
        with pytest.raises(ValueError):
            solve_uot(np.ones(2), np.ones(1), C, UotParams())

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_uot(np.ones(3), np.ones(2), np.ones((2, 2)), UotParams())

    def test_bad_params(self):
        with pytest.raises(ValueError):
            UotParams(epsilon=0.0)
        with pytest.raises(ValueError):
            UotParams(tau=-1.0)
        with pytest.raises(ValueError):
            UotParams(max_iters=0)
        with pytest.raises(ValueError):
            UotParams(tolerance=0.0)

    def test_unconverged_is_flagged_not_raised(self):
        a, b, C = random_instance(2)
        res = solve_uot(a, b, C, UotParams(epsilon=0.05, tau=1.0, max_iters=2))
        assert res.iterations == 2
        assert not res.converged

    def test_bad_warm_start(self):
        a, b, C = random_instance(4)
        with pytest.raises(ValueError):
            solve_uot(a, b, C, UotParams(), init_duals=(np.zeros(1), np.zeros(1)))

    def test_plan_entries_validated(self):
        from groundot import TransportPlan
        with pytest.raises(ValueError):
            TransportPlan(values=np.array([[1.0, -0.5]]))
        with pytest.raises(ValueError):
            TransportPlan(values=np.array([[np.inf]]))

"""Double-loop solver: schedules, determinism, accounting, convergence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zobilevel import (FeasibleSet, InvalidParameterError, NoiseModel,
                       Schedule, SmoothingParams, make_schedule, run_zdsba,
                       run_zdsba_ensemble, schedule_for_problem)
from zobilevel.verify import rate_fixture

SMOOTH = SmoothingParams(eta1=0.01, mu1=0.01, eta2=0.001, mu2=0.001)


def small_schedule(regime="strongly-convex", N=10, **kw):
    base = dict(regime=regime, N=N, n=2, m=2, gamma=0.05, lambda_g=1.0,
                L1_G=2.0, smoothing=SMOOTH)
    if regime == "strongly-convex":
        base["lambda_psi"] = 1.0
    else:
        base["alpha_const"] = 0.01
    base.update(kw)
    return Schedule(**base)


class TestSchedule:
    def test_unknown_regime_rejected(self):
        with pytest.raises(InvalidParameterError):
            small_schedule(regime="concave")

    def test_gamma_cap_enforced(self):
        with pytest.raises(InvalidParameterError):
            small_schedule(gamma=0.7)  # cap is 2/(1+2)

    def test_strongly_convex_needs_modulus(self):
        with pytest.raises(InvalidParameterError):
            small_schedule(lambda_psi=None)

    @given(st.integers(min_value=0, max_value=5000))
    @settings(max_examples=100, deadline=None)
    def test_per_step_quantities_well_formed(self, k):
        s = small_schedule(N=5001)
        assert s.eps(k) > s.eps(k + 1) > 0
        assert s.b(k) >= 1
        assert s.t(k) >= 0
        assert s.alpha(k) > 0
        # no inner refinement is requested while the tolerance is still slack
        if s.eps(k) >= 1.0:
            assert s.t(k) == 0

    @given(st.floats(min_value=1e-4, max_value=10.0))
    @settings(max_examples=100, deadline=None)
    def test_inner_step_size_caps(self, eps):
        s = small_schedule()
        beta = s.beta(eps)
        assert 0 < beta <= min(eps * s.lambda_g, 1.0 / s.lambda_g) + 1e-15

    def test_strongly_convex_alpha_decays_harmonically(self):
        s = small_schedule()
        assert s.alpha(0) == pytest.approx(4.0 / 3.0)
        assert s.alpha(7) == pytest.approx(0.4)

    def test_make_schedule_requires_curvature_for_flat_regimes(self):
        problem, _, _ = rate_fixture("convex")
        with pytest.raises(InvalidParameterError):
            make_schedule("convex", 10, problem.n, problem.m,
                          problem.constants(), L1_psi=None)

    def test_nonconvex_outer_objective_rejected_as_strongly_convex(self):
        problem, _, _ = rate_fixture("nonconvex")
        H = problem.psi_hessian  # positive definite through the coupling
        assert np.linalg.eigvalsh(H)[0] > 0
        sc = schedule_for_problem(problem, "strongly-convex", 10)
        assert sc.lambda_psi is not None


@pytest.fixture(scope="module")
def setup():
    problem, x0, y0 = rate_fixture("strongly-convex", n=1, m=1)
    schedule = schedule_for_problem(problem, "strongly-convex", 40, gamma=0.02)
    return problem, schedule, x0, y0


class TestRuns:
    def test_seeded_run_is_reproducible(self, setup):
        problem, schedule, x0, y0 = setup
        a = run_zdsba(problem, schedule, x0, y0, seed=11)
        b = run_zdsba(problem, schedule, x0, y0, seed=11)
        assert np.array_equal(a.xs, b.xs)
        assert np.array_equal(a.x_hat, b.x_hat)
        c = run_zdsba(problem, schedule, x0, y0, seed=12)
        assert not np.array_equal(a.xs, c.xs)

    def test_query_accounting(self, setup):
        problem, schedule, x0, y0 = setup
        rec = run_zdsba(problem, schedule, x0, y0, seed=0)
        expect_G = sum(2 * schedule.t(k) + 3 * schedule.b(k) + 3
                       for k in range(schedule.N))
        expect_F = sum(2 * schedule.b(k) + 2 for k in range(schedule.N))
        assert rec.draws_G == expect_G
        assert rec.draws_F == expect_F

    def test_trajectory_shapes(self, setup):
        problem, schedule, x0, y0 = setup
        rng = np.random.default_rng(0)
        rec = run_zdsba_ensemble(problem, schedule,
                                 np.tile(x0, (5, 1)), np.tile(y0, (5, 1)), rng)
        assert rec.xs.shape == (schedule.N + 1, 5, problem.n)
        assert rec.x_hat.shape == (5, problem.n)
        assert len(rec.eps) == len(rec.b) == len(rec.t) == schedule.N

    def test_error_decreases(self, setup):
        problem, schedule, x0, y0 = setup
        rng = np.random.default_rng(1)
        rec = run_zdsba_ensemble(problem, schedule,
                                 np.tile(x0, (20, 1)), np.tile(y0, (20, 1)), rng)
        start = np.mean(np.sum((rec.xs[0] - problem.x_star) ** 2, axis=1))
        final = np.mean(np.sum((rec.xs[-1] - problem.x_star) ** 2, axis=1))
        assert final < 0.25 * start

    def test_feasible_iterates_under_ball_constraint(self):
        problem, x0, y0 = rate_fixture("convex", n=1, m=1)
        schedule = schedule_for_problem(problem, "convex", 30, gamma=0.02)
        rec = run_zdsba(problem, schedule, x0, y0, seed=3)
        norms = np.abs(rec.xs)
        assert np.all(norms <= 1.0 + 1e-12)
        assert np.abs(rec.x_hat) <= 1.0 + 1e-12

    def test_nonconvex_reports_sampled_index(self):
        problem, x0, y0 = rate_fixture("nonconvex", n=1, m=1)
        schedule = schedule_for_problem(problem, "nonconvex", 25, gamma=0.02)
        rec = run_zdsba(problem, schedule, x0, y0, seed=4)
        assert rec.R is not None and 0 <= rec.R < 25
        assert np.array_equal(rec.x_hat, rec.xs[rec.R])

    def test_convex_output_is_step_weighted_average(self):
        problem, x0, y0 = rate_fixture("convex", n=1, m=1)
        schedule = schedule_for_problem(problem, "convex", 20, gamma=0.02)
        rec = run_zdsba(problem, schedule, x0, y0, seed=5)
        w = 1.0 / rec.alphas
        expect = (w[:, None] * rec.xs[:-1]).sum(axis=0) / w.sum()
        assert np.allclose(rec.x_hat, expect)

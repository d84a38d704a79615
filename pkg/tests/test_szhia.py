"""Hessian-inverse-product SGD: contraction, accounting, guards."""

import numpy as np
import pytest

from zobilevel import (BlockPoint, DivergenceError, InvalidParameterError,
                       NoiseModel, QuadraticBilevel, SzhiaConfig, max_step_size,
                       mean_square_stable_gamma, run_szhia, run_szhia_ensemble)


def identity_fixture(noise=None):
    """Lower-level Hessian I_3, so z_bar = grad_y f is available in closed form."""
    m, n = 3, 2
    B = np.array([[0.4, -0.2], [0.1, 0.3], [-0.5, 0.2]])
    return QuadraticBilevel(A=np.eye(m), B=B, b=np.array([0.2, -0.1, 0.3]),
                            P=np.eye(n), Q=np.zeros((m, m)), r=np.zeros(n),
                            s=np.array([0.1, -0.2, 0.05]), c=0.0,
                            noise=noise or NoiseModel())


ANCHOR = BlockPoint(np.array([0.3, -0.5]), np.array([0.2, 0.1, -0.4]))


class TestConfig:
    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(InvalidParameterError):
            SzhiaConfig(gamma=0.0, T=10, mu1=0.01, mu2=0.01)

    def test_rejects_bad_horizon(self):
        with pytest.raises(InvalidParameterError):
            SzhiaConfig(gamma=0.1, T=0, mu1=0.01, mu2=0.01)

    def test_rejects_zero_radii(self):
        with pytest.raises(InvalidParameterError):
            SzhiaConfig(gamma=0.1, T=10, mu1=0.0, mu2=0.01)

    def test_validate_against_constants(self):
        qb = identity_fixture()
        consts = qb.constants()
        cap = max_step_size(consts)
        SzhiaConfig(gamma=0.9 * cap, T=10, mu1=0.01, mu2=0.01).validate_against(consts)
        with pytest.raises(InvalidParameterError):
            SzhiaConfig(gamma=1.1 * cap, T=10, mu1=0.01, mu2=0.01).validate_against(consts)


class TestDynamics:
    def test_mean_converges_to_target(self):
        # ensemble mean approaches z_bar = A^{-1} grad_y f = s on this fixture
        qb = identity_fixture()
        cfg = SzhiaConfig(gamma=0.02, T=500, mu1=0.01, mu2=0.01)
        rng = np.random.default_rng(3)
        res = run_szhia_ensemble(qb.oracle_g, qb.oracle_f, ANCHOR, cfg, rng,
                                 runs=3000)
        z_bar = qb.s
        assert np.linalg.norm(res.z.mean(axis=0) - z_bar) < 2e-2

    def test_bias_contracts_at_the_predicted_rate(self):
        # after T steps the mean offset shrinks by exactly (1 - gamma*lambda)^T
        qb = identity_fixture()
        z0 = qb.s + np.array([2.0, -1.0, 1.5])
        T = 120
        gamma = 0.02
        cfg = SzhiaConfig(gamma=gamma, T=T, mu1=0.01, mu2=0.01, z0=z0)
        rng = np.random.default_rng(5)
        res = run_szhia_ensemble(qb.oracle_g, qb.oracle_f, ANCHOR, cfg, rng,
                                 runs=6000)
        bias = np.linalg.norm(res.z.mean(axis=0) - qb.s)
        predicted = (1 - gamma) ** T * np.linalg.norm(z0 - qb.s)
        assert bias == pytest.approx(predicted, rel=0.25)

    def test_divergence_guard_raises(self):
        qb = identity_fixture()
        cfg = SzhiaConfig(gamma=0.9, T=4000, mu1=0.01, mu2=0.01,
                          guard_threshold=1e4)
        with pytest.raises(DivergenceError):
            run_szhia_ensemble(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                               np.random.default_rng(0), runs=64)

    def test_stable_gamma_is_below_the_contraction_cap(self):
        qb = identity_fixture()
        consts = qb.constants()
        g = mean_square_stable_gamma(qb.oracle_g, ANCHOR, 0.01, consts,
                                     rng=np.random.default_rng(0), samples=20_000)
        assert 0 < g < max_step_size(consts)
        # and it actually keeps the second moment bounded over a long run
        cfg = SzhiaConfig(gamma=g, T=3000, mu1=0.01, mu2=0.01)
        res = run_szhia_ensemble(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                                 np.random.default_rng(1), runs=200)
        assert np.mean(np.sum(res.z ** 2, axis=1)) < 10.0


class TestAccounting:
    def test_query_counts(self):
        qb = identity_fixture()
        cfg = SzhiaConfig(gamma=0.02, T=25, mu1=0.01, mu2=0.01)
        res = run_szhia_ensemble(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                                 np.random.default_rng(0), runs=4)
        # three lower-level and two upper-level value queries per step per run
        assert res.draws_G == 3 * 25 * 4
        assert res.draws_F == 2 * 25 * 4

    def test_trajectory_recording(self):
        qb = identity_fixture()
        cfg = SzhiaConfig(gamma=0.02, T=100, mu1=0.01, mu2=0.01, record_every=20)
        res = run_szhia(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                        np.random.default_rng(0))
        assert res.trajectory is not None
        assert res.trajectory.shape[1] == qb.m
        assert res.trajectory_steps[0] == 0
        assert res.trajectory_steps[-1] == 100

    def test_single_run_shape(self):
        qb = identity_fixture()
        cfg = SzhiaConfig(gamma=0.02, T=10, mu1=0.01, mu2=0.01)
        res = run_szhia(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                        np.random.default_rng(0))
        assert res.z.shape == (qb.m,)

    def test_seeded_runs_are_deterministic(self):
        qb = identity_fixture(noise=NoiseModel("linear-term", 0.2))
        cfg = SzhiaConfig(gamma=0.02, T=50, mu1=0.01, mu2=0.01)
        a = run_szhia(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                      np.random.default_rng(np.random.SeedSequence(42)))
        b = run_szhia(qb.oracle_g, qb.oracle_f, ANCHOR, cfg,
                      np.random.default_rng(np.random.SeedSequence(42)))
        assert np.array_equal(a.z, b.z)

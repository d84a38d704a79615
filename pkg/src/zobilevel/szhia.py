"""Stochastic zeroth-order Hessian-inverse approximation.

At a frozen anchor point (x, y) the vector

    z_bar = [hess_yy g_smooth]^{-1} grad_y f_smooth

is the unique minimizer of the strongly convex quadratic
J(z) = 1/2 z' H z - z' d with H the smoothed lower-level yy Hessian and d the
smoothed upper-level y gradient.  This module runs plain SGD on J using
value-only stochastic estimates of H z and d: each step consumes one
three-point lower-level stencil (H z sample) and one two-point upper-level
stencil (d sample).

After T steps the squared bias contracts like (1 - gamma*lambda_g)^T while
the variance settles at a floor proportional to gamma, so averaging many
independent runs recovers z_bar itself.  The core update is vectorized over
rows: Z is (S, m), one independent run per row, which makes ensembles of
thousands of runs cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidParameterError
from .problems import BlockPoint, ProblemConstants, ValueOracle
from .smoothing import grad_y_samples, hess_yy_action_samples


def max_step_size(constants: ProblemConstants) -> float:
    """Largest admissible SGD step 2 / (lambda_g + L1_G)."""
    return 2.0 / (constants.lambda_g + constants.L1_G)


def mean_square_stable_gamma(oracle_g: ValueOracle, point: BlockPoint,
                             mu2: float, constants: ProblemConstants,
                             rng: np.random.Generator | None = None,
                             samples: int = 50_000) -> float:
    """Step size that keeps E||z||^2 bounded under the one-sample updates.

    The contraction cap 2/(lambda_g + L1_G) only controls the mean of the
    iterates; the single-sample Hessian action H_hat has heavy (quartic
    Gaussian) tails, and the second moment of z contracts only when
    gamma < 2*lambda_g / lambda_max(E[H_hat' H_hat]).  lambda_max is bounded
    by the trace, which this estimates by Monte Carlo on basis vectors, so the
    returned step carries at least a factor-two stability margin.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    m = oracle_g.m
    X = np.broadcast_to(point.x, (samples, point.x.size))
    Y = np.broadcast_to(point.y, (samples, m))
    trace = 0.0
    for j in range(m):
        Z = np.zeros((samples, m))
        Z[:, j] = 1.0
        h = hess_yy_action_samples(oracle_g, X, Y, 0.0, mu2, Z, rng)
        trace += float(np.mean(np.sum(h * h, axis=1)))
    return min(0.5 * max_step_size(constants), constants.lambda_g / trace)


@dataclass(frozen=True)
class SzhiaConfig:
    """Settings for the Hessian-inverse SGD.

    eta1 = 0 keeps the anchor's x block unperturbed in the upper-level
    gradient stencil, which is the regime the contraction guarantee covers;
    eta1 > 0 is accepted but runs outside that guarantee.
    """

    gamma: float
    T: int
    mu1: float
    mu2: float
    eta1: float = 0.0
    eta2: float = 0.0
    z0: np.ndarray | None = None
    guard_threshold: float = 1e6
    record_every: int = 0

    def __post_init__(self):
        if not (self.gamma > 0) or not np.isfinite(self.gamma):
            raise InvalidParameterError("gamma must be positive")
        if self.T < 1:
            raise InvalidParameterError("T must be >= 1")
        for name in ("mu1", "mu2"):
            if not (getattr(self, name) > 0):
                raise InvalidParameterError(f"{name} must be positive")
        if self.eta1 < 0 or self.eta2 < 0:
            raise InvalidParameterError("eta1 and eta2 must be >= 0")
        if self.record_every < 0:
            raise InvalidParameterError("record_every must be >= 0")

    def validate_against(self, constants: ProblemConstants) -> None:
        cap = max_step_size(constants)
        if self.gamma >= cap:
            raise InvalidParameterError(
                f"gamma={self.gamma!r} must be below 2/(lambda_g + L1_G) = {cap!r}")


@dataclass
class SzhiaResult:
    z: np.ndarray
    draws_G: int
    draws_F: int
    T: int
    trajectory: np.ndarray | None = None
    trajectory_steps: np.ndarray | None = None


def grad_J_samples(oracle_g: ValueOracle, oracle_f: ValueOracle,
                   X: np.ndarray, Y: np.ndarray, Z: np.ndarray,
                   config: SzhiaConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-row stochastic gradient of J at Z; (S, m).

    H z comes from the symmetric lower-level stencil at radius mu2; the
    upper-level y gradient uses radii (eta1, mu1).  Costs 3 lower-level and
    2 upper-level value queries per row.
    """
    h_action = hess_yy_action_samples(oracle_g, X, Y, config.eta2, config.mu2, Z, rng)
    gy_f = grad_y_samples(oracle_f, X, Y, config.eta1, config.mu1, rng)
    return h_action - gy_f


def run_szhia_ensemble(oracle_g: ValueOracle, oracle_f: ValueOracle,
                       point: BlockPoint, config: SzhiaConfig,
                       rng: np.random.Generator, runs: int = 1) -> SzhiaResult:
    """Run `runs` independent SGD chains in lockstep from the same anchor."""
    if runs < 1:
        raise InvalidParameterError("runs must be >= 1")
    m = oracle_g.m
    if config.z0 is None:
        Z = np.zeros((runs, m))
    else:
        z0 = np.asarray(config.z0, dtype=float)
        if z0.shape != (m,):
            raise InvalidParameterError(f"z0 must have shape ({m},)")
        Z = np.tile(z0, (runs, 1))
    X = np.broadcast_to(point.x, (runs, point.n))
    Y = np.broadcast_to(point.y, (runs, point.m))

    snaps, snap_steps = [], []
    if config.record_every:
        snaps.append(Z.copy())
        snap_steps.append(0)

    for tau in range(1, config.T + 1):
        Z = Z - config.gamma * grad_J_samples(oracle_g, oracle_f, X, Y, Z, config, rng)
        if not np.all(np.isfinite(Z)) or np.max(np.abs(Z)) > config.guard_threshold:
            raise DivergenceError(
                f"Hessian-inverse SGD diverged at step {tau} "
                f"(|z| reached {np.max(np.abs(Z)):.3e}); reduce gamma")
        if config.record_every and (tau % config.record_every == 0 or tau == config.T):
            snaps.append(Z.copy())
            snap_steps.append(tau)

    return SzhiaResult(
        z=Z,
        draws_G=3 * config.T * runs,
        draws_F=2 * config.T * runs,
        T=config.T,
        trajectory=np.stack(snaps) if snaps else None,
        trajectory_steps=np.asarray(snap_steps) if snap_steps else None,
    )


def run_szhia(oracle_g: ValueOracle, oracle_f: ValueOracle,
              point: BlockPoint, config: SzhiaConfig,
              rng: np.random.Generator) -> SzhiaResult:
    """Single SGD chain; result z has shape (m,)."""
    res = run_szhia_ensemble(oracle_g, oracle_f, point, config, rng, runs=1)
    res.z = res.z[0]
    if res.trajectory is not None:
        res.trajectory = res.trajectory[:, 0, :]
    return res

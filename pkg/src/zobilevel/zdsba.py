"""Zeroth-order double-loop stochastic bilevel algorithm.

Outer iteration k:
  1. inner loop: t_k steps of zeroth-order SGD on the lower level,
     y <- y - beta * grad_y-estimate of G at radius mu2 (x unperturbed),
     warm-started from the previous outer step;
  2. Hessian-inverse step: b_k steps of the SGD from `szhia` anchored at
     (x_k, y_{k+1}) produce h_k approximating
     [hess_yy g]^{-1} grad_y f;
  3. hypergradient surrogate: grad_x-estimate of F at radius eta1 (y
     unperturbed) minus the cross-Hessian stencil of G applied to h_k;
  4. projected outer step x_{k+1} = proj_X(x_k - alpha_k * surrogate).

Step sizes, inner iteration counts, and accuracy targets follow one of three
schedules keyed to the convexity of the outer objective psi:

  strongly-convex:  eps_k = (n+m)^2/(k+1),  alpha_k = 4/(lambda_psi (k+3))
  convex:           same eps_k,  alpha = 1/(2 L1_psi sqrt((n+m)^3 (N+1)))
  nonconvex:        eps_k = sqrt((n+m)/(k+1)),  same constant alpha

with b_k = ceil(c ln(k+1) / -ln(1 - gamma lambda_g)) (c = 1, or 1/2 in the
nonconvex schedule, floored at 1),
t_k = ceil(max{8(m+4)L1_G/lambda_g, 1/(eps_k lambda_g^2), 1} * ln(1/eps_k))
(zero whenever eps_k >= 1), and inner step
beta(eps) = min{1/(8(m+4)L1_G), eps*lambda_g, 1/lambda_g}.

The core loop is vectorized over rows so an ensemble of independent runs
advances in lockstep; `run_zdsba` is the per-seed single-run entry point used
by the command-line harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidParameterError
from .problems import ProblemConstants, QuadraticBilevel
from .smoothing import (SmoothingParams, grad_x_samples, grad_y_samples,
                        hess_xy_action_samples, hess_yy_action_samples)

REGIMES = ("strongly-convex", "convex", "nonconvex")


@dataclass(frozen=True)
class Schedule:
    """All per-iteration tunables of the double-loop solver."""

    regime: str
    N: int
    n: int
    m: int
    gamma: float
    lambda_g: float
    L1_G: float
    smoothing: SmoothingParams
    lambda_psi: float | None = None
    L1_psi: float | None = None
    alpha_const: float | None = None
    warm_start_z: bool = False
    guard_threshold: float = 1e8

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidParameterError(f"unknown regime {self.regime!r}")
        if self.N < 1:
            raise InvalidParameterError("N must be >= 1")
        cap = 2.0 / (self.lambda_g + self.L1_G)
        if not (0 < self.gamma < cap):
            raise InvalidParameterError(
                f"gamma must lie in (0, 2/(lambda_g + L1_G)) = (0, {cap!r})")
        if self.regime == "strongly-convex":
            if self.lambda_psi is None or self.lambda_psi <= 0:
                raise InvalidParameterError(
                    "strongly-convex schedule needs lambda_psi > 0")
        elif self.alpha_const is None or self.alpha_const <= 0:
            raise InvalidParameterError(f"{self.regime} schedule needs alpha_const > 0")

    # --- per-iteration quantities ----------------------------------------
    def eps(self, k: int) -> float:
        d = self.n + self.m
        if self.regime == "nonconvex":
            return math.sqrt(d / (k + 1))
        return d ** 2 / (k + 1)

    def b(self, k: int) -> int:
        rate = -math.log1p(-self.gamma * self.lambda_g)
        c = 0.5 if self.regime == "nonconvex" else 1.0
        return max(1, math.ceil(c * math.log(k + 1) / rate))

    def t(self, k: int) -> int:
        eps = self.eps(k)
        if eps >= 1.0:
            return 0
        factor = max(8.0 * (self.m + 4) * self.L1_G / self.lambda_g,
                     1.0 / (eps * self.lambda_g ** 2), 1.0)
        return math.ceil(factor * math.log(1.0 / eps))

    def alpha(self, k: int) -> float:
        if self.regime == "strongly-convex":
            return 4.0 / (self.lambda_psi * (k + 3))
        return self.alpha_const

    def beta(self, eps: float) -> float:
        return min(1.0 / (8.0 * (self.m + 4) * self.L1_G),
                   eps * self.lambda_g, 1.0 / self.lambda_g)


def make_schedule(regime: str, N: int, n: int, m: int,
                  constants: ProblemConstants,
                  lambda_psi: float | None = None,
                  L1_psi: float | None = None,
                  gamma: float | None = None,
                  smoothing: SmoothingParams | None = None,
                  warm_start_z: bool = False) -> Schedule:
    """Build a schedule from problem constants; gamma defaults to half its cap."""
    if gamma is None:
        gamma = 1.0 / (constants.lambda_g + constants.L1_G)
    if smoothing is None:
        smoothing = SmoothingParams.defaults_for_horizon(N, n, m)
    alpha_const = None
    if regime in ("convex", "nonconvex"):
        if L1_psi is None or L1_psi <= 0:
            raise InvalidParameterError(f"{regime} schedule needs L1_psi > 0")
        alpha_const = 1.0 / (2.0 * L1_psi * math.sqrt((n + m) ** 3 * (N + 1)))
    return Schedule(regime=regime, N=N, n=n, m=m, gamma=gamma,
                    lambda_g=constants.lambda_g, L1_G=constants.L1_G,
                    smoothing=smoothing, lambda_psi=lambda_psi,
                    L1_psi=L1_psi, alpha_const=alpha_const,
                    warm_start_z=warm_start_z)


def schedule_for_problem(problem: QuadraticBilevel, regime: str, N: int,
                         gamma: float | None = None,
                         smoothing: SmoothingParams | None = None,
                         warm_start_z: bool = False) -> Schedule:
    """Schedule with lambda_psi / L1_psi read off the closed-form outer Hessian."""
    H = problem.psi_hessian
    eigs = np.linalg.eigvalsh(H)
    L1_psi = float(np.max(np.abs(eigs)))
    lambda_psi = float(eigs[0]) if eigs[0] > 0 else None
    if regime == "strongly-convex" and lambda_psi is None:
        raise InvalidParameterError("outer objective is not strongly convex")
    return make_schedule(regime, N, problem.n, problem.m, problem.constants(),
                         lambda_psi=lambda_psi, L1_psi=L1_psi, gamma=gamma,
                         smoothing=smoothing, warm_start_z=warm_start_z)


@dataclass
class RunRecord:
    """Trajectory and accounting for one run (or a lockstep ensemble of runs).

    xs has shape (N+1, S, n) with S the number of lockstep runs; draws count
    oracle value queries per run.
    """

    regime: str
    N: int
    xs: np.ndarray
    eps: np.ndarray
    b: np.ndarray
    t: np.ndarray
    alphas: np.ndarray
    draws_G: int
    draws_F: int
    x_hat: np.ndarray
    R: int | None = None
    seed: int | None = None
    ys_final: np.ndarray | None = None

    def single(self) -> "RunRecord":
        """Collapse a one-run ensemble to unbatched arrays."""
        if self.xs.shape[1] != 1:
            raise InvalidParameterError("single() needs a one-run record")
        rec = RunRecord(regime=self.regime, N=self.N, xs=self.xs[:, 0, :],
                        eps=self.eps, b=self.b, t=self.t, alphas=self.alphas,
                        draws_G=self.draws_G, draws_F=self.draws_F,
                        x_hat=self.x_hat[0], R=self.R, seed=self.seed,
                        ys_final=None if self.ys_final is None else self.ys_final[0])
        return rec


def _guard(arr: np.ndarray, threshold: float, what: str, k: int) -> None:
    if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > threshold:
        raise DivergenceError(
            f"{what} diverged at outer step {k}; reduce step sizes")


def run_zdsba_ensemble(problem: QuadraticBilevel, schedule: Schedule,
                       X0: np.ndarray, Y0: np.ndarray,
                       rng: np.random.Generator) -> RunRecord:
    """Advance S independent runs in lockstep; X0 is (S, n), Y0 is (S, m)."""
    X = np.array(np.atleast_2d(X0), dtype=float)
    Y = np.array(np.atleast_2d(Y0), dtype=float)
    S = X.shape[0]
    if X.shape[1] != problem.n or Y.shape != (S, problem.m):
        raise InvalidParameterError("X0/Y0 shapes do not match the problem")
    oracle_f, oracle_g = problem.oracle_f, problem.oracle_g
    sm = schedule.smoothing
    proj = problem.feasible_set.project
    X = proj(X)

    N = schedule.N
    xs = np.empty((N + 1, S, problem.n))
    xs[0] = X
    eps_arr = np.empty(N)
    b_arr = np.empty(N, dtype=int)
    t_arr = np.empty(N, dtype=int)
    alpha_arr = np.empty(N)
    draws_G = 0
    draws_F = 0
    Z = np.zeros((S, problem.m))

    for k in range(N):
        eps_k = schedule.eps(k)
        b_k = schedule.b(k)
        t_k = schedule.t(k)
        alpha_k = schedule.alpha(k)
        beta_k = schedule.beta(eps_k)
        eps_arr[k], b_arr[k], t_arr[k], alpha_arr[k] = eps_k, b_k, t_k, alpha_k

        # inner loop: zeroth-order SGD on the lower level, x unperturbed
        for _ in range(t_k):
            Y = Y - beta_k * grad_y_samples(oracle_g, X, Y, 0.0, sm.mu2, rng)
        draws_G += 2 * t_k
        _guard(Y, schedule.guard_threshold, "inner iterate", k)

        # Hessian-inverse-product SGD anchored at (x_k, y_{k+1})
        if not schedule.warm_start_z:
            Z = np.zeros((S, problem.m))
        for _ in range(b_k):
            h_action = hess_yy_action_samples(oracle_g, X, Y, sm.eta2, sm.mu2, Z, rng)
            gy_f = grad_y_samples(oracle_f, X, Y, 0.0, sm.mu1, rng)
            Z = Z - schedule.gamma * (h_action - gy_f)
        draws_G += 3 * b_k
        draws_F += 2 * b_k
        _guard(Z, schedule.guard_threshold, "Hessian-inverse iterate", k)

        # hypergradient surrogate and projected outer step
        gx_f = grad_x_samples(oracle_f, X, Y, sm.eta1, 0.0, rng)
        jac_z = hess_xy_action_samples(oracle_g, X, Y, sm.eta2, sm.mu2, Z, rng)
        draws_F += 2
        draws_G += 3
        X = proj(X - alpha_k * (gx_f - jac_z))
        _guard(X, schedule.guard_threshold, "outer iterate", k)
        xs[k + 1] = X

    # regime-specific output point
    R = None
    if schedule.regime == "strongly-convex":
        x_hat = xs[-1]
    elif schedule.regime == "convex":
        w = (1.0 / alpha_arr) / (1.0 / alpha_arr).sum()
        x_hat = np.tensordot(w, xs[:-1], axes=(0, 0))
    else:
        R = int(rng.choice(N, p=alpha_arr / alpha_arr.sum()))
        x_hat = xs[R]

    return RunRecord(regime=schedule.regime, N=N, xs=xs, eps=eps_arr,
                     b=b_arr, t=t_arr, alphas=alpha_arr,
                     draws_G=draws_G, draws_F=draws_F,
                     x_hat=x_hat, R=R, ys_final=Y)


def run_zdsba(problem: QuadraticBilevel, schedule: Schedule,
              x0: np.ndarray, y0: np.ndarray,
              seed: int | None = None,
              rng: np.random.Generator | None = None) -> RunRecord:
    """Single run with its own deterministic stream when a seed is given."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    rec = run_zdsba_ensemble(problem, schedule, x0[None, :], y0[None, :], rng)
    rec = rec.single()
    rec.seed = seed
    return rec

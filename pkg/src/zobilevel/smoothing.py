"""Two-block Gaussian-smoothing derivative estimators.

Every estimator queries only function values.  The point (x, y) is perturbed
blockwise by independent Gaussians u ~ N(0, I_n), v ~ N(0, I_m) at radii
(eta, mu), and difference stencils recover unbiased estimates of the partial
derivatives of the smoothed surrogate:

    grad_x:    u * [q(x + eta*u, y + mu*v) - q(x, y)] / eta
    grad_y:    v * [q(x + eta*u, y + mu*v) - q(x, y)] / mu
    hess_xy:   u v' * [q(+,+) + q(-,-) - 2 q(x, y)] / (2 eta mu)
    hess_yy z: (v v' - I) z * [q(x, y+mu*v) + q(x, y-mu*v) - 2 q(x, y)] / (2 mu^2)

All evaluations inside one stencil share a single noise realization per
sample (common random numbers), so additive value noise cancels exactly.

The private *_samples kernels are vectorized over rows: X is (S, n), Y is
(S, m), one independent sample per row.  This serves both batched estimation
at one point (tile the point) and lockstep ensembles of solver runs (distinct
points per row).  Public estimate_* wrappers average a batch at a single
point and report standard errors and oracle-call counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NumericError
from .io_utils import write_csv
from .problems import BlockPoint, ValueOracle


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing radii: (eta1, mu1) for the upper level, (eta2, mu2) for the lower."""

    eta1: float
    mu1: float
    eta2: float
    mu2: float

    def __post_init__(self):
        for name in ("eta1", "mu1", "eta2", "mu2"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0")

    @classmethod
    def defaults_for_horizon(cls, N: int, n: int, m: int) -> "SmoothingParams":
        """Radii that balance smoothing bias against variance over N outer steps."""
        if N < 0 or n < 1 or m < 1:
            raise InvalidParameterError("need N >= 0 and n, m >= 1")
        d = n + m
        r1 = 1.0 / np.sqrt((N + 1) * d ** 3)
        r2 = 1.0 / np.sqrt((N + 1) * d ** 5)
        return cls(eta1=r1, mu1=r1, eta2=r2, mu2=r2)


@dataclass(frozen=True)
class Estimate:
    """A Monte-Carlo estimate with its oracle-query cost."""

    value: np.ndarray
    draws_used: int
    se: np.ndarray | None = None


def _check_points(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] != Y.shape[0]:
        raise InvalidParameterError("X and Y must have the same number of rows")
    return X, Y


def _require_positive(name: str, value: float) -> None:
    if not (value > 0) or not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be positive (got {value!r})")


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


# ---------------------------------------------------------------------------
# vectorized sample kernels (one sample per row)
# ---------------------------------------------------------------------------

def grad_x_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                   eta: float, mu: float, rng: np.random.Generator) -> np.ndarray:
    """Per-row single-sample estimates of grad_x of the smoothed value; (S, n)."""
    X, Y = _check_points(X, Y)
    _require_positive("eta", eta)
    S = X.shape[0]
    U = rng.standard_normal((S, oracle.n))
    Yp = Y if mu == 0.0 else Y + mu * rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    diff = oracle.values(X + eta * U, Yp, noise) - oracle.values(X, Y, noise)
    return _finite((diff / eta)[:, None] * U, "grad_x samples")


def grad_y_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                   eta: float, mu: float, rng: np.random.Generator) -> np.ndarray:
    """Per-row single-sample estimates of grad_y of the smoothed value; (S, m)."""
    X, Y = _check_points(X, Y)
    _require_positive("mu", mu)
    S = X.shape[0]
    Xp = X if eta == 0.0 else X + eta * rng.standard_normal((S, oracle.n))
    V = rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    diff = oracle.values(Xp, Y + mu * V, noise) - oracle.values(X, Y, noise)
    return _finite((diff / mu)[:, None] * V, "grad_y samples")


def grad_pair_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                      eta: float, mu: float, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Both block gradients from one shared two-point stencil; ((S, n), (S, m))."""
    X, Y = _check_points(X, Y)
    _require_positive("eta", eta)
    _require_positive("mu", mu)
    S = X.shape[0]
    U = rng.standard_normal((S, oracle.n))
    V = rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    diff = oracle.values(X + eta * U, Y + mu * V, noise) - oracle.values(X, Y, noise)
    gx = (diff / eta)[:, None] * U
    gy = (diff / mu)[:, None] * V
    return _finite(gx, "grad samples"), _finite(gy, "grad samples")


def hess_xy_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                    eta: float, mu: float, rng: np.random.Generator) -> np.ndarray:
    """Per-row single-sample estimates of the cross block Hessian; (S, n, m)."""
    X, Y = _check_points(X, Y)
    _require_positive("eta", eta)
    _require_positive("mu", mu)
    S = X.shape[0]
    U = rng.standard_normal((S, oracle.n))
    V = rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    stencil = (oracle.values(X + eta * U, Y + mu * V, noise)
               + oracle.values(X - eta * U, Y - mu * V, noise)
               - 2.0 * oracle.values(X, Y, noise)) / (2.0 * eta * mu)
    return _finite(stencil[:, None, None] * U[:, :, None] * V[:, None, :], "hess_xy samples")


def hess_xy_action_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                           eta: float, mu: float, Z: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """Per-row samples of (cross Hessian) @ z without forming the matrix; (S, n)."""
    X, Y = _check_points(X, Y)
    _require_positive("eta", eta)
    _require_positive("mu", mu)
    S = X.shape[0]
    Z = np.broadcast_to(np.asarray(Z, dtype=float), (S, oracle.m))
    U = rng.standard_normal((S, oracle.n))
    V = rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    stencil = (oracle.values(X + eta * U, Y + mu * V, noise)
               + oracle.values(X - eta * U, Y - mu * V, noise)
               - 2.0 * oracle.values(X, Y, noise)) / (2.0 * eta * mu)
    vz = np.einsum("ij,ij->i", V, Z)
    return _finite((stencil * vz)[:, None] * U, "hess_xy action samples")


def hess_yy_action_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                           eta: float, mu: float, Z: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """Per-row samples of (yy Hessian) @ z via (vv' - I) times a symmetric stencil; (S, m).

    eta = 0 leaves the x block unperturbed (two-point y stencil only).
    """
    X, Y = _check_points(X, Y)
    _require_positive("mu", mu)
    S = X.shape[0]
    Z = np.broadcast_to(np.asarray(Z, dtype=float), (S, oracle.m))
    dX = 0.0 if eta == 0.0 else eta * rng.standard_normal((S, oracle.n))
    V = rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    stencil = (oracle.values(X + dX, Y + mu * V, noise)
               + oracle.values(X - dX, Y - mu * V, noise)
               - 2.0 * oracle.values(X, Y, noise)) / (2.0 * mu ** 2)
    vz = np.einsum("ij,ij->i", V, Z)
    return _finite((stencil * vz)[:, None] * V - stencil[:, None] * Z, "hess_yy action samples")


def hess_xx_action_samples(oracle: ValueOracle, X: np.ndarray, Y: np.ndarray,
                           eta: float, mu: float, Z: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """Per-row samples of (xx Hessian) @ z via (uu' - I) times a symmetric stencil; (S, n)."""
    X, Y = _check_points(X, Y)
    _require_positive("eta", eta)
    S = X.shape[0]
    Z = np.broadcast_to(np.asarray(Z, dtype=float), (S, oracle.n))
    U = rng.standard_normal((S, oracle.n))
    dY = 0.0 if mu == 0.0 else mu * rng.standard_normal((S, oracle.m))
    noise = oracle.draw_noise(rng, S)
    stencil = (oracle.values(X + eta * U, Y + dY, noise)
               + oracle.values(X - eta * U, Y - dY, noise)
               - 2.0 * oracle.values(X, Y, noise)) / (2.0 * eta ** 2)
    uz = np.einsum("ij,ij->i", U, Z)
    return _finite((stencil * uz)[:, None] * U - stencil[:, None] * Z, "hess_xx action samples")


# ---------------------------------------------------------------------------
# public batched estimators at a single point
# ---------------------------------------------------------------------------

def _tile(point: BlockPoint, batch: int) -> tuple[np.ndarray, np.ndarray]:
    if batch < 1:
        raise InvalidParameterError("batch must be >= 1")
    return (np.broadcast_to(point.x, (batch, point.n)),
            np.broadcast_to(point.y, (batch, point.m)))


def _collect(samples: np.ndarray, evals_per_sample: int) -> Estimate:
    batch = samples.shape[0]
    value = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(batch) if batch > 1 else None
    return Estimate(value=value, draws_used=batch * evals_per_sample, se=se)


def estimate_grad_x(oracle: ValueOracle, point: BlockPoint, eta: float, mu: float,
                    batch: int, rng: np.random.Generator) -> Estimate:
    X, Y = _tile(point, batch)
    return _collect(grad_x_samples(oracle, X, Y, eta, mu, rng), 2)


def estimate_grad_y(oracle: ValueOracle, point: BlockPoint, eta: float, mu: float,
                    batch: int, rng: np.random.Generator) -> Estimate:
    X, Y = _tile(point, batch)
    return _collect(grad_y_samples(oracle, X, Y, eta, mu, rng), 2)


def estimate_hess_xy(oracle: ValueOracle, point: BlockPoint, eta: float, mu: float,
                     batch: int, rng: np.random.Generator) -> Estimate:
    X, Y = _tile(point, batch)
    return _collect(hess_xy_samples(oracle, X, Y, eta, mu, rng), 3)


def estimate_hess_xy_action(oracle: ValueOracle, point: BlockPoint, eta: float, mu: float,
                            z: np.ndarray, batch: int, rng: np.random.Generator) -> Estimate:
    X, Y = _tile(point, batch)
    return _collect(hess_xy_action_samples(oracle, X, Y, eta, mu, z, rng), 3)


def estimate_hess_yy_action(oracle: ValueOracle, point: BlockPoint, eta: float, mu: float,
                            z: np.ndarray, batch: int, rng: np.random.Generator) -> Estimate:
    X, Y = _tile(point, batch)
    return _collect(hess_yy_action_samples(oracle, X, Y, eta, mu, z, rng), 3)


def dump_samples(path, samples: np.ndarray, prefix: str = "coord") -> None:
    """Write raw per-sample estimates to CSV (rows = samples, columns = coordinates)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    samples = samples.reshape(samples.shape[0], -1)
    header = ["sample"] + [f"{prefix}{j}" for j in range(samples.shape[1])]
    rows = ([i] + [float(v) for v in row] for i, row in enumerate(samples))
    write_csv(path, header, rows)

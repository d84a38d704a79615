"""Synthetic bilevel problems with closed-form ground truth.

The central fixture is a quadratic bilevel problem

    lower level:  g(x, y) = 1/2 y'Ay - (Bx + b)'y          (A SPD)
    upper level:  f(x, y) = 1/2 x'Px + 1/2 y'Qy + r'x + s'y + c

for which the inner solution, the hypergradient, smoothed values, and all
smoothness constants are available in closed form.  Everything downstream
(estimators, solvers, the verification suite) is checked against these.

Oracles expose noisy *function values only*.  An oracle call evaluates a batch
of points that share one noise realization per row, which is exactly the
common-random-numbers contract the finite-difference stencils require.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError, SingularMatrixError

_NOISE_KINDS = ("none", "additive-value", "linear-term")
_SET_KINDS = ("all-of-Rn", "box", "ball")


def _as_vector(v, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (dim,):
        raise ConfigurationError(f"{name} must have shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class BlockPoint:
    """A two-block argument (x, y) with x outer and y inner."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.ndim != 1 or y.ndim != 1 or x.size < 1 or y.size < 1:
            raise ConfigurationError("BlockPoint blocks must be 1-d with n, m >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NumericError("BlockPoint entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness/variance constants used by schedules and bound plug-ins."""

    lambda_g: float
    L0_f: float
    L1_f: float
    L1_g: float
    L2_g: float
    L1_G: float
    L2_G: float
    sigma1_F: float
    sigma1_G: float
    sigma2_G: float

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ConfigurationError(f"constant {name} must be finite and >= 0")
        if self.lambda_g <= 0:
            raise ConfigurationError("lambda_g must be positive")
        if self.lambda_g > self.L1_g * (1 + 1e-12):
            raise ConfigurationError("lambda_g cannot exceed L1_g")


@dataclass(frozen=True)
class NoiseModel:
    """Noise attached to value queries.

    additive-value adds sigma*xi to the value (gradients stay exact);
    linear-term tilts the linear coefficients along fixed unit directions
    scaled by sigma*xi, so first derivatives carry analytically known noise.
    """

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in _NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ConfigurationError("noise sigma must be finite and >= 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class FeasibleSet:
    """Closed convex constraint set for the outer variable."""

    kind: str = "all-of-Rn"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in _SET_KINDS:
            raise ConfigurationError(f"unknown feasible-set kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ConfigurationError("box needs lower <= upper of equal shape")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ball":
            if self.radius <= 0:
                raise ConfigurationError("ball radius must be positive")
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def bounded(self) -> bool:
        return self.kind != "all-of-Rn"

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        if self.kind == "ball":
            return 2.0 * self.radius
        return np.inf

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection; x may be (n,) or (S, n)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "all-of-Rn":
            return x
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        d = x - self.center
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(nrm > self.radius, self.radius / np.maximum(nrm, 1e-300), 1.0)
        return self.center + d * scale

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Uniform-ish interior points, used by projection-optimality probes."""
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(size, self.lower.size))
        if self.kind == "ball":
            n = self.center.size
            d = rng.standard_normal((size, n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            rad = self.radius * rng.uniform(0.0, 1.0, size=(size, 1)) ** (1.0 / n)
            return self.center + rad * d
        raise ConfigurationError("cannot sample from an unbounded set")

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.kind == "ball":
            return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "FeasibleSet":
        kind = d.get("kind", "all-of-Rn")
        if kind == "box":
            return cls(kind="box", lower=np.asarray(d["lower"]), upper=np.asarray(d["upper"]))
        if kind == "ball":
            return cls(kind="ball", center=np.asarray(d["center"]), radius=float(d["radius"]))
        return cls(kind=kind)


class ValueOracle:
    """Noisy zeroth-order value oracle.

    values(X, Y, noise) evaluates rows of (X, Y) where every row i shares the
    single noise draw noise[i]; draw_noise supplies those draws.  Stencil-based
    estimators tile one draw across the stencil's points (common random
    numbers).  Pure function of its inputs, so concurrent use is safe as long
    as callers hold distinct rng streams.
    """

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 n: int, m: int,
                 noise_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None):
        self._fn = fn
        self._noise_fn = noise_fn
        self.n = n
        self.m = m

    def draw_noise(self, rng: np.random.Generator, size: int) -> np.ndarray | None:
        if self._noise_fn is None:
            return None
        return rng.standard_normal(size)

    def values(self, X: np.ndarray, Y: np.ndarray, noise: np.ndarray | None) -> np.ndarray:
        vals = self._fn(X, Y)
        if self._noise_fn is not None and noise is not None:
            vals = vals + self._noise_fn(X, Y, noise)
        return vals

    def value(self, point: BlockPoint, rng: np.random.Generator) -> float:
        if point.n != self.n or point.m != self.m:
            raise ConfigurationError(
                f"point dims ({point.n},{point.m}) do not match oracle ({self.n},{self.m})")
        noise = self.draw_noise(rng, 1)
        out = float(self.values(point.x[None, :], point.y[None, :], noise)[0])
        if not np.isfinite(out):
            raise NumericError("oracle returned a non-finite value")
        return out


def function_oracle(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], n: int, m: int) -> ValueOracle:
    """Deterministic oracle from a vectorized (X, Y) -> values callable."""
    return ValueOracle(fn, n, m)


@dataclass
class QuadraticBilevel:
    """Quadratic bilevel fixture with closed-form ground truth."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    c: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    feasible_set: FeasibleSet = field(default_factory=FeasibleSet)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        m = self.A.shape[0]
        if self.A.shape != (m, m):
            raise ConfigurationError("A must be square")
        if self.B.ndim != 2 or self.B.shape[0] != m:
            raise ConfigurationError("B must be (m, n)")
        n = self.B.shape[1]
        self.P = np.asarray(self.P, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.P.shape != (n, n) or self.Q.shape != (m, m):
            raise ConfigurationError("P must be (n, n) and Q (m, m)")
        self.b = _as_vector(self.b, m, "b")
        self.r = _as_vector(self.r, n, "r")
        self.s = _as_vector(self.s, m, "s")
        if not np.allclose(self.A, self.A.T, atol=1e-10):
            raise ConfigurationError("A must be symmetric")
        eigvals = np.linalg.eigvalsh(self.A)
        if eigvals[0] <= 0:
            raise ConfigurationError("A must be positive definite")
        self._lambda_g = float(eigvals[0])
        self._cond_A = float(eigvals[-1] / eigvals[0])
        # fixed unit directions carrying the linear-term noise
        self._dir_r = np.ones(n) / np.sqrt(n)
        self._dir_s = np.ones(m) / np.sqrt(m)
        self._dir_b = np.ones(m) / np.sqrt(m)

    # --- dimensions -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def lambda_g(self) -> float:
        return self._lambda_g

    # --- exact values -----------------------------------------------------
    def f_values(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        return (0.5 * np.einsum("ij,ij->i", X, X @ self.P.T)
                + 0.5 * np.einsum("ij,ij->i", Y, Y @ self.Q.T)
                + X @ self.r + Y @ self.s + self.c)

    def g_values(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        return (0.5 * np.einsum("ij,ij->i", Y, Y @ self.A.T)
                - np.einsum("ij,ij->i", X @ self.B.T + self.b, Y))

    def f(self, point: BlockPoint) -> float:
        return float(self.f_values(point.x, point.y)[0])

    def g(self, point: BlockPoint) -> float:
        return float(self.g_values(point.x, point.y)[0])

    # --- noise terms ------------------------------------------------------
    def _noise_f(self, X: np.ndarray, Y: np.ndarray, xi: np.ndarray) -> np.ndarray:
        sig = self.noise.sigma
        if self.noise.kind == "additive-value":
            return sig * xi
        # linear-term: r, s tilted by sigma*xi along fixed unit directions
        return sig * xi * (np.atleast_2d(X) @ self._dir_r + np.atleast_2d(Y) @ self._dir_s)

    def _noise_g(self, X: np.ndarray, Y: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        sig = self.noise.sigma
        if self.noise.kind == "additive-value":
            return sig * zeta
        # linear-term: b tilted by sigma*zeta, entering g as -sigma*zeta*(d_b . y)
        return -sig * zeta * (np.atleast_2d(Y) @ self._dir_b)

    # --- oracles ----------------------------------------------------------
    @property
    def oracle_f(self) -> ValueOracle:
        noise_fn = None if self.noise.kind == "none" else self._noise_f
        return ValueOracle(self.f_values, self.n, self.m, noise_fn)

    @property
    def oracle_g(self) -> ValueOracle:
        noise_fn = None if self.noise.kind == "none" else self._noise_g
        return ValueOracle(self.g_values, self.n, self.m, noise_fn)

    def eval_F(self, point: BlockPoint, rng: np.random.Generator) -> float:
        """One noisy draw of the upper-level value."""
        return self.oracle_f.value(point, rng)

    def eval_G(self, point: BlockPoint, rng: np.random.Generator) -> float:
        """One noisy draw of the lower-level value."""
        return self.oracle_g.value(point, rng)

    # --- closed-form ground truth ------------------------------------------
    def _check_conditioning(self):
        if self._cond_A > 1e12:
            raise SingularMatrixError(f"A is numerically singular (cond={self._cond_A:.3e})")

    def true_lower_solution(self, x: np.ndarray) -> np.ndarray:
        """y*(x) = A^{-1}(Bx + b)."""
        self._check_conditioning()
        x = np.asarray(x, dtype=float)
        rhs = x @ self.B.T + self.b
        return np.linalg.solve(self.A, rhs.T).T if rhs.ndim > 1 else np.linalg.solve(self.A, rhs)

    def lower_gradient(self, point: BlockPoint) -> np.ndarray:
        """grad_y g(x, y) = Ay - (Bx + b)."""
        return self.A @ point.y - (self.B @ point.x + self.b)

    def bar_nabla(self, point: BlockPoint) -> np.ndarray:
        """The hypergradient surrogate evaluated at an arbitrary (x, y).

        grad_x f - Hxy(g) [Hyy(g)]^{-1} grad_y f, with Hxy(g) = -B' and
        Hyy(g) = A, so the surrogate reads Px + r + B'A^{-1}(Qy + s).
        """
        self._check_conditioning()
        return (self.P @ point.x + self.r
                + self.B.T @ np.linalg.solve(self.A, self.Q @ point.y + self.s))

    def true_hypergradient(self, x: np.ndarray) -> np.ndarray:
        """grad psi(x) at the exact inner solution y*(x)."""
        x = np.asarray(x, dtype=float)
        ystar = self.true_lower_solution(x)
        return self.bar_nabla(BlockPoint(x, ystar))

    def psi(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        ystar = self.true_lower_solution(x)
        return float(self.f_values(x[None, :], ystar[None, :])[0])

    def psi_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        Ystar = self.true_lower_solution(X)
        return self.f_values(X, Ystar)

    def hypergradient_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        Ystar = self.true_lower_solution(X)
        return X @ self.P.T + self.r + (Ystar @ self.Q.T + self.s) @ np.linalg.solve(self.A, self.B)

    @property
    def psi_hessian(self) -> np.ndarray:
        """H(psi) = P + (A^{-1}B)' Q (A^{-1}B)."""
        AinvB = np.linalg.solve(self.A, self.B)
        return self.P + AinvB.T @ self.Q @ AinvB

    @property
    def x_star(self) -> np.ndarray:
        """Unconstrained stationary point of psi (requires H(psi) nonsingular)."""
        AinvB = np.linalg.solve(self.A, self.B)
        rhs = self.r + self.B.T @ np.linalg.solve(self.A, self.Q @ np.linalg.solve(self.A, self.b) + self.s)
        return np.linalg.solve(self.psi_hessian, -rhs)

    @property
    def psi_star(self) -> float:
        return self.psi(self.x_star)

    # --- smoothing ground truth ---------------------------------------------
    def smoothed_value_f(self, point: BlockPoint, eta: float, mu: float) -> float:
        """Exact Gaussian expectation of f: f + eta^2/2 tr(P) + mu^2/2 tr(Q)."""
        return self.f(point) + 0.5 * eta ** 2 * np.trace(self.P) + 0.5 * mu ** 2 * np.trace(self.Q)

    def smoothed_value_g(self, point: BlockPoint, eta: float, mu: float) -> float:
        """Exact Gaussian expectation of g: g + mu^2/2 tr(A) (no xx curvature)."""
        return self.g(point) + 0.5 * mu ** 2 * np.trace(self.A)

    # --- constants ----------------------------------------------------------
    def hess_g(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(Hxx, Hxy, Hyy) of g; Hxy is n-by-m."""
        return np.zeros((self.n, self.n)), -self.B.T, self.A

    def hess_f(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.P, np.zeros((self.n, self.m)), self.Q

    def constants(self, region_radius: float = 10.0) -> ProblemConstants:
        """Smoothness constants; L0_f is taken over the ball of the given radius."""
        Hg = np.block([[np.zeros((self.n, self.n)), -self.B.T], [-self.B, self.A]])
        L1_g = float(np.linalg.norm(Hg, 2))
        L1_f = float(max(np.linalg.norm(self.P, 2), np.linalg.norm(self.Q, 2)))
        L0_f = L1_f * region_radius + float(np.linalg.norm(np.concatenate([self.r, self.s])))
        sig = self.noise.sigma if self.noise.kind == "linear-term" else 0.0
        return ProblemConstants(
            lambda_g=self._lambda_g,
            L0_f=L0_f, L1_f=L1_f,
            L1_g=L1_g, L2_g=0.0,
            L1_G=L1_g, L2_G=0.0,
            sigma1_F=sig * np.sqrt(2.0), sigma1_G=sig, sigma2_G=0.0,
        )

    # --- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m,
            "A": self.A.flatten().tolist(), "B": self.B.flatten().tolist(),
            "b": self.b.tolist(),
            "P": self.P.flatten().tolist(), "Q": self.Q.flatten().tolist(),
            "r": self.r.tolist(), "s": self.s.tolist(), "c": self.c,
            "noise": self.noise.to_dict(),
            "set": self.feasible_set.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticBilevel":
        try:
            n, m = int(d["n"]), int(d["m"])
            return cls(
                A=np.asarray(d["A"], dtype=float).reshape(m, m),
                B=np.asarray(d["B"], dtype=float).reshape(m, n),
                b=np.asarray(d["b"], dtype=float),
                P=np.asarray(d["P"], dtype=float).reshape(n, n),
                Q=np.asarray(d["Q"], dtype=float).reshape(m, m),
                r=np.asarray(d["r"], dtype=float),
                s=np.asarray(d["s"], dtype=float),
                c=float(d.get("c", 0.0)),
                noise=NoiseModel(**d.get("noise", {})),
                feasible_set=FeasibleSet.from_dict(d.get("set", {})),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"bad problem spec: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "QuadraticBilevel":
        return cls.from_dict(json.loads(text))


def random_spd(dim: int, modulus: float, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix M'M + modulus*I with standard-normal M."""
    M = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    return M.T @ M + modulus * np.eye(dim)


def random_quadratic_bilevel(n: int, m: int, lambda_g: float = 1.0,
                             coupling: float = 0.5,
                             noise: NoiseModel | None = None,
                             feasible_set: FeasibleSet | None = None,
                             seed: int = 0) -> QuadraticBilevel:
    """Random fixture with controllable strong-convexity modulus."""
    rng = np.random.default_rng(seed)
    return QuadraticBilevel(
        A=random_spd(m, lambda_g, rng),
        B=coupling * rng.standard_normal((m, n)),
        b=rng.standard_normal(m),
        P=random_spd(n, 0.5, rng),
        Q=random_spd(m, 0.1, rng),
        r=rng.standard_normal(n),
        s=rng.standard_normal(m),
        c=float(rng.standard_normal()),
        noise=noise or NoiseModel(),
        feasible_set=feasible_set or FeasibleSet(),
    )

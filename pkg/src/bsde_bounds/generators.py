"""Drivers of the dynamic program: evaluation, Lipschitz profiles, convex
conjugates and measurable subgradients.

Shapes: vectorized calls take y of shape (L,) and z of shape (L, D) and
return (L,). The state x is accepted for interface generality; the bundled
drivers do not depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvariantViolation",
    "Driver",
    "FundingDriver",
    "CreditDriver",
    "LinearDriver",
    "ConvexPolyYDriver",
    "picard_y",
]


class InvariantViolation(RuntimeError):
    """A mathematical invariant guaranteed by the standing assumptions failed."""


def picard_y(step_map, y0: np.ndarray, contraction: float, tol: float = 1e-12, cap: int = 50) -> np.ndarray:
    """Fixed point of y = step_map(y) by Picard iteration.

    step_map must be a contraction with the given factor < 1 (the stepsize
    condition alpha^(0) * delta < 1 guarantees this for all uses here).
    """
    if not contraction < 1.0:
        raise InvariantViolation(f"Picard map is not a contraction (factor {contraction})")
    y = np.asarray(y0, float)
    for _ in range(cap):
        y_new = step_map(y)
        err = np.max(np.abs(y_new - y)) if y.size else 0.0
        y = y_new
        if err <= tol:
            return y
    raise InvariantViolation(f"Picard iteration did not reach {tol} within {cap} sweeps")


class Driver:
    """Base class; subclasses fill in the driver f and its profile.

    shape is one of "convex", "concave", "general". Conjugate machinery
    (candidate_r / conjugate_y / subgradient) is only available where the
    subclass provides it.
    """

    shape = "general"
    dim = 1

    def eval(self, i: int, x, y, z):  # pragma: no cover - interface
        raise NotImplementedError

    def alpha_y(self, i: int) -> float:
        raise NotImplementedError

    def alpha_z(self, i: int) -> np.ndarray:
        raise NotImplementedError

    # -- convex machinery (optional) ------------------------------------
    def candidate_r(self, i: int, x) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no y-conjugate candidate set")

    def conjugate_y(self, i: int, x, r: float, z):
        """f^{#y}(i, r, z) = sup_y { r y - f(i, y, z) } for r in the candidate set."""
        raise NotImplementedError(f"{type(self).__name__} has no explicit y-conjugate")

    def subgradient(self, i: int, x, y, z):
        """Measurable subgradient (r, rho) of f at (y, z), and the conjugate
        value f^#(i, r, rho) = r y + rho.z - f(i, x, y, z)."""
        if self.shape != "convex":
            raise ValueError(f"subgradient requires a convex driver, got shape={self.shape!r}")
        raise NotImplementedError

    def check_step_condition(self, grid, trunc_level) -> None:
        """Assert alpha^(0) < 1/delta and sum_d alpha^(d) c <= 1/delta."""
        for i in range(grid.n):
            delta = grid.deltas[i]
            if not self.alpha_y(i) < 1.0 / delta:
                raise InvariantViolation(f"alpha_y * delta >= 1 at step {i}")
            az = self.alpha_z(i)
            c = np.broadcast_to(np.asarray(trunc_level, float), (grid.n,))[i]
            budget = float(np.sum(az)) * c
            if np.sum(az) > 0 and not budget <= 1.0 / delta * (1 + 1e-12):
                raise InvariantViolation(f"sum_d alpha_z * trunc_level > 1/delta at step {i}")


@dataclass
class FundingDriver(Driver):
    """Different borrowing/lending rates:

    f(y, z) = -R_l y - ((mu - R_l)/sigma) sum_d z_d
              + (R_b - R_l) (y - sum_d z_d / sigma)_-
    Convex and piecewise linear in (y, z).
    """

    r_lend: float
    r_borrow: float
    mu: float
    sigma: float
    dim: int = 5
    shape = "convex"

    def __post_init__(self):
        if self.r_lend > self.r_borrow:
            raise ValueError("need R_l <= R_b")
        if self.sigma <= 0:
            raise ValueError("need sigma > 0")

    def eval(self, i, x, y, z):
        y = np.asarray(y, float)
        zsum = np.sum(np.asarray(z, float), axis=-1)
        neg = np.maximum(-(y - zsum / self.sigma), 0.0)
        return -self.r_lend * y - (self.mu - self.r_lend) / self.sigma * zsum + (self.r_borrow - self.r_lend) * neg

    def alpha_y(self, i):
        return max(abs(self.r_lend), abs(self.r_borrow))

    def alpha_z(self, i):
        # exact per-coordinate Lipschitz constant: the two kink-branch slopes
        # are (R_l - mu)/sigma and (R_b - mu)/sigma
        a = max(abs(self.mu - self.r_lend), abs(self.r_borrow - self.mu)) / self.sigma
        return np.full(self.dim, a)

    def candidate_r(self, i, x):
        return np.array([-self.r_borrow, -self.r_lend])

    def conjugate_y(self, i, x, r, z):
        lo, hi = -self.r_borrow, -self.r_lend
        if not lo - 1e-15 <= r <= hi + 1e-15:
            raise ValueError(f"r={r} outside the conjugate domain [{lo}, {hi}]")
        zsum = np.sum(np.asarray(z, float), axis=-1)
        return zsum / self.sigma * (self.mu + r)

    def subgradient(self, i, x, y, z):
        # kink at y = sum z / sigma resolved to the borrow branch ("<=")
        y = np.asarray(y, float)
        zsum = np.sum(np.asarray(z, float), axis=-1)
        borrow = y <= zsum / self.sigma
        r = np.where(borrow, -self.r_borrow, -self.r_lend)
        rho = np.broadcast_to((-(r + self.mu) / self.sigma)[..., None], np.shape(z)).copy()
        conj = r * y + np.sum(rho * z, axis=-1) - self.eval(i, x, y, z)
        return r, rho, conj


@dataclass
class CreditDriver(Driver):
    """Reduced-form counterparty risk: f(y) = -(1 - recovery) Q(y) y - rate * y
    with a three-regime piecewise-linear default intensity Q. Neither convex
    nor concave in general.
    """

    rate: float
    recovery: float
    v_high: float  # below: high risk, Q = gamma_high
    v_low: float  # above: low risk, Q = gamma_low
    gamma_high: float
    gamma_low: float
    dim: int = 5
    shape = "general"

    def __post_init__(self):
        if not self.v_high < self.v_low:
            raise ValueError("need v_high < v_low")
        if not self.gamma_high > self.gamma_low:
            raise ValueError("need gamma_high > gamma_low")
        if not 0.0 <= self.recovery < 1.0:
            raise ValueError("recovery must be in [0, 1)")

    def intensity(self, y):
        """Q(y): gamma_high below v_high, gamma_low above v_low, linear between."""
        y = np.asarray(y, float)
        slope = (self.gamma_low - self.gamma_high) / (self.v_low - self.v_high)
        mid = self.gamma_high + slope * (y - self.v_high)
        return np.clip(mid, self.gamma_low, self.gamma_high)

    def eval(self, i, x, y, z=None):
        y = np.asarray(y, float)
        return -(1.0 - self.recovery) * self.intensity(y) * y - self.rate * y

    def alpha_y(self, i):
        # candidate slopes: the two outer regimes and the one-sided
        # derivatives of the middle branch at the thresholds
        s = (self.gamma_low - self.gamma_high) / (self.v_low - self.v_high)
        k = 1.0 - self.recovery
        cands = [
            k * self.gamma_high + self.rate,
            k * self.gamma_low + self.rate,
            abs(-k * (self.gamma_high + s * self.v_high) - self.rate),
            abs(-k * (self.gamma_low + s * self.v_low) - self.rate),
        ]
        return max(abs(c) for c in cands)

    def alpha_z(self, i):
        return np.zeros(self.dim)


@dataclass
class LinearDriver(Driver):
    """f(y, z) = a y + sum_d b_d z_d + c; both convex and concave."""

    a: float
    b: np.ndarray
    c: float = 0.0
    shape = "convex"

    def __post_init__(self):
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, float)))

    @property
    def dim(self):
        return len(self.b)

    def eval(self, i, x, y, z):
        return self.a * np.asarray(y, float) + np.sum(self.b * np.asarray(z, float), axis=-1) + self.c

    def alpha_y(self, i):
        return abs(self.a)

    def alpha_z(self, i):
        return np.abs(self.b)

    def candidate_r(self, i, x):
        return np.array([self.a])

    def conjugate_y(self, i, x, r, z):
        if abs(r - self.a) > 1e-15:
            raise ValueError("conjugate domain is the single point r = a")
        return np.sum(self.b * np.asarray(z, float), axis=-1) - self.c

    def subgradient(self, i, x, y, z):
        y = np.asarray(y, float)
        r = np.full(np.shape(y), self.a)
        rho = np.broadcast_to(self.b, np.shape(z)).copy()
        conj = np.full(np.shape(y), -self.c)
        return r, rho, conj


@dataclass
class ConvexPolyYDriver(Driver):
    """Convex piecewise-linear driver in y only: f(y) = max_k (a_k y + b_k).

    Covers convex credit-style drivers (constant intensity per regime) and
    the funding driver restricted to y: max(-R_l y, -R_b y).
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    dim: int = 1
    shape = "convex"

    def __post_init__(self):
        object.__setattr__(self, "slopes", np.atleast_1d(np.asarray(self.slopes, float)))
        object.__setattr__(self, "intercepts", np.atleast_1d(np.asarray(self.intercepts, float)))
        if len(self.slopes) != len(self.intercepts):
            raise ValueError("slopes and intercepts must have equal length")

    def eval(self, i, x, y, z=None):
        y = np.asarray(y, float)
        return np.max(self.slopes * y[..., None] + self.intercepts, axis=-1)

    def alpha_y(self, i):
        return float(np.max(np.abs(self.slopes)))

    def alpha_z(self, i):
        return np.zeros(self.dim)

    def candidate_r(self, i, x):
        return self.slopes.copy()

    def conjugate_y(self, i, x, r, z=None):
        k = np.argmin(np.abs(self.slopes - r))
        if abs(self.slopes[k] - r) > 1e-12:
            raise ValueError(f"r={r} is not a piece slope")
        return np.full(np.shape(np.sum(np.asarray(z, float), axis=-1)) if z is not None else (), -self.intercepts[k])

    def subgradient(self, i, x, y, z=None):
        y = np.asarray(y, float)
        k = np.argmax(self.slopes * y[..., None] + self.intercepts, axis=-1)
        r = self.slopes[k]
        rho = np.zeros(np.shape(y) + (self.dim,)) if z is None else np.zeros(np.shape(z))
        conj = r * y - self.eval(i, x, y, z)
        return r, rho, conj

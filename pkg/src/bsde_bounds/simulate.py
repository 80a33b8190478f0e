"""Time grid, multi-asset GBM simulation and truncated increment weights.

All randomness is drawn from counter-based Philox streams keyed by
(seed, role, path, step), so every path is reproducible in isolation and
outer / inner / regression samples are independent by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ROLE_OUTER",
    "ROLE_INNER",
    "ROLE_REG",
    "ROLE_MISC",
    "TimeGrid",
    "GbmModel",
    "PathBatch",
    "WeightMoments",
    "stream",
    "make_grid",
    "truncated_weights",
    "weight_moments",
    "simulate_outer",
    "simulate_inner",
    "inner_block",
    "dump_paths_csv",
]

ROLE_OUTER = 1
ROLE_INNER = 2
ROLE_REG = 3
ROLE_MISC = 4

_MAX_PATH = 1 << 40
_MAX_STEP = 1 << 16


def stream(seed: int, role: int, path: int = 0, step: int = 0) -> np.random.Generator:
    """Independent generator for one (role, path, step) entity.

    Distinct key tuples give statistically independent Philox streams, so
    results do not depend on how many paths are drawn or in which order.
    """
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in uint64")
    if not (0 < role < 256 and 0 <= path < _MAX_PATH and 0 <= step < _MAX_STEP):
        raise ValueError(f"stream key out of range: role={role} path={path} step={step}")
    key = np.array([seed, (role << 56) | (path << 16) | step], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray  # (n+1,), strictly increasing, times[0] = 0
    deltas: np.ndarray  # (n,), deltas[i] = times[i+1] - times[i] > 0

    @property
    def n(self) -> int:
        return len(self.deltas)

    def __post_init__(self):
        t, d = np.asarray(self.times, float), np.asarray(self.deltas, float)
        if len(t) != len(d) + 1 or np.any(d <= 0) or not np.allclose(np.diff(t), d):
            raise ValueError("inconsistent time grid")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "deltas", d)


def make_grid(horizon: float, steps: int) -> TimeGrid:
    """Uniform grid with t_i = horizon * i / steps."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    times = np.linspace(0.0, horizon, steps + 1)
    return TimeGrid(times=times, deltas=np.diff(times))


@dataclass(frozen=True)
class GbmModel:
    """Independent identically distributed geometric Brownian assets."""

    x0: np.ndarray  # (D,) initial prices, > 0
    mu: float  # drift per year
    sigma: float  # volatility per sqrt-year, same for all assets

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, float))
        if np.any(x0 <= 0):
            raise ValueError("initial prices must be positive")
        if self.sigma < 0:
            raise ValueError("volatility must be nonnegative")
        object.__setattr__(self, "x0", x0)

    @property
    def dim(self) -> int:
        return len(self.x0)


@dataclass
class PathBatch:
    """Simulated trajectories, one row per path.

    x     (count, n+1, D) asset prices
    dw    (count, n, D)   Brownian increments over [t_i, t_{i+1}]
    beta  (count, n, D)   truncated normalized increments clamp(dw/delta, +-c)
    """

    x: np.ndarray
    dw: np.ndarray
    beta: np.ndarray

    @property
    def count(self) -> int:
        return self.x.shape[0]


def truncated_weights(dw: np.ndarray, delta: float, trunc_level: float) -> np.ndarray:
    """beta_d = clamp(dw_d / delta, -c, c)."""
    if delta <= 0 or trunc_level <= 0:
        raise ValueError("delta and trunc_level must be positive")
    return np.clip(dw / delta, -trunc_level, trunc_level)


@dataclass(frozen=True)
class WeightMoments:
    """Closed-form moments of the truncated weights at one step.

    mean is exactly zero by symmetry of the truncation; second is the
    diagonal matrix B = E[beta beta^T]; pseudo_inverse is its Moore-Penrose
    inverse (diagonal reciprocal, zero where B is zero).
    """

    mean: np.ndarray  # (D,)
    second: np.ndarray  # (D, D)
    pseudo_inverse: np.ndarray  # (D, D)


def _clamped_normal_second_moment(delta: float, trunc_level: float) -> float:
    # Y = clamp(Z, -c, c) with Z ~ N(0, 1/delta):
    # E[Y^2] = s^2[(2 Phi(u) - 1) - 2 u phi(u)] + 2 c^2 (1 - Phi(u)),
    # s = 1/sqrt(delta), u = c sqrt(delta).
    if np.isinf(trunc_level):
        return 1.0 / delta
    s2 = 1.0 / delta
    u = trunc_level * np.sqrt(delta)
    phi_u = np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
    cdf_u = ndtr(u)
    return s2 * ((2.0 * cdf_u - 1.0) - 2.0 * u * phi_u) + 2.0 * trunc_level**2 * (1.0 - cdf_u)


def weight_moments(delta: float, trunc_level: float, dim: int) -> WeightMoments:
    if delta <= 0:
        raise ValueError("delta must be positive")
    b = _clamped_normal_second_moment(delta, trunc_level)
    second = np.eye(dim) * b
    pinv = np.eye(dim) * (1.0 / b if b > 0 else 0.0)
    return WeightMoments(mean=np.zeros(dim), second=second, pseudo_inverse=pinv)


def default_trunc_level(alpha_z_max: float, dim: int, delta: float) -> float:
    """Truncation level making sum_d alpha^(d) |beta_d| <= 1/delta pathwise."""
    if alpha_z_max <= 0:
        return np.inf
    return 1.0 / (dim * alpha_z_max * delta)


def _gbm_step(model: GbmModel, delta: float, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
    drift = (model.mu - 0.5 * model.sigma**2) * delta
    return x * np.exp(drift + model.sigma * dw)


def simulate_outer(
    model: GbmModel,
    grid: TimeGrid,
    count: int,
    seed: int,
    trunc_level: float | np.ndarray = np.inf,
    role: int = ROLE_OUTER,
) -> PathBatch:
    """Draw `count` i.i.d. paths; path lam depends only on (seed, role, lam)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n, d = grid.n, model.dim
    trunc = np.broadcast_to(np.asarray(trunc_level, float), (n,))
    x = np.empty((count, n + 1, d))
    dw = np.empty((count, n, d))
    for lam in range(count):
        rng = stream(seed, role, path=lam)
        dw[lam] = rng.standard_normal((n, d)) * np.sqrt(grid.deltas)[:, None]
    x[:, 0] = model.x0
    beta = np.empty_like(dw)
    for i in range(n):
        x[:, i + 1] = _gbm_step(model, grid.deltas[i], x[:, i], dw[:, i])
        beta[:, i] = truncated_weights(dw[:, i], grid.deltas[i], trunc[i])
    return PathBatch(x=x, dw=dw, beta=beta)


def simulate_inner(
    model: GbmModel,
    grid: TimeGrid,
    i: int,
    x_i: np.ndarray,
    count: int,
    seed: int,
    path: int = 0,
    trunc_level: float = np.inf,
) -> tuple[np.ndarray, np.ndarray]:
    """One-step conditional resamples given X_i = x_i.

    Returns (x_next, beta), each (count, D). The stream is keyed by
    (seed, inner-role, path, i), independent of all outer randomness.
    """
    if not 0 <= i < grid.n:
        raise ValueError("step index out of range")
    rng = stream(seed, ROLE_INNER, path=path, step=i)
    delta = grid.deltas[i]
    dw = rng.standard_normal((count, model.dim)) * np.sqrt(delta)
    x_next = _gbm_step(model, delta, np.asarray(x_i, float), dw)
    return x_next, truncated_weights(dw, delta, trunc_level)


def inner_block(
    model: GbmModel,
    grid: TimeGrid,
    i: int,
    x_anchor: np.ndarray,
    count: int,
    seed: int,
    trunc_level: float = np.inf,
) -> tuple[np.ndarray, np.ndarray]:
    """Inner clouds for a whole batch of anchors X_i(lam), lam = 0..L-1.

    Returns (x_next, beta) with shape (L, count, D); row lam is exactly
    simulate_inner(..., path=lam).
    """
    L = x_anchor.shape[0]
    delta = grid.deltas[i]
    dw = np.empty((L, count, model.dim))
    sq = np.sqrt(delta)
    for lam in range(L):
        dw[lam] = stream(seed, ROLE_INNER, path=lam, step=i).standard_normal((count, model.dim))
    dw *= sq
    x_next = _gbm_step(model, delta, x_anchor[:, None, :], dw)
    return x_next, truncated_weights(dw, delta, trunc_level)


def dump_paths_csv(paths: PathBatch, fname: str) -> None:
    """Debug dump, one row per (path, step, asset)."""
    n = paths.dw.shape[1]
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "asset", "x", "dw", "beta"])
        for lam in range(paths.count):
            for i in range(n):
                for d in range(paths.x.shape[2]):
                    w.writerow([lam, i, d, repr(paths.x[lam, i, d]), repr(paths.dw[lam, i, d]), repr(paths.beta[lam, i, d])])

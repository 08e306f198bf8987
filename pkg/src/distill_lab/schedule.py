"""Noise-schedule arithmetic and the forward diffusion process.

The variance-preserving forward process used everywhere in this package is

    x_t = sqrt(abar(t)) * x + sqrt(1 - abar(t)) * eps,    eps ~ N(0, I)

with a continuous time variable t in (0, 1).  abar(t) is backed by a discrete
ladder of ``num_steps`` rungs with per-rung noising rates beta_i interpolated
linearly between ``beta_start`` and ``beta_end``:

    abar[k] = prod_{i < k} (1 - beta_i)

Continuous t maps onto the ladder by linear interpolation, with abar(0) = 1
pinned, so t = k / num_steps reproduces the discrete product over the first k
rungs exactly.  The complement ``sigma_squared(t) = 1 - abar(t)`` is computed
as an exact difference so that sigma_squared + abar == 1 holds bitwise.

All arithmetic is float64: downstream algebraic-identity checks run at
near-machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_TIMESTEP_RANGE = (0.02, 0.98)


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta diffusion schedule with interpolated abar lookup."""

    kind: str = "linear-beta"
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    num_steps: int = 1000
    _grid_t: np.ndarray = field(init=False, repr=False, compare=False)
    _grid_abar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind != "linear-beta":
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise ConfigError(
                f"need 0 < beta_start <= beta_end < 1, got ({self.beta_start}, {self.beta_end})"
            )
        if self.num_steps < 1:
            raise ConfigError(f"num_steps must be >= 1, got {self.num_steps}")
        betas = np.linspace(self.beta_start, self.beta_end, self.num_steps)
        grid_abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        grid_t = np.linspace(0.0, 1.0, self.num_steps + 1)
        object.__setattr__(self, "_grid_t", grid_t)
        object.__setattr__(self, "_grid_abar", grid_abar)

    def alpha_bar(self, t: float) -> float:
        """Cumulative signal retention abar(t); strictly decreasing on (0, 1)."""
        if not 0.0 < t < 1.0:
            raise ValueError(f"timestep must lie in the open interval (0, 1), got {t}")
        return float(np.interp(t, self._grid_t, self._grid_abar))

    def sigma_squared(self, t: float) -> float:
        """Noise variance 1 - abar(t), the exact complement of alpha_bar."""
        return 1.0 - self.alpha_bar(t)

    def sigma(self, t: float) -> float:
        """Noise scale sqrt(1 - abar(t)), in (0, 1)."""
        return float(np.sqrt(self.sigma_squared(t)))


def add_noise(x: np.ndarray, t: float, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward process: sqrt(abar_t) * x + sqrt(1 - abar_t) * eps."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ValueError(f"state/noise shape mismatch: {x.shape} vs {eps.shape}")
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * x + np.sqrt(1.0 - abar) * eps


def sample_timestep(rng: np.random.Generator, t_range: tuple[float, float] = DEFAULT_TIMESTEP_RANGE) -> float:
    """Uniform timestep in [t_min, t_max]; a degenerate range returns t_min."""
    t_min, t_max = t_range
    if not (0.0 < t_min <= t_max < 1.0):
        raise ConfigError(f"timestep range must satisfy 0 < t_min <= t_max < 1, got {t_range}")
    if t_min == t_max:
        return float(t_min)
    return float(rng.uniform(t_min, t_max))

"""Conditional noise-prediction oracles.

An oracle answers eps_hat(x_t; c, t) for the four condition slots every
gradient rule consumes: the target prompt, the empty prompt, a general
negative prompt carrying no target information, and a target negative prompt
composed from the target text plus a negative fragment.

The analytic oracle backs each slot with a diagonal Gaussian mixture.  Under
the forward process, a component N(m, V) diffuses to

    N( sqrt(abar_t) * m,  abar_t * V + (1 - abar_t) )

and the exact noise prediction is -sigma_t times the score of the diffused
mixture, computed from per-component responsibilities in log space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import ConfigError, OracleError
from .rules import GuidanceTerms
from .schedule import NoiseSchedule

LOG_2PI = float(np.log(2.0 * np.pi))


class Slot(enum.Enum):
    """The four text-conditioning slots a score query may target."""

    TARGET = "target"
    NULL = "null"
    GENERAL_NEGATIVE = "gnp"
    TARGET_NEGATIVE = "tnp"


SLOT_ORDER = (Slot.TARGET, Slot.NULL, Slot.GENERAL_NEGATIVE, Slot.TARGET_NEGATIVE)


@dataclass(frozen=True)
class Condition:
    """A score-query condition: the slot, plus prompt text for remote oracles."""

    slot: Slot
    text: str = ""


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    variance: np.ndarray  # diagonal, elementwise > 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        variance = np.asarray(self.variance, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)
        if not self.weight > 0:
            raise ConfigError(f"component weight must be positive, got {self.weight}")
        if mean.ndim != 1 or variance.shape != mean.shape:
            raise ConfigError(f"mean/variance must be 1-d and matching, got {mean.shape} vs {variance.shape}")
        if not np.all(variance > 0):
            raise ConfigError("component variances must be strictly positive")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(variance))):
            raise ConfigError("component parameters must be finite")


@dataclass(frozen=True)
class GaussianMixtureScene:
    """One normalized mixture per condition slot, all sharing one dimension."""

    slots: Mapping[Slot, tuple[GaussianComponent, ...]]
    dim: int = field(init=False)

    def __post_init__(self):
        missing = [s.value for s in SLOT_ORDER if s not in self.slots]
        if missing:
            raise ConfigError(f"scene must populate every slot, missing {missing}")
        dims = {c.mean.shape[0] for comps in self.slots.values() for c in comps}
        if len(dims) != 1:
            raise ConfigError(f"all components must share one dim, got {sorted(dims)}")
        normalized = {}
        for slot, comps in self.slots.items():
            if not comps:
                raise ConfigError(f"slot {slot.value} has no components")
            total = sum(c.weight for c in comps)
            if abs(total - 1.0) <= 1e-12:
                # already normalized; renormalizing would perturb the weights
                # by an ulp and break exact persistence round-trips
                normalized[slot] = tuple(comps)
            else:
                normalized[slot] = tuple(
                    GaussianComponent(c.weight / total, c.mean, c.variance) for c in comps
                )
        object.__setattr__(self, "slots", normalized)
        object.__setattr__(self, "dim", dims.pop())


def marginal_at(
    mixture: Sequence[GaussianComponent], t: float, schedule: NoiseSchedule
) -> tuple[GaussianComponent, ...]:
    """Diffuse a mixture to time t: means shrink by sqrt(abar), variances blend toward 1."""
    abar = schedule.alpha_bar(t)
    return tuple(
        GaussianComponent(c.weight, np.sqrt(abar) * c.mean, abar * c.variance + (1.0 - abar))
        for c in mixture
    )


def component_log_densities(mixture_t: Sequence[GaussianComponent], x: np.ndarray) -> np.ndarray:
    """log(w_k) + log N(x; m_k, V_k) for each component of a diffused mixture."""
    out = np.empty(len(mixture_t))
    for k, c in enumerate(mixture_t):
        diff = x - c.mean
        out[k] = np.log(c.weight) - 0.5 * float(
            np.sum(diff * diff / c.variance) + np.sum(np.log(c.variance)) + x.shape[0] * LOG_2PI
        )
    return out


def log_density(mixture_t: Sequence[GaussianComponent], x: np.ndarray) -> float:
    """log p(x) under a diffused mixture, via log-sum-exp."""
    lw = component_log_densities(mixture_t, x)
    m = float(np.max(lw))
    return m + float(np.log(np.sum(np.exp(lw - m))))


def responsibilities(mixture_t: Sequence[GaussianComponent], x: np.ndarray) -> np.ndarray:
    """Posterior component weights at x, computed in log space."""
    lw = component_log_densities(mixture_t, x)
    lw -= np.max(lw)
    w = np.exp(lw)
    return w / np.sum(w)


def mixture_score(mixture_t: Sequence[GaussianComponent], x: np.ndarray) -> np.ndarray:
    """grad_x log p(x): responsibility-weighted sum of V_k^-1 (m_k - x)."""
    r = responsibilities(mixture_t, x)
    score = np.zeros_like(x)
    for k, c in enumerate(mixture_t):
        score += r[k] * (c.mean - x) / c.variance
    return score


class ScoreOracle(Protocol):
    def predict_noise(self, x_t: np.ndarray, t: float, cond: Condition) -> np.ndarray: ...


class AnalyticOracle:
    """Exact noise predictions from a Gaussian-mixture scene.

    Immutable after construction; queries are pure and safe to issue
    concurrently.
    """

    def __init__(self, scene: GaussianMixtureScene, schedule: NoiseSchedule | None = None):
        self.scene = scene
        self.schedule = schedule if schedule is not None else NoiseSchedule()

    def predict_noise(self, x_t: np.ndarray, t: float, cond: Condition) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        mixture = self.scene.slots.get(cond.slot)
        if mixture is None:
            raise OracleError("condition slot not present in scene", slot=getattr(cond.slot, "value", str(cond.slot)))
        if x_t.shape != (self.scene.dim,):
            raise ValueError(f"query dim {x_t.shape} does not match scene dim ({self.scene.dim},)")
        diffused = marginal_at(mixture, t, self.schedule)
        sigma = self.schedule.sigma(t)
        return -sigma * mixture_score(diffused, x_t)


def gather_terms(oracle: ScoreOracle, x_t: np.ndarray, t: float, eps: np.ndarray) -> GuidanceTerms:
    """Query all four condition slots at one (x_t, t) and bundle the results.

    Issues exactly one query per slot.  Any failure aborts the bundle with a
    slot-tagged error; no partial result is ever returned.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    preds = {}
    for slot in SLOT_ORDER:
        try:
            pred = oracle.predict_noise(x_t, t, Condition(slot))
        except OracleError as e:
            if e.slot is None:
                raise OracleError(str(e), slot=slot.value) from e
            raise
        except Exception as e:
            raise OracleError(f"oracle query failed: {e}", slot=slot.value) from e
        if pred.shape != x_t.shape:
            raise OracleError(
                f"prediction dim {pred.shape} does not match query dim {x_t.shape}", slot=slot.value
            )
        preds[slot] = pred
    return GuidanceTerms(
        eps_tgt=preds[Slot.TARGET],
        eps_null=preds[Slot.NULL],
        eps_gnp=preds[Slot.GENERAL_NEGATIVE],
        eps_tnp=preds[Slot.TARGET_NEGATIVE],
        eps=eps,
    )

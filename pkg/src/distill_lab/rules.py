"""Distillation gradient rules, the texture-factor schedule, and the min-norm solver.

Every rule consumes one :class:`GuidanceTerms` bundle — the four conditional
noise predictions plus the noise sample drawn for the step — and returns the
gradient direction used for descent on the state.  Conventions:

    cls                eps_tgt - eps_null
    sds(s)             (eps_null - eps) + s * cls
    nfsd(s, gate)      s * cls + (eps_null - [t < gate] * eps_gnp)
    csd(w1, w2)        w1 * cls + w2 * (eps_null - eps_gnp)
    bridge(w)          w * (eps_tgt - eps_tnp)
    fixed_a(a)         (eps_tgt - eps_tnp) + a * cls
    tbsd               mu * delta_s + (1 - mu) * factor(step) * delta_t

where delta_s = eps_tgt - eps_null (shape objective) and
delta_t = eps_tgt - eps_tnp (texture objective).  mu is the closed-form
minimizer of || mu * delta_s + (1 - mu) * delta_td ||^2 over [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np

from .errors import ConfigError

# Below this squared separation the two objectives are treated as equal and the
# min-norm combination is independent of mu.
DEGENERATE_SEPARATION_SQ = 1e-24


@dataclass(frozen=True)
class GuidanceTerms:
    """Noise predictions for one state at one timestep, plus the drawn noise."""

    eps_tgt: np.ndarray
    eps_null: np.ndarray
    eps_gnp: np.ndarray
    eps_tnp: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        vecs = (self.eps_tgt, self.eps_null, self.eps_gnp, self.eps_tnp, self.eps)
        shape = vecs[0].shape
        for v in vecs:
            if v.shape != shape:
                raise ValueError(f"guidance terms must share one shape, got {v.shape} vs {shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError("guidance terms must be finite")


@dataclass(frozen=True)
class FactorSchedule:
    """Decaying weight on the texture objective: max(alpha * (1 - step/beta), gamma)."""

    alpha: float = 5.0
    beta: float = 2000.0
    gamma: float = 2.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ConfigError(f"factor schedule parameters must be positive, got {self}")
        if self.gamma > self.alpha:
            raise ConfigError(f"gamma must not exceed alpha, got gamma={self.gamma} > alpha={self.alpha}")


@dataclass(frozen=True)
class SdsRule:
    kind: ClassVar[str] = "sds"
    s: float = 100.0

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise ConfigError(f"sds guidance scale must be positive, got {self.s}")


@dataclass(frozen=True)
class NfsdRule:
    kind: ClassVar[str] = "nfsd"
    s: float = 7.5
    gate_t: float = 0.2

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise ConfigError(f"nfsd guidance scale must be positive, got {self.s}")
        if not 0.0 < self.gate_t < 1.0:
            raise ConfigError(f"nfsd gate timestep must lie in (0, 1), got {self.gate_t}")


@dataclass(frozen=True)
class CsdRule:
    kind: ClassVar[str] = "csd"
    w1: float = 40.0
    w2_init: float = 40.0
    anneal_steps: int = 500

    def __post_init__(self):
        if not (math.isfinite(self.w1) and self.w1 > 0):
            raise ConfigError(f"csd w1 must be positive, got {self.w1}")
        if not (math.isfinite(self.w2_init) and self.w2_init >= 0):
            raise ConfigError(f"csd w2_init must be >= 0, got {self.w2_init}")
        if self.anneal_steps < 0:
            raise ConfigError(f"csd anneal_steps must be >= 0, got {self.anneal_steps}")


@dataclass(frozen=True)
class BridgeRule:
    # warmup_s is the guidance scale of the sds warmup phase preceding the
    # pure target-negative phase.
    kind: ClassVar[str] = "bridge"
    w: float = 25.0
    sds_warmup_steps: int = 500
    warmup_s: float = 40.0

    def __post_init__(self):
        if not (math.isfinite(self.w) and self.w > 0):
            raise ConfigError(f"bridge weight must be positive, got {self.w}")
        if self.sds_warmup_steps < 0:
            raise ConfigError(f"bridge warmup steps must be >= 0, got {self.sds_warmup_steps}")
        if not (math.isfinite(self.warmup_s) and self.warmup_s > 0):
            raise ConfigError(f"bridge warmup guidance scale must be positive, got {self.warmup_s}")


@dataclass(frozen=True)
class FixedARule:
    kind: ClassVar[str] = "fixed_a"
    a: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a >= 0):
            raise ConfigError(f"fixed_a coefficient must be >= 0, got {self.a}")


@dataclass(frozen=True)
class TbsdRule:
    kind: ClassVar[str] = "tbsd"
    schedule: FactorSchedule = FactorSchedule()


RuleConfig = Union[SdsRule, NfsdRule, CsdRule, BridgeRule, FixedARule, TbsdRule]

RULE_CLASSES = {cls.kind: cls for cls in (SdsRule, NfsdRule, CsdRule, BridgeRule, FixedARule, TbsdRule)}


@dataclass(frozen=True)
class MgdaResult:
    """Closed-form two-objective min-norm combination.

    ``raw_mu`` is the unclamped ratio, kept for diagnostics; ``mu`` is clamped
    to [0, 1].  ``degenerate`` flags near-equal objectives, where the combined
    vector does not depend on mu (0.5 is reported by convention).
    """

    mu: float
    raw_mu: float
    combined: np.ndarray
    degenerate: bool


def delta_cls(terms: GuidanceTerms) -> np.ndarray:
    """Conditional-minus-unconditional prediction gap."""
    return terms.eps_tgt - terms.eps_null


def delta_sds(terms: GuidanceTerms, s: float) -> np.ndarray:
    """Noise residual plus s-scaled conditioning gap: (eps_null - eps) + s * cls."""
    return (terms.eps_null - terms.eps) + s * (terms.eps_tgt - terms.eps_null)


def delta_nfsd(terms: GuidanceTerms, s: float, t: float, gate_t: float = 0.2) -> np.ndarray:
    """Noise-free rule; the general-negative term only engages for t below the gate."""
    gated = terms.eps_gnp if t < gate_t else np.zeros_like(terms.eps_gnp)
    return s * (terms.eps_tgt - terms.eps_null) + (terms.eps_null - gated)


def delta_csd(terms: GuidanceTerms, w1: float, w2: float) -> np.ndarray:
    """Two-weight rule: w1 * cls + w2 * (eps_null - eps_gnp)."""
    return w1 * (terms.eps_tgt - terms.eps_null) + w2 * (terms.eps_null - terms.eps_gnp)


def anneal_w2(step: int, w2_init: float, anneal_steps: int) -> float:
    """Linear ramp from w2_init at step 0 to zero at anneal_steps."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if anneal_steps == 0:
        return 0.0
    return w2_init * max(0.0, 1.0 - step / anneal_steps)


def delta_bridge(terms: GuidanceTerms, w: float) -> np.ndarray:
    """Target-negative rule: w * (eps_tgt - eps_tnp)."""
    return w * (terms.eps_tgt - terms.eps_tnp)


def delta_post(terms: GuidanceTerms, kind: str) -> np.ndarray:
    """Negative-suppression field: eps_null minus the chosen negative prediction."""
    if kind == "gnp":
        return terms.eps_null - terms.eps_gnp
    if kind == "tnp":
        return terms.eps_null - terms.eps_tnp
    raise ValueError(f"kind must be 'gnp' or 'tnp', got {kind!r}")


def delta_fixed_a(terms: GuidanceTerms, a: float) -> np.ndarray:
    """Target-negative rule with fixed-strength target injection: (eps_tgt - eps_tnp) + a * cls."""
    if a < 0:
        raise ValueError(f"injection coefficient must be >= 0, got {a}")
    return (terms.eps_tgt - terms.eps_tnp) + a * (terms.eps_tgt - terms.eps_null)


def shape_texture_objectives(terms: GuidanceTerms) -> tuple[np.ndarray, np.ndarray]:
    """The two objectives: shape delta_s = tgt - null, texture delta_t = tgt - tnp."""
    return terms.eps_tgt - terms.eps_null, terms.eps_tgt - terms.eps_tnp


def factor(step: int, sched: FactorSchedule) -> float:
    """Texture-objective weight at an iteration: max(alpha * (1 - step/beta), gamma)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return max(sched.alpha * (1.0 - step / sched.beta), sched.gamma)


def solve_mu(delta_s: np.ndarray, delta_td: np.ndarray) -> MgdaResult:
    """Minimize || mu * delta_s + (1 - mu) * delta_td ||^2 over mu in [0, 1].

    The raw stationary point is (delta_td - delta_s)' delta_td / ||delta_td - delta_s||^2,
    clamped to [0, 1].  Near-equal objectives are flagged degenerate.
    """
    if delta_s.shape != delta_td.shape:
        raise ValueError(f"objective shape mismatch: {delta_s.shape} vs {delta_td.shape}")
    diff = delta_td - delta_s
    denom = float(diff @ diff)
    if denom < DEGENERATE_SEPARATION_SQ:
        mu = 0.5
        return MgdaResult(mu, mu, mu * delta_s + (1.0 - mu) * delta_td, degenerate=True)
    raw = float(diff @ delta_td) / denom
    mu = min(max(raw, 0.0), 1.0)
    return MgdaResult(mu, raw, mu * delta_s + (1.0 - mu) * delta_td, degenerate=False)


def delta_tbsd(terms: GuidanceTerms, step: int, sched: FactorSchedule) -> tuple[np.ndarray, MgdaResult, float]:
    """Target-balanced rule: scale the texture objective, then min-norm combine.

    Returns (combined gradient, solver diagnostics, factor value).
    """
    delta_s, delta_t = shape_texture_objectives(terms)
    f = factor(step, sched)
    result = solve_mu(delta_s, f * delta_t)
    return result.combined, result, f


def tbsd_cfg_form(terms: GuidanceTerms, mu: float) -> np.ndarray:
    """Guidance-coefficient form of the balanced rule at unit factor.

    (eps_null - eps_tnp) + (eps_tgt - eps_null) / (1 - mu); equals the combined
    vector of :func:`delta_tbsd` (factor 1, same mu) divided by (1 - mu).
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"mu must lie in [0, 1), got {mu}")
    return (terms.eps_null - terms.eps_tnp) + (1.0 / (1.0 - mu)) * (terms.eps_tgt - terms.eps_null)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; zero when either is null."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)

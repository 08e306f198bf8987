"""The outer score-distillation loop.

Each step renders the parameters to a state vector, noises it at a sampled
timestep, gathers the four conditional noise predictions at that single
(x_t, eps) pair, dispatches the configured gradient rule, pulls the resulting
state-space direction back through the parameterization transpose, and applies
one Adam update with decoupled weight decay.

The shared (x_t, eps) per step is deliberate: every rule subtracts predictions
pairwise at one noised state, which is only meaningful for one noising.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DistillError, OracleError
from .oracle import AnalyticOracle, GaussianMixtureScene, Slot, gather_terms
from .rules import (
    BridgeRule,
    CsdRule,
    FixedARule,
    GuidanceTerms,
    NfsdRule,
    RuleConfig,
    SdsRule,
    TbsdRule,
    anneal_w2,
    cosine_similarity,
    delta_bridge,
    delta_csd,
    delta_fixed_a,
    delta_nfsd,
    delta_sds,
    delta_tbsd,
    shape_texture_objectives,
)
from .schedule import DEFAULT_TIMESTEP_RANGE, NoiseSchedule, add_noise, sample_timestep


@dataclass(frozen=True)
class Parameterization:
    """Mapping from parameters to the state the oracle sees.

    ``identity`` renders theta as-is; ``affine`` renders matrix @ theta + offset
    and pulls gradients back through the matrix transpose.
    """

    kind: str = "identity"
    dim: int = 0
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "identity":
            if self.dim < 1:
                raise ConfigError(f"identity parameterization needs dim >= 1, got {self.dim}")
        elif self.kind == "affine":
            if self.matrix is None or self.offset is None:
                raise ConfigError("affine parameterization needs matrix and offset")
            matrix = np.asarray(self.matrix, dtype=np.float64)
            offset = np.asarray(self.offset, dtype=np.float64)
            if matrix.ndim != 2 or offset.shape != (matrix.shape[0],):
                raise ConfigError(
                    f"affine shapes inconsistent: matrix {matrix.shape}, offset {offset.shape}"
                )
            object.__setattr__(self, "matrix", matrix)
            object.__setattr__(self, "offset", offset)
        else:
            raise ConfigError(f"unknown parameterization kind {self.kind!r}")

    @classmethod
    def identity(cls, dim: int) -> "Parameterization":
        return cls(kind="identity", dim=dim)

    @classmethod
    def affine(cls, matrix: np.ndarray, offset: np.ndarray) -> "Parameterization":
        return cls(kind="affine", matrix=matrix, offset=offset)

    @property
    def param_dim(self) -> int:
        return self.dim if self.kind == "identity" else self.matrix.shape[1]

    @property
    def state_dim(self) -> int:
        return self.dim if self.kind == "identity" else self.matrix.shape[0]

    def render(self, theta: np.ndarray) -> np.ndarray:
        if theta.shape != (self.param_dim,):
            raise ValueError(f"theta shape {theta.shape} does not match param_dim {self.param_dim}")
        if self.kind == "identity":
            return theta
        return self.matrix @ theta + self.offset

    def pullback(self, delta: np.ndarray) -> np.ndarray:
        """Transpose-map a state-space gradient into parameter space."""
        if self.kind == "identity":
            return delta
        return self.matrix.T @ delta


@dataclass(frozen=True)
class AdamState:
    """Adam moments plus hyperparameters (decoupled weight decay)."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def fresh(cls, dim: int, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
              eps_hat: float = 1e-8, weight_decay: float = 0.01) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), step=0, lr=lr, beta1=beta1,
                   beta2=beta2, eps_hat=eps_hat, weight_decay=weight_decay)


def adam_update(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One Adam step with decoupled weight decay; returns (theta', state')."""
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    theta_new = theta - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps_hat) + state.weight_decay * theta)
    return theta_new, replace(state, m=m, v=v, step=step)


@dataclass(frozen=True)
class InitSpec:
    """Initial theta: zeros, a gaussian cloud around the null mean, or explicit."""

    kind: str = "gaussian"
    scale: float = 1.0
    vector: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("zeros", "gaussian", "explicit"):
            raise ConfigError(f"unknown init kind {self.kind!r}")
        if self.kind == "explicit":
            if self.vector is None:
                raise ConfigError("explicit init needs a vector")
            object.__setattr__(self, "vector", np.asarray(self.vector, dtype=np.float64))
        elif self.kind == "gaussian" and not self.scale >= 0:
            raise ConfigError(f"gaussian init scale must be >= 0, got {self.scale}")


@dataclass(frozen=True)
class RunConfig:
    """Everything one optimization run depends on (with the seed, it is the run)."""

    rule: RuleConfig
    steps: int
    seed: int = 0
    scene: Union[GaussianMixtureScene, str] = None  # mixture scene, or remote endpoint
    timestep_range: tuple[float, float] = DEFAULT_TIMESTEP_RANGE
    wt_kind: str = "constant"  # or "sigma_squared"
    parameterization: Optional[Parameterization] = None
    init: InitSpec = InitSpec()
    record_every: int = 1
    schedule: NoiseSchedule = NoiseSchedule()
    state_dim: Optional[int] = None  # required for remote scenes with default parameterization
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    target_text: str = ""
    negative_fragment: Optional[str] = None  # None -> client default

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError(f"steps must be > 0, got {self.steps}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        if self.wt_kind not in ("constant", "sigma_squared"):
            raise ConfigError(f"unknown wt_kind {self.wt_kind!r}")
        if self.scene is None:
            raise ConfigError("config needs a scene (mixture or remote endpoint)")
        tmin, tmax = self.timestep_range
        if not (0.0 < tmin <= tmax < 1.0):
            raise ConfigError(f"invalid timestep range {self.timestep_range}")

    def resolved_parameterization(self) -> Parameterization:
        if self.parameterization is not None:
            return self.parameterization
        if isinstance(self.scene, GaussianMixtureScene):
            return Parameterization.identity(self.scene.dim)
        if self.state_dim is None:
            raise ConfigError("remote scenes need state_dim or an explicit parameterization")
        return Parameterization.identity(self.state_dim)


@dataclass(frozen=True)
class StepTrace:
    """Per-step diagnostics; only fields the active rule produces are set."""

    step: int
    t: float
    grad_norm: float
    cos_st: float
    mu: Optional[float] = None
    raw_mu: Optional[float] = None
    factor: Optional[float] = None


@dataclass
class RunRecord:
    """One optimization run: config snapshot, trace rows, final state, summary."""

    config: RunConfig
    traces: list[StepTrace]
    final_theta: np.ndarray
    summary: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    @property
    def seed(self) -> int:
        return self.config.seed

    def final_state(self) -> np.ndarray:
        return self.config.resolved_parameterization().render(self.final_theta)


def evaluate_rule(rule: RuleConfig, terms: GuidanceTerms, t: float, step: int) -> tuple[np.ndarray, dict]:
    """Dispatch one gradient rule; returns (delta, diagnostics)."""
    if isinstance(rule, SdsRule):
        return delta_sds(terms, rule.s), {}
    if isinstance(rule, NfsdRule):
        return delta_nfsd(terms, rule.s, t, rule.gate_t), {}
    if isinstance(rule, CsdRule):
        w2 = anneal_w2(step, rule.w2_init, rule.anneal_steps)
        return delta_csd(terms, rule.w1, w2), {}
    if isinstance(rule, BridgeRule):
        if step < rule.sds_warmup_steps:
            return delta_sds(terms, rule.warmup_s), {}
        return delta_bridge(terms, rule.w), {}
    if isinstance(rule, FixedARule):
        return delta_fixed_a(terms, rule.a), {}
    if isinstance(rule, TbsdRule):
        combined, result, f = delta_tbsd(terms, step, rule.schedule)
        return combined, {"mu": result.mu, "raw_mu": result.raw_mu, "factor": f}
    raise ConfigError(f"unknown rule {rule!r}")


def initial_theta(config: RunConfig, rng: np.random.Generator) -> np.ndarray:
    p = config.resolved_parameterization()
    spec = config.init
    if spec.kind == "zeros":
        return np.zeros(p.param_dim)
    if spec.kind == "explicit":
        if spec.vector.shape != (p.param_dim,):
            raise ConfigError(f"explicit init dim {spec.vector.shape} != param_dim {p.param_dim}")
        return spec.vector.copy()
    # gaussian: centered on the null mixture's mean when that is meaningful
    center = np.zeros(p.param_dim)
    if isinstance(config.scene, GaussianMixtureScene) and p.kind == "identity":
        null = config.scene.slots[Slot.NULL]
        center = sum(c.weight * c.mean for c in null)
    return center + spec.scale * rng.standard_normal(p.param_dim)


def build_oracle(config: RunConfig):
    if isinstance(config.scene, GaussianMixtureScene):
        return AnalyticOracle(config.scene, config.schedule)
    from .remote import DEFAULT_NEGATIVE_FRAGMENT, PromptSpec, RemoteOracle

    fragment = config.negative_fragment if config.negative_fragment is not None else DEFAULT_NEGATIVE_FRAGMENT
    return RemoteOracle(config.scene, PromptSpec(config.target_text, fragment))


def distill_step(
    config: RunConfig,
    theta: np.ndarray,
    opt_state: AdamState,
    rng: np.random.Generator,
    step: int,
    oracle,
    parameterization: Parameterization,
) -> tuple[np.ndarray, AdamState, StepTrace]:
    """One distillation step; pure given (theta, opt_state, rng state)."""
    t = sample_timestep(rng, config.timestep_range)
    eps = rng.standard_normal(parameterization.state_dim)
    x = parameterization.render(theta)
    x_t = add_noise(x, t, eps, config.schedule)
    terms = gather_terms(oracle, x_t, t, eps)
    delta, extras = evaluate_rule(config.rule, terms, t, step)
    d_s, d_t = shape_texture_objectives(terms)
    cos_st = cosine_similarity(d_s, d_t)
    wt = 1.0 if config.wt_kind == "constant" else config.schedule.sigma_squared(t)
    grad = parameterization.pullback(wt * delta)
    if not np.all(np.isfinite(grad)):
        raise DistillError(
            f"non-finite gradient at step {step}: t={t}, |theta|={np.linalg.norm(theta):.3e}, "
            f"|delta|={np.linalg.norm(delta):.3e}"
        )
    theta_new, opt_new = adam_update(opt_state, theta, grad)
    trace = StepTrace(
        step=step,
        t=t,
        grad_norm=float(np.linalg.norm(delta)),
        cos_st=cos_st,
        mu=extras.get("mu"),
        raw_mu=extras.get("raw_mu"),
        factor=extras.get("factor"),
    )
    return theta_new, opt_new, trace


def run(config: RunConfig) -> RunRecord:
    """Execute a run: sequential steps, a trace row every record_every steps."""
    started = time.perf_counter()
    parameterization = config.resolved_parameterization()
    oracle = build_oracle(config)
    rng = np.random.default_rng(config.seed)
    theta = initial_theta(config, rng)
    opt_state = AdamState.fresh(
        parameterization.param_dim,
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps_hat=config.adam_eps,
        weight_decay=config.weight_decay,
    )
    traces: list[StepTrace] = []
    try:
        for step in range(config.steps):
            try:
                theta, opt_state, trace = distill_step(
                    config, theta, opt_state, rng, step, oracle, parameterization
                )
            except OracleError as e:
                err = OracleError(f"run aborted at step {step}: {e}")
                err.slot = e.slot
                raise err from e
            except DistillError as e:
                raise DistillError(f"run aborted at step {step}: {e}") from e
            if step % config.record_every == 0:
                traces.append(trace)
    finally:
        close = getattr(oracle, "close", None)
        if close is not None:
            close()
    record = RunRecord(
        config=config,
        traces=traces,
        final_theta=theta,
        wall_clock_s=time.perf_counter() - started,
    )
    record.summary = summarize_traces(record)
    return record


def summarize_traces(record: RunRecord) -> dict:
    """Aggregate trace diagnostics; recomputable from the record alone."""
    traces = record.traces
    mus = [tr.mu for tr in traces if tr.mu is not None]
    cos = [tr.cos_st for tr in traces]
    return {
        "steps": record.config.steps,
        "recorded": len(traces),
        "final_grad_norm": traces[-1].grad_norm if traces else None,
        "final_mu_mean": float(np.mean(mus)) if mus else None,
        "cos_st_positive_fraction": float(np.mean([c > 0 for c in cos])) if cos else None,
    }

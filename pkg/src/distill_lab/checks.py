"""Built-in cross-validation checks.

Each check pits one implementation against an independent route to the same
quantity: analytic noise predictions against finite differences of the log
density, the closed-form min-norm weight against grid enumeration, and the
single-expression rules against their expanded forms.  The checks double as
the validation command and the core of the acceptance suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .oracle import (
    AnalyticOracle,
    Condition,
    GaussianComponent,
    GaussianMixtureScene,
    Slot,
    SLOT_ORDER,
    log_density,
    marginal_at,
)
from .rules import (
    FactorSchedule,
    GuidanceTerms,
    delta_bridge,
    delta_sds,
    delta_tbsd,
    solve_mu,
    tbsd_cfg_form,
)
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    detail: str
    elapsed_s: float


def random_scene(rng: np.random.Generator, dim: int) -> GaussianMixtureScene:
    slots = {}
    for slot in SLOT_ORDER:
        comps = []
        for _ in range(int(rng.integers(1, 4))):
            comps.append(
                GaussianComponent(
                    weight=float(rng.uniform(0.2, 1.0)),
                    mean=rng.normal(0.0, 2.0, size=dim),
                    variance=np.exp(rng.uniform(np.log(0.05), np.log(4.0), size=dim)),
                )
            )
        slots[slot] = tuple(comps)
    return GaussianMixtureScene(slots)


def _sample_from_diffused(rng, mixture_t):
    weights = np.array([c.weight for c in mixture_t])
    k = int(rng.choice(len(mixture_t), p=weights / weights.sum()))
    c = mixture_t[k]
    return c.mean + np.sqrt(c.variance) * rng.standard_normal(c.mean.shape[0])


def check_score_finite_difference(cases: int = 100, seed: int = 1234, tol: float = 1e-5,
                                  h: float = 1e-5) -> CheckResult:
    """Analytic eps_hat vs -sigma_t times a central finite difference of log p_t."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    schedule = NoiseSchedule()
    worst = 0.0
    for case in range(cases):
        dim = int(rng.choice([2, 3, 4, 6]))
        scene = random_scene(rng, dim)
        oracle = AnalyticOracle(scene, schedule)
        slot = SLOT_ORDER[case % len(SLOT_ORDER)]
        t = float(rng.uniform(0.05, 0.95))
        diffused = marginal_at(scene.slots[slot], t, schedule)
        # keep the comparison well conditioned: redraw when the prediction is tiny
        for _ in range(50):
            x_t = _sample_from_diffused(rng, diffused)
            eps_hat = oracle.predict_noise(x_t, t, Condition(slot))
            if np.linalg.norm(eps_hat) > 1e-3:
                break
        fd = np.empty(dim)
        for i in range(dim):
            bump = np.zeros(dim)
            bump[i] = h
            fd[i] = (log_density(diffused, x_t + bump) - log_density(diffused, x_t - bump)) / (2 * h)
        rel = float(np.linalg.norm(eps_hat + schedule.sigma(t) * fd) / np.linalg.norm(eps_hat))
        worst = max(worst, rel)
    return CheckResult(
        name="score-finite-difference",
        passed=worst < tol,
        max_error=worst,
        detail=f"{cases} random (scene, x_t, t), rel err vs central difference h={h:g}, tol {tol:g}",
        elapsed_s=time.perf_counter() - started,
    )


def check_mu_grid(pairs: int = 1000, dims: tuple[int, ...] = (2, 16, 4096), seed: int = 5678,
                  grid_step: float = 1e-4, mu_tol: float = 1e-3, norm_tol: float = 1e-9,
                  mu_bias: float = 0.0) -> CheckResult:
    """Closed-form min-norm weight vs brute-force grid enumeration over [0, 1].

    ``mu_bias`` is a fault-injection hook used by the validation command's
    self-test: it perturbs the solver output so the check must fail.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    grid = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    worst_mu = 0.0
    worst_norm = 0.0
    for dim in dims:
        scale = 1.0 / np.sqrt(dim)
        for _ in range(pairs):
            a = rng.standard_normal(dim) * scale
            b = rng.standard_normal(dim) * scale
            result = solve_mu(a, b)
            mu = min(max(result.mu + mu_bias, 0.0), 1.0)
            combined = mu * a + (1.0 - mu) * b
            norm_sq = float(combined @ combined)
            aa = float(a @ a)
            ab = float(a @ b)
            bb = float(b @ b)
            values = grid * grid * aa + 2.0 * grid * (1.0 - grid) * ab + (1.0 - grid) ** 2 * bb
            idx = int(np.argmin(values))
            worst_norm = max(worst_norm, norm_sq - float(values[idx]))
            if 0 < idx < len(grid) - 1:
                worst_mu = max(worst_mu, abs(mu - float(grid[idx])))
    passed = worst_mu <= mu_tol and worst_norm <= norm_tol
    return CheckResult(
        name="mu-vs-grid",
        passed=passed,
        max_error=worst_mu,
        detail=(
            f"{pairs} pairs per dim in {dims}, grid step {grid_step:g}; "
            f"max |mu_closed - mu_grid| = {worst_mu:.3e} (tol {mu_tol:g}), "
            f"max norm^2 excess = {worst_norm:.3e} (tol {norm_tol:g})"
        ),
        elapsed_s=time.perf_counter() - started,
    )


def _random_terms(rng: np.random.Generator, dim: int) -> GuidanceTerms:
    return GuidanceTerms(*(rng.standard_normal(dim) for _ in range(5)))


def _ulp_distance(lhs: np.ndarray, rhs: np.ndarray, scale: np.ndarray) -> float:
    return float(np.max(np.abs(lhs - rhs) / np.spacing(scale)))


def check_bridge_identity(trials: int = 1000, dim: int = 8, seed: int = 91011,
                          max_ulps: float = 4.0) -> CheckResult:
    """w * (tgt - tnp) vs its two-term expansion through the null prediction."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        terms = _random_terms(rng, dim)
        w = float(rng.uniform(0.5, 100.0))
        lhs = delta_bridge(terms, w)
        first = w * (terms.eps_tgt - terms.eps_null)
        second = w * (terms.eps_null - terms.eps_tnp)
        rhs = first + second
        # rounding happens at the scale of the two expansion terms, not of the
        # (possibly cancelled) result
        scale = np.maximum.reduce([np.abs(first), np.abs(second), np.abs(lhs)])
        worst = max(worst, _ulp_distance(lhs, rhs, np.maximum(scale, 1e-300)))
    return CheckResult(
        name="bridge-identity",
        passed=worst <= max_ulps,
        max_error=worst,
        detail=f"{trials} random terms, max per-component distance {worst:.2f} ulps (tol {max_ulps:g})",
        elapsed_s=time.perf_counter() - started,
    )


def check_sds_telescoping(trials: int = 1000, dim: int = 8, seed: int = 121314,
                          max_ulps: float = 2.0) -> CheckResult:
    """delta_sds at s=1 vs eps_tgt - eps: the null terms telescope away."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        terms = _random_terms(rng, dim)
        lhs = delta_sds(terms, 1.0)
        rhs = terms.eps_tgt - terms.eps
        scale = np.maximum.reduce(
            [np.abs(terms.eps_null - terms.eps), np.abs(terms.eps_tgt - terms.eps_null), np.abs(rhs)]
        )
        worst = max(worst, _ulp_distance(lhs, rhs, np.maximum(scale, 1e-300)))
    return CheckResult(
        name="sds-telescoping",
        passed=worst <= max_ulps,
        max_error=worst,
        detail=f"{trials} random terms, max per-component distance {worst:.2f} ulps (tol {max_ulps:g})",
        elapsed_s=time.perf_counter() - started,
    )


def check_cfg_form(trials: int = 1000, dim: int = 8, seed: int = 151617,
                   tol: float = 1e-12) -> CheckResult:
    """Guidance-coefficient form vs the min-norm combination divided by (1 - mu)."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    unit = FactorSchedule(alpha=1.0, beta=1.0, gamma=1.0)
    worst = 0.0
    done = 0
    while done < trials:
        terms = _random_terms(rng, dim)
        combined, result, _ = delta_tbsd(terms, 0, unit)
        if result.mu > 1.0 - 1e-6:
            continue  # coefficient form undefined at mu = 1
        lhs = tbsd_cfg_form(terms, result.mu)
        rhs = combined / (1.0 - result.mu)
        rel = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))
        worst = max(worst, rel)
        done += 1
    return CheckResult(
        name="cfg-form-equivalence",
        passed=worst < tol,
        max_error=worst,
        detail=f"{trials} random terms at unit factor, max relative error {worst:.3e} (tol {tol:g})",
        elapsed_s=time.perf_counter() - started,
    )


def run_all_checks(mu_bias: float = 0.0) -> list[CheckResult]:
    return [
        check_score_finite_difference(),
        check_mu_grid(mu_bias=mu_bias),
        check_bridge_identity(),
        check_sds_telescoping(),
        check_cfg_form(),
    ]

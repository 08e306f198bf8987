import numpy as np

from distill_lab import GaussianComponent, GaussianMixtureScene, NoiseSchedule, Slot
from distill_lab.rules import GuidanceTerms


def t_for_abar(schedule: NoiseSchedule, target: float) -> float:
    """Invert alpha_bar by bisection (alpha_bar is continuous and decreasing)."""
    lo, hi = 1e-9, 1.0 - 1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if schedule.alpha_bar(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_terms(rng: np.random.Generator, dim: int = 8) -> GuidanceTerms:
    return GuidanceTerms(*(rng.standard_normal(dim) for _ in range(5)))


def shared_mixture_scene(dim: int = 3) -> GaussianMixtureScene:
    """Degenerate scene: every slot holds the same single Gaussian."""
    comp = (GaussianComponent(1.0, np.zeros(dim), np.ones(dim)),)
    return GaussianMixtureScene({slot: comp for slot in Slot})

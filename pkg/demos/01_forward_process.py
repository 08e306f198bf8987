"""Forward diffusion basics: the noise schedule and the noising map.

The schedule exposes abar(t) (cumulative signal retention) over continuous
t in (0,1), backed by a 1000-rung linear-beta ladder. sigma_squared(t) is the
exact complement, so signal and noise energies always sum to one.
"""

import numpy as np

from distill_lab import NoiseSchedule, add_noise, sample_timestep

schedule = NoiseSchedule()

print("t        abar(t)      sigma(t)   abar+sigma^2")
for t in (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99):
    abar = schedule.alpha_bar(t)
    sigma = schedule.sigma(t)
    total = abar + schedule.sigma_squared(t)
    print(f"{t:5.2f}  {abar:12.6f}  {sigma:9.6f}  {total:14.12f}")

x = np.array([2.0, 2.0, 1.0, 1.0])
rng = np.random.default_rng(0)
print("\nnoising a fixed state at increasing t (one draw each):")
for t in (0.05, 0.3, 0.6, 0.9):
    eps = rng.standard_normal(4)
    x_t = add_noise(x, t, eps, schedule)
    print(f"  t={t:4.2f}  x_t={np.round(x_t, 3)}")

rng = np.random.default_rng(42)
draws = [sample_timestep(rng, (0.02, 0.98)) for _ in range(5)]
print("\ntimestep draws (seeded, reproducible):", np.round(draws, 4))

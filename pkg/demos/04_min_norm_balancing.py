"""The two-objective min-norm combination and the texture-weight schedule.

mu minimizes ||mu * d_s + (1 - mu) * d_td||^2 over [0, 1] in closed form.
When one objective's norm dwarfs the other, the solution leans on the smaller
one; scaling the texture objective up early therefore makes the combination
shape-dominated, and the decay of the factor hands weight back to texture.
"""

import numpy as np

from distill_lab import FactorSchedule, factor, solve_mu

print("geometry examples:")
for d_s, d_td in [
    (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
    (np.array([0.0, 0.0]), np.array([3.0, 4.0])),
    (np.array([1.0, 0.0]), np.array([2.0, 0.0])),
    (np.array([1.0, 0.2]), np.array([8.0, 6.0])),
]:
    res = solve_mu(d_s, d_td)
    print(f"  d_s={d_s} d_td={d_td}  ->  mu={res.mu:.4f} (raw {res.raw_mu:.4f})"
          f"  combined={np.round(res.combined, 3)}  |combined|={np.linalg.norm(res.combined):.3f}")

print("\nclosed form vs grid search on random pairs:")
rng = np.random.default_rng(3)
grid = np.linspace(0.0, 1.0, 10001)
for _ in range(3):
    a, b = rng.standard_normal(16), rng.standard_normal(16)
    res = solve_mu(a, b)
    values = grid**2 * (a @ a) + 2 * grid * (1 - grid) * (a @ b) + (1 - grid) ** 2 * (b @ b)
    k = int(np.argmin(values))
    print(f"  mu_closed={res.mu:.6f}  mu_grid={grid[k]:.6f}  "
          f"norm2_closed={res.combined @ res.combined:.6f}  norm2_grid={values[k]:.6f}")

print("\ntexture factor schedule max(alpha*(1 - step/beta), gamma), alpha=5 beta=2000 gamma=2:")
sched = FactorSchedule(alpha=5.0, beta=2000.0, gamma=2.0)
for step in (0, 400, 800, 1200, 1600, 2000):
    print(f"  step {step:5d}: factor {factor(step, sched):.2f}")

print("\namplifying one objective shifts mu toward the other (norm balancing):")
d_s = np.array([1.2, 0.1, 0.3])
d_t = np.array([0.4, 0.8, -0.5])
for f in (5.0, 3.0, 2.0, 1.0, 0.5):
    res = solve_mu(d_s, f * d_t)
    print(f"  factor {f:4.1f}: mu = {res.mu:.3f}")

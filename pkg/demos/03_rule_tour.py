"""A tour of the gradient rules at one noised state of the canonical testbed.

All rules consume the same four conditional predictions plus the drawn noise.
The printout shows how each family weights the conditioning gap (tgt - null)
against a negative-prompt term, and checks two algebraic identities on the
spot.
"""

import numpy as np

from distill_lab import (
    AnalyticOracle,
    NoiseSchedule,
    add_noise,
    build_canonical_testbed,
    delta_bridge,
    delta_cls,
    delta_csd,
    delta_fixed_a,
    delta_nfsd,
    delta_post,
    delta_sds,
    delta_tbsd,
    gather_terms,
    shape_texture_objectives,
    tbsd_cfg_form,
)
from distill_lab.rules import FactorSchedule

schedule = NoiseSchedule()
scene = build_canonical_testbed()
oracle = AnalyticOracle(scene, schedule)
rng = np.random.default_rng(7)

state = np.array([1.0, 1.2, 0.4, 0.3, 0.5, 0.2, 0.6, 0.1])  # partway toward the target
t = 0.3
eps = rng.standard_normal(8)
x_t = add_noise(state, t, eps, schedule)
terms = gather_terms(oracle, x_t, t, eps)


def show(name, vec):
    print(f"  {name:22s} |shape|={np.linalg.norm(vec[:2]):8.3f}  |texture|={np.linalg.norm(vec[2:]):8.3f}")


print(f"state={state}, t={t}\n")
show("cls = tgt - null", delta_cls(terms))
show("sds (s=100)", delta_sds(terms, 100.0))
show("nfsd (s=7.5)", delta_nfsd(terms, 7.5, t))
show("csd (w1=w2=40)", delta_csd(terms, 40.0, 40.0))
show("bridge (w=25)", delta_bridge(terms, 25.0))
show("fixed_a (a=1)", delta_fixed_a(terms, 1.0))
show("post_gnp", delta_post(terms, "gnp"))
show("post_tnp", delta_post(terms, "tnp"))

combined, result, f = delta_tbsd(terms, step=0, sched=FactorSchedule(5.0, 2000.0, 2.0))
show(f"tbsd (mu={result.mu:.3f}, f={f:.0f})", combined)

d_s, d_t = shape_texture_objectives(terms)
print("\nbridge: the target-negative difference has (near-)zero shape force here:")
print(f"  |delta_t shape| / |delta_t texture| = "
      f"{np.linalg.norm(d_t[:2]) / np.linalg.norm(d_t[2:]):.2e}")

expansion = 25.0 * (terms.eps_tgt - terms.eps_null) + 25.0 * (terms.eps_null - terms.eps_tnp)
print(f"bridge two-term expansion max component gap: "
      f"{np.max(np.abs(delta_bridge(terms, 25.0) - expansion)):.2e}")

unit = FactorSchedule(1.0, 1.0, 1.0)
combined1, res1, _ = delta_tbsd(terms, 0, unit)
if res1.mu < 1.0:
    cfg = tbsd_cfg_form(terms, res1.mu)
    rel = np.linalg.norm(cfg - combined1 / (1 - res1.mu)) / np.linalg.norm(cfg)
    print(f"guidance-coefficient form vs combined/(1-mu): rel err {rel:.2e} "
          f"(implied guidance scale 1/(1-mu) = {1 / (1 - res1.mu):.2f})")

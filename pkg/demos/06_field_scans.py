"""Delta-field scans over 2-d slices of x_t space, saved as CSV and PNG.

Scans the negative-suppression fields (post_gnp, post_tnp), the conditioning
field (cls), and the target-negative difference (bridge) over the two leading
texture dims, anchored at the diffused target-negative mean. The PNG shows
per-node magnitudes split into shape and texture contributions.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from distill_lab import GridSpec, NoiseSchedule, Slot, build_canonical_testbed, field_scan
from distill_lab.harness import diffused_slot_mean

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

schedule = NoiseSchedule()
scene = build_canonical_testbed()
t = 0.5
anchor = diffused_slot_mean(scene, Slot.TARGET_NEGATIVE, t, schedule)
grid = GridSpec(dims=(2, 3), lo=-3.0, hi=3.0, resolution=24, anchor=anchor)

fields = ("cls", "post_gnp", "post_tnp", "bridge")
fig, axes = plt.subplots(2, len(fields), figsize=(4 * len(fields), 7), constrained_layout=True)
for col, name in enumerate(fields):
    scan = field_scan(scene, t, grid, name, schedule)
    tex = np.linalg.norm(scan.vectors[:, :, 2:], axis=2)
    shp = np.linalg.norm(scan.vectors[:, :, :2], axis=2)
    for row, (mag, label) in enumerate([(tex, "texture dims"), (shp, "shape dims")]):
        ax = axes[row, col]
        im = ax.imshow(mag.T, origin="lower", extent=[grid.lo, grid.hi, grid.lo, grid.hi], cmap="magma")
        ax.set_title(f"{name} |{label}|")
        fig.colorbar(im, ax=ax, shrink=0.8)
    print(f"{name:10s} mean |texture|={tex.mean():.3f}  mean |shape|={shp.mean():.3f}")
    rows = ["u,v," + ",".join(f"vec_{d}" for d in range(scene.dim))]
    for a in range(grid.resolution):
        for b in range(grid.resolution):
            rows.append(",".join(map(repr, [scan.u[a], scan.v[b], *scan.vectors[a, b]])))
    (out_dir / f"field_{name}.csv").write_text("\n".join(rows) + "\n")

fig.suptitle(f"delta fields over texture dims (2,3) at t={t}, anchored at the diffused tnp mean")
fig.savefig(out_dir / "field_scans.png", dpi=120)
print(f"\nwrote CSVs and {out_dir / 'field_scans.png'}")
print("post_tnp concentrates on texture at this anchor; post_gnp has exactly zero")
print("shape component here because the general-negative and null slots share")
print("identical shape marginals.")

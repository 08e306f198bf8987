"""Canonical testbed, metrics, delta-field scans, and multi-rule sweeps.

The canonical testbed is an 8-dimensional scene whose first two dimensions
play the role of coarse structure ("shape") and whose remaining six carry a
bimodal fine structure ("texture").  The target slot is a two-mode mixture at
texture +/-1; the target-negative slot matches the target's shape mean exactly
but sits at the texture barycenter.  Two consequences drive every diagnostic
here:

  * eps_tgt - eps_tnp cancels in the shape dimensions (matched means and
    variances), so a rule built on that difference alone has no shape-restoring
    force;
  * averaging rules settle at the texture barycenter, a sqrt(6) distance from
    either mode, while mode-seeking rules reach a mode.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DistillError
from .oracle import (
    AnalyticOracle,
    GaussianComponent,
    GaussianMixtureScene,
    Slot,
    gather_terms,
)
from .optim import RunConfig, RunRecord, run
from .rules import (
    FactorSchedule,
    delta_bridge,
    delta_cls,
    delta_post,
    delta_tbsd,
)
from .schedule import NoiseSchedule
from .serialize import scenes_equal

SHAPE_DIMS = (0, 1)
TEXTURE_DIMS = (2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class CanonicalTestbed:
    scene: GaussianMixtureScene
    shape_dims: tuple[int, ...] = SHAPE_DIMS
    texture_dims: tuple[int, ...] = TEXTURE_DIMS

    @property
    def shape_target(self) -> np.ndarray:
        return self.scene.slots[Slot.TARGET][0].mean[list(self.shape_dims)]

    @property
    def texture_modes(self) -> np.ndarray:
        return np.stack(
            [c.mean[list(self.texture_dims)] for c in self.scene.slots[Slot.TARGET]]
        )


def build_canonical_testbed() -> GaussianMixtureScene:
    """The 8-d shape/texture scene used by metrics, sweeps, and field scans."""
    tight = np.full(8, 0.05)
    broad = np.full(8, 4.0)
    gnp_var = np.array([4.0, 4.0] + [0.05] * 6)
    target_up = np.array([2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    target_down = np.array([2.0, 2.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0])
    tnp_mean = np.array([2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    return GaussianMixtureScene(
        {
            Slot.TARGET: (
                GaussianComponent(0.5, target_up, tight),
                GaussianComponent(0.5, target_down, tight),
            ),
            Slot.NULL: (GaussianComponent(1.0, np.zeros(8), broad),),
            Slot.GENERAL_NEGATIVE: (GaussianComponent(1.0, np.zeros(8), gnp_var),),
            Slot.TARGET_NEGATIVE: (GaussianComponent(1.0, tnp_mean, tight),),
        }
    )


def canonical_testbed() -> CanonicalTestbed:
    return CanonicalTestbed(scene=build_canonical_testbed())


def single_target_scene(mean: np.ndarray, variance: float = 0.01, background_variance: float = 1.0) -> GaussianMixtureScene:
    """A scene with one tight Gaussian target; all other slots share one broad Gaussian."""
    mean = np.asarray(mean, dtype=np.float64)
    dim = mean.shape[0]
    background = (GaussianComponent(1.0, np.zeros(dim), np.full(dim, background_variance)),)
    return GaussianMixtureScene(
        {
            Slot.TARGET: (GaussianComponent(1.0, mean, np.full(dim, variance)),),
            Slot.NULL: background,
            Slot.GENERAL_NEGATIVE: background,
            Slot.TARGET_NEGATIVE: background,
        }
    )


@dataclass(frozen=True)
class Metrics:
    """Desk-scale proxies: shape_error is distance to the target's coarse mean,
    texture_error is distance to the nearest texture mode (ties to the first)."""

    shape_error: float
    texture_error: float
    final_mu_mean: Optional[float]
    cos_st_positive_fraction: Optional[float]


def compute_metrics(record: RunRecord, testbed: CanonicalTestbed | None = None) -> Metrics:
    testbed = testbed if testbed is not None else canonical_testbed()
    scene = record.config.scene
    if not isinstance(scene, GaussianMixtureScene) or not scenes_equal(scene, testbed.scene):
        raise ConfigError("metrics are defined against the canonical testbed; record uses a different scene")
    state = record.final_state()
    shape_error = float(np.linalg.norm(state[list(testbed.shape_dims)] - testbed.shape_target))
    texture = state[list(testbed.texture_dims)]
    distances = np.linalg.norm(testbed.texture_modes - texture, axis=1)
    texture_error = float(distances[int(np.argmin(distances))])
    summary = record.summary or {}
    return Metrics(
        shape_error=shape_error,
        texture_error=texture_error,
        final_mu_mean=summary.get("final_mu_mean"),
        cos_st_positive_fraction=summary.get("cos_st_positive_fraction"),
    )


@dataclass(frozen=True)
class GridSpec:
    """A 2-d slice of x_t space: scanned dims, bounds, resolution, and the
    anchor the remaining coordinates are held at (zeros when omitted)."""

    dims: tuple[int, int]
    lo: float = -3.0
    hi: float = 3.0
    resolution: int = 16
    anchor: Optional[np.ndarray] = None

    def __post_init__(self):
        i, j = self.dims
        if i == j:
            raise ConfigError(f"grid dims must differ, got {self.dims}")
        if self.resolution < 2:
            raise ConfigError(f"grid resolution must be >= 2, got {self.resolution}")
        if not self.lo < self.hi:
            raise ConfigError(f"grid range must satisfy lo < hi, got ({self.lo}, {self.hi})")


@dataclass
class FieldScan:
    field: str
    t: float
    u: np.ndarray  # scanned values along dims[0]
    v: np.ndarray  # scanned values along dims[1]
    dims: tuple[int, int]
    vectors: np.ndarray  # (resolution, resolution, dim)


FIELD_NAMES = ("cls", "post_gnp", "post_tnp", "bridge", "tbsd")

_UNIT_FACTOR = FactorSchedule(alpha=1.0, beta=1.0, gamma=1.0)

_FIELD_FNS: dict[str, Callable] = {
    "cls": delta_cls,
    "post_gnp": lambda terms: delta_post(terms, "gnp"),
    "post_tnp": lambda terms: delta_post(terms, "tnp"),
    "bridge": lambda terms: delta_bridge(terms, 1.0),
    "tbsd": lambda terms: delta_tbsd(terms, 0, _UNIT_FACTOR)[0],
}


def diffused_slot_mean(scene: GaussianMixtureScene, slot: Slot, t: float,
                       schedule: NoiseSchedule | None = None) -> np.ndarray:
    """Weight-averaged mean of a slot's diffused mixture; a natural scan anchor."""
    schedule = schedule if schedule is not None else NoiseSchedule()
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * sum(c.weight * c.mean for c in scene.slots[slot])


def field_scan(scene: GaussianMixtureScene, t: float, grid: GridSpec, field: str,
               schedule: NoiseSchedule | None = None) -> FieldScan:
    """Evaluate one delta field over a 2-d slice of x_t space."""
    if field not in _FIELD_FNS:
        raise ConfigError(f"unknown field {field!r}; valid fields: {', '.join(FIELD_NAMES)}")
    i, j = grid.dims
    if not (0 <= i < scene.dim and 0 <= j < scene.dim):
        raise ConfigError(f"grid dims {grid.dims} out of range for scene dim {scene.dim}")
    anchor = grid.anchor if grid.anchor is not None else np.zeros(scene.dim)
    anchor = np.asarray(anchor, dtype=np.float64)
    if anchor.shape != (scene.dim,):
        raise ConfigError(f"anchor dim {anchor.shape} does not match scene dim {scene.dim}")
    oracle = AnalyticOracle(scene, schedule if schedule is not None else NoiseSchedule())
    fn = _FIELD_FNS[field]
    u = np.linspace(grid.lo, grid.hi, grid.resolution)
    v = np.linspace(grid.lo, grid.hi, grid.resolution)
    zero_eps = np.zeros(scene.dim)
    vectors = np.empty((grid.resolution, grid.resolution, scene.dim))
    for a, ua in enumerate(u):
        for b, vb in enumerate(v):
            x = anchor.copy()
            x[i] = ua
            x[j] = vb
            terms = gather_terms(oracle, x, t, zero_eps)
            vectors[a, b] = fn(terms)
    return FieldScan(field=field, t=t, u=u, v=v, dims=grid.dims, vectors=vectors)


@dataclass
class SweepCell:
    config_index: int
    rule_name: str
    seed: int
    record: Optional[RunRecord]
    metrics: Optional[Metrics]
    error: Optional[str]


@dataclass
class SummaryTable:
    cells: list[SweepCell]
    aggregates: dict  # rule_name -> mean/std of final errors over its successful cells


def _run_cell(config: RunConfig) -> RunRecord:
    return run(config)


def sweep(configs: Sequence[RunConfig], seeds: Sequence[int], jobs: int = 1,
          testbed: CanonicalTestbed | None = None) -> SummaryTable:
    """Run every (config, seed) pair; failures are recorded per cell, never raised.

    Cells are always assembled in (config index, seed index) order, so the
    table is deterministic regardless of ``jobs``.
    """
    if not configs or not seeds:
        raise ConfigError("sweep needs at least one config and one seed")
    tasks = [
        (ci, replace(config, seed=seed))
        for ci, config in enumerate(configs)
        for seed in seeds
    ]
    records: list[RunRecord | Exception] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, cfg) for _, cfg in tasks]
            for fut in futures:
                try:
                    records.append(fut.result())
                except Exception as e:  # per-cell isolation
                    records.append(e)
    else:
        for _, cfg in tasks:
            try:
                records.append(_run_cell(cfg))
            except DistillError as e:
                records.append(e)
    cells: list[SweepCell] = []
    for (ci, cfg), outcome in zip(tasks, records):
        rule_name = type(cfg.rule).kind
        if isinstance(outcome, Exception):
            cells.append(SweepCell(ci, rule_name, cfg.seed, None, None, str(outcome)))
            continue
        metrics = None
        if testbed is not None:
            try:
                metrics = compute_metrics(outcome, testbed)
            except ConfigError:
                metrics = None
        cells.append(SweepCell(ci, rule_name, cfg.seed, outcome, metrics, None))
    return SummaryTable(cells=cells, aggregates=aggregate_cells(cells))


def aggregate_cells(cells: Sequence[SweepCell]) -> dict:
    grouped: dict[str, list[Metrics]] = {}
    for cell in cells:
        if cell.metrics is not None:
            grouped.setdefault(cell.rule_name, []).append(cell.metrics)
    out = {}
    for rule_name, metrics in grouped.items():
        shape = np.array([m.shape_error for m in metrics])
        texture = np.array([m.texture_error for m in metrics])
        out[rule_name] = {
            "n": len(metrics),
            "shape_error_mean": float(shape.mean()),
            "shape_error_std": float(shape.std()),
            "texture_error_mean": float(texture.mean()),
            "texture_error_std": float(texture.std()),
        }
    return out


def table_to_csv_rows(table: SummaryTable) -> list[list[str]]:
    """Rows for summary_table.csv: rule, seed, shape_error, texture_error, final_mu_mean, error."""
    rows = [["rule", "seed", "shape_error", "texture_error", "final_mu_mean", "error"]]
    for cell in table.cells:
        if cell.metrics is not None:
            shape = repr(cell.metrics.shape_error)
            texture = repr(cell.metrics.texture_error)
            mu = "" if cell.metrics.final_mu_mean is None else repr(cell.metrics.final_mu_mean)
        else:
            shape = texture = mu = ""
        rows.append([cell.rule_name, str(cell.seed), shape, texture, mu, cell.error or ""])
    return rows

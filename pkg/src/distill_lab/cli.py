"""Command-line entry point: run, sweep, validate, and field-scan.

Commands are driven by a TOML or JSON config file with three tables:

    [run]       mirrors RunConfig (rule, steps, seed, optimizer settings, ...)
    [scene]     "canonical", "single_gaussian", an inline "mixture", or "remote"
    [output]    directory and record_every

Unknown keys are rejected.  Exit codes: 0 success, 1 failed checks or an
empty sweep, 2 configuration errors, 3 oracle errors.  The environment
variable DISTILL_LAB_ORACLE_URL overrides remote scene endpoints.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .checks import run_all_checks
from .errors import ConfigError, DistillError, OracleError
from .harness import (
    FIELD_NAMES,
    GridSpec,
    build_canonical_testbed,
    canonical_testbed,
    compute_metrics,
    diffused_slot_mean,
    field_scan,
    single_target_scene,
    sweep,
    table_to_csv_rows,
)
from .oracle import GaussianMixtureScene, Slot
from .optim import InitSpec, RunConfig, run
from .rules import (
    BridgeRule,
    CsdRule,
    FactorSchedule,
    FixedARule,
    NfsdRule,
    RULE_CLASSES,
    SdsRule,
    TbsdRule,
)
from .schedule import DEFAULT_TIMESTEP_RANGE, NoiseSchedule
from .serialize import RUN_FILES, persist, rule_from_dict, scene_from_dict

ORACLE_URL_ENV = "DISTILL_LAB_ORACLE_URL"

SWEEP_DEFAULT_RULES = "sds,nfsd,csd,bridge,tbsd"

_RUN_KEYS = {
    "rule", "steps", "seed", "timestep_range", "wt_kind", "lr", "beta1", "beta2",
    "adam_eps", "weight_decay", "preset", "state_dim", "init",
}
_RULE_KEYS = {"kind", "s", "gate_t", "w1", "w2_init", "anneal_steps", "w",
              "sds_warmup_steps", "warmup_s", "a", "alpha", "beta", "gamma"}
_INIT_KEYS = {"kind", "scale", "vector"}
_SCENE_KEYS = {"kind", "slots", "mean", "variance", "background_variance",
               "endpoint", "target_text", "negative_fragment"}
_SCHEDULE_KEYS = {"kind", "beta_start", "beta_end", "num_steps"}
_OUTPUT_KEYS = {"directory", "record_every"}


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {path}: {e}") from e
    else:
        try:
            doc = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"malformed TOML in {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a table, got {type(doc).__name__}")
    _reject_unknown(doc, {"run", "scene", "schedule", "output"}, "<root>")
    _reject_unknown(doc.get("run", {}), _RUN_KEYS, "run")
    rule = doc.get("run", {}).get("rule")
    if isinstance(rule, dict):
        _reject_unknown(rule, _RULE_KEYS, "run.rule")
    _reject_unknown(doc.get("run", {}).get("init", {}) or {}, _INIT_KEYS, "run.init")
    _reject_unknown(doc.get("scene", {}), _SCENE_KEYS, "scene")
    _reject_unknown(doc.get("schedule", {}), _SCHEDULE_KEYS, "schedule")
    _reject_unknown(doc.get("output", {}), _OUTPUT_KEYS, "output")
    return doc


def default_rule(name: str, preset: str = "2d"):
    """Rule defaults: the short-run settings, or the long-run preset variants."""
    if name not in RULE_CLASSES:
        raise ConfigError(f"unknown rule {name!r}; valid: {sorted(RULE_CLASSES)}")
    if preset not in ("2d", "long"):
        raise ConfigError(f"unknown preset {preset!r}; valid: 2d, long")
    if preset == "long":
        if name == "csd":
            return CsdRule(w1=1.0, w2_init=1.0, anneal_steps=20000)
        if name == "tbsd":
            return TbsdRule(schedule=FactorSchedule(alpha=5.0, beta=25000.0, gamma=2.0))
    return {
        "sds": SdsRule(),
        "nfsd": NfsdRule(),
        "csd": CsdRule(),
        "bridge": BridgeRule(),
        "fixed_a": FixedARule(),
        "tbsd": TbsdRule(),
    }[name]


def build_rule(run_table: dict):
    preset = run_table.get("preset", "2d")
    rule = run_table.get("rule", "tbsd")
    if isinstance(rule, str):
        return default_rule(rule, preset)
    if isinstance(rule, dict):
        kind = rule.get("kind")
        if kind is None:
            raise ConfigError("[run.rule] needs a 'kind' key")
        base = default_rule(kind, preset)
        merged = {**{k: v for k, v in rule.items()}, "kind": kind}
        # fill unspecified fields from the preset default
        if kind == "tbsd":
            sched = base.schedule
            for field in ("alpha", "beta", "gamma"):
                merged.setdefault(field, getattr(sched, field))
        else:
            for field in type(base).__dataclass_fields__:
                merged.setdefault(field, getattr(base, field))
        return rule_from_dict(merged)
    raise ConfigError(f"[run] rule must be a name or a table, got {type(rule).__name__}")


def build_scene(scene_table: dict):
    kind = scene_table.get("kind", "canonical")
    if kind == "canonical":
        return build_canonical_testbed(), {}
    if kind == "single_gaussian":
        mean = scene_table.get("mean")
        if mean is None:
            raise ConfigError("[scene] single_gaussian needs a mean")
        return (
            single_target_scene(
                np.asarray(mean, dtype=np.float64),
                variance=scene_table.get("variance", 0.01),
                background_variance=scene_table.get("background_variance", 1.0),
            ),
            {},
        )
    if kind == "mixture":
        if "slots" not in scene_table:
            raise ConfigError("[scene] mixture needs a slots table")
        return scene_from_dict({"kind": "mixture", "slots": scene_table["slots"]}), {}
    if kind == "remote":
        endpoint = os.environ.get(ORACLE_URL_ENV) or scene_table.get("endpoint")
        if not endpoint:
            raise ConfigError(f"[scene] remote needs an endpoint (or {ORACLE_URL_ENV})")
        extras = {
            "target_text": scene_table.get("target_text", ""),
            "negative_fragment": scene_table.get("negative_fragment"),
        }
        return endpoint, extras
    raise ConfigError(f"unknown scene kind {kind!r}; valid: canonical, single_gaussian, mixture, remote")


def build_run_config(doc: dict, seed: int | None = None, rule=None) -> RunConfig:
    run_table = doc.get("run", {})
    scene, scene_extras = build_scene(doc.get("scene", {}))
    schedule = NoiseSchedule(**doc["schedule"]) if "schedule" in doc else NoiseSchedule()
    init_table = run_table.get("init")
    if init_table:
        init = InitSpec(
            kind=init_table.get("kind", "gaussian"),
            scale=init_table.get("scale", 1.0),
            vector=np.asarray(init_table["vector"], dtype=np.float64) if "vector" in init_table else None,
        )
    else:
        init = InitSpec()
    return RunConfig(
        rule=rule if rule is not None else build_rule(run_table),
        steps=run_table.get("steps", 1000),
        seed=seed if seed is not None else run_table.get("seed", 0),
        scene=scene,
        timestep_range=tuple(run_table.get("timestep_range", DEFAULT_TIMESTEP_RANGE)),
        wt_kind=run_table.get("wt_kind", "constant"),
        init=init,
        record_every=doc.get("output", {}).get("record_every", 1),
        schedule=schedule,
        state_dim=run_table.get("state_dim"),
        lr=run_table.get("lr", 0.01),
        beta1=run_table.get("beta1", 0.9),
        beta2=run_table.get("beta2", 0.999),
        adam_eps=run_table.get("adam_eps", 1e-8),
        weight_decay=run_table.get("weight_decay", 0.01),
        **scene_extras,
    )


def _refuse_overwrite(directory: Path, force: bool) -> None:
    if force:
        return
    if directory.exists() and any((directory / name).exists() for name in RUN_FILES):
        raise ConfigError(f"output directory {directory} already holds a run; pass --force to overwrite")


def _metrics_or_none(record):
    try:
        return compute_metrics(record)
    except ConfigError:
        return None


def cmd_run(args) -> int:
    doc = load_config_file(args.config)
    config = build_run_config(doc, seed=args.seed)
    out = args.out or doc.get("output", {}).get("directory")
    if not out:
        raise ConfigError("no output directory: set [output] directory or pass --out")
    out = Path(out)
    _refuse_overwrite(out, args.force)
    record = run(config)
    persist(record, out)
    metrics = _metrics_or_none(record)
    line = {
        "out": str(out),
        "seed": record.config.seed,
        "steps": record.config.steps,
        "rule": type(record.config.rule).kind,
        "shape_error": None if metrics is None else metrics.shape_error,
        "texture_error": None if metrics is None else metrics.texture_error,
        "final_mu_mean": record.summary.get("final_mu_mean"),
        "wall_clock_s": record.wall_clock_s,
    }
    print(json.dumps(line))
    return 0


def cmd_sweep(args) -> int:
    doc = load_config_file(args.config)
    rule_names = [name.strip() for name in args.rules.split(",") if name.strip()]
    if not rule_names:
        raise ConfigError("--rules must name at least one rule")
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--seeds must be a comma-separated list of integers: {e}") from e
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    preset = doc.get("run", {}).get("preset", "2d")
    configs = [build_run_config(doc, rule=default_rule(name, preset)) for name in rule_names]
    out = Path(args.out or doc.get("output", {}).get("directory") or "sweep_out")
    _refuse_overwrite(out, args.force)
    testbed = canonical_testbed()
    table = sweep(configs, seeds, jobs=args.jobs, testbed=testbed)
    out.mkdir(parents=True, exist_ok=True)
    for cell in table.cells:
        if cell.record is not None:
            persist(cell.record, out / cell.rule_name / f"seed{cell.seed}")
    with open(out / "summary_table.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(table_to_csv_rows(table))
    succeeded = sum(1 for cell in table.cells if cell.error is None)
    print(json.dumps({
        "out": str(out),
        "cells": len(table.cells),
        "succeeded": succeeded,
        "aggregates": table.aggregates,
    }))
    return 0 if succeeded >= 1 else 1


def cmd_validate(args) -> int:
    mu_bias = 1e-2 if args.inject_mu_fault else 0.0
    results = run_all_checks(mu_bias=mu_bias)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.name}: {status} max_error={result.max_error:.3e} ({result.elapsed_s:.2f}s) - {result.detail}")
    return 0 if all(r.passed for r in results) else 1


def _parse_anchor(spec: str, scene, t: float):
    if spec == "zeros":
        return None
    if spec == "tnp-mean":
        if not isinstance(scene, GaussianMixtureScene):
            raise ConfigError("tnp-mean anchor needs an analytic scene")
        return diffused_slot_mean(scene, Slot.TARGET_NEGATIVE, t)
    try:
        return np.array([float(v) for v in spec.split(",")], dtype=np.float64)
    except ValueError as e:
        raise ConfigError(f"--anchor must be 'zeros', 'tnp-mean', or comma-separated floats: {e}") from e


def cmd_field_scan(args) -> int:
    doc = load_config_file(args.config)
    scene, _ = build_scene(doc.get("scene", {}))
    if not isinstance(scene, GaussianMixtureScene):
        raise ConfigError("field scans need an analytic scene")
    schedule = NoiseSchedule(**doc["schedule"]) if "schedule" in doc else NoiseSchedule()
    try:
        i, j = (int(v) for v in args.dims.split(","))
    except ValueError as e:
        raise ConfigError(f"--dims must be two comma-separated indices: {e}") from e
    lo, hi = (float(v) for v in args.range.split(","))
    grid = GridSpec(dims=(i, j), lo=lo, hi=hi, resolution=args.res,
                    anchor=_parse_anchor(args.anchor, scene, args.t))
    scan = field_scan(scene, args.t, grid, args.field, schedule)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"output file {out} exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v"] + [f"vec_{d}" for d in range(scene.dim)])
        for a in range(grid.resolution):
            for b in range(grid.resolution):
                writer.writerow([repr(float(scan.u[a])), repr(float(scan.v[b]))]
                                + [repr(float(x)) for x in scan.vectors[a, b]])
    print(json.dumps({"out": str(out), "field": args.field, "t": args.t,
                      "nodes": grid.resolution ** 2}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distill-lab",
                                     description="Score-distillation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one optimization run and persist it")
    p_run.add_argument("config", help="TOML or JSON config file")
    p_run.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p_run.add_argument("--out", default=None, help="override [output] directory")
    p_run.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a rules x seeds cross product")
    p_sweep.add_argument("config", help="base config file (its rule is replaced per sweep cell)")
    p_sweep.add_argument("--rules", default=SWEEP_DEFAULT_RULES,
                         help=f"comma-separated rule names (default {SWEEP_DEFAULT_RULES})")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated seeds (default 0)")
    p_sweep.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                         help="parallel worker processes (default: available parallelism)")
    p_sweep.add_argument("--out", default=None, help="override [output] directory")
    p_sweep.add_argument("--force", action="store_true", help="overwrite an existing sweep directory")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the built-in oracle/solver/identity self-checks")
    p_val.add_argument("--inject-mu-fault", action="store_true", help=argparse.SUPPRESS)
    p_val.set_defaults(fn=cmd_validate)

    p_scan = sub.add_parser("field-scan", help="evaluate a delta field over a 2-d slice of x_t space")
    p_scan.add_argument("config", help="config file providing the scene")
    p_scan.add_argument("--field", required=True, choices=FIELD_NAMES)
    p_scan.add_argument("--t", type=float, default=0.5, help="diffusion timestep in (0, 1)")
    p_scan.add_argument("--dims", default="2,3", help="two scanned dims, e.g. 2,3")
    p_scan.add_argument("--res", type=int, default=16, help="grid resolution per axis")
    p_scan.add_argument("--range", default="-3,3", help="scan range lo,hi for both axes")
    p_scan.add_argument("--anchor", default="zeros",
                        help="'zeros', 'tnp-mean', or comma-separated coordinates")
    p_scan.add_argument("--out", default="field.csv", help="output CSV path")
    p_scan.add_argument("--force", action="store_true", help="overwrite an existing CSV")
    p_scan.set_defaults(fn=cmd_field_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OracleError as e:
        print(f"oracle error: {e}", file=sys.stderr)
        return 3
    except DistillError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

"""Run persistence and config (de)serialization.

A run directory holds four files, each carrying ``"schema_version": "1"``:

    config.json       exact config snapshot
    trace.jsonl       one trace row per line (schema_version on every row)
    final_state.json  final theta as a decimal array
    summary.json      seed, wall clock, aggregate diagnostics

All floats pass through Python's ``json``, which renders doubles in shortest
round-trip decimal, so persist followed by load reproduces every value bit for
bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigError, SchemaError
from .oracle import GaussianComponent, GaussianMixtureScene, Slot
from .optim import InitSpec, Parameterization, RunConfig, RunRecord, StepTrace
from .rules import FactorSchedule, RULE_CLASSES, RuleConfig, TbsdRule
from .schedule import NoiseSchedule

SCHEMA_VERSION = "1"

CONFIG_FILE = "config.json"
TRACE_FILE = "trace.jsonl"
FINAL_STATE_FILE = "final_state.json"
SUMMARY_FILE = "summary.json"
RUN_FILES = (CONFIG_FILE, TRACE_FILE, FINAL_STATE_FILE, SUMMARY_FILE)


def rule_to_dict(rule: RuleConfig) -> dict:
    if isinstance(rule, TbsdRule):
        sched = rule.schedule
        return {"kind": rule.kind, "alpha": sched.alpha, "beta": sched.beta, "gamma": sched.gamma}
    out = {"kind": rule.kind}
    for name in rule.__dataclass_fields__:
        out[name] = getattr(rule, name)
    return out


def rule_from_dict(d: dict) -> RuleConfig:
    d = dict(d)
    kind = d.pop("kind", None)
    cls = RULE_CLASSES.get(kind)
    if cls is None:
        raise ConfigError(f"unknown rule kind {kind!r}; valid: {sorted(RULE_CLASSES)}")
    if cls is TbsdRule:
        sched_kwargs = {k: d.pop(k) for k in ("alpha", "beta", "gamma") if k in d}
        if d:
            raise ConfigError(f"unknown keys for rule {kind!r}: {sorted(d)}")
        return TbsdRule(schedule=FactorSchedule(**sched_kwargs))
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for rule {kind!r}: {sorted(unknown)}")
    return cls(**d)


def scene_to_dict(scene: Union[GaussianMixtureScene, str]) -> dict:
    if isinstance(scene, str):
        return {"kind": "remote", "endpoint": scene}
    slots = {}
    for slot, comps in scene.slots.items():
        slots[slot.value] = [
            {"weight": c.weight, "mean": c.mean.tolist(), "variance": c.variance.tolist()}
            for c in comps
        ]
    return {"kind": "mixture", "slots": slots}


def scene_from_dict(d: dict) -> Union[GaussianMixtureScene, str]:
    kind = d.get("kind")
    if kind == "remote":
        return d["endpoint"]
    if kind != "mixture":
        raise ConfigError(f"unknown scene kind {kind!r}")
    slots = {}
    for name, comps in d["slots"].items():
        slot = Slot(name)
        slots[slot] = tuple(
            GaussianComponent(c["weight"], np.array(c["mean"], dtype=np.float64),
                              np.array(c["variance"], dtype=np.float64))
            for c in comps
        )
    return GaussianMixtureScene(slots)


def parameterization_to_dict(p: Parameterization | None) -> dict | None:
    if p is None:
        return None
    if p.kind == "identity":
        return {"kind": "identity", "dim": p.dim}
    return {"kind": "affine", "matrix": p.matrix.tolist(), "offset": p.offset.tolist()}


def parameterization_from_dict(d: dict | None) -> Parameterization | None:
    if d is None:
        return None
    if d["kind"] == "identity":
        return Parameterization.identity(d["dim"])
    return Parameterization.affine(np.array(d["matrix"], dtype=np.float64),
                                   np.array(d["offset"], dtype=np.float64))


def init_to_dict(spec: InitSpec) -> dict:
    out = {"kind": spec.kind}
    if spec.kind == "gaussian":
        out["scale"] = spec.scale
    elif spec.kind == "explicit":
        out["vector"] = spec.vector.tolist()
    return out


def init_from_dict(d: dict) -> InitSpec:
    kind = d.get("kind", "gaussian")
    if kind == "explicit":
        return InitSpec(kind="explicit", vector=np.array(d["vector"], dtype=np.float64))
    if kind == "gaussian":
        return InitSpec(kind="gaussian", scale=d.get("scale", 1.0))
    return InitSpec(kind=kind)


def schedule_to_dict(s: NoiseSchedule) -> dict:
    return {"kind": s.kind, "beta_start": s.beta_start, "beta_end": s.beta_end, "num_steps": s.num_steps}


def schedule_from_dict(d: dict) -> NoiseSchedule:
    return NoiseSchedule(**d)


def config_to_dict(config: RunConfig) -> dict:
    return {
        "rule": rule_to_dict(config.rule),
        "steps": config.steps,
        "seed": config.seed,
        "scene": scene_to_dict(config.scene),
        "timestep_range": list(config.timestep_range),
        "wt_kind": config.wt_kind,
        "parameterization": parameterization_to_dict(config.parameterization),
        "init": init_to_dict(config.init),
        "record_every": config.record_every,
        "schedule": schedule_to_dict(config.schedule),
        "state_dim": config.state_dim,
        "lr": config.lr,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "adam_eps": config.adam_eps,
        "weight_decay": config.weight_decay,
        "target_text": config.target_text,
        "negative_fragment": config.negative_fragment,
    }


def config_from_dict(d: dict) -> RunConfig:
    return RunConfig(
        rule=rule_from_dict(d["rule"]),
        steps=d["steps"],
        seed=d["seed"],
        scene=scene_from_dict(d["scene"]),
        timestep_range=tuple(d["timestep_range"]),
        wt_kind=d["wt_kind"],
        parameterization=parameterization_from_dict(d.get("parameterization")),
        init=init_from_dict(d["init"]),
        record_every=d["record_every"],
        schedule=schedule_from_dict(d["schedule"]),
        state_dim=d.get("state_dim"),
        lr=d["lr"],
        beta1=d["beta1"],
        beta2=d["beta2"],
        adam_eps=d["adam_eps"],
        weight_decay=d["weight_decay"],
        target_text=d.get("target_text", ""),
        negative_fragment=d.get("negative_fragment"),
    )


def trace_to_dict(trace: StepTrace) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "step": trace.step,
        "t": trace.t,
        "grad_norm": trace.grad_norm,
        "cos_st": trace.cos_st,
        "mu": trace.mu,
        "raw_mu": trace.raw_mu,
        "factor": trace.factor,
    }


def trace_from_dict(d: dict) -> StepTrace:
    return StepTrace(
        step=d["step"],
        t=d["t"],
        grad_norm=d["grad_norm"],
        cos_st=d["cos_st"],
        mu=d.get("mu"),
        raw_mu=d.get("raw_mu"),
        factor=d.get("factor"),
    )


def persist(record: RunRecord, directory: Union[str, Path]) -> Path:
    """Write the four run files; returns the run directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_FILE).write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, "config": config_to_dict(record.config)}, indent=2)
        + "\n"
    )
    with open(directory / TRACE_FILE, "w") as fh:
        for trace in record.traces:
            fh.write(json.dumps(trace_to_dict(trace)) + "\n")
    (directory / FINAL_STATE_FILE).write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, "theta": record.final_theta.tolist()}) + "\n"
    )
    (directory / SUMMARY_FILE).write_text(
        json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "seed": record.config.seed,
                "wall_clock_s": record.wall_clock_s,
                "summary": record.summary,
            },
            indent=2,
        )
        + "\n"
    )
    return directory


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise SchemaError(f"run directory is missing {path.name}")
    data = json.loads(path.read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path.name} has schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION!r}")
    return data


def load(directory: Union[str, Path]) -> RunRecord:
    """Inverse of :func:`persist`; raises :class:`SchemaError` on missing or foreign files."""
    directory = Path(directory)
    config_data = _read_json(directory / CONFIG_FILE)
    trace_path = directory / TRACE_FILE
    if not trace_path.exists():
        raise SchemaError(f"run directory is missing {TRACE_FILE}")
    traces = []
    with open(trace_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("schema_version") != SCHEMA_VERSION:
                raise SchemaError(f"{TRACE_FILE} row has schema_version {row.get('schema_version')!r}")
            traces.append(trace_from_dict(row))
    final_data = _read_json(directory / FINAL_STATE_FILE)
    summary_data = _read_json(directory / SUMMARY_FILE)
    return RunRecord(
        config=config_from_dict(config_data["config"]),
        traces=traces,
        final_theta=np.array(final_data["theta"], dtype=np.float64),
        summary=summary_data["summary"],
        wall_clock_s=summary_data["wall_clock_s"],
    )


def components_equal(a: GaussianComponent, b: GaussianComponent) -> bool:
    return a.weight == b.weight and np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)


def scenes_equal(a: Union[GaussianMixtureScene, str], b: Union[GaussianMixtureScene, str]) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    if set(a.slots) != set(b.slots):
        return False
    for slot, comps in a.slots.items():
        others = b.slots[slot]
        if len(comps) != len(others):
            return False
        if not all(components_equal(x, y) for x, y in zip(comps, others)):
            return False
    return True


def configs_equal(a: RunConfig, b: RunConfig) -> bool:
    return config_to_dict(a) == config_to_dict(b)


def records_equal(a: RunRecord, b: RunRecord) -> bool:
    return (
        configs_equal(a.config, b.config)
        and a.traces == b.traces
        and np.array_equal(a.final_theta, b.final_theta)
        and a.summary == b.summary
        and a.wall_clock_s == b.wall_clock_s
    )

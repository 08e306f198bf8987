"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Two sub-criteria of the trade-off reproduction are expected to fail
on the canonical testbed as constructed; the decisions ledger carries the
full analysis (the orderings they assert are structurally unattainable in
this scene family).  They are left failing rather than weakened.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from distill_lab import (
    AnalyticOracle,
    NoiseSchedule,
    RunConfig,
    SdsRule,
    BridgeRule,
    CsdRule,
    NfsdRule,
    TbsdRule,
    build_canonical_testbed,
    canonical_testbed,
    gather_terms,
    load,
    persist,
    records_equal,
    run,
    single_target_scene,
    sweep,
)
from distill_lab.checks import (
    check_bridge_identity,
    check_cfg_form,
    check_mu_grid,
    check_score_finite_difference,
    check_sds_telescoping,
    random_scene,
)
from distill_lab.harness import SHAPE_DIMS, TEXTURE_DIMS
from distill_lab.oracle import Slot, marginal_at
from distill_lab.optim import RunRecord, StepTrace
from distill_lab.rules import FactorSchedule, anneal_w2, factor, shape_texture_objectives


def report(name: str, passed: bool, detail: str) -> None:
    print(f"[ACCEPTANCE] {name}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"{name}: {detail}"


def test_mu_solver_oracle_equivalence():
    started = time.perf_counter()
    result = check_mu_grid(pairs=1000, dims=(2, 16, 4096), grid_step=1e-4, mu_tol=1e-3, norm_tol=1e-9)
    elapsed = time.perf_counter() - started
    report(
        "mu-solver-oracle-equivalence",
        result.passed and elapsed < 30.0,
        f"{result.detail}; elapsed {elapsed:.1f}s (limit 30s)",
    )


def test_analytic_score_correctness():
    started = time.perf_counter()
    result = check_score_finite_difference(cases=100, tol=1e-5)
    elapsed = time.perf_counter() - started
    report(
        "analytic-score-correctness",
        result.passed and elapsed < 10.0,
        f"{result.detail}; max rel err {result.max_error:.2e}; elapsed {elapsed:.1f}s (limit 10s)",
    )


def test_algebraic_identities():
    started = time.perf_counter()
    bridge = check_bridge_identity(trials=1000)
    telescoping = check_sds_telescoping(trials=1000)
    cfg_form = check_cfg_form(trials=1000, tol=1e-12)
    elapsed = time.perf_counter() - started
    report(
        "algebraic-identities",
        bridge.passed and telescoping.passed and cfg_form.passed and elapsed < 5.0,
        f"bridge {bridge.max_error:.1f} ulps (<=4); telescoping {telescoping.max_error:.1f} ulps; "
        f"cfg-form rel err {cfg_form.max_error:.2e} (<1e-12); elapsed {elapsed:.1f}s (limit 5s)",
    )


def test_schedule_conformance():
    sched = FactorSchedule(alpha=5.0, beta=25000.0, gamma=2.0)
    ok = (
        factor(0, sched) == 5.0
        and factor(10000, sched) == 3.0
        and factor(25000, sched) == 2.0
        and factor(30000, sched) == 2.0
        and anneal_w2(0, 40.0, 500) == 40.0
        and anneal_w2(250, 40.0, 500) == 20.0
        and anneal_w2(500, 40.0, 500) == 0.0
    )
    report(
        "schedule-conformance",
        ok,
        "factor(0)=5, factor(10000)=3, factor(>=25000)=2 at (alpha=5, beta=25000, gamma=2); "
        "w2 ramp 40 -> 20 -> 0 at steps {0, 250, 500}; exact equality",
    )


CONVERGENCE_MEAN = np.array([1.2, -0.8, 0.5])
CONVERGENCE_RANGE = (0.002, 0.03)
CONVERGENCE_BG_VAR = 100.0


def expected_sds_equilibrium_ratio(s=100.0, var_t=0.01, var_n=CONVERGENCE_BG_VAR,
                                   t_range=CONVERGENCE_RANGE) -> float:
    """Flow oracle: zero of the timestep-averaged expected gradient, per dim.

    E[delta_sds] is linear in theta for single-Gaussian slots; the fixed point
    is theta* = m * s*I_t / (s*I_t - (s-1)*I_n) with I_c = mean of
    sigma*sqrt(abar)/V_c over the sampled range.
    """
    sched = NoiseSchedule()
    ts = np.linspace(t_range[0], t_range[1], 2001)
    abar = np.array([sched.alpha_bar(t) for t in ts])
    sigma = np.sqrt(1 - abar)
    v_t = var_t * abar + (1 - abar)
    v_n = var_n * abar + (1 - abar)
    i_t = float(np.mean(sigma * np.sqrt(abar) / v_t))
    i_n = float(np.mean(sigma * np.sqrt(abar) / v_n))
    return s * i_t / (s * i_t - (s - 1.0) * i_n)


def test_convergence_sanity():
    started = time.perf_counter()
    # pin the threshold: the expected-gradient-flow fixed point must sit well
    # inside the 0.05 ball before trusting the stochastic runs
    ratio = expected_sds_equilibrium_ratio()
    flow_bias = abs(ratio - 1.0) * float(np.linalg.norm(CONVERGENCE_MEAN))
    assert flow_bias < 0.02, f"flow-predicted equilibrium bias {flow_bias:.4f} leaves no margin"
    scene = single_target_scene(CONVERGENCE_MEAN, variance=0.01, background_variance=CONVERGENCE_BG_VAR)
    errors = []
    for seed in range(5):
        cfg = RunConfig(
            rule=SdsRule(s=100.0), steps=1000, seed=seed, scene=scene,
            timestep_range=CONVERGENCE_RANGE, record_every=100, lr=0.01,
        )
        record = run(cfg)
        errors.append(float(np.linalg.norm(record.final_state() - CONVERGENCE_MEAN)))
    elapsed = time.perf_counter() - started
    report(
        "convergence-sanity",
        max(errors) < 0.05 and elapsed < 60.0,
        f"flow bias {flow_bias:.4f}; final errors {[f'{e:.3f}' for e in errors]} (all < 0.05); "
        f"elapsed {elapsed:.1f}s (limit 60s)",
    )


SWEEP_SEEDS = tuple(range(10))
SWEEP_STEPS = 2000


@pytest.fixture(scope="module")
def tradeoff_sweep():
    """Five-rule sweep at 2D-mode defaults, plus the pure target-negative
    bridge variant named by ordering (a)."""
    tb = canonical_testbed()
    rules = {
        "sds": SdsRule(s=100.0),
        "nfsd": NfsdRule(s=7.5, gate_t=0.2),
        "csd": CsdRule(w1=40.0, w2_init=40.0, anneal_steps=500),
        "bridge_pure": BridgeRule(w=25.0, sds_warmup_steps=0),
        "tbsd": TbsdRule(schedule=FactorSchedule(alpha=5.0, beta=2000.0, gamma=2.0)),
    }
    started = time.perf_counter()
    means = {}
    for name, rule in rules.items():
        configs = [RunConfig(rule=rule, steps=SWEEP_STEPS, seed=0, scene=tb.scene, record_every=50)]
        table = sweep(configs, SWEEP_SEEDS, testbed=tb)
        shape = [c.metrics.shape_error for c in table.cells]
        texture = [c.metrics.texture_error for c in table.cells]
        means[name] = (float(np.mean(shape)), float(np.mean(texture)))
    elapsed = time.perf_counter() - started
    return means, elapsed


def test_tradeoff_runtime_and_table(tradeoff_sweep):
    means, elapsed = tradeoff_sweep
    lines = ", ".join(f"{k}=(shape {v[0]:.3f}, texture {v[1]:.3f})" for k, v in means.items())
    report(
        "tradeoff-sweep-runtime",
        len(means) == 5 and elapsed < 300.0,
        f"{lines}; elapsed {elapsed:.1f}s (limit 300s)",
    )


def test_tradeoff_ordering_a_bridge_shape_exceeds_tbsd(tradeoff_sweep):
    means, _ = tradeoff_sweep
    bridge_shape = means["bridge_pure"][0]
    tbsd_shape = means["tbsd"][0]
    report(
        "tradeoff-(a)-bridge-shape-vs-tbsd",
        bridge_shape >= 3.0 * tbsd_shape,
        f"pure target-negative bridge shape_error {bridge_shape:.3f} vs 3x tbsd {3 * tbsd_shape:.3f}",
    )


def test_tradeoff_ordering_b_sds_texture_exceeds_tbsd(tradeoff_sweep):
    # Expected to FAIL: the target-negative texture push moves tbsd further
    # from the modes than sds ever lands, and the intended rescue (sds pinned
    # at the barycenter) is dynamically unstable at every timestep in this
    # scene.  See decisions ledger.
    means, _ = tradeoff_sweep
    sds_texture = means["sds"][1]
    tbsd_texture = means["tbsd"][1]
    report(
        "tradeoff-(b)-sds-texture-vs-tbsd",
        sds_texture >= 3.0 * tbsd_texture,
        f"sds texture_error {sds_texture:.3f} vs 3x tbsd {3 * tbsd_texture:.3f} "
        "(known-unattainable on this testbed; see decisions ledger)",
    )


def test_tradeoff_ordering_c_tbsd_absolute_quality(tradeoff_sweep):
    # Expected to FAIL: the guidance-amplified null repulsion biases the
    # shape fixed point ~27% past the target under the default timestep
    # range, and the texture objective has no equilibrium because the
    # target and target-negative slots share one variance.  See ledger.
    means, _ = tradeoff_sweep
    tbsd_shape, tbsd_texture = means["tbsd"]
    report(
        "tradeoff-(c)-tbsd-absolute",
        tbsd_shape < 0.1 and tbsd_texture < 0.3,
        f"tbsd shape_error {tbsd_shape:.3f} (< 0.1), texture_error {tbsd_texture:.3f} (< 0.3) "
        "(known-unattainable on this testbed; see decisions ledger)",
    )


def test_shape_cancellation_invariant():
    started = time.perf_counter()
    schedule = NoiseSchedule()
    scene = build_canonical_testbed()
    oracle = AnalyticOracle(scene, schedule)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        t = float(rng.uniform(0.1, 0.9))
        (comp,) = marginal_at(scene.slots[Slot.TARGET_NEGATIVE], t, schedule)
        x_t = comp.mean + np.sqrt(comp.variance) * rng.standard_normal(8)
        terms = gather_terms(oracle, x_t, t, np.zeros(8))
        _, d_t = shape_texture_objectives(terms)
        ratio = float(
            np.linalg.norm(d_t[list(SHAPE_DIMS)]) / np.linalg.norm(d_t[list(TEXTURE_DIMS)])
        )
        worst = max(worst, ratio)
    elapsed = time.perf_counter() - started
    report(
        "shape-cancellation",
        worst < 0.05 and elapsed < 5.0,
        f"50 samples from the diffused target-negative slot; worst shape/texture norm ratio "
        f"{worst:.2e} (< 0.05); elapsed {elapsed:.1f}s (limit 5s)",
    )


DETERMINISM_TOML = """
[run]
rule = "tbsd"
steps = 60
seed = 123

[scene]
kind = "canonical"

[output]
directory = "{out}"
record_every = 1
"""


def test_determinism_across_processes(tmp_path):
    cfg_path = tmp_path / "config.toml"
    outs = []
    for k in range(2):
        out = tmp_path / f"proc{k}"
        cfg_path.write_text(DETERMINISM_TOML.format(out=out))
        proc = subprocess.run(
            [sys.executable, "-m", "distill_lab.cli", "run", str(cfg_path)],
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    trace_a = (outs[0] / "trace.jsonl").read_bytes()
    trace_b = (outs[1] / "trace.jsonl").read_bytes()
    state_a = (outs[0] / "final_state.json").read_bytes()
    state_b = (outs[1] / "final_state.json").read_bytes()
    report(
        "determinism-across-processes",
        trace_a == trace_b and state_a == state_b,
        f"two fresh processes, identical (config, seed): trace.jsonl byte-equal={trace_a == trace_b}, "
        f"final_state.json byte-equal={state_a == state_b}",
    )


def test_persistence_identity_on_random_records(tmp_path):
    rng = np.random.default_rng(77)
    all_ok = True
    for k in range(10):
        dim = int(rng.integers(2, 6))
        scene = random_scene(rng, dim)
        cfg = RunConfig(
            rule=TbsdRule(schedule=FactorSchedule(float(rng.uniform(2, 8)), float(rng.uniform(100, 30000)), 2.0)),
            steps=int(rng.integers(1, 40)),
            seed=int(rng.integers(0, 10_000)),
            scene=scene,
            record_every=int(rng.integers(1, 4)),
            timestep_range=(0.05, 0.9),
            wt_kind="sigma_squared" if k % 2 else "constant",
        )
        traces = [
            StepTrace(i, float(rng.uniform(0.01, 0.99)), float(rng.exponential()),
                      float(rng.uniform(-1, 1)), mu=float(rng.uniform()),
                      raw_mu=float(rng.normal()), factor=float(rng.uniform(2, 5)))
            for i in range(int(rng.integers(1, 6)))
        ]
        record = RunRecord(
            config=cfg, traces=traces, final_theta=rng.standard_normal(dim),
            summary={"final_mu_mean": float(rng.uniform()), "recorded": len(traces)},
            wall_clock_s=float(rng.exponential()),
        )
        directory = tmp_path / f"record{k}"
        persist(record, directory)
        all_ok = all_ok and records_equal(record, load(directory))
    report(
        "persistence-identity",
        all_ok,
        "persist followed by load reproduced 10 random run records exactly",
    )

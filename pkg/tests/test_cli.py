import csv
import json
import threading

import numpy as np
import pytest

from distill_lab.cli import main
from test_remote import _Server, endpoint

CANONICAL_TOML = """
[run]
rule = "tbsd"
steps = 25
seed = 0

[scene]
kind = "canonical"

[output]
directory = "{out}"
record_every = 5
"""


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_run_command_writes_run_directory(tmp_path, capsys):
    out = tmp_path / "run0"
    cfg = write_config(tmp_path, CANONICAL_TOML.format(out=out))
    code = main(["run", str(cfg), "--seed", "0"])
    assert code == 0
    for name in ("config.json", "trace.jsonl", "final_state.json", "summary.json"):
        assert (out / name).exists()
    line = json.loads(capsys.readouterr().out.strip())
    assert line["seed"] == 0
    assert line["rule"] == "tbsd"
    assert line["shape_error"] is not None


def test_run_refuses_overwrite_without_force(tmp_path, capsys):
    out = tmp_path / "run0"
    cfg = write_config(tmp_path, CANONICAL_TOML.format(out=out))
    assert main(["run", str(cfg)]) == 0
    assert main(["run", str(cfg)]) == 2
    assert main(["run", str(cfg), "--force"]) == 0


def test_run_malformed_toml_names_line(tmp_path, capsys):
    cfg = write_config(tmp_path, "[run\nsteps = 3\n")
    assert main(["run", str(cfg)]) == 2
    assert "line" in capsys.readouterr().err.lower()


def test_run_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "[run]\nsteps = 3\nwarp_speed = 9\n[scene]\nkind = 'canonical'\n[output]\ndirectory = 'x'\n")
    assert main(["run", str(cfg)]) == 2
    assert "warp_speed" in capsys.readouterr().err


def test_run_dead_remote_endpoint_exits_3(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        "[run]\nsteps = 3\nstate_dim = 2\n[scene]\nkind = 'remote'\nendpoint = '127.0.0.1:1'\n"
        f"[output]\ndirectory = '{tmp_path / 'r'}'\n",
    )
    assert main(["run", str(cfg)]) == 3


def test_env_var_overrides_remote_endpoint(tmp_path, monkeypatch, capsys):
    srv = _Server()
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    try:
        cfg = write_config(
            tmp_path,
            "[run]\nsteps = 3\nstate_dim = 2\nrule = 'sds'\n"
            "[scene]\nkind = 'remote'\nendpoint = '127.0.0.1:1'\n"
            f"[output]\ndirectory = '{tmp_path / 'r'}'\n",
        )
        monkeypatch.setenv("DISTILL_LAB_ORACLE_URL", endpoint(srv))
        assert main(["run", str(cfg)]) == 0
    finally:
        srv.shutdown()
        srv.server_close()


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "sweepout"
    cfg = write_config(tmp_path, CANONICAL_TOML.format(out=out))
    code = main(["sweep", str(cfg), "--rules", "sds,tbsd", "--seeds", "0,1", "--jobs", "1", "--out", str(out)])
    assert code == 0
    with open(out / "summary_table.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rule", "seed", "shape_error", "texture_error", "final_mu_mean", "error"]
    assert len(rows) == 5
    assert {r[0] for r in rows[1:]} == {"sds", "tbsd"}
    assert (out / "sds" / "seed0" / "trace.jsonl").exists()
    assert (out / "tbsd" / "seed1" / "summary.json").exists()
    line = json.loads(capsys.readouterr().out.strip())
    assert line["cells"] == 4 and line["succeeded"] == 4


def test_sweep_empty_rules_exits_2(tmp_path):
    cfg = write_config(tmp_path, CANONICAL_TOML.format(out=tmp_path / "x"))
    assert main(["sweep", str(cfg), "--rules", "", "--out", str(tmp_path / "x")]) == 2


def test_sweep_unknown_rule_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, CANONICAL_TOML.format(out=tmp_path / "x"))
    assert main(["sweep", str(cfg), "--rules", "sds,vsd", "--out", str(tmp_path / "x")]) == 2
    assert "vsd" in capsys.readouterr().err


def test_validate_command(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.strip().split("\n")]
    assert len(lines) == 5
    for name in ("score-finite-difference", "mu-vs-grid", "bridge-identity", "sds-telescoping", "cfg-form-equivalence"):
        assert any(name in l and "PASS" in l and "max_error" in l for l in lines)


def test_validate_with_injected_mu_fault_fails(capsys):
    assert main(["validate", "--inject-mu-fault"]) == 1
    out = capsys.readouterr().out
    assert any("mu-vs-grid" in l and "FAIL" in l for l in out.strip().split("\n"))


def test_field_scan_command(tmp_path, capsys):
    cfg = write_config(tmp_path, "[scene]\nkind = 'canonical'\n")
    out = tmp_path / "field.csv"
    code = main(["field-scan", str(cfg), "--field", "post_tnp", "--t", "0.5",
                 "--dims", "2,3", "--res", "2", "--anchor", "tnp-mean", "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "v"] + [f"vec_{i}" for i in range(8)]
    assert len(rows) == 5  # header + 4 nodes
    values = np.array([[float(v) for v in row] for row in rows[1:]])
    assert np.all(np.isfinite(values))


def test_field_scan_texture_columns_dominate(tmp_path):
    cfg = write_config(tmp_path, "[scene]\nkind = 'canonical'\n")
    out = tmp_path / "field.csv"
    main(["field-scan", str(cfg), "--field", "post_tnp", "--t", "0.5",
          "--dims", "2,3", "--res", "6", "--anchor", "tnp-mean", "--out", str(out)])
    with open(out) as fh:
        rows = list(csv.reader(fh))
    vec = np.array([[float(v) for v in row[2:]] for row in rows[1:]])
    texture_norm = np.linalg.norm(vec[:, 2:], axis=1).mean()
    shape_norm = np.linalg.norm(vec[:, :2], axis=1).mean()
    assert texture_norm > shape_norm


def test_field_scan_unknown_field_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "[scene]\nkind = 'canonical'\n")
    assert main(["field-scan", str(cfg), "--field", "vorticity"]) == 2
    err = capsys.readouterr().err
    assert "post_tnp" in err  # argparse lists the valid choices


def test_field_scan_invalid_dims_exits_2(tmp_path):
    cfg = write_config(tmp_path, "[scene]\nkind = 'canonical'\n")
    assert main(["field-scan", str(cfg), "--field", "cls", "--dims", "3,3", "--out", str(tmp_path / "f.csv")]) == 2
    assert main(["field-scan", str(cfg), "--field", "cls", "--dims", "0,12", "--out", str(tmp_path / "f.csv")]) == 2


def test_field_scan_refuses_overwrite(tmp_path):
    cfg = write_config(tmp_path, "[scene]\nkind = 'canonical'\n")
    out = tmp_path / "f.csv"
    args = ["field-scan", str(cfg), "--field", "cls", "--res", "2", "--out", str(out)]
    assert main(args) == 0
    assert main(args) == 2
    assert main(args + ["--force"]) == 0


def test_json_config_and_rule_table(tmp_path, capsys):
    doc = {
        "run": {"rule": {"kind": "csd", "w1": 10.0}, "steps": 5, "seed": 1},
        "scene": {"kind": "canonical"},
        "output": {"directory": str(tmp_path / "jr"), "record_every": 1},
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(doc))
    assert main(["run", str(cfg)]) == 0
    saved = json.loads((tmp_path / "jr" / "config.json").read_text())
    rule = saved["config"]["rule"]
    assert rule["kind"] == "csd"
    assert rule["w1"] == 10.0
    assert rule["w2_init"] == 40.0  # unspecified fields fall back to the preset defaults
    assert rule["anneal_steps"] == 500


def test_single_gaussian_scene_config(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        "[run]\nrule = 'sds'\nsteps = 5\n"
        "[scene]\nkind = 'single_gaussian'\nmean = [1.0, -1.0]\nvariance = 0.01\nbackground_variance = 100.0\n"
        f"[output]\ndirectory = '{tmp_path / 'sg'}'\n",
    )
    assert main(["run", str(cfg)]) == 0
    line = json.loads(capsys.readouterr().out.strip())
    assert line["shape_error"] is None  # metrics only exist on the canonical testbed


def test_long_preset_rule_defaults(tmp_path):
    cfg = write_config(
        tmp_path,
        "[run]\nrule = 'tbsd'\npreset = 'long'\nsteps = 3\n[scene]\nkind = 'canonical'\n"
        f"[output]\ndirectory = '{tmp_path / 'lp'}'\n",
    )
    assert main(["run", str(cfg)]) == 0
    saved = json.loads((tmp_path / "lp" / "config.json").read_text())
    assert saved["config"]["rule"]["beta"] == 25000.0

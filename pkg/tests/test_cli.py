"""CLI orchestration: config schema, subcommands, exit codes, determinism."""

import json
import math
from pathlib import Path

import pytest

from brwire import cli, config
from brwire.errors import ConfigError

SMALL_VAR_CONFIG = """\
environment:
  states:
    - label: A
      prob: 0.5
      offspring: {kind: one-plus-bernoulli, param: 0.2}
      displacement: {kind: gaussian, mean: [0.1], var: [0.04]}
      immigration:
        count: {kind: poisson, param: 1.0}
        position: {kind: gaussian, mean: [0.0], var: [0.04]}
    - label: B
      prob: 0.5
      offspring: {kind: one-plus-bernoulli, param: 0.05}
      displacement: {kind: gaussian, mean: [-0.1], var: [0.04]}
      immigration:
        count: {kind: poisson, param: 1.0}
        position: {kind: gaussian, mean: [0.0], var: [0.04]}
d: 1
t: [1.0]
horizons: [2, 4, 8]
replicates: 80
master_seed: 31
analyses:
  clt:
  uniform-be:
  nonuniform-be: {lambda: 1.0, x_cap: 3.0}
"""

CLOSED_FORM_CONFIG = """\
environment:
  states:
    - label: S
      prob: 1.0
      offspring: {kind: deterministic, param: 2}
      displacement: {kind: point-mass, c: [0.0]}
      immigration:
        count: {kind: deterministic, param: 1}
        position: {kind: point-mass, c: [0.0]}
d: 1
t: [0.0]
horizons: [5]
replicates: 1
master_seed: 0
"""


def write(tmp_path, text, name="scenario.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------------------
# config parsing


def test_config_round_trip(tmp_path):
    sc = config.load_scenario(write(tmp_path, SMALL_VAR_CONFIG))
    assert sc.d == 1 and sc.t == (1.0,)
    assert sc.horizons == (2, 4, 8)
    assert sc.replicates == 80
    assert [s.label for s in sc.environment.states] == ["A", "B"]
    assert sc.environment.states[0].offspring.kind == "one-plus-bernoulli"


def test_config_rejects_unknown_keys(tmp_path):
    bad = SMALL_VAR_CONFIG + "unknown_top_key: 1\n"
    with pytest.raises(ConfigError) as exc:
        config.load_scenario(write(tmp_path, bad))
    assert "unknown_top_key" in str(exc.value)


def test_config_rejects_unknown_nested_key(tmp_path):
    bad = SMALL_VAR_CONFIG.replace("param: 0.2}", "param: 0.2, typo: 3}")
    with pytest.raises(ConfigError) as exc:
        config.load_scenario(write(tmp_path, bad))
    assert "typo" in str(exc.value)
    assert "states[0]" in str(exc.value)


def test_config_rejects_bad_probabilities(tmp_path):
    bad = SMALL_VAR_CONFIG.replace("prob: 0.5", "prob: 0.4", 1)
    with pytest.raises(ConfigError):
        config.load_scenario(write(tmp_path, bad))


def test_config_rejects_malformed_yaml(tmp_path):
    with pytest.raises(ConfigError):
        config.load_config(write(tmp_path, "environment: [unclosed"))


def test_parse_analyses(tmp_path):
    doc = config.load_config(write(tmp_path, SMALL_VAR_CONFIG))
    analyses = config.parse_analyses(doc)
    assert set(analyses) == {"clt", "uniform-be", "nonuniform-be"}
    assert analyses["nonuniform-be"]["lambda"] == 1.0
    doc["analyses"] = {"nope": {}}
    with pytest.raises(ConfigError):
        config.parse_analyses(doc)


# ---------------------------------------------------------------------------
# subcommands


def test_lambda0_subcommand(capsys):
    code = cli.main(
        ["lambda0", "--a-star", "4", "--epsilon", "1", "--p", "4", "--delta", "1"]
    )
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"r_star": 2.0, "q_star": 1.0, "eta_star": 1.0, "lambda0": 1.0}


def test_lambda0_subcommand_infinite(capsys):
    code = cli.main(
        ["lambda0", "--a-star", "inf", "--epsilon", "1", "--p", "4", "--delta", "0.7"]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["lambda0"] == math.inf


def test_lambda0_subcommand_invalid_domain(capsys):
    code = cli.main(
        ["lambda0", "--a-star", "4", "--epsilon", "0.4", "--p", "4", "--delta", "1"]
    )
    assert code == cli.EXIT_CONFIG


def test_audit_subcommand_passes_on_small_variance(tmp_path, capsys):
    cfg = write(tmp_path, SMALL_VAR_CONFIG)
    code = cli.main(["audit", "--config", cfg])
    captured = capsys.readouterr()
    entries = {e["name"]: e for e in json.loads(captured.out)}
    assert code == cli.EXIT_GATE  # two-point support is lattice
    assert entries["E[m^-alpha]"]["passed"]
    assert entries["E[(m(pt)/m(t)^p)^eps]"]["value"] < 1.0
    assert not entries["non-lattice[log m]"]["passed"]
    assert "heuristic" in captured.err


def test_simulate_subcommand_closed_form(tmp_path):
    cfg = write(tmp_path, CLOSED_FORM_CONFIG)
    out = tmp_path / "out"
    code = cli.main(["simulate", "--config", cfg, "--out", str(out)])
    assert code == 0
    lines = (out / "records.csv").read_text().splitlines()
    header, row = lines[0].split(","), lines[1].split(",")
    rec = dict(zip(header, row))
    assert float(rec["log_Z"]) == pytest.approx(math.log(63.0), abs=1e-12)
    assert math.exp(float(rec["log_W"])) == pytest.approx(2.0 - 2.0**-5, rel=1e-12)


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, SMALL_VAR_CONFIG + "bogus: 1\n")
    assert cli.main(["simulate", "--config", cfg]) == cli.EXIT_CONFIG


def test_missing_required_key_exit_code(tmp_path):
    cfg = write(tmp_path, SMALL_VAR_CONFIG.replace("d: 1\n", ""))
    assert cli.main(["simulate", "--config", cfg]) == cli.EXIT_CONFIG


def test_cap_abort_exit_code(tmp_path):
    cfg = write(
        tmp_path,
        CLOSED_FORM_CONFIG.replace("horizons: [5]", "horizons: [30]\npopulation_cap: 100"),
    )
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == cli.EXIT_CAP


def test_exact_rate_gate_failure_on_drifting_scenario(tmp_path):
    # unit-variance displacements: log W drifts, the stabilization gate trips
    cfg_text = SMALL_VAR_CONFIG.replace("var: [0.04]", "var: [1.0]").replace(
        "horizons: [2, 4, 8]", "horizons: [8, 16]"
    )
    cfg = write(tmp_path, cfg_text)
    out = tmp_path / "out"
    code = cli.main(
        ["exact-rate", "--config", cfg, "--out", str(out), "--replicates", "150"]
    )
    assert code == cli.EXIT_GATE


# ---------------------------------------------------------------------------
# analyze end to end


def run_analyze(tmp_path, name, workers=None, seed=None):
    cfg = write(tmp_path, SMALL_VAR_CONFIG, name=f"{name}.yaml")
    out = tmp_path / name
    argv = ["analyze", "--config", cfg, "--out", str(out)]
    if workers is not None:
        argv += ["--workers", str(workers)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    code = cli.main(argv)
    return code, out


def read_outputs(outdir: Path) -> dict:
    manifest = json.loads((outdir / "manifest.json").read_text())
    return {name: (outdir / name).read_bytes() for name in manifest["outputs"]}


def test_analyze_emits_expected_files(tmp_path):
    code, out = run_analyze(tmp_path, "a")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) >= {
        "records.csv", "distances.json", "rate_fit.json", "nonuniform.json", "manifest.json"
    }
    assert manifest["abort_count"] == 0
    assert manifest["hypotheses_verified"] == "not-checked"  # no audit requested
    summaries = json.loads((out / "distances.json").read_text())
    assert [s["n"] for s in summaries] == [2, 4, 8]
    fit = json.loads((out / "rate_fit.json").read_text())
    assert {"slope", "intercept", "r2", "points"} <= set(fit)


def test_analyze_rerun_is_byte_identical(tmp_path):
    _, out1 = run_analyze(tmp_path, "r1")
    _, out2 = run_analyze(tmp_path, "r2")
    assert read_outputs(out1) == read_outputs(out2)


def test_analyze_worker_count_invariant(tmp_path):
    _, out1 = run_analyze(tmp_path, "w1", workers=1)
    _, out2 = run_analyze(tmp_path, "w2", workers=4)
    assert read_outputs(out1) == read_outputs(out2)


def test_analyze_seed_override_changes_results(tmp_path):
    _, out1 = run_analyze(tmp_path, "s1")
    _, out2 = run_analyze(tmp_path, "s2", seed=99)
    a, b = read_outputs(out1), read_outputs(out2)
    assert a["records.csv"] != b["records.csv"]
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m2["master_seed"] == 99


def test_no_partial_files_left_behind(tmp_path):
    _, out = run_analyze(tmp_path, "atomic")
    stray = [p.name for p in out.iterdir() if p.name.startswith(".")]
    assert stray == []


def test_empty_analysis_plan_runs_nothing(tmp_path):
    cfg_text = SMALL_VAR_CONFIG.split("analyses:")[0]
    cfg = write(tmp_path, cfg_text)
    plan = cli.plan_from_config(cfg, out=str(tmp_path / "empty"))
    manifest = cli.run(plan)
    assert manifest.outputs == ["manifest.json"]
    assert manifest.abort_count == 0

import dataclasses
import json
import math

import numpy as np
import pytest

from cvamp.channels import AmplifierConfig, channel_preset
from cvamp.cli import main
from cvamp.errors import ConfigError
from cvamp.scenario import (
    CSV_COLUMNS,
    ScenarioConfig,
    SweepAxis,
    SweepSpec,
    emit,
    figure_sweep,
    parse_csv,
    run_scenario,
    run_sweep,
)
from cvamp.states import TmsvParams, gaussian_homhom_mi, tmsv_covariance

FAST = dict(check_convergence=False)


def test_baseline_scenario():
    rep = run_scenario(ScenarioConfig(R=0.3, **FAST))
    ref = gaussian_homhom_mi(tmsv_covariance(TmsvParams(0.3)))
    assert rep.i_bits == pytest.approx(ref, abs=1e-3)
    assert rep.d_i_bits == pytest.approx(0, abs=1e-12)
    assert abs(rep.h_ea) < 2e-3 and abs(rep.h_eb) < 2e-3
    assert rep.d_i_bits == rep.i_bits - rep.i0_bits


def test_hfa_beats_two_subtractions():
    hfa = run_scenario(ScenarioConfig(amplifier=AmplifierConfig.hfa(), reconciliation="none", **FAST))
    npa = run_scenario(ScenarioConfig(amplifier=AmplifierConfig.npa(0.0, 2), reconciliation="none", **FAST))
    assert hfa.d_i_bits > npa.d_i_bits > 0


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(noise_model="other")
    with pytest.raises(ConfigError):
        ScenarioConfig(noise_model="ancilla", reconciliation="none")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"R": 0.3, "bogus": 1})
    cfg = ScenarioConfig.from_dict({"channel": "realistic", "amplifier": {"delta": 0.1, "n_sub": 2}})
    assert cfg.channel == channel_preset("realistic") and cfg.amplifier.n_sub == 2


def test_placement_before_runs():
    cfg = ScenarioConfig(amplifier=AmplifierConfig.npa(0.1, 1), channel=channel_preset("lossy"),
                         noise_model="ancilla", cutoff=14, R=0.2, **FAST)
    after = run_scenario(cfg)
    before = run_scenario(dataclasses.replace(cfg, placement="before"))
    for rep in (after, before):
        assert all(math.isfinite(v) for v in rep.metrics().values())
    assert before.i_bits != pytest.approx(after.i_bits, abs=1e-6)


def test_convergence_report():
    rep = run_scenario(ScenarioConfig(amplifier=AmplifierConfig.hfa(), reconciliation="direct"))
    assert rep.converged == "true"
    assert rep.convergence["cutoff"] == rep.settings["cutoff"] + 5
    assert max(rep.convergence["deltas"].values()) < 1e-3


def test_one_point_sweep_matches_scenario():
    base = ScenarioConfig(amplifier=AmplifierConfig.npa(0.0, 2), reconciliation="none", **FAST)
    spec = SweepSpec(base, (SweepAxis("R", 0.3, 0.3, 2),))
    rows = run_sweep(spec)
    single = run_scenario(base)
    assert rows[0].metrics() == single.metrics()


def test_r_sweep_is_smooth():
    base = ScenarioConfig(amplifier=AmplifierConfig.npa(0.0, 2), reconciliation="none", **FAST)
    rows = run_sweep(SweepSpec(base, (SweepAxis("R", 0.05, 0.65, 13),)))
    d = np.array([r.d_i_bits for r in rows])
    assert np.all(np.isfinite(d))
    assert np.max(np.abs(np.diff(d))) < 0.1


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepAxis("eta", 0, 1, 3)
    with pytest.raises(ConfigError):
        SweepAxis("R", 0, 1, 1)
    with pytest.raises(ConfigError):
        SweepSpec(ScenarioConfig(), ())


def test_sweep_records_errors_and_continues():
    base = ScenarioConfig(amplifier=AmplifierConfig.hfa(), reconciliation="none", cutoff=6, **FAST)
    rows = run_sweep(SweepSpec(base, (SweepAxis("R", 0.1, 0.6, 2),)))
    assert [r.converged for r in rows] == ["unchecked", "error"]
    assert rows[1].error and math.isnan(rows[1].i_bits)


def test_figure_sweep_surfaces():
    spec = figure_sweep(steps=6, check_convergence=False)
    rows = run_sweep(spec)
    assert len(rows) == 3 * 36
    labels = {(r.config.amplifier.m_add, r.config.amplifier.n_sub) for r in rows}
    assert labels == {(0, 2), (0, 3), (1, 1)}
    assert all(r.converged != "error" for r in rows)


def test_emit_round_trip(tmp_path):
    reps = [run_scenario(ScenarioConfig(R=r, amplifier=AmplifierConfig.npa(0.1, 1), **FAST)) for r in (0.2, 0.3)]
    path = tmp_path / "out.csv"
    text = emit(reps, "csv", path)
    assert path.read_text() == text
    rows = parse_csv(text)
    assert list(rows[0]) == CSV_COLUMNS
    for rep, row in zip(reps, rows):
        for k, v in rep.metrics().items():
            assert row[k] == v
    assert emit([], "csv") == ",".join(CSV_COLUMNS) + "\n"


def test_json_metadata():
    rep = run_scenario(ScenarioConfig(**FAST))
    doc = json.loads(emit([rep], "json"))
    meta = doc["metadata"]
    assert meta["log_base"] == 2 and meta["vacuum_variance"] == 0.5
    assert "n_t_interpretation" in meta and "version" in meta and "timestamp" not in meta
    run = meta["runs"][0]
    assert {"cutoff", "hom_points", "het_points", "radial_nodes", "angular_nodes"} <= set(run)
    assert "timestamp" in json.loads(emit([rep], "json", timestamp="x"))["metadata"]


def test_cli_deterministic(tmp_path):
    args = ["scenario", "--n-sub", "1", "--delta", "0.1", "--channel", "lossy", "--kind-b", "het"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"R": 0.2, "reconciliation": "none", "amplifier": {"m_add": 1, "n_sub": 1}}))
    assert main(["scenario", "--config", str(cfg), "--no-convergence", "--format", "json"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert row["R"] == 0.2 and row["m_add"] == 1


def test_cli_exit_codes(tmp_path):
    assert main(["scenario", "--R", "1.5", "--no-convergence"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["scenario", "--config", str(bad)]) == 2
    assert main(["scenario", "--config", str(tmp_path / "missing.json")]) == 4
    assert main(["scenario", "--no-convergence", "--out", str(tmp_path / "no" / "x.csv")]) == 4
    assert main(["scenario", "--R", "0.6", "--m-add", "1", "--n-sub", "1", "--cutoff", "6",
                 "--reconciliation", "none", "--no-convergence"]) == 3

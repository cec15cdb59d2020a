import json

import pytest

from mhealth.cli import build_parser, main
from mhealth.engine.study import reference_model
from mhealth.gateway.config import ConfigError
from mhealth.gateway.link import LinkScript, LinkSegment
from mhealth.sensor.generator import EpisodeScript
from mhealth.simulate import PositionTrack, ScenarioConfig, rising_edges, run_scenario
from mhealth.vitals import LocationSource, PatientState

N, A = PatientState.NORMAL, PatientState.ANOMALY


@pytest.fixture(scope="module")
def model():
    return reference_model(0)


@pytest.mark.parametrize("states,edges", [
    ([], 0), ([N, N], 0), ([A], 1), ([N, A, A, N, A], 2), ([A, None, A], 1), ([N, None, A], 1),
])
def test_rising_edges(states, edges):
    assert rising_edges(states) == edges


def test_position_track_alternates_gps_and_cells():
    track = PositionTrack(window_s=10)
    gps, cell = track(5_000)
    assert gps.source is LocationSource.GPS and cell is None
    gps, cell = track(15_000)
    assert gps is None and cell is not None


def test_baseline_scenario_has_no_alerts(model):
    r = run_scenario(ScenarioConfig(seed=3), model=model)
    assert r.ok and r.report["alerts"] == 0


def test_hypoxia_scenario_alerts_on_low_spo2(model):
    cfg = ScenarioConfig(script=EpisodeScript.of((120, 180, "hypoxia")), seed=3)
    r = run_scenario(cfg, model=model)
    assert r.ok and r.report["alerts"] >= 1
    assert all(a.triggering_sample.spo2_pct < 90 for a in r.alerts)


def test_middle_third_outage_is_fully_recovered(model):
    cfg = ScenarioConfig(link=LinkScript([LinkSegment(200, 400, False)]), seed=4)
    r = run_scenario(cfg, model=model)
    rep = r.report
    assert r.ok
    assert rep["buffered"] > 0 and rep["flushed"] == rep["buffered"]
    assert rep["still_buffered"] == 0 and rep["dropped"] == 0
    assert rep["forwards"] == rep["delivered"] + rep["still_buffered"] + rep["dropped"]
    assert rep["latency"]["max_ms"] >= 199_000


def test_outage_at_end_leaves_entries_buffered(model):
    cfg = ScenarioConfig(duration_s=100, link=LinkScript([LinkSegment(50, 200, False)]), seed=1)
    rep = run_scenario(cfg, model=model).report
    assert rep["still_buffered"] > 0 and not rep["violations"]


def test_small_outbox_drops_oldest_and_still_balances(model):
    cfg = ScenarioConfig(duration_s=120, outbox_capacity=5,
                         link=LinkScript([LinkSegment(10, 100, False)]), seed=2)
    rep = run_scenario(cfg, model=model).report
    assert rep["dropped"] > 0 and not rep["violations"]


def test_scenario_is_reproducible(model):
    cfg = lambda: ScenarioConfig(script=EpisodeScript.of((60, 90, "fever")),
                                 link=LinkScript([LinkSegment(30, 70, False)]), seed=8)
    assert run_scenario(cfg(), model=model).report == run_scenario(cfg(), model=model).report


def test_scenario_from_flat_mapping(tmp_path):
    cfg = ScenarioConfig.from_mapping({
        "scenario.duration_s": 120, "scenario.episodes": [[10, 40, "tachycardia"]],
        "scenario.link_down": [[20, 30]], "profile.hr_mean": 80, "policy.heartbeat_s": 30,
    })
    assert cfg.duration_s == 120 and cfg.profile.hr_mean == 80 and cfg.policy.heartbeat_s == 30
    assert not cfg.link.is_up(25)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_mapping({"scenario.bogus": 1})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_mapping({"scenario.duration_s": 0})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_mapping({"scenario.cells_path": str(tmp_path / "missing.csv")})


# --- CLI ---------------------------------------------------------------------------------

def test_global_flags_before_or_after_subcommand():
    p = build_parser()
    assert p.parse_args(["--seed", "4", "study"]).seed == 4
    assert p.parse_args(["study", "--seed", "5"]).seed == 5


def test_gen_dataset_is_byte_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["gen-dataset", "--out", str(a), "--seed", "2"]) == 0
    assert main(["gen-dataset", "--out", str(b), "--seed", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 541


def test_gen_dataset_zero_fraction(tmp_path, capsys):
    out = tmp_path / "z.csv"
    main(["gen-dataset", "--out", str(out), "--size", "50", "--anomaly-fraction", "0"])
    assert all(line.endswith(",0") for line in out.read_text().splitlines()[1:])


def test_train_then_reload_gives_same_evaluation(tmp_path, capsys):
    from mhealth.engine import LabeledSet, evaluate, load_model

    data = tmp_path / "d.csv"
    main(["gen-dataset", "--out", str(data), "--size", "120"])
    capsys.readouterr()
    assert main(["train", "--dataset", str(data), "--model-out", str(tmp_path / "m.json"),
                 "--n-inputs", "3", "--epochs", "50"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n_inputs"] == 3 and rep["epochs_run"] <= 50
    m = load_model(tmp_path / "m.json")
    assert evaluate(m, LabeledSet.from_csv(data)).accuracy == rep["train_accuracy"]


def test_train_reports_parse_error_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("spo2_pct,hr_bpm,temp_c,activity_level,label\n97,72,x,0.2,0\n")
    assert main(["train", "--dataset", str(bad), "--model-out", str(tmp_path / "m.json")]) == 2
    assert "bad.csv:2:" in capsys.readouterr().err


def test_study_command_writes_report(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["study", "--trials", "3", "--size", "100", "--epochs", "30", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "0.870" in text and "0.940" in text
    d = json.loads(out.read_text())
    assert len(d["trials"]) == 3


def test_simulate_command_exit_code_and_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    rc = main(["simulate", "--duration", "200", "--episode", "60:120:hypoxia",
               "--link-down", "100:150", "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["alerts"] >= 1 and rep["violations"] == []


def test_simulate_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text('[scenario]\nduration_s = 90\nepisodes = [[20, 50, "fever"]]\n'
                   '[policy]\nheartbeat_s = 30\n')
    assert main(["--config", str(cfg), "simulate"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["scenario"]["duration_s"] == 90 and rep["scenario"]["policy"]["heartbeat_s"] == 30


def test_sensor_command_writes_frames(tmp_path, capsys):
    out = tmp_path / "f.bin"
    assert main(["sensor", "--duration", "30", "--out", str(out)]) == 0
    assert out.stat().st_size == 30 * 23


def test_serve_requires_tokens_and_data_dir(capsys):
    assert main(["serve"]) == 2

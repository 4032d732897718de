import json
import math
import subprocess
import sys

import pytest

from bellboost import summary
from bellboost.cli import DEFAULTS, main
from bellboost.decoder import PostselectionStats


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_boost_writes_csv_and_manifest(tmp_path, capsys):
    code, out, _ = run(capsys, "boost", "--d-bell", "3", "--d-s", "3", "--p-bell", "0.02",
                       "--shots", "3000", "--seeds", "4", "--thresholds", "0", "2", "4", "6",
                       "--discard", "--out", str(tmp_path))
    assert code == 0
    status = json.loads(out)
    assert status["status"] == "ok" and "boosting.csv" in status["outputs"]
    rows = summary.read_rows((tmp_path / "boosting.csv").read_text())
    assert [float(r["threshold"]) for r in rows] == [0, 2, 4, 6]
    p_l = [float(r["p_l"]) for r in rows]
    q0 = [float(r["q0"]) for r in rows]
    assert q0 == sorted(q0, reverse=True)
    assert p_l == sorted(p_l, reverse=True)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "boost" and manifest["seeds"] == [4]
    assert set(manifest) >= {"config", "config_hash", "versions", "wall_time_s", "outputs"}


def test_manifest_reproduces_run(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "surgery", "--d-s", "3", "--p-bell", "0.1", "--shots", "2000",
               "--seeds", "9", "--records", "--out", str(a))[0] == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(json.loads((a / "manifest.json").read_text())["config"]))
    assert run(capsys, "surgery", "--config", str(cfg), "--out", str(b))[0] == 0
    for name in ("surgery.csv", "records_surgery_ds3_pb0.1_seed9.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_bell": [3, 5], "R": [2.0]}))
    assert run(capsys, "llv", "--config", str(cfg), "--d-bell", "3", "--out", str(tmp_path))[0] == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["d_bell"] == [3] and manifest["config"]["R"] == [2.0]


def test_unknown_config_key_is_an_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_bel": [3]}))
    code, _, err = run(capsys, "llv", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "d_bel" in json.loads(err.strip().splitlines()[-1])["message"]


def test_llv_matches_fixtures(tmp_path, capsys):
    assert run(capsys, "llv", "--d-bell", "3", "--d-s", "19", "--R", "1", "--out", str(tmp_path))[0] == 0
    rows = summary.read_rows((tmp_path / "llv.csv").read_text())
    assert float(rows[0]["v_total"]) == 13780.0
    assert run(capsys, "llv", "--protocol", "surgery", "--d-s", "3", "--R", "10", "1",
               "--out", str(tmp_path))[0] == 0
    rows = summary.read_rows((tmp_path / "llv.csv").read_text())
    assert [float(r["v_total"]) for r in rows] == [58.5, 202.5]


def test_distill_and_compare(tmp_path, capsys):
    assert run(capsys, "distill", "--m", "2", "3", "--out", str(tmp_path))[0] == 0
    doc = json.loads((tmp_path / "distill.json").read_text())
    assert doc["power_law"]
    assert run(capsys, "compare", "--R", "0.01", "100", "--out", str(tmp_path))[0] == 0
    rows = summary.read_rows((tmp_path / "compare.csv").read_text())
    assert {r["protocol"] for r in rows} >= {"boosting", "boosting+distillation"}


def test_circuit_command_round_trips(tmp_path, capsys):
    from bellboost.circuit import parse

    assert run(capsys, "circuit", "--protocol", "surgery", "--d-s", "3", "--out", str(tmp_path))[0] == 0
    c = parse((tmp_path / "surgery_ds3.txt").read_text())
    assert sorted(c.observable_names()) == ["XX", "ZZ"]


def test_env_var_sets_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BELLBOOST_OUTPUT_DIR", str(tmp_path / "env"))
    assert run(capsys, "llv")[0] == 0
    assert (tmp_path / "env" / "llv.csv").exists()


def test_safety_rail(tmp_path, capsys):
    code, _, err = run(capsys, "boost", "--shots", "300000000", "--out", str(tmp_path))
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "safety_limit"
    assert not (tmp_path / "boosting.csv").exists()


def test_usage_errors_are_json(capsys):
    with pytest.raises(SystemExit) as e:
        main(["boost", "--shots", "many"])
    assert e.value.code == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "usage"


def test_invalid_values_fail_cleanly(tmp_path, capsys):
    code, _, err = run(capsys, "boost", "--d-bell", "5", "--d-s", "3", "--out", str(tmp_path))
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["error"]
    code, _, _ = run(capsys, "boost", "--discard", "1.5", "--out", str(tmp_path))
    assert code == 1


def test_summarize_empty_input_reports_no_data(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text(summary.write_rows(summary.SWEEP_COLUMNS, []))
    assert run(capsys, "summarize", "--inputs", str(empty), "--out", str(tmp_path))[0] == 0
    text = (tmp_path / "summary.csv").read_text()
    assert summary.NO_DATA in text and summary.read_rows(text) == []


def stats_row(seed, total, discarded, valid, wrong, threshold=1.0):
    st = PostselectionStats(threshold, total, discarded, valid, wrong)
    return summary.sweep_row("boosting", 3, 5, 1e-3, 0.02, seed, 0.5, st)


def test_pooling_sums_counts_across_seeds():
    text = summary.write_rows(summary.SWEEP_COLUMNS, [stats_row(1, 100, 40, 58, 2),
                                                      stats_row(2, 300, 90, 205, 5, threshold=2.0)])
    (pt,) = summary.pool_rows(summary.read_rows(text))
    assert pt.seeds == 2 and pt.threshold is None
    assert (pt.stats.total, pt.stats.discarded, pt.stats.valid, pt.stats.wrong) == (400, 130, 263, 7)
    assert pt.stats.p_l_se == pytest.approx(math.sqrt((7 / 270) * (263 / 270) / 270))


def test_crossing_interpolation():
    x = [0.1, 0.2, 0.3]
    assert summary.estimate_crossing(x, [1e-2, 1e-1, 0.3], [1e-3, 1e-1 * 0.5, 0.6]) is not None
    c = summary.estimate_crossing([0.1, 0.2], [0.01, 0.1], [0.001, 1.0])
    # log-ratio goes from log(0.1) to log(10): zero at the midpoint
    assert c == pytest.approx(0.15)
    assert summary.estimate_crossing(x, [0.1, 0.2, 0.3], [0.01, 0.02, 0.03]) is None


def test_defaults_cover_every_command():
    assert set(DEFAULTS) == {"boost", "surgery", "distill", "llv", "compare", "fit", "summarize", "circuit"}


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bellboost.cli", "llv", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"


def test_fit_command_recovers_synthetic_sweep(tmp_path, capsys):
    from bellboost.cost import boosting_error

    rows = []
    for d in (3, 5, 7):
        for pb in (0.02, 0.04, 0.06):
            total = 10**9
            wrong = round(total * float(boosting_error(d, pb, 0.3, 0.7, 0.11)))
            st = PostselectionStats(0.0, total, 0, total - wrong, wrong)
            rows.append(summary.sweep_row("boosting", d, 9, 1e-3, pb, 1, 0.0, st))
    sweep = tmp_path / "sweep.csv"
    sweep.write_text(summary.write_rows(summary.SWEEP_COLUMNS, rows))
    assert run(capsys, "fit", "--inputs", str(sweep), "--out", str(tmp_path))[0] == 0
    (fit,) = json.loads((tmp_path / "fit.json").read_text())["fits"]
    assert fit["gamma"] == pytest.approx(0.7, rel=1e-3)
    assert fit["p_th"] == pytest.approx(0.11, rel=1e-3)
    assert fit["q0"] == 1.0


def test_distill_with_code_file(tmp_path, capsys):
    from bellboost.codes import build_steane_code

    code = tmp_path / "steane.json"
    code.write_text(build_steane_code().to_json())
    assert run(capsys, "distill", "--m", "3", "--code", str(code), "--out", str(tmp_path))[0] == 0
    circ = json.loads((tmp_path / "distill.json").read_text())["circuit"]
    assert (circ["n"], circ["k"], circ["r"]) == (7, 1, 3)
    assert sum(len(s["gates"]) for s in circ["schedule"]) == len(circ["stage1"]) + len(circ["stage2"])

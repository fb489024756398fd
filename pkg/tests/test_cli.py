import json

import numpy as np
import pytest

from contour_imc.cli import EXIT_CONFIG, EXIT_OK, EXIT_SYNTHESIS, main
from contour_imc.simulation import read_csv


def run_cli(argv):
    try:
        return main(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def test_run_writes_outputs_and_is_byte_identical(tmp_path):
    argv = ["run", "--scenario", "circle", "--horizon", "0.2", "--out", str(tmp_path)]
    assert run_cli(argv) == EXIT_OK
    trace = tmp_path / "circle_tvimcc_trace.csv"
    metrics = json.loads((tmp_path / "circle_tvimcc_metrics.json").read_text())
    synth = json.loads((tmp_path / "circle_tvimcc_synthesis.json").read_text())
    assert metrics["controller"] == "tvimcc"
    assert synth["lmi_margin_min"] >= 1e-8
    header, data = read_csv(trace)
    assert data.shape == (2001, len(header))
    first = trace.read_bytes()
    assert run_cli(argv) == EXIT_OK
    assert trace.read_bytes() == first


def test_controller_override_and_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nscenario = sinusoid\nhorizon = 0.1\nslave_controller = ccc\ngains.Kx = 5\n")
    assert run_cli(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "sinusoid_ccc_trace.csv").is_file()


def test_ts_override_changes_row_count(tmp_path):
    argv = ["run", "--scenario", "sinusoid", "--horizon", "0.1", "--ts", "2e-4", "--set", "slave_controller=pid"]
    assert run_cli(argv + ["--out", str(tmp_path)]) == EXIT_OK
    _, data = read_csv(tmp_path / "sinusoid_pid_trace.csv")
    assert data.shape[0] == 501
    np.testing.assert_allclose(data[:, 1], np.arange(501) * 2e-4, rtol=1e-15)


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--scenario", "sinusoid", "--set", "gains.Kq=1"],
        ["run", "--scenario", "nope"],
        ["run", "--scenario", "sinusoid", "--set", "Ts=abc"],
        ["compare", "--scenarios", "sinusoid", "--controllers", ""],
        ["compare", "--scenarios", "sinusoid", "--controllers", "lqr"],
        ["report", "does_not_exist_trace.csv"],
        ["report"],
        ["frobnicate"],
    ],
)
def test_configuration_errors_exit_one(argv, tmp_path):
    assert run_cli(argv + ([] if argv[0] == "frobnicate" else ["--out", str(tmp_path)])) == EXIT_CONFIG


def test_unparseable_trace_exits_one(tmp_path):
    bad = tmp_path / "bad_trace.csv"
    bad.write_text("a,b\n1,x\n")
    assert run_cli(["report", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unreachable_margin_exits_two(tmp_path):
    argv = ["run", "--scenario", "sinusoid", "--horizon", "0.1", "--set", "solver.margin=1e9", "--out", str(tmp_path)]
    assert run_cli(argv) == EXIT_SYNTHESIS


def test_compare_and_report(tmp_path, capsys):
    argv = ["compare", "--scenarios", "circle", "--horizon", "0.2", "--out", str(tmp_path)]
    assert run_cli(argv) == EXIT_OK
    table = capsys.readouterr().out
    for c in ("pid", "ccc", "tvimcc"):
        assert c in table
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0] == "scenario,controller,rms_um,max_um" and len(lines) == 4

    assert run_cli(["run", "--scenario", "circle", "--horizon", "0.2", "--out", str(tmp_path)]) == EXIT_OK
    trace = tmp_path / "circle_tvimcc_trace.csv"
    assert run_cli(["report", str(trace), "--downsample", "1", "--out", str(tmp_path)]) == EXIT_OK
    header, full = read_csv(trace)
    ph, path = read_csv(tmp_path / "circle_tvimcc_path.csv")
    eh, err = read_csv(tmp_path / "circle_tvimcc_error.csv")
    assert ph == ["t", "x1", "y2"] and eh == ["t", "contour_error"]
    np.testing.assert_array_equal(path, full[:, [header.index(h) for h in ph]])
    np.testing.assert_array_equal(err, full[:, [header.index(h) for h in eh]])
    assert run_cli(["report", str(trace), "--downsample", "7", "--out", str(tmp_path)]) == EXIT_OK
    _, path7 = read_csv(tmp_path / "circle_tvimcc_path.csv")
    np.testing.assert_array_equal(path7, path[::7])

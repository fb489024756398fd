from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from contour_imc.contour_signals import ContourSpec
from contour_imc.errors import AssumptionFailure, ConfigError
from contour_imc.simulation import (
    ContourProjector,
    Gains,
    PIDState,
    Scenario,
    SimulationTrace,
    builtin_scenarios,
    ccc_step,
    contour_error,
    contour_metrics,
    pid_step,
    read_csv,
    run_closed_loop,
    sweep,
    with_controller,
)

CIRCLE = ContourSpec("rotational", np.cos, [np.sin], [np.cos], amplitude_R=1.0, theta_gen=lambda t: t)
SINE = ContourSpec("monotonic", lambda t: t, [np.sin], [np.cos])


def short(name, horizon=1.0, **kw):
    return replace(builtin_scenarios()[name], horizon=horizon, **kw)


def test_pid_first_steps():
    st_ = PIDState()
    Ts, Kp, Ki, Kd = 1e-4, 2.6, 11.4, 0.1
    assert pid_step(st_, 1.0, Ts, Kp, Ki, Kd) == pytest.approx(Kp + Ki * Ts / 2 + Kd / Ts, rel=1e-15)
    assert pid_step(st_, 1.0, Ts, Kp, Ki, Kd) == pytest.approx(Kp + Ki * 1.5 * Ts, rel=1e-15)


@pytest.mark.parametrize(
    "ex, ey, phi, expected",
    [
        (0.3, 0.5, 0.0, (0.0, 30 * 0.5)),
        (0.3, 0.5, np.pi / 2, (10 * 0.3, 0.0)),
        (1.0, 1.0, np.pi / 4, (0.0, 0.0)),  # error along the tangent
    ],
)
def test_ccc_examples(ex, ey, phi, expected):
    np.testing.assert_allclose(ccc_step(ex, ey, phi, 10.0, 30.0), expected, atol=1e-14)


def test_contour_error_simple_points():
    assert contour_error((1.1, 0.0), CIRCLE) == pytest.approx(0.1, abs=1e-12)
    assert contour_error((np.cos(0.7), np.sin(0.7)), CIRCLE) == pytest.approx(0.0, abs=1e-12)
    assert contour_error((0.0, 0.0), CIRCLE) == pytest.approx(1.0, abs=1e-12)
    assert contour_error((np.pi / 2, 1.5), SINE) == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.5, 5.5), y=st.floats(-1.5, 1.5))
def test_contour_error_matches_brute_force(x, y):
    proj = ContourProjector(SINE, -2.0, 8.0, 1e-3)
    d, _ = proj.query([[x, y]])
    grid = np.linspace(-2.0, 8.0, 200_001)
    k = np.argmin((grid - x) ** 2 + (np.sin(grid) - y) ** 2)
    res = minimize_scalar(
        lambda s: np.hypot(s - x, np.sin(s) - y), bounds=(grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]),
        method="bounded", options={"xatol": 1e-12},
    )
    assert d[0] == pytest.approx(res.fun, abs=1e-8)


def test_zero_reference_gives_identically_zero_trace():
    zero = ContourSpec("monotonic", lambda t: t, [lambda s: 0.0 * s], [lambda s: 0.0 * s])
    tr = run_closed_loop(Scenario("zero", zero, 0.5))
    for name in ("y2", "e2", "u2", "u_im", "u_st", "contour_error"):
        assert np.all(tr.columns[name] == 0.0), name


def test_rows_time_and_error_identity():
    for ctrl in ("tvimcc", "pid", "ccc"):
        sc = with_controller(short("sinusoid"), ctrl)
        tr = run_closed_loop(sc)
        assert len(tr) == sc.n_rows == 10_001
        np.testing.assert_array_equal(tr.columns["k"], np.arange(10_001))
        np.testing.assert_array_equal(tr.columns["t"], np.arange(10_001) * 1e-4)
        np.testing.assert_allclose(tr.columns["e2"], tr.columns["y2"] - tr.columns["r2"], atol=1e-15)


def test_runs_are_deterministic_and_sweep_keeps_order():
    scs = [with_controller(short("circle", 0.5), c) for c in ("pid", "tvimcc", "ccc")]
    seq = sweep(scs, threads=1)
    par = sweep(scs, threads=3)
    for sc, a, b in zip(scs, seq, par):
        assert a.metadata["controller"] == b.metadata["controller"] == sc.slave_controller
        np.testing.assert_array_equal(a.table(), b.table())


def test_tvimcc_metadata_and_small_error():
    tr = run_closed_loop(short("sinusoid", 2.0))
    md = tr.metadata
    assert md["lmi_margin_min"] >= 1e-8
    assert md["sylvester_residual_max"] < 1e-10
    assert md["observer_gain"] == pytest.approx(-0.2)
    assert np.max(np.abs(tr.columns["e2"][10_000:])) < 1e-8


def test_header_and_csv_round_trip(tmp_path):
    tr = run_closed_loop(with_controller(short("sinusoid", 0.1), "pid"))
    assert tr.header() == ["k", "t", "x1_ref", "x1", "r2", "y2", "e2", "u2", "u_im", "u_st", "contour_error"]
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    header, data = read_csv(path)
    assert header == tr.header()
    np.testing.assert_array_equal(data, tr.table())
    first = path.read_bytes()
    run_closed_loop(with_controller(short("sinusoid", 0.1), "pid")).to_csv(path)
    assert path.read_bytes() == first


def test_multi_slave_header():
    tr = run_closed_loop(with_controller(short("four_axis", 0.05), "pid"))
    h = tr.header()
    assert h[4:7] == ["r2_1", "r2_2", "r2_3"]
    assert len(h) == 4 + 6 * 3 + 1


def test_config_errors():
    with pytest.raises(ConfigError):
        with_controller(short("four_axis"), "ccc")
    with pytest.raises(ConfigError):
        short("sinusoid", Ts=-1.0)
    with pytest.raises(ConfigError):
        short("sinusoid", horizon=1e-3)
    with pytest.raises(ConfigError):
        short("sinusoid", gains=Gains(schedule="other"))


def test_non_monotone_master_fails_assumptions():
    bad = ContourSpec("monotonic", np.cos, [np.sin], [np.cos])
    with pytest.raises(AssumptionFailure):
        run_closed_loop(Scenario("bad", bad, 5.0))


def test_contour_metrics_on_known_trace():
    n = 1000
    ce = np.zeros(n)
    ce[100] = 5e-3  # 5 um transient in the first half
    ce[n // 2 :] = np.where(np.arange(n // 2) % 2, 2e-4, 0.0)  # 0.2 um on every other sample
    tr = SimulationTrace({"contour_error": ce, "k": np.arange(n)}, s=np.linspace(0, 1, n))
    m = contour_metrics(tr)
    assert m.n_samples == 500
    assert m.rms == pytest.approx(0.2 / np.sqrt(2), rel=1e-12)
    assert m.max == pytest.approx(0.2, rel=1e-12)
    assert m.settling_index == 101
    masked = contour_metrics(tr, mask=lambda s: s > 0.9)
    assert masked.n_samples == np.count_nonzero(np.linspace(0, 1, n)[n // 2 :] > 0.9)


def test_tracked_master_sinusoid_runs_from_standstill():
    tr = run_closed_loop(short("sinusoid", 1.0, master_mode="tracked"))
    x1 = tr.columns["x1"]
    assert x1[0] == x1[1] == 0.0  # the master rests for one tick
    assert np.max(np.abs(tr.columns["e2"][5_000:])) < 1e-8


def test_tracked_master_off_the_circle_fails_assumptions():
    # the PID-tracked master lags and never reaches the amplitude R = 1
    with pytest.raises(AssumptionFailure, match="R cos"):
        run_closed_loop(short("circle", 0.5, master_mode="tracked"))

import numpy as np
import pytest

from contour_imc.errors import Infeasible
from contour_imc.sdp import (
    LmiProblem,
    MatrixVariable,
    check_solution,
    dump_problem,
    load_problem,
    solve_lmi_feasibility,
)


def stabilization_problem(A, B):
    """Scalar state-feedback LMI in (Q, G, R): K = R / G makes A + B K Schur."""
    vs = [MatrixVariable("Q", (1, 1), True), MatrixVariable("G", (1, 1)), MatrixVariable("R", (1, 1))]

    def block(v):
        X = A * v["G"] + B * v["R"]
        return np.block([[v["G"] + v["G"].T - v["Q"], X.T], [X, v["Q"]]])

    return LmiProblem(vs, [("Q", lambda v: v["Q"]), ("pair", block)])


def interval_problem():
    """diag(1 - x, x) > 0: bounded, maximal margin 0.5 at x = 0.5."""
    return LmiProblem([MatrixVariable("x", (1, 1))], [("iv", lambda v: np.diag([1.0 - v["x"][0, 0], v["x"][0, 0]]))])


def test_stabilizable_scalar_is_feasible():
    sol = solve_lmi_feasibility(stabilization_problem(0.5, 1.0), stop_margin=1.0)
    K = sol.assignment["R"][0, 0] / sol.assignment["G"][0, 0]
    assert abs(0.5 + K) < 1.0
    assert sol.report.ok and sol.margin >= 1.0


def test_unstable_uncontrollable_scalar_is_infeasible():
    with pytest.raises(Infeasible) as exc:
        solve_lmi_feasibility(stabilization_problem(2.0, 0.0), stop_margin=1.0)
    assert exc.value.margin <= 1e-8


def test_bounded_problem_reaches_analytic_margin():
    sol = solve_lmi_feasibility(interval_problem())
    assert sol.margin == pytest.approx(0.5, rel=1e-7)
    assert sol.assignment["x"][0, 0] == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("c", [1e-3, 0.5, 2.0, 1e3])
def test_margin_scales_linearly(c):
    base = solve_lmi_feasibility(interval_problem()).margin
    scaled = solve_lmi_feasibility(interval_problem().scaled(c)).margin
    assert scaled == pytest.approx(c * base, rel=1e-6)


def test_check_solution_uses_independent_eigenvalues():
    prob = stabilization_problem(0.5, 1.0)
    assign = {"Q": np.array([[2.0]]), "G": np.array([[1.5]]), "R": np.array([[-0.5]])}
    rep = check_solution(prob, assign)
    # pair block [[1, 0.25], [0.25, 2]]
    expected = np.linalg.eigvalsh(np.array([[1.0, 0.25], [0.25, 2.0]])).min()
    assert rep.block_min_eig["pair"] == pytest.approx(expected, rel=1e-14)
    assert rep.block_min_eig["Q"] == 2.0
    assert rep.global_min == pytest.approx(expected)


def test_dump_load_round_trip():
    prob = stabilization_problem(0.5, 1.0)
    text = dump_problem(prob)
    again = load_problem(text)
    assert dump_problem(again) == text
    for (n1, F01, F1), (n2, F02, F2) in zip(prob.coefficients(), again.coefficients()):
        assert n1 == n2
        np.testing.assert_array_equal(F01, F02)
        np.testing.assert_array_equal(F1, F2)
    s1 = solve_lmi_feasibility(prob, stop_margin=1.0)
    s2 = solve_lmi_feasibility(again, stop_margin=1.0)
    np.testing.assert_array_equal(s1.z, s2.z)


def test_rejects_nonaffine_constraint_and_tiny_target():
    prob = LmiProblem([MatrixVariable("x", (1, 1))], [("sq", lambda v: v["x"] @ v["x"])])
    with pytest.raises(ValueError):
        prob.coefficients()
    with pytest.raises(ValueError):
        LmiProblem([], [], margin_target=1e-12)


def test_symmetric_variable_pack_round_trip():
    v = MatrixVariable("P", (3, 3), True)
    assert v.size == 6
    M = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    np.testing.assert_array_equal(v.unpack(v.pack(M)), M)

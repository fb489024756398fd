import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import place_poles

from contour_imc.errors import ObserverPlacementFailure, OutOfRange
from contour_imc.exosystem import build_exosystem_ct, discretize_along
from contour_imc.plant import fitted_paper_plants, to_observer_canonical
from contour_imc.stabilizer import (
    AugmentedSystem,
    PolytopeGrid,
    ackermann_observer,
    augmented_A,
    build_augmented,
    estimate_xb,
    lagrange_weights,
    lyapunov_increments,
    observer_step,
    random_sigma_decay,
    sigma_weights,
    sigma_weights_many,
    stabilizer_output,
    synthesize_gains,
)

TS = 1e-4
CANON = to_observer_canonical(fitted_paper_plants()[1]).canon


@pytest.fixture(scope="module")
def schedule():
    t = np.arange(20_002) * TS
    s = t + 0.1 * np.sin(5 * t)
    exo = build_exosystem_ct(np.sin, np.cos, x1_offset=None, x1_range=s)
    alpha = discretize_along(exo, s, TS).alpha
    grid = PolytopeGrid.from_schedule(s[:-1], alpha)
    return s[:-1], alpha, synthesize_gains(grid, CANON.b)


def test_augmented_matrix_examples():
    np.testing.assert_array_equal(augmented_A([3.0, 5.0]), [[-3, 1], [-5, 0]])
    np.testing.assert_array_equal(augmented_A([3.0, 5.0], 3), [[-3, 1, 0], [-5, 0, 1], [0, 0, 0]])
    stack = augmented_A(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert stack.shape == (2, 2, 2)
    np.testing.assert_array_equal(stack[1], [[-3, 1], [-4, 0]])
    aug = build_augmented([3.0, 5.0], [7.0, 11.0])
    assert aug.A11[0, 0] == -3 and aug.A12[0, 0] == 1 and aug.A21[0, 0] == -5 and aug.A22[0, 0] == 0
    assert aug.B1 == 7.0
    np.testing.assert_array_equal(aug.B2, [11.0])
    with pytest.raises(ValueError):
        build_augmented([3.0, 5.0], [7.0, 11.0], n=3)


GRID = PolytopeGrid(np.linspace(-1.0, 2.0, 7), np.zeros((7, 2, 2)))


@settings(max_examples=200)
@given(s=st.floats(-1.0, 2.0))
def test_sigma_is_convex_and_reproduces_s(s):
    sig = sigma_weights(s, GRID)
    assert np.all(sig >= 0)
    assert sig.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.count_nonzero(sig) <= 2
    assert sig @ GRID.vertices == pytest.approx(s, abs=1e-14)
    j, w = sigma_weights_many(np.array([s]), GRID)
    assert sig[j[0]] == pytest.approx(w[0], abs=1e-15)


def test_sigma_collapses_at_vertices_and_rejects_outside():
    for i, v in enumerate(GRID.vertices):
        np.testing.assert_array_equal(sigma_weights(v, GRID), np.eye(GRID.N)[i])
    with pytest.raises(OutOfRange):
        sigma_weights(2.1, GRID)
    with pytest.raises(OutOfRange):
        sigma_weights_many(np.array([0.0, -1.5]), GRID)


def test_lagrange_weights_sum_to_one_but_go_negative():
    s = np.linspace(-1.0, 2.0, 301)
    W = np.array([lagrange_weights(x, GRID.vertices) for x in s])
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert W.min() < 0


def test_synthesis_gives_certified_stabilizing_gains(schedule):
    _, _, sched = schedule
    assert sched.margins.ok and sched.margins.global_min >= 1e-8
    assert np.all(np.abs(sched.K_i) > 1e3) and np.all(np.abs(sched.K_i) < 1e6)
    for i in range(sched.grid.N):
        np.testing.assert_allclose(sched.K_i[i] @ sched.G[i], sched.R[i], rtol=1e-9)
        Acl = sched.grid.A_i[i] + np.outer(sched.B, sched.K_i[i])
        assert np.max(np.abs(np.linalg.eigvals(Acl))) < 1.0


def test_lyapunov_function_decreases_under_random_switching(schedule):
    _, _, sched = schedule
    rng = np.random.default_rng(7)
    lo, hi = sched.grid.span
    path = [sigma_weights(x, sched.grid) for x in rng.uniform(lo, hi, 200)]
    dV = lyapunov_increments(sched, path, rng.normal(size=2))
    assert np.all(dV < 0)


def test_random_switching_decays(schedule):
    _, _, sched = schedule
    hits = random_sigma_decay(sched, trials=50, steps=50_000)
    assert min(hits) > 0


def test_observer_error_follows_placed_pole(schedule):
    _, alpha, sched = schedule
    rng = np.random.default_rng(11)
    F = sched.observer_matrix
    assert F[0, 0] == pytest.approx(0.2, abs=1e-12)
    x = rng.normal(size=2)
    z = np.zeros(1)
    err_prev = x[1:] - estimate_xb(sched, z, x[0])
    worst = 0.0
    for k in range(500):
        aug = AugmentedSystem(alpha[k], sched.B)
        u = rng.normal()
        z, _ = observer_step(sched, aug, z, x[0], u)
        x = aug.A @ x + aug.B * u
        err = x[1:] - estimate_xb(sched, z, x[0])
        worst = max(worst, float(np.max(np.abs(err - F @ err_prev))))
        err_prev = err
    assert worst < 1e-10


def test_stabilizer_output_is_linear_and_uses_vertex_gain(schedule):
    _, _, sched = schedule
    v = sched.grid.vertices[3]
    assert stabilizer_output(sched, 2.0, [3.0], v) == pytest.approx(2.0 * sched.K_i[3, 0] + 3.0 * sched.K_i[3, 1])
    s = 0.5 * (sched.grid.vertices[3] + sched.grid.vertices[4])
    u1 = stabilizer_output(sched, 1.0, [0.5], s)
    assert stabilizer_output(sched, -4.0, [-2.0], s) == pytest.approx(-4.0 * u1, rel=1e-14)
    np.testing.assert_allclose(sched.K_many(np.array([s]))[0], sched.K_of(s), rtol=1e-14)


def test_ackermann_matches_scipy_for_distinct_poles():
    rng = np.random.default_rng(5)
    A22, A12 = rng.normal(size=(3, 3)), rng.normal(size=(1, 3))
    poles = np.array([0.1, 0.2, -0.3])
    H = ackermann_observer(A22, A12, poles)
    ref = place_poles(A22.T, A12.T, poles).gain_matrix.T[:, 0]
    np.testing.assert_allclose(H, ref, rtol=1e-8)


def test_ackermann_handles_repeated_poles():
    A22 = np.array([[0.0, 1.0], [0.0, 0.0]])
    H = ackermann_observer(A22, [1.0, 0.0], 0.2)
    np.testing.assert_allclose(np.linalg.eigvals(A22 - np.outer(H, [1.0, 0.0])), [0.2, 0.2], atol=1e-6)


def test_observer_placement_failures():
    with pytest.raises(ObserverPlacementFailure):
        ackermann_observer(np.eye(2), [[1.0, 0.0]], 0.2)  # unobservable
    with pytest.raises(ObserverPlacementFailure):
        ackermann_observer(np.zeros((2, 2)) + np.diag([1.0], 1), [[1.0, 0.0]], [0.1 + 0.2j, 0.3])

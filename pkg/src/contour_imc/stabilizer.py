"""Gain-scheduled stabilizer: augmented error system, polytope grid, LMI gains, reduced observer.

The stabilization target lives in observer-canonical error coordinates
``x_o``. Its transition ``A(k)`` carries ``-alpha(k)`` (the exosystem
characteristic coefficients) in the first column and a shifted identity in
the upper right; the input matrix is the plant numerator ``B = [b_1..b_n]``.
Only ``x_o1 = e_2`` is measured, the rest (``x_b``) is estimated by a
reduced-order observer whose error dynamics ``A22 - H A12`` are constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ObserverPlacementFailure, OutOfRange, SynthesisFailure
from .plant import observability_matrix
from .sdp import LmiProblem, LmiSolution, MarginReport, MatrixVariable, solve_lmi_feasibility

DEFAULT_VERTICES = 9
DEFAULT_PAD = 0.05
DEFAULT_OBSERVER_POLE = 0.2
# The vertex LMIs are homogeneous; any margin this size is a comfortable certificate.
STOP_MARGIN = 1.0


def _alpha_padded(alpha, n: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    rho = alpha.shape[-1]
    if n < rho:
        raise ValueError(f"state dimension {n} below exosystem order {rho}")
    pad = np.zeros(alpha.shape[:-1] + (n - rho,))
    return np.concatenate([alpha, pad], -1)


def augmented_A(alpha, n: Optional[int] = None) -> np.ndarray:
    """``A`` for one coefficient vector or a stack ``(..., rho)`` of them."""
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.shape[-1] if n is None else n
    a = _alpha_padded(alpha, n)
    A = np.zeros(a.shape[:-1] + (n, n))
    A[..., :, 0] = -a
    A[..., : n - 1, 1:] = np.eye(n - 1)
    return A


@dataclass
class AugmentedSystem:
    """``x_o(k+1) = A(k) x_o(k) + B u_st(k)`` for one coefficient vector."""

    alpha: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        self.B = np.asarray(self.B, dtype=float).reshape(-1)
        if self.B.size < self.alpha.size:
            raise ValueError("input vector shorter than exosystem order")

    @property
    def n(self) -> int:
        return self.B.size

    @property
    def A(self) -> np.ndarray:
        return augmented_A(self.alpha, self.n)

    @property
    def A11(self) -> np.ndarray:
        return self.A[:1, :1]

    @property
    def A12(self) -> np.ndarray:
        return self.A[:1, 1:]

    @property
    def A21(self) -> np.ndarray:
        return self.A[1:, :1]

    @property
    def A22(self) -> np.ndarray:
        return self.A[1:, 1:]

    @property
    def B1(self) -> float:
        return float(self.B[0])

    @property
    def B2(self) -> np.ndarray:
        return self.B[1:].copy()


def build_augmented(alpha, H2, n: Optional[int] = None) -> AugmentedSystem:
    """Augmented error system; ``H2`` is the canonical plant input vector."""
    H2 = np.asarray(H2, dtype=float).reshape(-1)
    if n is not None and n != H2.size:
        raise ValueError("n must equal the length of H2")
    return AugmentedSystem(alpha, H2)


@dataclass
class PolytopeGrid:
    """Vertices ``s_1 < ... < s_N`` of the scheduling variable and ``A`` at each."""

    vertices: np.ndarray
    A_i: np.ndarray  # (N, n, n)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1)
        self.A_i = np.asarray(self.A_i, dtype=float)
        if self.vertices.size < 2:
            raise ValueError("a polytope grid needs at least two vertices")
        if np.any(np.diff(self.vertices) <= 0):
            raise ValueError("vertices must be strictly increasing")
        if self.A_i.shape[0] != self.vertices.size:
            raise ValueError("one vertex matrix per grid point required")

    @property
    def N(self) -> int:
        return self.vertices.size

    @property
    def n(self) -> int:
        return self.A_i.shape[1]

    @property
    def span(self):
        return float(self.vertices[0]), float(self.vertices[-1])

    def A_of(self, s) -> np.ndarray:
        return np.tensordot(sigma_weights(s, self), self.A_i, axes=1)

    @classmethod
    def from_schedule(cls, s_seq, alpha_seq, N: int = DEFAULT_VERTICES, pad: float = DEFAULT_PAD, n=None):
        """Grid over the sampled range of ``s`` widened by ``pad`` of its width on both sides.

        Vertex coefficients are linear interpolants of the sampled schedule,
        held constant beyond its ends.
        """
        s_seq = np.asarray(s_seq, dtype=float).reshape(-1)
        alpha_seq = np.atleast_2d(np.asarray(alpha_seq, dtype=float))
        if s_seq.size != alpha_seq.shape[0]:
            raise ValueError("s_seq and alpha_seq differ in length")
        if N < 2:
            raise ValueError("N must be at least 2")
        lo, hi = float(s_seq.min()), float(s_seq.max())
        width = max(hi - lo, 1e-12)
        verts = np.linspace(lo - pad * width, hi + pad * width, N)
        order = np.argsort(s_seq, kind="stable")
        ss, aa = s_seq[order], alpha_seq[order]
        alpha_v = np.column_stack([np.interp(verts, ss, aa[:, j]) for j in range(aa.shape[1])])
        return cls(verts, augmented_A(alpha_v, n))


def sigma_weights(s, grid: PolytopeGrid, tol: float = 1e-12) -> np.ndarray:
    """Piecewise-linear convex weights of ``s`` over the bracketing vertex pair."""
    v = grid.vertices
    s = float(s)
    width = v[-1] - v[0]
    if not (v[0] - tol * width <= s <= v[-1] + tol * width):
        raise OutOfRange(f"scheduling value {s!r} outside grid [{v[0]!r}, {v[-1]!r}]")
    s = min(max(s, v[0]), v[-1])
    j = int(np.clip(np.searchsorted(v, s, side="right") - 1, 0, v.size - 2))
    sig = np.zeros(v.size)
    left = (v[j + 1] - s) / (v[j + 1] - v[j])
    sig[j] = left
    sig[j + 1] = 1.0 - left
    return sig


def sigma_weights_many(s, grid: PolytopeGrid, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form: ``(left_index, left_weight)`` per sample."""
    v = grid.vertices
    s = np.asarray(s, dtype=float)
    width = v[-1] - v[0]
    if np.any(s < v[0] - tol * width) or np.any(s > v[-1] + tol * width):
        raise OutOfRange("scheduling values leave the grid")
    s = np.clip(s, v[0], v[-1])
    j = np.clip(np.searchsorted(v, s, side="right") - 1, 0, v.size - 2)
    return j, (v[j + 1] - s) / (v[j + 1] - v[j])


def lagrange_weights(s, vertices) -> np.ndarray:
    """Full-product Lagrange interpolation weights. May be negative for more than two vertices."""
    v = np.asarray(vertices, dtype=float)
    out = np.ones(v.size)
    for i in range(v.size):
        for j in range(v.size):
            if i != j:
                out[i] *= (s - v[j]) / (v[i] - v[j])
    return out


def ackermann_observer(A22, A12, poles) -> np.ndarray:
    """Gain ``H`` with ``eig(A22 - H A12) = poles`` for a single measured row."""
    A22 = np.atleast_2d(np.asarray(A22, dtype=float))
    A12 = np.asarray(A12, dtype=float).reshape(1, -1)
    m = A22.shape[0]
    poles = np.broadcast_to(np.asarray(poles, dtype=complex), (m,))
    O = observability_matrix(A22, A12)
    sv = np.linalg.svd(O, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise ObserverPlacementFailure("(A22, A12) is not observable")
    coeffs = np.poly(poles)
    if np.max(np.abs(coeffs.imag)) > 1e-9:
        raise ObserverPlacementFailure("observer poles must come in conjugate pairs")
    coeffs = coeffs.real
    phi = np.zeros((m, m))
    Ak = np.eye(m)
    for c in coeffs[::-1]:
        phi += c * Ak
        Ak = Ak @ A22
    e_last = np.zeros(m)
    e_last[-1] = 1.0
    H = phi @ np.linalg.solve(O, e_last)
    got = np.sort_complex(np.linalg.eigvals(A22 - np.outer(H, A12)))
    if np.max(np.abs(got - np.sort_complex(poles))) > 1e-6:
        raise ObserverPlacementFailure(f"placed poles {got} differ from requested {poles}")
    return H


def lmi_problem(grid: PolytopeGrid, B, margin_target: float = 1e-8) -> LmiProblem:
    """Vertex-pair LMIs in ``(Q_i, G_i, R_i)``: ``Q_i > 0`` and

    ``[[G_i + G_i' - Q_i, (A_i G_i + B R_i)'], [A_i G_i + B R_i, Q_j]] > 0``.
    """
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    n, N = grid.n, grid.N
    variables = []
    for i in range(N):
        variables += [
            MatrixVariable(f"Q{i}", (n, n), True),
            MatrixVariable(f"G{i}", (n, n)),
            MatrixVariable(f"R{i}", (1, n)),
        ]
    cons = []
    for i in range(N):
        cons.append((f"Q{i}", (lambda i: lambda v: v[f"Q{i}"])(i)))
    for i in range(N):
        Ai = grid.A_i[i]
        for j in range(N):

            def blk(v, i=i, j=j, Ai=Ai):
                Gi = v[f"G{i}"]
                X = Ai @ Gi + B @ v[f"R{i}"]
                return np.block([[Gi + Gi.T - v[f"Q{i}"], X.T], [X, v[f"Q{j}"]]])

            cons.append((f"pair{i},{j}", blk))
    return LmiProblem(variables, cons, margin_target=margin_target)


@dataclass
class StabilizerSchedule:
    grid: PolytopeGrid
    B: np.ndarray
    Q: np.ndarray  # (N, n, n)
    G: np.ndarray
    R: np.ndarray  # (N, n), already rescaled to the unnormalized B
    K_i: np.ndarray  # (N, n)
    H: np.ndarray  # (n-1,)
    margins: MarginReport
    solution: Optional[LmiSolution] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def K_of(self, s) -> np.ndarray:
        return sigma_weights(s, self.grid) @ self.K_i

    def K_many(self, s) -> np.ndarray:
        j, w = sigma_weights_many(s, self.grid)
        return w[:, None] * self.K_i[j] + (1.0 - w)[:, None] * self.K_i[j + 1]

    @property
    def observer_matrix(self) -> np.ndarray:
        aug = AugmentedSystem(np.zeros(1), self.B)
        return aug.A22 - np.outer(self.H, aug.A12)

    def closed_loop(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        A = np.tensordot(sigma, self.grid.A_i, axes=1)
        return A + np.outer(self.B, sigma @ self.K_i)

    def lyapunov(self, sigma) -> np.ndarray:
        """Parameter-dependent Lyapunov matrix ``sum_i sigma_i Q_i^{-1}``."""
        return np.tensordot(np.asarray(sigma, dtype=float), np.linalg.inv(self.Q), axes=1)


def synthesize_gains(
    grid: PolytopeGrid,
    B,
    observer_poles=DEFAULT_OBSERVER_POLE,
    margin_target: float = 1e-8,
    **solver_kw,
) -> StabilizerSchedule:
    """Solve the vertex LMIs, form ``K_i = R_i G_i^{-1}`` and place the observer.

    ``B`` is normalized to unit length for the solve, which leaves every LMI
    block unchanged once ``R`` is scaled back. ``observer_poles`` is a scalar
    (all poles at that value) or one value per unmeasured state.
    """
    B = np.asarray(B, dtype=float).reshape(-1)
    n = grid.n
    if B.size != n:
        raise ValueError("B length must match the grid state dimension")
    scale = float(np.linalg.norm(B))
    if scale == 0.0:
        Bn = B
        scale = 1.0
    else:
        Bn = B / scale
    prob = lmi_problem(grid, Bn, margin_target)
    solver_kw.setdefault("stop_margin", STOP_MARGIN)
    sol = solve_lmi_feasibility(prob, **solver_kw)
    N = grid.N
    Q = np.stack([sol.assignment[f"Q{i}"] for i in range(N)])
    G = np.stack([sol.assignment[f"G{i}"] for i in range(N)])
    R = np.stack([sol.assignment[f"R{i}"].reshape(-1) for i in range(N)]) / scale
    try:
        K = np.stack([np.linalg.solve(G[i].T, R[i]) for i in range(N)])
    except np.linalg.LinAlgError as exc:
        raise SynthesisFailure(f"singular G at a vertex: {exc}") from exc
    if n > 1:
        aug = AugmentedSystem(np.zeros(1), B)
        H = ackermann_observer(aug.A22, aug.A12, observer_poles)
    else:
        H = np.zeros(0)
    return StabilizerSchedule(grid, B, Q, G, R, K, H, sol.report, sol)


def observer_step(sched: StabilizerSchedule, aug: AugmentedSystem, z, e2: float, u_st_prev: float):
    """Advance the reduced observer one tick; returns ``(z_next, xhat_b_next)``."""
    H = sched.H
    F = aug.A22 - np.outer(H, aug.A12)
    z = np.asarray(z, dtype=float)
    z_next = (
        F @ z
        + (aug.B2 - H * aug.B1) * u_st_prev
        + (F @ H + aug.A21[:, 0] - H * aug.A11[0, 0]) * e2
    )
    return z_next, z_next + H * e2


def estimate_xb(sched: StabilizerSchedule, z, e2: float) -> np.ndarray:
    return np.asarray(z, dtype=float) + sched.H * e2


def stabilizer_output(sched: StabilizerSchedule, x_o1: float, xhat_b, s) -> float:
    """``u_st = K_1(s) x_o1 + K_2(s) xhat_b``."""
    K = sched.K_of(s)
    return float(K[0] * x_o1 + K[1:] @ np.asarray(xhat_b, dtype=float).reshape(-1))


class Stabilizer:
    """Runtime observer-based stabilizer for one slave axis."""

    def __init__(self, sched: StabilizerSchedule):
        self.sched = sched
        self.z = np.zeros(sched.n - 1)

    def reset(self):
        self.z[:] = 0.0

    def output(self, e2: float, K) -> tuple[float, np.ndarray]:
        xb = self.z + self.sched.H * e2
        return float(K[0] * e2 + K[1:] @ xb), xb

    def step(self, alpha, e2: float, u_st: float):
        aug = AugmentedSystem(alpha, self.sched.B)
        self.z, _ = observer_step(self.sched, aug, self.z, e2, u_st)


def random_sigma_decay(
    sched: StabilizerSchedule,
    trials: int = 50,
    steps: int = 50_000,
    threshold: float = 1e-6,
    seed: int = 0,
) -> List[int]:
    """Steps needed for ``|x_o|`` to drop below ``threshold * |x_o(0)|`` under random switching.

    Each trial draws a fresh scheduling value uniformly over the grid at every
    tick. Returns one count per trial, ``-1`` when the horizon is exhausted.
    """
    rng = np.random.default_rng(seed)
    lo, hi = sched.grid.span
    out = []
    for _ in range(trials):
        x = rng.standard_normal(sched.n)
        x0 = np.linalg.norm(x)
        s_path = rng.uniform(lo, hi, steps)
        j, w = sigma_weights_many(s_path, sched.grid)
        Acl = sched.grid.A_i + np.einsum("i,nj->nij", sched.B, sched.K_i)
        hit = -1
        for k in range(steps):
            x = w[k] * (Acl[j[k]] @ x) + (1.0 - w[k]) * (Acl[j[k] + 1] @ x)
            if np.linalg.norm(x) <= threshold * x0:
                hit = k + 1
                break
        out.append(hit)
    return out


def lyapunov_increments(sched: StabilizerSchedule, sigma_path: Sequence[np.ndarray], x0) -> np.ndarray:
    """``V(k+1) - V(k)`` along a closed-loop run, with ``V = x' P(sigma) x``."""
    x = np.asarray(x0, dtype=float)
    out = []
    for k in range(len(sigma_path) - 1):
        s0, s1 = sigma_path[k], sigma_path[k + 1]
        xn = sched.closed_loop(s0) @ x
        out.append(xn @ sched.lyapunov(s1) @ xn - x @ sched.lyapunov(s0) @ x)
        x = xn
    return np.array(out)


__all__ = [
    "AugmentedSystem",
    "PolytopeGrid",
    "Stabilizer",
    "StabilizerSchedule",
    "ackermann_observer",
    "augmented_A",
    "build_augmented",
    "estimate_xb",
    "lagrange_weights",
    "lmi_problem",
    "observer_step",
    "random_sigma_decay",
    "sigma_weights",
    "sigma_weights_many",
    "stabilizer_output",
    "synthesize_gains",
]

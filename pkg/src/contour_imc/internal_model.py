"""Two-module time-varying internal model.

Module 1 is a copy of the slave plant driven by the total control ``u2``; its
output ``u_r`` therefore reproduces the plant output. Module 2 is a scalar
time-varying filter of ``-u_r`` whose parameters ``(q, p)`` solve a
per-sample Sylvester equation. Written with polynomial coefficients
(highest power first) that equation reads

    a(z) (z^{rho-1} + q...) + b(z) p(z) = alpha(z) (z^{rho-1} + q...)

where ``a``/``b`` are the plant's characteristic/numerator polynomials and
``alpha`` the exosystem's characteristic polynomial. The leading (monic)
coefficient matches identically and is dropped, leaving ``2 rho - 1`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularSystem
from .plant import CanonicalForm, PlantDT

SYLVESTER_TOL = 1e-10


def banded_operator(coeffs) -> np.ndarray:
    """``(2 rho - 1) x rho`` multiplication operator of the monic polynomial ``[1, *coeffs]``.

    Column ``j`` of the full ``2 rho x rho`` operator is ``[0_j; 1; coeffs; 0]``;
    row 0 (always ``[1, 0, ...]``) is dropped.
    """
    c = np.asarray(coeffs, dtype=float).reshape(-1)
    rho = c.size
    full = np.zeros((2 * rho, rho))
    for j in range(rho):
        full[j, j] = 1.0
        full[j + 1 : j + 1 + rho, j] = c
    return full[1:]


def full_banded_operator(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float).reshape(-1)
    rho = c.size
    return np.vstack([np.eye(1, rho), banded_operator(c)])


def input_operator(F0) -> np.ndarray:
    """``(2 rho - 1) x rho`` operator whose column ``j`` is ``F0`` shifted down ``j`` rows."""
    F0 = np.asarray(F0, dtype=float).reshape(-1)
    rho = F0.size
    C = np.zeros((2 * rho - 1, rho))
    for j in range(rho):
        C[j : j + rho, j] = F0
    return C


@dataclass
class ConvolutionOps:
    O_S: np.ndarray
    O_Phi1: np.ndarray
    C_Psi1: np.ndarray

    @property
    def rho(self) -> int:
        return self.O_S.shape[1]


def _canon(plant) -> CanonicalForm:
    if isinstance(plant, CanonicalForm):
        return plant
    if isinstance(plant, PlantDT) and plant.canon is not None:
        return plant.canon
    raise DimensionMismatch("plant must carry its observer-canonical realization")


def build_convolution_ops(alpha_exo, plant_canon) -> ConvolutionOps:
    """Operators of the Sylvester equation for exosystem coefficients ``alpha_exo``.

    ``plant_canon`` is a :class:`CanonicalForm` or a :class:`PlantDT` with
    ``canon`` populated; its characteristic coefficients build ``O_Phi1`` and
    its canonical input column is ``F0``.
    """
    canon = _canon(plant_canon)
    alpha = np.asarray(alpha_exo, dtype=float).reshape(-1)
    if alpha.size != canon.a.size:
        raise DimensionMismatch(
            f"exosystem order {alpha.size} differs from plant order {canon.a.size}"
        )
    return ConvolutionOps(banded_operator(alpha), banded_operator(canon.a), input_operator(canon.b))


@dataclass
class SylvesterSolution:
    q: np.ndarray
    p: np.ndarray
    residual: float


def sylvester_residual(ops: ConvolutionOps, q, p) -> float:
    one_q = np.concatenate([[1.0], np.atleast_1d(q)])
    lhs = np.hstack([ops.O_Phi1, ops.C_Psi1]) @ np.concatenate([one_q, np.atleast_1d(p)])
    return float(np.linalg.norm(lhs - ops.O_S @ one_q))


def solve_sylvester(ops: ConvolutionOps, tol: float = SYLVESTER_TOL) -> SylvesterSolution:
    """``(q, p)`` of the square stacked linear system; raise if inconsistent."""
    rho = ops.rho
    M = np.hstack([ops.O_Phi1[:, 1:] - ops.O_S[:, 1:], ops.C_Psi1])
    rhs = ops.O_S[:, 0] - ops.O_Phi1[:, 0]
    try:
        x = np.linalg.solve(M, rhs)  # square; LU copes better than SVD with the tiny b columns
    except np.linalg.LinAlgError:
        x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    q, p = x[: rho - 1], x[rho - 1 :]
    res = sylvester_residual(ops, q, p)
    scale = max(1.0, float(np.linalg.norm(rhs)))
    if res > tol * scale:
        raise SingularSystem(
            f"Sylvester system inconsistent (residual {res:.3g}); a plant zero "
            "coincides with an exosystem mode"
        )
    return SylvesterSolution(q, p, res)


def solve_sylvester_batch(alpha_seq, canon: CanonicalForm):
    """Solve the Sylvester system for every row of ``alpha_seq``.

    Returns ``(q, p, residual)`` arrays of shapes ``(N, rho-1)``, ``(N, rho)``,
    ``(N,)``. Residuals are recomputed from the assembled operators, not taken
    from the solver.
    """
    alpha_seq = np.atleast_2d(np.asarray(alpha_seq, dtype=float))
    N, rho = alpha_seq.shape
    if rho != canon.a.size:
        raise DimensionMismatch("exosystem and plant orders differ")
    O_phi = banded_operator(canon.a)
    C_psi = input_operator(canon.b)
    O_S = np.stack([banded_operator(a) for a in alpha_seq]) if rho > 2 else _banded2(alpha_seq)
    M = np.concatenate(
        [O_phi[None, :, 1:] - O_S[:, :, 1:], np.broadcast_to(C_psi, (N,) + C_psi.shape)], axis=2
    )
    rhs = O_S[:, :, 0] - O_phi[None, :, 0]
    if not np.all(np.isfinite(alpha_seq)):
        raise SingularSystem(f"non-finite exosystem coefficients at sample {int(np.argmin(np.isfinite(alpha_seq).all(1)))}")
    try:
        x = np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        try:
            x = np.stack([np.linalg.lstsq(Mk, rk, rcond=None)[0] for Mk, rk in zip(M, rhs)])
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"Sylvester batch solve failed: {exc}") from None
    q, p = x[:, : rho - 1], x[:, rho - 1 :]
    one_q = np.concatenate([np.ones((N, 1)), q], axis=1)
    lhs = one_q @ O_phi.T + p @ C_psi.T
    rhs_full = np.einsum("nij,nj->ni", O_S, one_q)
    residual = np.linalg.norm(lhs - rhs_full, axis=1)
    bad = ~np.isfinite(residual) | (residual > SYLVESTER_TOL * np.maximum(1.0, np.linalg.norm(rhs, axis=1)))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SingularSystem(f"Sylvester system inconsistent at sample {k} (residual {residual[k]:.3g})")
    return q, p, residual


def _banded2(alpha_seq) -> np.ndarray:
    N = alpha_seq.shape[0]
    O = np.zeros((N, 3, 2))
    O[:, 0, 0] = alpha_seq[:, 0]
    O[:, 1, 0] = alpha_seq[:, 1]
    O[:, 0, 1] = 1.0
    O[:, 1, 1] = alpha_seq[:, 0]
    O[:, 2, 1] = alpha_seq[:, 1]
    return O


@dataclass
class Module2Params:
    Phi2: np.ndarray
    Psi2: np.ndarray
    Gamma2: np.ndarray
    D2: float


def assemble_module2(q, p) -> Module2Params:
    """Controller-canonical realization of ``p(z) / (z^{rho-1} + q_1 z^{rho-2} + ...)``.

    ``D2`` is the leading coefficient of ``p`` and ``Gamma2`` the remainder of
    the division, ordered to match the companion state.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    m = q.size
    if p.size != m + 1:
        raise DimensionMismatch("p must have one more coefficient than q")
    Phi2 = np.zeros((m, m))
    if m:
        Phi2[: m - 1, 1:] = np.eye(m - 1)
        Phi2[m - 1, :] = -q[::-1]
    Psi2 = np.zeros(m)
    if m:
        Psi2[-1] = 1.0
    D2 = float(p[0])
    remainder = p[1:] - D2 * q
    return Module2Params(Phi2, Psi2, remainder[::-1].copy(), D2)


def module2_transfer(params: Module2Params):
    """Numerator and monic denominator (highest power first) of module 2."""
    from scipy.signal import ss2tf

    m = params.Phi2.shape[0]
    if m == 0:
        return np.array([params.D2]), np.array([1.0])
    num, den = ss2tf(params.Phi2, params.Psi2.reshape(-1, 1), params.Gamma2.reshape(1, -1), [[params.D2]])
    return num[0], den


def trajectory_consistent_alpha(alpha_seq, f_seq, canon: CanonicalForm):
    """Adjust per-sample exosystem coefficients so the reference is generated exactly.

    With module 1 a plant copy, the loop seen by module 2 behaves like
    ``c(k, sigma) v = u_st`` and ``y = b(sigma) v`` where ``c(k)`` is the
    closed polynomial and ``b`` the plant numerator. Frozen-time coefficients
    only annihilate the reference when ``alpha`` is constant; here each
    ``alpha(k)`` gets the minimum-norm change that makes
    ``v*(k+rho) + sum_i c_i(k) v*(k+rho-i) = 0`` for ``v* = b(sigma)^{-1} f``.

    ``f_seq`` must carry one look-ahead sample (``len(alpha_seq) + 1``).
    Returns the corrected coefficients and the inverted reference ``v*``.
    """
    alpha_seq = np.atleast_2d(np.asarray(alpha_seq, dtype=float))
    f_seq = np.asarray(f_seq, dtype=float)
    N, rho = alpha_seq.shape
    if f_seq.size < N + 1:
        raise DimensionMismatch("reference needs one look-ahead sample")
    b = np.asarray(canon.b, dtype=float)
    if b.size != rho:
        raise DimensionMismatch("exosystem and plant orders differ")
    if b[0] == 0.0:
        raise SingularSystem("plant has no direct one-step input response (b_1 = 0)")
    zeros = np.roots(b)
    if zeros.size and np.max(np.abs(zeros)) >= 1.0:
        raise SingularSystem(
            f"plant zero at {zeros[np.argmax(np.abs(zeros))]:.6g} lies outside the unit circle; "
            "the inverted reference diverges (use the frozen schedule)"
        )
    # y(k) = sum_i b[i] v(k + rho - 1 - i)
    v = np.empty(N + rho)
    v[: rho - 1] = f_seq[0] / b.sum() if b.sum() != 0 else 0.0
    tail = b[1:]
    for k in range(N + 1):
        past = v[k : k + rho - 1][::-1]
        v[k + rho - 1] = (f_seq[k] - tail @ past) / b[0]
    out = alpha_seq.copy()
    for k in range(N):
        phi = v[k : k + rho][::-1]
        nrm = phi @ phi
        if nrm <= 1e-300:
            continue
        r = v[k + rho] + alpha_seq[k] @ phi
        out[k] -= (r / nrm) * phi
    return out, v


class InternalModel:
    """Runtime state of the two-module internal model for one slave axis.

    Call :meth:`output` for the current ``(u_r, u_im)``, form the total
    control, then :meth:`step` to advance both modules exactly once.
    """

    def __init__(self, Phi1, Psi1, Gamma1, params: Module2Params):
        self.Phi1 = np.atleast_2d(np.asarray(Phi1, dtype=float))
        self.Psi1 = np.asarray(Psi1, dtype=float).reshape(-1)
        self.Gamma1 = np.asarray(Gamma1, dtype=float).reshape(-1)
        self.params = params
        self.xi1 = np.zeros(self.Phi1.shape[0])
        self.xi2 = np.zeros(params.Phi2.shape[0])

    @classmethod
    def from_plant(cls, plant: PlantDT, params: Module2Params) -> "InternalModel":
        return cls(plant.G2, plant.H2, plant.C2, params)

    def set_params(self, params: Module2Params):
        self.params = params

    def output(self):
        u_r = float(self.Gamma1 @ self.xi1)
        pr = self.params
        u_im = float(pr.Gamma2 @ self.xi2) - pr.D2 * u_r
        return u_r, u_im

    def step(self, u2: float) -> float:
        """Advance both modules with total control ``u2``; returns the ``u_im`` in effect."""
        u_r, u_im = self.output()
        pr = self.params
        self.xi1 = self.Phi1 @ self.xi1 + self.Psi1 * u2
        self.xi2 = pr.Phi2 @ self.xi2 - pr.Psi2 * u_r
        return u_im


def step_internal_model(im: InternalModel, u2: float, k: int | None = None) -> float:
    return im.step(u2)

"""Position-domain generating dynamics of a master/slave pair.

The exogenous state is ``w = [f(x1); x1 + c]``. Written in polar form
``w = l(x1) [cos eta(x1); sin eta(x1)]`` its derivative along the master
position is ``w' = (l'/l) w + eta' J w`` with ``J = [[0, -1], [1, 0]]``, so
every generator matrix has the structure ``a I + b J``.

``form="paper"`` reproduces the printed generator, which fixes ``eta' = 1``.
That matrix only generates ``[f; x1]`` when ``f - x1 f' = x1**2 + f**2``;
the default ``form="exact"`` uses the true ``eta'``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateL, StructureViolation

J = np.array([[0.0, -1.0], [1.0, 0.0]])
Q_ROW = np.array([[1.0, 0.0]])
L_MIN = 1e-9


@dataclass(frozen=True)
class ExosystemCT:
    f: Callable
    f_prime: Callable
    offset: float = 0.0
    form: str = "exact"

    def state(self, x1):
        """Exogenous state ``[f(x1); x1 + offset]``."""
        x1 = np.asarray(x1, dtype=float)
        return np.stack([np.broadcast_to(self.f(x1), x1.shape), x1 + self.offset])

    def l(self, x1):
        w = self.state(x1)
        return np.hypot(w[0], w[1])

    def eta(self, x1):
        """Polar angle of ``w`` measured from the slave-reference axis."""
        w = self.state(x1)
        return np.arctan2(w[1], w[0])

    def l_prime(self, x1):
        x1 = np.asarray(x1, dtype=float)
        f = self.f(x1)
        return ((x1 + self.offset) + f * self.f_prime(x1)) / self.l(x1)

    def eta_prime(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.form == "paper":
            return np.ones_like(x1)
        f = self.f(x1)
        return (f - (x1 + self.offset) * self.f_prime(x1)) / self.l(x1) ** 2

    def rates(self, x1):
        """``(l'/l, eta')`` so that ``S(x1) = (l'/l) I + eta' J``."""
        return self.l_prime(x1) / self.l(x1), self.eta_prime(x1)

    def S(self, x1) -> np.ndarray:
        a, b = self.rates(float(x1))
        return a * np.eye(2) + b * J

    Q = Q_ROW


def auto_offset(x1_range, margin: float = 1.0) -> float:
    """Constant shift keeping ``x1 + c >= margin`` on the range."""
    lo = float(np.min(x1_range))
    return max(0.0, margin - lo)


def build_exosystem_ct(f, f_prime, x1_offset=0.0, x1_range=None, form="exact") -> ExosystemCT:
    """Generator ``(S, Q)`` for slave reference ``f``.

    With ``x1_offset=None`` the offset is raised automatically when ``l``
    would come within :data:`L_MIN` of zero on ``x1_range``.
    """
    if form not in ("exact", "paper"):
        raise ValueError(f"unknown form {form!r}")
    offset = 0.0 if x1_offset is None else float(x1_offset)
    exo = ExosystemCT(f, f_prime, offset, form)
    if x1_range is not None:
        grid = np.asarray(x1_range, dtype=float)
        if grid.size == 2:
            grid = np.linspace(grid[0], grid[1], 2001)
        lmin = float(np.min(exo.l(grid)))
        if lmin < L_MIN:
            if x1_offset is not None:
                raise DegenerateL(f"l(x1) reaches {lmin:.3g} on the declared range")
            exo = ExosystemCT(f, f_prime, auto_offset(grid), form)
            if float(np.min(exo.l(grid))) < L_MIN:
                raise DegenerateL("l(x1) vanishes even after offsetting x1")
    return exo


def exosystem_to_time(exo: ExosystemCT, x1dot: float, x1: float) -> np.ndarray:
    """Time-domain generator ``x1dot * S(x1)`` (chain rule)."""
    return float(x1dot) * exo.S(x1)


def split_structure(Sbar, tol=1e-12):
    """Return ``(a, b)`` with ``Sbar = a I + b J``; raise if the structure is broken."""
    Sbar = np.asarray(Sbar, dtype=float)
    a = 0.5 * (Sbar[0, 0] + Sbar[1, 1])
    b = 0.5 * (Sbar[1, 0] - Sbar[0, 1])
    dev = np.max(np.abs(Sbar - (a * np.eye(2) + b * J)))
    if dev > tol * max(1.0, np.max(np.abs(Sbar))):
        raise StructureViolation(f"matrix deviates from aI + bJ by {dev:.3g}")
    return a, b


def rotation_scaling(log_scale, angle) -> np.ndarray:
    """``exp(log_scale) * (cos(angle) I + sin(angle) J)``; broadcasts over leading axes."""
    log_scale = np.asarray(log_scale, dtype=float)
    angle = np.asarray(angle, dtype=float)
    g = np.exp(log_scale)
    c, s = g * np.cos(angle), g * np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def discretize_exosystem(Sbar, Ts: float, method: str = "exact") -> np.ndarray:
    """One-sample transition of ``w' = Sbar w`` held over ``Ts``.

    ``method="exact"`` is the matrix exponential, available in closed form
    for the ``aI + bJ`` structure; ``"euler"`` is ``I + Ts Sbar``.
    """
    a, b = split_structure(Sbar)
    if method == "euler":
        return np.eye(2) + Ts * np.asarray(Sbar, dtype=float)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    return rotation_scaling(a * Ts, b * Ts)


def step_transition(exo: ExosystemCT, x1_now, x1_next) -> np.ndarray:
    """Exact sample-to-sample transition ``w(k+1) = Sd(k) w(k)``.

    Same ``aI + bJ`` closed form, with the rates taken as secants of ``log l``
    and ``eta`` between the two master samples. Broadcasts over arrays.
    """
    log_ratio = np.log(exo.l(x1_next)) - np.log(exo.l(x1_now))
    dphi = np.angle(np.exp(1j * (exo.eta(x1_next) - exo.eta(x1_now))))
    return rotation_scaling(log_ratio, dphi)


def char_coeffs(Sd) -> np.ndarray:
    """Characteristic coefficients ``[alpha_1, alpha_0]`` of ``z^2 + alpha_1 z + alpha_0``.

    Works on a single 2x2 matrix or a stack of shape ``(..., 2, 2)``.
    """
    Sd = np.asarray(Sd, dtype=float)
    tr = Sd[..., 0, 0] + Sd[..., 1, 1]
    det = Sd[..., 0, 0] * Sd[..., 1, 1] - Sd[..., 0, 1] * Sd[..., 1, 0]
    return np.stack([-tr, det], -1)


@dataclass
class ExosystemDT:
    """Per-sample discrete exosystem along a master trajectory."""

    Sbar_d: np.ndarray  # (N, 2, 2)
    Ts: float

    Qbar = Q_ROW

    @property
    def alpha(self) -> np.ndarray:
        return char_coeffs(self.Sbar_d)

    @property
    def a_k(self) -> np.ndarray:
        return 0.5 * np.log(np.linalg.det(self.Sbar_d)) / self.Ts

    @property
    def b_k(self) -> np.ndarray:
        return np.arctan2(self.Sbar_d[:, 1, 0], self.Sbar_d[:, 0, 0]) / self.Ts


def discretize_along(exo: ExosystemCT, s, Ts: float, s_dot=None, method: str = "secant") -> ExosystemDT:
    """Discrete exosystem for every sample of a scheduling trajectory.

    ``method="secant"`` needs ``s`` to include one look-ahead sample past the
    last tick and returns ``len(s) - 1`` transitions. ``"instantaneous"``
    evaluates ``s_dot * S(s)`` at each sample and exponentiates it.
    """
    s = np.asarray(s, dtype=float)
    if method == "secant":
        return ExosystemDT(step_transition(exo, s[:-1], s[1:]), Ts)
    if method != "instantaneous":
        raise ValueError(f"unknown method {method!r}")
    if s_dot is None:
        s_dot = np.gradient(s, Ts)
    a, b = exo.rates(s)
    return ExosystemDT(rotation_scaling(a * s_dot * Ts, b * s_dot * Ts), Ts)

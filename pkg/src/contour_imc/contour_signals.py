"""Contour references and conversion of rotational master signals to monotone angles.

A contour is described by a master-axis generator and one or more slave
functions of the master's *scheduling variable*: the master position itself
for monotonic contours, or an unwrapped angle ``theta`` with
``x1 = R cos(theta)`` for rotational ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, EvalOutOfRange, MonotonicityViolation, NonFiniteDerivative

CLAMP_TOL = 1e-9
MAX_ANGLE_STEP = 0.5 * np.pi  # larger per-sample advances mean x1 does not follow R cos(theta)

MONOTONIC = "monotonic"
ROTATIONAL = "rotational"
INCREASING = "increasing"
DECREASING = "decreasing"


@dataclass
class ContourSpec:
    """A contour as a master generator plus slave functions of the master variable.

    Parameters
    ----------
    kind : {"monotonic", "rotational"}
    master_gen : callable
        Nominal master position ``x1(t)``. Must accept numpy arrays.
    slave_fns, slave_fn_derivs : sequence of callables
        Slave references ``f_i(s)`` and their analytic derivatives, where ``s``
        is ``x1`` (monotonic) or ``theta`` (rotational). Must accept arrays.
    amplitude_R : float, optional
        Supremum of ``|x1|`` for rotational contours. Estimated from a dry run
        when omitted.
    direction : {"increasing", "decreasing"}
        Direction of ``theta`` for rotational contours.
    theta_gen : callable, optional
        Nominal ``theta(t)`` for rotational contours; used only for
        time-domain baselines and plotting.
    projection : array_like, optional
        ``(d, n_axes)`` map from axis positions ``[x1, r2, ...]`` to the
        physical point whose distance to the curve is the contour error.
        Identity when omitted.
    """

    kind: str
    master_gen: Callable
    slave_fns: Sequence[Callable]
    slave_fn_derivs: Sequence[Callable]
    amplitude_R: Optional[float] = None
    direction: str = INCREASING
    theta_gen: Optional[Callable] = None
    projection: Optional[np.ndarray] = None
    name: str = "contour"

    def __post_init__(self):
        if self.kind not in (MONOTONIC, ROTATIONAL):
            raise ValueError(f"unknown contour kind {self.kind!r}")
        if self.direction not in (INCREASING, DECREASING):
            raise ValueError(f"unknown direction {self.direction!r}")
        if len(self.slave_fns) != len(self.slave_fn_derivs):
            raise ValueError("slave_fns and slave_fn_derivs differ in length")
        if not self.slave_fns:
            raise ValueError("a contour needs at least one slave function")
        if self.amplitude_R is not None and self.amplitude_R <= 0:
            raise ValueError("amplitude_R must be positive")
        if self.projection is not None:
            self.projection = np.atleast_2d(np.asarray(self.projection, dtype=float))
            if self.projection.shape[1] != self.n_axes:
                raise ValueError("projection must have one column per axis")

    @property
    def n_slaves(self) -> int:
        return len(self.slave_fns)

    @property
    def n_axes(self) -> int:
        return 1 + len(self.slave_fns)

    def master_of(self, s, R=None):
        """Master position as a function of the scheduling variable."""
        if self.kind == MONOTONIC:
            return np.asarray(s, dtype=float)
        R = self.amplitude_R if R is None else R
        return R * np.cos(s)

    def master_deriv_of(self, s, R=None):
        if self.kind == MONOTONIC:
            return np.ones_like(np.asarray(s, dtype=float))
        R = self.amplitude_R if R is None else R
        return -R * np.sin(s)

    def axes_at(self, s, R=None) -> np.ndarray:
        """Stacked axis positions ``[x1, r2, ..., rn]`` along the curve, shape (n_axes, len(s))."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        rows = [self.master_of(s, R)] + [np.broadcast_to(f(s), s.shape) for f in self.slave_fns]
        return np.vstack(rows)

    def axes_deriv_at(self, s, R=None) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        rows = [self.master_deriv_of(s, R)] + [
            np.broadcast_to(df(s), s.shape) for df in self.slave_fn_derivs
        ]
        return np.vstack(rows)

    def project(self, axes: np.ndarray) -> np.ndarray:
        if self.projection is None:
            return axes
        return self.projection @ axes


def reconstruct_angle(s: int, x_over_R: float, tol: float = CLAMP_TOL) -> float:
    """Angle in ``[s*pi, (s+1)*pi]`` whose cosine is ``x_over_R``.

    ``s`` may be negative, which the decreasing-direction unwrapper relies on.
    """
    x = float(x_over_R)
    if not np.isfinite(x) or abs(x) > 1.0 + tol:
        raise DomainError(f"|x/R| = {abs(x)!r} exceeds 1 beyond clamp tolerance {tol}")
    x = min(1.0, max(-1.0, x))
    sign = -1.0 if s % 2 else 1.0
    return s * np.pi + 0.5 * np.pi * (1.0 - sign) + sign * np.arccos(x)


@dataclass
class UnwrapState:
    s: int = 0
    theta_prev: Optional[float] = None
    theta_prev2: Optional[float] = None
    k: int = 0


@dataclass
class Unwrapper:
    """Streaming conversion of ``x1 = R cos(theta)`` samples to a monotone ``theta``.

    One interval bump per sample is attempted; a second failure means theta
    advanced by pi or more between samples and is reported rather than masked.

    A sample just past a fold (``x1 = +-R``) that lands closer to the fold than
    its predecessor is consistent with both intervals. That case is settled by
    taking the branch nearest a constant-velocity extrapolation of the last
    two angles, which is exact for uniform motion.
    """

    R: float
    direction: str = INCREASING
    state: UnwrapState = field(default_factory=UnwrapState)

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.direction not in (INCREASING, DECREASING):
            raise ValueError(f"unknown direction {self.direction!r}")

    def push(self, x1: float) -> float:
        st = self.state
        ratio = x1 / self.R
        theta = reconstruct_angle(st.s, ratio)
        if st.theta_prev is not None:
            inc = self.direction == INCREASING
            step = 1 if inc else -1
            if (theta < st.theta_prev) if inc else (theta > st.theta_prev):
                st.s += step
                theta = reconstruct_angle(st.s, ratio)
            elif st.theta_prev2 is not None:
                alt = reconstruct_angle(st.s + step, ratio)
                pred = 2.0 * st.theta_prev - st.theta_prev2
                if abs(alt - pred) < abs(theta - pred):
                    st.s += step
                    theta = alt
            if not ((theta > st.theta_prev) if inc else (theta < st.theta_prev)):
                raise MonotonicityViolation(
                    f"sample {st.k}: theta {theta!r} not strictly {self.direction} "
                    f"after previous {st.theta_prev!r}"
                )
        st.theta_prev2, st.theta_prev = st.theta_prev, theta
        st.k += 1
        return theta


def unwrap_rotational(x1_samples, R: float, direction: str = INCREASING) -> np.ndarray:
    """Unwrap a sequence of rotational master positions into a monotone angle."""
    unwrapper = Unwrapper(R, direction)
    return np.array([unwrapper.push(float(x)) for x in np.asarray(x1_samples, dtype=float)])


def estimate_R(x1_samples, slack: float = 0.0) -> float:
    return float(np.max(np.abs(x1_samples))) + slack


def eval_contour(spec: ContourSpec, x1, slave_index: int = 0, s_range=None):
    """Slave reference and its slope with respect to the scheduling variable.

    Returns ``(f(x1), f'(x1))`` for slave ``slave_index``. ``x1`` is the master
    position for monotonic contours and the unwrapped angle for rotational ones.
    """
    if s_range is not None and not (s_range[0] <= x1 <= s_range[1]):
        raise EvalOutOfRange(f"{x1!r} outside sampled range {s_range}")
    f = spec.slave_fns[slave_index]
    df = spec.slave_fn_derivs[slave_index]
    r = float(f(x1))
    slope = float(df(x1))
    if not np.isfinite(r):
        raise EvalOutOfRange(f"slave reference not finite at {x1!r}")
    if not np.isfinite(slope):
        raise NonFiniteDerivative(f"slave derivative not finite at {x1!r}")
    return r, slope


@dataclass
class AssumptionReport:
    kind: str
    monotone: bool
    min_step: float
    derivative_finite: bool
    within_amplitude: bool = True
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.monotone and self.derivative_finite and self.within_amplitude


def scheduling_variable(spec: ContourSpec, x1_samples, R: Optional[float] = None) -> np.ndarray:
    """Master position (monotonic) or unwrapped angle (rotational) for each sample."""
    x1_samples = np.asarray(x1_samples, dtype=float)
    if spec.kind == MONOTONIC:
        return x1_samples.copy()
    R = R if R is not None else (spec.amplitude_R or estimate_R(x1_samples))
    return unwrap_rotational(x1_samples, R, spec.direction)


def check_assumptions(spec: ContourSpec, horizon: float, Ts: float, x1_samples=None) -> AssumptionReport:
    """Check monotonicity of the scheduling variable and finiteness of slave slopes.

    Uses the nominal master generator unless explicit ``x1_samples`` are given.
    """
    if horizon <= 0 or Ts <= 0:
        raise ValueError("horizon and Ts must be positive")
    if x1_samples is None:
        t = np.arange(int(np.floor(horizon / Ts + 1e-9)) + 1) * Ts
        x1_samples = np.asarray(spec.master_gen(t), dtype=float) * np.ones_like(t)
    x1_samples = np.asarray(x1_samples, dtype=float)
    within = True
    msg = ""
    if spec.kind == MONOTONIC:
        s = x1_samples
        steps = np.diff(s)
        # rests are allowed (a tracked master starts from standstill); reversals are not
        monotone = bool(np.any(steps != 0) and (np.all(steps >= 0) or np.all(steps <= 0)))
        if not monotone:
            msg = "master position is not monotone"
    else:
        R = spec.amplitude_R or estimate_R(x1_samples)
        within = bool(np.all(np.abs(x1_samples) <= R * (1 + CLAMP_TOL)))
        try:
            s = unwrap_rotational(np.clip(x1_samples, -R, R), R, spec.direction)
            steps = np.diff(s)
            monotone = bool(np.all(steps > 0) if spec.direction == INCREASING else np.all(steps < 0))
            if steps.size and np.max(np.abs(steps)) > MAX_ANGLE_STEP:
                monotone = False
                msg = (
                    f"unwrapped angle advances {np.max(np.abs(steps)):.3g} rad in one sample; "
                    f"samples do not follow R cos(theta) with R = {R:.6g}"
                )
        except MonotonicityViolation as exc:
            s, steps, monotone, msg = x1_samples, np.diff(x1_samples), False, str(exc)
        if not within:
            msg = msg or "master position exceeds amplitude R"
    min_step = float(np.min(np.abs(steps))) if steps.size else 0.0
    finite = True
    with np.errstate(all="ignore"):
        for f, df in zip(spec.slave_fns, spec.slave_fn_derivs):
            vals = np.broadcast_to(f(s), s.shape)
            slopes = np.broadcast_to(df(s), s.shape)
            if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(slopes))):
                finite = False
                msg = msg or "slave function or slope not finite on the sampled range"
    return AssumptionReport(spec.kind, monotone, min_step, finite, within, msg)

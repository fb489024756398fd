"""Fixed-step closed-loop simulation of master/slave contouring with TV-IMCC, PID and CCC.

Every run starts from zero states. The master axis is either *prescribed*
(its position is a given function of time, optionally disturbed) or
*tracked* by a PID loop on the master plant model. Slave axes follow
references that are functions of the master scheduling variable.

The master trajectory does not depend on the slaves (except under CCC, which
is simulated jointly), so it is computed first; the per-sample exosystem,
Sylvester and gain schedules are then built in batch and the slave loop runs
tick by tick. A one-sample master look-ahead is used, which in tracked mode
is the model prediction ``C (G x + H u)`` available once ``u`` is known.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .contour_signals import (
    MONOTONIC,
    ROTATIONAL,
    ContourSpec,
    check_assumptions,
    estimate_R,
    scheduling_variable,
)
from .errors import AssumptionFailure, ConfigError, Infeasible, MaxIterations, SynthesisFailure
from .exosystem import build_exosystem_ct, discretize_along
from .internal_model import solve_sylvester_batch, trajectory_consistent_alpha
from .plant import PlantDT, fitted_paper_plants, paper_plants, to_observer_canonical
from .stabilizer import PolytopeGrid, StabilizerSchedule, synthesize_gains

CONTROLLERS = ("tvimcc", "pid", "ccc")
MASTER_MODES = ("prescribed", "tracked")
TRACE_FIELDS = ("k", "t", "x1_ref", "x1", "r2", "y2", "e2", "u2", "u_im", "u_st", "contour_error")
PER_SLAVE = ("r2", "y2", "e2", "u2", "u_im", "u_st")
MM_TO_UM = 1e3


@dataclass
class Gains:
    """Controller parameters shared by all axes of a scenario."""

    Kp: float = 2.6
    Ki: float = 11.4
    Kd: float = 0.1
    Kx: float = 10.0
    Ky: float = 30.0
    grid_N: int = 9
    grid_pad: float = 0.05
    observer_pole: float = 0.2
    lmi_margin: float = 1e-8
    schedule: str = "consistent"  # or "frozen"


@dataclass
class Scenario:
    name: str
    contour: ContourSpec
    horizon: float
    Ts: float = 1e-4
    master_mode: str = "prescribed"
    slave_controller: str = "tvimcc"
    plants: tuple = field(default_factory=fitted_paper_plants)
    gains: Gains = field(default_factory=Gains)
    disturbance: Optional[Callable] = None
    metric_mask: Optional[Callable] = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.Ts <= 0:
            raise ConfigError("Ts must be positive")
        if self.horizon < 100 * self.Ts:
            raise ConfigError("horizon must cover at least 100 samples")
        if self.master_mode not in MASTER_MODES:
            raise ConfigError(f"unknown master_mode {self.master_mode!r}")
        if self.slave_controller not in CONTROLLERS:
            raise ConfigError(f"unknown slave_controller {self.slave_controller!r}")
        if self.gains.schedule not in ("consistent", "frozen"):
            raise ConfigError(f"unknown schedule {self.gains.schedule!r}")
        if self.slave_controller == "ccc" and self.contour.n_axes != 2:
            raise ConfigError("ccc is defined for two-axis contours only")
        for p in self.plants:
            if p.n != 2:
                raise ConfigError("the simulator handles second-order axis models")

    @property
    def n_rows(self) -> int:
        return int(np.floor(self.horizon / self.Ts + 1e-9)) + 1

    def digest(self) -> str:
        """Stable hash of everything that determines the trace."""
        h = hashlib.sha256()
        g = asdict(self.gains)
        parts = [self.name, self.master_mode, self.slave_controller, repr(self.Ts), repr(self.horizon), repr(self.seed)]
        parts += [f"{k}={g[k]!r}" for k in sorted(g)]
        for p in self.plants:
            parts += [repr(p.G2.tolist()), repr(p.H2.tolist()), repr(p.C2.tolist())]
        h.update("|".join(parts).encode())
        return h.hexdigest()[:16]


@dataclass
class SimulationTrace:
    columns: Dict[str, np.ndarray]
    metadata: Dict[str, object] = field(default_factory=dict)
    s: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_slaves(self) -> int:
        return self.columns["y2"].shape[1]

    def __len__(self):
        return self.columns["k"].size

    def header(self) -> List[str]:
        out = []
        m = self.n_slaves
        for name in TRACE_FIELDS:
            if name in PER_SLAVE and m > 1:
                out += [f"{name}_{i + 1}" for i in range(m)]
            else:
                out.append(name)
        return out

    def table(self) -> np.ndarray:
        cols = []
        for name in TRACE_FIELDS:
            v = self.columns[name]
            cols.append(v.reshape(len(self), -1))
        return np.hstack(cols).astype(float)

    def to_csv(self, path) -> None:
        write_csv(path, self.header(), self.table(), int_cols=1)


def write_csv(path, header: Sequence[str], data: np.ndarray, int_cols: int = 0) -> None:
    """Plain CSV with round-trip float formatting so reruns are byte-identical."""
    fmt = ["%d"] * int_cols + ["%.17g"] * (data.shape[1] - int_cols)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


@dataclass
class ContourMetrics:
    rms: float  # um
    max: float  # um
    settling_index: int
    n_samples: int


# --------------------------------------------------------------- baselines


@dataclass
class PIDState:
    integral: float = 0.0
    e_prev: float = 0.0


def pid_step(state: PIDState, e: float, Ts: float, Kp: float, Ki: float, Kd: float) -> float:
    """Positional PID: trapezoidal integral, backward-difference derivative, zero initial history."""
    state.integral += 0.5 * Ts * (e + state.e_prev)
    d = (e - state.e_prev) / Ts
    state.e_prev = e
    return Kp * e + Ki * state.integral + Kd * d


def ccc_step(e_x: float, e_y: float, phi: float, Kx: float, Ky: float):
    """Cross-coupled correction from the linearized contour-error estimate.

    ``phi`` is the reference tangent angle; errors are ``reference - actual``.
    """
    s, c = np.sin(phi), np.cos(phi)
    eps = -e_x * s + e_y * c
    return -Kx * eps * s, Ky * eps * c


# ----------------------------------------------------------- contour error


class ContourProjector:
    """Nearest-point distance to a parametric contour.

    The curve is sampled into a dense polyline and every ``stride``-th vertex
    goes into a KD-tree. A query scans the dense vertices around each of the
    three nearest coarse hits, projects onto the adjacent segments and then
    makes one Gauss-Newton step on the parametric curve. The returned
    distance is to a point on the curve itself, never to a chord.
    """

    def __init__(self, spec: ContourSpec, s_lo: float, s_hi: float, step: float, R=None, stride: int = 32):
        if not s_hi > s_lo:
            raise ValueError("empty parameter range")
        n = int(np.ceil((s_hi - s_lo) / step)) + 1
        self.spec = spec
        self.R = R
        self.s = np.linspace(s_lo, s_hi, max(n, 2))
        self.pts = self._curve(self.s).T
        # Far from a dense, nearly one-dimensional point set a KD-tree visits
        # thousands of leaves per query; search a decimated copy first and
        # then scan the dense vertices around the coarse hit.
        self.stride = max(1, int(stride))
        self.tree = cKDTree(self.pts[:: self.stride])

    def _curve(self, s):
        return self.spec.project(self.spec.axes_at(s, self.R))

    def _deriv(self, s):
        return self.spec.project(self.spec.axes_deriv_at(s, self.R))

    def query(self, points):
        """Distances and curve parameters for an array of points ``(M, d)``."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        # several coarse neighbours, each refined on its own, so overlapping
        # branches and clipped windows at the range ends cannot hide the
        # true nearest point
        k = min(3, self.tree.n)
        _, ic = self.tree.query(P, k=k)
        ic = np.asarray(ic).reshape(len(P), k)
        best_d = np.full(len(P), np.inf)
        best_s = np.zeros(len(P))
        for c in range(k):
            d, s = self._refine(P, ic[:, c])
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_s = np.where(better, s, best_s)
        return best_d, best_s

    def _refine(self, P, coarse):
        n = self.s.size
        offs = np.arange(-2 * self.stride, 2 * self.stride + 1)
        i = np.empty(len(P), dtype=np.intp)
        for a in range(0, len(P), 4096):
            cand = np.clip(coarse[a : a + 4096, None] * self.stride + offs, 0, n - 1)
            d2 = np.sum((self.pts[cand] - P[a : a + 4096, None, :]) ** 2, axis=2)
            i[a : a + 4096] = cand[np.arange(len(cand)), np.argmin(d2, axis=1)]
        best_s = self.s[i].copy()
        best_d = np.full(len(P), np.inf)
        for lo in (i - 1, i):
            lo = np.clip(lo, 0, n - 2)
            a, b = self.pts[lo], self.pts[lo + 1]
            ab = b - a
            den = np.einsum("ij,ij->i", ab, ab)
            with np.errstate(invalid="ignore", divide="ignore"):
                u = np.clip(np.einsum("ij,ij->i", P - a, ab) / den, 0.0, 1.0)
            u = np.where(den > 0, u, 0.0)
            d = np.linalg.norm(a + u[:, None] * ab - P, axis=1)
            s_seg = self.s[lo] + u * (self.s[lo + 1] - self.s[lo])
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_s = np.where(better, s_seg, best_s)
        c0 = self._curve(best_s).T
        d0 = np.linalg.norm(c0 - P, axis=1)
        with np.errstate(all="ignore"):
            dc = self._deriv(best_s).T
            g = np.einsum("ij,ij->i", dc, dc)
            s1 = best_s - np.einsum("ij,ij->i", c0 - P, dc) / g
            ok = np.isfinite(s1) & (g > 0)
            s1 = np.where(ok, np.clip(s1, self.s[0], self.s[-1]), best_s)
            d1 = np.linalg.norm(self._curve(s1).T - P, axis=1)
        use1 = ok & (d1 <= d0)
        return np.where(use1, d1, d0), np.where(use1, s1, best_s)


def contour_error(point, contour: ContourSpec, s_range=None, step: float = 1e-4, R=None) -> float:
    """Distance from one point to the contour over ``s_range`` (default one revolution or [-10, 10])."""
    if s_range is None:
        s_range = (0.0, 2 * np.pi) if contour.kind == ROTATIONAL else (-10.0, 10.0)
    proj = ContourProjector(contour, s_range[0], s_range[1], step, R)
    return float(proj.query(np.asarray(point, dtype=float)[None, :])[0][0])


# ------------------------------------------------------------- simulation


def _nominal_s(spec: ContourSpec, t):
    if spec.kind == MONOTONIC:
        return np.asarray(spec.master_gen(t), dtype=float) * np.ones_like(t)
    if spec.theta_gen is None:
        raise ConfigError("rotational contours need theta_gen for time-domain references")
    return np.asarray(spec.theta_gen(t), dtype=float) * np.ones_like(t)


def _tangent_angle(spec: ContourSpec, s, R=None):
    d = spec.axes_deriv_at(s, R)
    with np.errstate(all="ignore"):
        return np.arctan2(d[1], d[0])


def _simulate_master_pid(plant: PlantDT, ref, gains: Gains, Ts: float):
    """Master outputs at every index of ``ref`` under the axial PID."""
    st = PIDState()
    x = np.zeros(plant.n)
    y = np.empty(ref.size)
    for k in range(ref.size):
        y[k] = plant.C2 @ x
        u = pid_step(st, ref[k] - y[k], Ts, gains.Kp, gains.Ki, gains.Kd)
        x = plant.step(x, u)
    return y


def _slave_pid_loop(plant: PlantDT, ref, gains: Gains, Ts: float):
    st = PIDState()
    g = plant.G2.ravel().tolist()
    h = plant.H2.tolist()
    c = plant.C2.tolist()
    x0 = x1 = 0.0
    N = ref.size
    y = np.empty(N)
    u_out = np.empty(N)
    for k, r in enumerate(ref.tolist()):
        yk = c[0] * x0 + c[1] * x1
        u = pid_step(st, r - yk, Ts, gains.Kp, gains.Ki, gains.Kd)
        y[k], u_out[k] = yk, u
        x0, x1 = g[0] * x0 + g[1] * x1 + h[0] * u, g[2] * x0 + g[3] * x1 + h[1] * u
    return y, u_out


def _ccc_loop(sc: Scenario, x1_given, x_ref, y_ref, phi):
    """Joint master/slave loop with cross-coupled correction.

    In prescribed mode the master position is given, so only the slave
    correction acts.
    """
    master, slave = sc.plants
    gn = sc.gains
    Ts = sc.Ts
    N = y_ref.size - 1
    sm, ss = PIDState(), PIDState()
    xm = np.zeros(2)
    xs = np.zeros(2)
    x1 = np.empty(N + 1)
    y = np.empty(N)
    u = np.empty(N)
    for k in range(N):
        x1[k] = x1_given[k] if x1_given is not None else master.C2 @ xm
        ys = float(slave.C2 @ xs)
        ex = x_ref[k] - x1[k]
        ey = y_ref[k] - ys
        dux, duy = ccc_step(ex, ey, phi[k], gn.Kx, gn.Ky)
        us = pid_step(ss, ey, Ts, gn.Kp, gn.Ki, gn.Kd) + duy
        if x1_given is None:
            um = pid_step(sm, ex, Ts, gn.Kp, gn.Ki, gn.Kd) + dux
            xm = master.step(xm, um)
        xs = slave.step(xs, us)
        y[k], u[k] = ys, us
    x1[N] = x1_given[N] if x1_given is not None else master.C2 @ xm
    return x1, y, u


@dataclass
class SlaveSchedule:
    """Batch schedules for one slave axis along the realized master trajectory."""

    f: np.ndarray  # N+1 references (one look-ahead)
    alpha: np.ndarray  # frozen secant coefficients, N rows
    alpha_used: np.ndarray  # coefficients driving the controller
    q: np.ndarray
    p: np.ndarray
    residual: np.ndarray
    stabilizer: StabilizerSchedule
    K: np.ndarray  # (N, 2)
    offset: float


def build_slave_schedule(sc: Scenario, s_all, slave_index: int) -> SlaveSchedule:
    spec = sc.contour
    f_fn = spec.slave_fns[slave_index]
    df_fn = spec.slave_fn_derivs[slave_index]
    canon = to_observer_canonical(sc.plants[1]).canon
    f_all = np.asarray(f_fn(s_all), dtype=float) * np.ones_like(s_all)
    exo = build_exosystem_ct(f_fn, df_fn, x1_offset=None, x1_range=s_all)
    alpha = discretize_along(exo, s_all, sc.Ts).alpha
    if sc.gains.schedule == "consistent":
        alpha_used, _ = trajectory_consistent_alpha(alpha, f_all, canon)
    else:
        alpha_used = alpha
    q, p, res = solve_sylvester_batch(alpha_used, canon)
    grid = PolytopeGrid.from_schedule(s_all[:-1], alpha, sc.gains.grid_N, sc.gains.grid_pad)
    try:
        sched = synthesize_gains(grid, canon.b, sc.gains.observer_pole, sc.gains.lmi_margin)
    except (Infeasible, MaxIterations) as exc:
        raise SynthesisFailure(f"stabilizer synthesis failed for slave {slave_index + 1}: {exc}") from exc
    K = sched.K_many(s_all[:-1])
    return SlaveSchedule(f_all, alpha, alpha_used, q, p, res, sched, K, exo.offset)


def _tvimcc_loop(plant: PlantDT, sch: SlaveSchedule):
    """Tick loop of internal model plus observer-based stabilizer for a second-order axis."""
    b1, b0 = sch.stabilizer.B.tolist()
    h = float(sch.stabilizer.H[0])
    g = plant.G2.ravel().tolist()
    hp = plant.H2.tolist()
    c = plant.C2.tolist()
    f = sch.f.tolist()
    q = sch.q[:, 0].tolist()
    D2 = sch.p[:, 0]
    Gam2 = (sch.p[:, 1] - sch.p[:, 0] * sch.q[:, 0]).tolist()
    D2 = D2.tolist()
    a1 = sch.alpha_used[:, 0].tolist()
    a0 = sch.alpha_used[:, 1].tolist()
    K1 = sch.K[:, 0].tolist()
    K2 = sch.K[:, 1].tolist()
    N = len(q)
    out = np.empty((N, 5))
    x0 = x1 = m0 = m1 = xi2 = z = 0.0
    bz = b0 - h * b1
    for k in range(N):
        y = c[0] * x0 + c[1] * x1
        e = y - f[k]
        ur = c[0] * m0 + c[1] * m1
        uim = Gam2[k] * xi2 - D2[k] * ur
        ust = K1[k] * e + K2[k] * (z + h * e)
        u = uim + ust
        out[k] = (y, e, u, uim, ust)
        z = -h * z + bz * ust + (h * a1[k] - a0[k] - h * h) * e
        xi2 = -q[k] * xi2 - ur
        m0, m1 = g[0] * m0 + g[1] * m1 + hp[0] * u, g[2] * m0 + g[3] * m1 + hp[1] * u
        x0, x1 = g[0] * x0 + g[1] * x1 + hp[0] * u, g[2] * x0 + g[3] * x1 + hp[1] * u
    return out


def master_trajectory(sc: Scenario):
    """Nominal and realized master positions for ``n_rows + 1`` samples."""
    N = sc.n_rows
    t = np.arange(N + 1) * sc.Ts
    spec = sc.contour
    x_ref = np.asarray(spec.master_gen(t), dtype=float) * np.ones_like(t)
    if sc.master_mode == "prescribed":
        x1 = x_ref.copy()
        if sc.disturbance is not None:
            x1 = x1 + np.asarray(sc.disturbance(t), dtype=float)
    else:
        x1 = _simulate_master_pid(sc.plants[0], x_ref, sc.gains, sc.Ts)
    return t, x_ref, x1


def _amplitude(spec: ContourSpec, x1):
    if spec.kind != ROTATIONAL:
        return None
    return spec.amplitude_R or estimate_R(x1)


def run_closed_loop(sc: Scenario) -> SimulationTrace:
    """Simulate one scenario; returns the per-tick trace with synthesis metadata."""
    sc.validate()
    spec = sc.contour
    N = sc.n_rows
    t, x_ref, x1 = master_trajectory(sc)
    m = spec.n_slaves
    meta: Dict[str, object] = {
        "scenario": sc.name,
        "scenario_hash": sc.digest(),
        "controller": sc.slave_controller,
        "master_mode": sc.master_mode,
        "Ts": sc.Ts,
        "horizon": sc.horizon,
    }
    cols = {k: np.zeros((N, m)) for k in PER_SLAVE}

    if sc.slave_controller == "ccc":
        s_nom = _nominal_s(spec, t)
        R0 = _amplitude(spec, x_ref)
        phi = _tangent_angle(spec, s_nom, R0)
        y_ref = np.asarray(spec.slave_fns[0](s_nom), dtype=float) * np.ones_like(t)
        given = x1 if sc.master_mode == "prescribed" else None
        x1, y, u = _ccc_loop(sc, given, x_ref, y_ref, phi)
        cols["y2"][:, 0] = y
        cols["u2"][:, 0] = u

    R = _amplitude(spec, x1)
    if sc.slave_controller == "tvimcc":
        rep = check_assumptions(spec, sc.horizon, sc.Ts, x1_samples=x1)
        if not rep.ok:
            raise AssumptionFailure(rep.message or "contour assumptions violated")
    s_all = scheduling_variable(spec, x1, R)

    if sc.slave_controller == "tvimcc":
        margins, residuals, gains_at = [], [], []
        for i in range(m):
            sch = build_slave_schedule(sc, s_all, i)
            out = _tvimcc_loop(sc.plants[1], sch)
            for j, name in enumerate(("y2", "e2", "u2", "u_im", "u_st")):
                cols[name][:, i] = out[:, j]
            margins.append(sch.stabilizer.margins.global_min)
            residuals.append(float(np.max(sch.residual)))
            gains_at.append(sch.stabilizer.K_i.tolist())
            meta[f"exo_offset_{i + 1}"] = sch.offset
        meta["lmi_margin_min"] = min(margins)
        meta["sylvester_residual_max"] = max(residuals)
        meta["observer_gain"] = float(sch.stabilizer.H[0])
        meta["vertex_gains"] = gains_at
    elif sc.slave_controller == "pid":
        s_nom = _nominal_s(spec, t[:N])
        for i in range(m):
            ref = np.asarray(spec.slave_fns[i](s_nom), dtype=float) * np.ones(N)
            y, u = _slave_pid_loop(sc.plants[1], ref, sc.gains, sc.Ts)
            cols["y2"][:, i] = y
            cols["u2"][:, i] = u

    s = s_all[:N]
    for i in range(m):
        cols["r2"][:, i] = np.asarray(spec.slave_fns[i](s), dtype=float) * np.ones(N)
    if sc.slave_controller != "tvimcc":
        cols["e2"] = cols["y2"] - cols["r2"]

    if not all(np.all(np.isfinite(v)) for v in cols.values()):
        raise SynthesisFailure(f"closed loop diverged in scenario {sc.name!r} ({sc.slave_controller})")
    axes = np.vstack([x1[:N], cols["y2"].T])
    pts = spec.project(axes).T
    step = max(float(np.median(np.abs(np.diff(s_all)))), 1e-12)
    lo, hi = float(np.min(s_all)), float(np.max(s_all))
    pad = 0.05 * (hi - lo) + 10 * step
    proj = ContourProjector(spec, lo - pad, hi + pad, step, R)
    ce, _ = proj.query(pts)

    columns = {
        "k": np.arange(N),
        "t": t[:N],
        "x1_ref": x_ref[:N],
        "x1": x1[:N],
        **cols,
        "contour_error": ce,
    }
    return SimulationTrace(columns, meta, s)


def contour_metrics(
    trace: SimulationTrace,
    start_fraction: float = 0.5,
    mask=None,
    settle_threshold_um: float = 1.0,
) -> ContourMetrics:
    """RMS and maximum contour error in micrometres over the final part of the run.

    ``mask`` (callable of the scheduling variable) marks samples to keep,
    e.g. to drop the neighbourhood of a cusp.
    """
    ce = np.abs(trace.columns["contour_error"]) * MM_TO_UM
    n = ce.size
    keep = np.zeros(n, bool)
    keep[int(np.floor(start_fraction * n)) :] = True
    if mask is not None and trace.s is not None:
        keep &= np.asarray(mask(trace.s), bool)
    sel = ce[keep]
    if sel.size == 0:
        raise ValueError("no samples left for metrics")
    above = np.nonzero(ce > settle_threshold_um)[0]
    settle = 0 if above.size == 0 else int(above[-1]) + 1
    return ContourMetrics(float(np.sqrt(np.mean(sel**2))), float(np.max(sel)), settle, int(sel.size))


def scenario_metrics(sc: Scenario, trace: SimulationTrace, **kw) -> ContourMetrics:
    return contour_metrics(trace, mask=sc.metric_mask, **kw)


# -------------------------------------------------------------- scenarios


def _heart(s):
    c = np.cos(s)
    return np.sin(s) + np.sign(c) * np.abs(c) ** (2.0 / 3.0)


def _heart_deriv(s):
    c = np.cos(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.cos(s) - (2.0 / 3.0) * np.sin(s) * np.abs(c) ** (-1.0 / 3.0)


def _away_from_cusp(s):
    return np.abs(np.cos(s)) >= 1e-3


def builtin_scenarios(plant_set: str = "fitted") -> Dict[str, Scenario]:
    """The four simulated contours: sinusoid, circle, heart and four-axis."""
    if plant_set == "fitted":
        plants = fitted_paper_plants
    elif plant_set == "printed":
        plants = paper_plants
    else:
        raise ConfigError(f"unknown plant set {plant_set!r}")
    sinusoid = ContourSpec(MONOTONIC, lambda t: t, [np.sin], [np.cos], name="sinusoid")
    circle = ContourSpec(
        ROTATIONAL,
        lambda t: np.cos(2 * t),
        [np.sin],
        [np.cos],
        amplitude_R=1.0,
        theta_gen=lambda t: 2 * t,
        name="circle",
    )
    heart = ContourSpec(
        ROTATIONAL, np.cos, [_heart], [_heart_deriv], amplitude_R=1.0, theta_gen=lambda t: t, name="heart"
    )
    four = ContourSpec(
        ROTATIONAL,
        np.cos,
        [np.sin, lambda s: 0.1 * np.cos(10 * s), lambda s: 0.1 * np.sin(10 * s)],
        [np.cos, lambda s: -np.sin(10 * s), lambda s: np.cos(10 * s)],
        amplitude_R=1.0,
        theta_gen=lambda t: t,
        projection=[[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]],
        name="four_axis",
    )
    return {
        "sinusoid": Scenario(
            "sinusoid", sinusoid, 20.0, plants=plants(), disturbance=lambda t: 0.1 * np.sin(5 * t)
        ),
        "circle": Scenario("circle", circle, 2 * np.pi, plants=plants()),
        "heart": Scenario("heart", heart, 4 * np.pi, plants=plants(), metric_mask=_away_from_cusp),
        "four_axis": Scenario("four_axis", four, 4 * np.pi, plants=plants()),
    }


def max_threads() -> int:
    raw = os.environ.get("CONTOUR_IMC_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def sweep(scenarios: Sequence[Scenario], threads: Optional[int] = None) -> List[SimulationTrace]:
    """Run several scenarios, possibly concurrently; results keep the input order."""
    threads = max_threads() if threads is None else max(1, threads)
    if threads == 1 or len(scenarios) <= 1:
        return [run_closed_loop(sc) for sc in scenarios]
    with ThreadPoolExecutor(max_workers=min(threads, len(scenarios))) as ex:
        return list(ex.map(run_closed_loop, scenarios))


def with_controller(sc: Scenario, controller: str) -> Scenario:
    return replace(sc, slave_controller=controller)


__all__ = [
    "CONTROLLERS",
    "ContourMetrics",
    "ContourProjector",
    "Gains",
    "PIDState",
    "Scenario",
    "SimulationTrace",
    "SlaveSchedule",
    "build_slave_schedule",
    "builtin_scenarios",
    "ccc_step",
    "contour_error",
    "contour_metrics",
    "master_trajectory",
    "pid_step",
    "read_csv",
    "run_closed_loop",
    "scenario_metrics",
    "sweep",
    "with_controller",
    "write_csv",
]

"""Single-input single-output axis models and their discretization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import NotObservable

TS_PAPER = 1e-4


def _as_col(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass
class PlantCT:
    A2: np.ndarray
    B2: np.ndarray
    C2: np.ndarray

    def __post_init__(self):
        self.A2 = np.atleast_2d(np.asarray(self.A2, dtype=float))
        self.B2 = _as_col(self.B2)
        self.C2 = _as_col(self.C2)
        n = self.A2.shape[0]
        if self.A2.shape != (n, n) or self.B2.shape != (n,) or self.C2.shape != (n,):
            raise ValueError("inconsistent plant dimensions")

    @property
    def n(self) -> int:
        return self.A2.shape[0]

    def is_stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A2).real < 0))


@dataclass
class CanonicalForm:
    """Observer-canonical realization ``x_o = T x``.

    ``G = [[-a_1, 1, 0..], [-a_2, 0, 1..], ..., [-a_n, 0, ..]]``,
    ``H = [b_1, ..., b_n]``, ``C = [1, 0, ..]``; the transfer function is
    ``(b_1 z^{n-1} + ... + b_n) / (z^n + a_1 z^{n-1} + ... + a_n)``.
    """

    T: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def G(self) -> np.ndarray:
        return observer_companion(self.a)

    @property
    def H(self) -> np.ndarray:
        return self.b.copy()

    @property
    def C(self) -> np.ndarray:
        c = np.zeros(len(self.a))
        c[0] = 1.0
        return c


@dataclass
class PlantDT:
    G2: np.ndarray
    H2: np.ndarray
    C2: np.ndarray
    Ts: float
    canon: Optional[CanonicalForm] = field(default=None, repr=False)

    def __post_init__(self):
        self.G2 = np.atleast_2d(np.asarray(self.G2, dtype=float))
        self.H2 = _as_col(self.H2)
        self.C2 = _as_col(self.C2)
        n = self.G2.shape[0]
        if self.G2.shape != (n, n) or self.H2.shape != (n,) or self.C2.shape != (n,):
            raise ValueError("inconsistent plant dimensions")
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")

    @property
    def n(self) -> int:
        return self.G2.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.G2))))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0

    def markov(self, count: int) -> np.ndarray:
        """Markov parameters ``C G^j H`` for ``j = 0..count-1``."""
        out = np.empty(count)
        v = self.H2.copy()
        for j in range(count):
            out[j] = self.C2 @ v
            v = self.G2 @ v
        return out

    def char_poly(self) -> np.ndarray:
        """Monic characteristic polynomial coefficients, highest power first."""
        return np.poly(self.G2).real

    def step(self, x, u):
        return self.G2 @ x + self.H2 * u


def discretize_plant_zoh(plant: PlantCT, Ts: float) -> PlantDT:
    """Zero-order-hold discretization through one augmented matrix exponential."""
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    n = plant.n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = plant.A2
    M[:n, n] = plant.B2
    E = expm(M * Ts)
    return PlantDT(E[:n, :n], E[:n, n], plant.C2.copy(), Ts)


def observer_companion(a) -> np.ndarray:
    a = _as_col(a)
    n = len(a)
    G = np.zeros((n, n))
    G[:, 0] = -a
    G[: n - 1, 1:] = np.eye(n - 1)
    return G


def observability_matrix(G, C) -> np.ndarray:
    G = np.atleast_2d(G)
    rows = [np.atleast_2d(C)]
    for _ in range(G.shape[0] - 1):
        rows.append(rows[-1] @ G)
    return np.vstack(rows)


def to_observer_canonical(plant: PlantDT, rcond: float = 1e-12) -> PlantDT:
    """Copy of ``plant`` with its observer-canonical realization attached."""
    n = plant.n
    O = observability_matrix(plant.G2, plant.C2)
    sv = np.linalg.svd(O, compute_uv=False)
    if sv[-1] <= rcond * sv[0]:
        raise NotObservable(f"observability matrix rank-deficient (sigma_min/sigma_max = {sv[-1] / sv[0]:.3g})")
    a = plant.char_poly()[1:]
    Go = observer_companion(a)
    co = np.zeros(n)
    co[0] = 1.0
    Oo = observability_matrix(Go, co)
    T = np.linalg.solve(Oo, O)
    b = T @ plant.H2
    return replace(plant, canon=CanonicalForm(T, a, b))


def augment_order(plant: PlantDT, n_target: int, pole: float = 0.0) -> PlantDT:
    """Raise the state dimension by prefiltering the input with stable first-order lags.

    Each added state obeys ``x_new(k+1) = pole * x_new(k) + (1 - pole) u(k)``
    and feeds the previous input channel, so the model stays controllable
    and observable at the cost of ``n_target - n`` extra samples of lag.
    """
    if not -1.0 < pole < 1.0:
        raise ValueError("prefilter pole must lie inside the unit circle")
    G, H, C = plant.G2, plant.H2, plant.C2
    while G.shape[0] < n_target:
        n = G.shape[0]
        G2 = np.zeros((n + 1, n + 1))
        G2[:n, :n] = G
        G2[:n, n] = H
        G2[n, n] = pole
        H = np.concatenate([np.zeros(n), [1.0 - pole]])
        C = np.concatenate([C, [0.0]])
        G = G2
    return PlantDT(G, H, C, plant.Ts)


def paper_plants() -> tuple[PlantDT, PlantDT]:
    """Master (X1) and slave (X2) stage models exactly as printed, sampled at 10 kHz."""
    master = PlantDT([[1.00, 9.99e-5], [-0.79, 1.00]], [3.97e-6, 0.08], [1.0, 0.0], TS_PAPER)
    slave = PlantDT([[1.00, 9.98e-5], [-2.10, 1.00]], [1.04e-5, 0.21], [1.0, 0.0], TS_PAPER)
    return master, slave


def mass_spring_damper(stiffness: float, damping: float, gain: float) -> PlantCT:
    """``x'' = -stiffness x - damping x' + gain u`` with position output."""
    return PlantCT([[0.0, 1.0], [-stiffness, -damping]], [0.0, gain], [1.0, 0.0])


# Continuous second-order fits whose ZOH samples round to the printed matrices.
MASTER_CT = dict(stiffness=7900.0, damping=20.0, gain=794.0)
SLAVE_CT = dict(stiffness=21000.0, damping=40.0, gain=2080.0)


def fitted_paper_plants(Ts: float = TS_PAPER) -> tuple[PlantDT, PlantDT]:
    """ZOH discretizations of continuous models matching the printed stage matrices.

    The printed matrices are rounded to three digits, which moves the slave's
    sampling zero to about -1.015 (outside the unit circle). The fitted
    models keep it inside (about -0.9987) and are asymptotically stable.
    """
    return (
        discretize_plant_zoh(mass_spring_damper(**MASTER_CT), Ts),
        discretize_plant_zoh(mass_spring_damper(**SLAVE_CT), Ts),
    )

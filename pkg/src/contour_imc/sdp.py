"""Dense feasibility solver for small systems of linear matrix inequalities.

Constraints are affine symmetric matrix functions ``F_b(z)`` of a stacked
variable vector ``z``; the solver maximizes a uniform margin ``t`` subject to
``F_b(z) - t I >= 0`` and a norm box ``|z_i| <= box`` with a primal
log-barrier path-following Newton method. Problems here have at most a few
hundred variables and blocks of size <= 8, so everything is dense.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .errors import Infeasible, MaxIterations

DEFAULT_MARGIN = 1e-8
DEFAULT_BOX = 1e9
INFEASIBLE_TOL = 1e-9

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatrixVariable:
    name: str
    shape: Tuple[int, int]
    symmetric: bool = False

    @property
    def size(self) -> int:
        r, c = self.shape
        if self.symmetric:
            if r != c:
                raise ValueError(f"symmetric variable {self.name} must be square")
            return r * (r + 1) // 2
        return r * c

    def unpack(self, z: np.ndarray) -> np.ndarray:
        r, c = self.shape
        if not self.symmetric:
            return z.reshape(r, c)
        M = np.zeros((r, r))
        iu = np.triu_indices(r)
        M[iu] = z
        return M + np.triu(M, 1).T

    def pack(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float).reshape(self.shape)
        if not self.symmetric:
            return M.reshape(-1).copy()
        return M[np.triu_indices(self.shape[0])].copy()


Constraint = Tuple[str, Callable[[Dict[str, np.ndarray]], np.ndarray]]


def _sym(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return 0.5 * (M + M.T)


class LmiProblem:
    """Variables plus named affine constraints required to be positive definite.

    Each constraint is a callable taking a ``{name: matrix}`` assignment and
    returning a symmetric matrix. Coefficients are extracted once by
    evaluating at the origin and at unit vectors.
    """

    def __init__(
        self,
        variables: Sequence[MatrixVariable],
        constraints: Sequence[Constraint],
        margin_target: float = DEFAULT_MARGIN,
        box: float = DEFAULT_BOX,
    ):
        if margin_target < DEFAULT_MARGIN:
            raise ValueError(f"margin_target must be >= {DEFAULT_MARGIN}")
        self.variables = list(variables)
        self.constraints = list(constraints)
        self.margin_target = float(margin_target)
        self.box = float(box)
        offsets = np.cumsum([0] + [v.size for v in self.variables])
        self._slices = {v.name: slice(offsets[i], offsets[i + 1]) for i, v in enumerate(self.variables)}
        self.n_vars = int(offsets[-1])
        self._coeffs = None

    def unpack(self, z) -> Dict[str, np.ndarray]:
        z = np.asarray(z, dtype=float)
        return {v.name: v.unpack(z[self._slices[v.name]]) for v in self.variables}

    def pack(self, assignment: Dict[str, np.ndarray]) -> np.ndarray:
        z = np.zeros(self.n_vars)
        for v in self.variables:
            z[self._slices[v.name]] = v.pack(assignment[v.name])
        return z

    def coefficients(self) -> List[Tuple[str, np.ndarray, np.ndarray]]:
        """``[(name, F0, F)]`` with ``F`` of shape ``(n_vars, d, d)`` per constraint."""
        if self._coeffs is not None:
            return self._coeffs
        zero = self.unpack(np.zeros(self.n_vars))
        out = []
        for name, fn in self.constraints:
            F0 = _sym(fn(zero))
            d = F0.shape[0]
            F = np.empty((self.n_vars, d, d))
            for i in range(self.n_vars):
                e = np.zeros(self.n_vars)
                e[i] = 1.0
                F[i] = _sym(fn(self.unpack(e))) - F0
            probe = np.linspace(-0.7, 1.3, self.n_vars)  # avoids unit vectors and the origin
            direct = _sym(fn(self.unpack(probe)))
            affine = F0 + np.tensordot(probe, F, axes=1)
            if not np.allclose(direct, affine, rtol=1e-9, atol=1e-9 * (1 + np.abs(direct).max())):
                raise ValueError(f"constraint {name!r} is not affine in the variables")
            out.append((name, F0, F))
        self._coeffs = out
        return out

    def evaluate(self, z) -> List[np.ndarray]:
        return [F0 + np.tensordot(z, F, axes=1) for _, F0, F in self.coefficients()]

    def scaled(self, c: float) -> "LmiProblem":
        """Same problem with every constraint multiplied by ``c > 0``."""
        cons = [(name, (lambda fn: lambda vals: c * np.asarray(fn(vals)))(fn)) for name, fn in self.constraints]
        return LmiProblem(self.variables, cons, self.margin_target, self.box)


@dataclass
class LmiSolution:
    assignment: Dict[str, np.ndarray]
    z: np.ndarray
    margin: float
    iterations: int
    report: "MarginReport" = field(repr=False, default=None)


@dataclass
class MarginReport:
    block_min_eig: Dict[str, float]
    global_min: float
    target: float

    @property
    def ok(self) -> bool:
        return self.global_min >= self.target


def check_solution(problem: LmiProblem, assignment: Dict[str, np.ndarray]) -> MarginReport:
    """Minimum eigenvalue of every constraint at ``assignment``, computed from scratch."""
    mins = {}
    for name, fn in problem.constraints:
        mins[name] = float(np.min(np.linalg.eigvalsh(_sym(fn(assignment)))))
    return MarginReport(mins, min(mins.values()), problem.margin_target)


class _Blocks:
    """Constraints grouped by dimension, with the margin variable appended."""

    def __init__(self, problem: LmiProblem):
        groups: Dict[int, list] = {}
        for _, F0, F in problem.coefficients():
            groups.setdefault(F0.shape[0], []).append((F0, F))
        self.groups = []
        nz = problem.n_vars
        for d, items in sorted(groups.items()):
            F0 = np.stack([a for a, _ in items])
            A = np.zeros((len(items), nz + 1, d, d))
            A[:, :nz] = np.stack([b for _, b in items])
            A[:, nz] = -np.eye(d)
            self.groups.append((F0, A))
        self.degree = sum(F0.shape[0] * F0.shape[1] for F0, _ in self.groups)

    def matrices(self, x):
        return [F0 + np.einsum("k,bkij->bij", x, A) for F0, A in self.groups]

    def min_eig(self, x) -> float:
        return min(float(np.min(np.linalg.eigvalsh(M))) for M in self.matrices(x))


def solve_lmi_feasibility(
    problem: LmiProblem,
    tol: float = 1e-9,
    mu: float = 20.0,
    max_outer: int = 80,
    max_newton: int = 200,
    stop_margin: float | None = None,
) -> LmiSolution:
    """Maximize the uniform margin; return a solution clearing ``margin_target``.

    Raises :class:`Infeasible` when the maximized margin stays below the
    target (below ``INFEASIBLE_TOL`` means no strictly feasible point), and
    :class:`MaxIterations` when Newton fails to converge. With ``stop_margin``
    the path is abandoned as soon as the margin reaches that value, which is
    enough for feasibility and avoids chasing the box in homogeneous problems.
    """
    nz = problem.n_vars
    blocks = _Blocks(problem)
    B = problem.box
    x = np.zeros(nz + 1)
    x[nz] = blocks.min_eig(x) - 1.0
    m = blocks.degree + 2 * nz
    tau = 1.0 / max(1.0, abs(x[nz]))
    iterations = 0
    done = False

    def barrier(x, tau):
        val = -tau * x[nz]
        for M in blocks.matrices(x):
            w = np.linalg.eigvalsh(M)
            if np.any(w <= 0):
                return np.inf
            val -= np.sum(np.log(w))
        z = x[:nz]
        gap = (B - z) * (B + z)
        if np.any(gap <= 0):
            return np.inf
        return val - np.sum(np.log(gap))

    for _ in range(max_outer):
        for _ in range(max_newton):
            iterations += 1
            g = np.zeros(nz + 1)
            g[nz] = -tau
            H = np.zeros((nz + 1, nz + 1))
            for (F0, A), M in zip(blocks.groups, blocks.matrices(x)):
                w, V = np.linalg.eigh(M)
                Sh = (V * w[..., None, :] ** -0.5) @ np.swapaxes(V, -1, -2)
                Y = Sh[:, None] @ A @ Sh[:, None]
                g -= np.einsum("bkii->k", Y)
                Yf = Y.reshape(Y.shape[0], Y.shape[1], -1)
                H += np.einsum("bkm,blm->kl", Yf, Yf)
            z = x[:nz]
            gap = (B - z) * (B + z)
            g[:nz] += 2 * z / gap
            H[np.arange(nz), np.arange(nz)] += 2 * (B * B + z * z) / gap**2
            try:
                L = np.linalg.cholesky(H)
                dx = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = float(-g @ dx)
            if dec / 2 <= 1e-9:
                break
            f0 = barrier(x, tau)
            step = 1.0
            while step > 1e-14:
                xn = x + step * dx
                fn = barrier(xn, tau)
                if np.isfinite(fn) and fn <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            if np.array_equal(xn, x):
                break  # step below floating-point resolution
            x = xn
            log.debug("newton %d tau=%.3g dec=%.3g step=%.3g t=%.6g", iterations, tau, dec, step, x[nz])
            if stop_margin is not None and x[nz] >= stop_margin:
                done = True
                break
        else:
            raise MaxIterations(f"Newton did not converge within {max_newton} steps")
        if done or m / tau <= tol * max(1.0, abs(x[nz])):
            break
        tau *= mu
    else:
        raise MaxIterations(f"barrier path not finished within {max_outer} outer steps")

    z = x[:nz]
    assignment = problem.unpack(z)
    report = check_solution(problem, assignment)
    margin = report.global_min
    if margin <= INFEASIBLE_TOL:
        raise Infeasible(f"maximized margin {margin:.3g} is not positive", margin)
    if margin < problem.margin_target:
        raise Infeasible(f"maximized margin {margin:.3g} below target {problem.margin_target:.3g}", margin)
    return LmiSolution(assignment, z, margin, iterations, report)


def dump_problem(problem: LmiProblem) -> str:
    """Plain-text form: one section per block, matrices as row-major number lines."""
    out = io.StringIO()
    out.write("# lmi-problem v1\n")
    out.write(f"margin_target {problem.margin_target!r}\nbox {problem.box!r}\n")
    out.write(f"variables {len(problem.variables)}\n")
    for v in problem.variables:
        out.write(f"var {v.name} {v.shape[0]} {v.shape[1]} {'sym' if v.symmetric else 'gen'}\n")
    for name, F0, F in problem.coefficients():
        d = F0.shape[0]
        out.write(f"block {name} {d}\n")
        terms = [("const", F0)] + [(str(i), F[i]) for i in range(F.shape[0]) if np.any(F[i])]
        for label, M in terms:
            out.write(f"term {label}\n")
            for row in M:
                out.write(" ".join(repr(float(x)) for x in row) + "\n")
        out.write("end\n")
    return out.getvalue()


def load_problem(text: str) -> LmiProblem:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    header = {}
    variables = []
    blocks = []
    for ln in it:
        parts = ln.split()
        key = parts[0]
        if key in ("margin_target", "box"):
            header[key] = float(parts[1])
        elif key == "variables":
            pass
        elif key == "var":
            variables.append(MatrixVariable(parts[1], (int(parts[2]), int(parts[3])), parts[4] == "sym"))
        elif key == "block":
            name, d = parts[1], int(parts[2])
            terms = {}
            for ln2 in it:
                p2 = ln2.split()
                if p2[0] == "end":
                    break
                if p2[0] != "term":
                    raise ValueError(f"unexpected line {ln2!r}")
                rows = [[float(x) for x in next(it).split()] for _ in range(d)]
                terms[p2[1]] = np.array(rows)
            blocks.append((name, d, terms))
        else:
            raise ValueError(f"unexpected line {ln!r}")
    probe = LmiProblem(variables, [])
    nz = probe.n_vars

    def make(d, terms):
        F0 = terms.get("const", np.zeros((d, d)))
        F = np.zeros((nz, d, d))
        for label, M in terms.items():
            if label != "const":
                F[int(label)] = M
        return lambda vals: F0 + np.tensordot(probe.pack(vals), F, axes=1)

    constraints = [(name, make(d, terms)) for name, d, terms in blocks]
    return LmiProblem(variables, constraints, header.get("margin_target", DEFAULT_MARGIN), header.get("box", DEFAULT_BOX))

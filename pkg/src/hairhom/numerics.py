"""Grids, sparse assembly, linear solves, implicit stepping and scalar roots.

Everything here is deliberately generic: the macroscopic solvers work on a
:class:`Grid1D` in the vertical coordinate, the resolved-hair solver builds
its own tensor grid but reuses :func:`solve_linear` and :class:`Operator`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SolverError, ValidationError

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
ITERATIVE_THRESHOLD = 400_000
BANDED_MAX_BANDWIDTH = 8


@dataclass(frozen=True)
class Grid1D:
    """Vertex grid on ``[0, M]`` with a node exactly at the hair tip ``L``."""

    nodes: np.ndarray
    interface_index: int

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", x)
        problems = []
        if x.ndim != 1 or x.size < 3:
            problems.append("Grid1D needs at least three nodes")
        elif np.any(np.diff(x) <= 0):
            problems.append("Grid1D nodes must be strictly increasing")
        elif x[0] != 0.0:
            problems.append("Grid1D must start at 0")
        if problems:
            raise ValidationError(problems)
        if not 0 <= self.interface_index < x.size:
            raise ValidationError("interface_index out of range")

    @classmethod
    def build(cls, L: float, M: float, n_nodes: int) -> "Grid1D":
        """Piecewise-uniform grid, uniform on ``[0, L]`` and on ``[L, M]``.

        The cells are shared between the two segments in proportion to
        their lengths, so ``L`` is always a node.
        """
        if not 0 < L <= M:
            raise ValidationError(f"need 0 < L <= M, got L={L}, M={M}")
        n_cells = int(n_nodes) - 1
        if n_cells < 2:
            raise ValidationError("Grid1D needs at least three nodes")
        if L == M:
            return cls(np.linspace(0.0, L, n_cells + 1), n_cells)
        below = min(max(int(round(n_cells * L / M)), 1), n_cells - 1)
        lower = np.linspace(0.0, L, below + 1)
        upper = np.linspace(L, M, n_cells - below + 1)
        return cls(np.concatenate([lower, upper[1:]]), below)

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def L(self) -> float:
        return float(self.nodes[self.interface_index])

    @property
    def M(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        """Largest cell width."""
        return float(self.spacing.max())

    def volumes(self) -> np.ndarray:
        """Control-volume lengths of the vertex-centred scheme."""
        h = self.spacing
        v = np.zeros(self.nodes.size)
        v[:-1] += 0.5 * h
        v[1:] += 0.5 * h
        return v

    def hair_zone(self) -> "Grid1D":
        """Sub-grid on ``[0, L]``."""
        x = self.nodes[: self.interface_index + 1]
        return Grid1D(x, self.interface_index)


@dataclass
class Field:
    """Nodal values on a grid at time ``t``."""

    values: np.ndarray
    grid: object
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __call__(self, x):
        return np.interp(x, self.grid.nodes, self.values)

    def copy(self, values=None, t=None) -> "Field":
        return Field(self.values.copy() if values is None else values, self.grid,
                     self.t if t is None else t)


@dataclass
class Series:
    """Time history of nodal values; row ``k`` is the field at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray
    grid: object

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def final(self) -> Field:
        return Field(self.values[-1], self.grid, float(self.times[-1]))

    def at_index(self, k: int) -> Field:
        return Field(self.values[k], self.grid, float(self.times[k]))


@dataclass
class LinearSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    bc_rows: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n, m = self.matrix.shape
        if n != m or n != self.rhs.size:
            raise ValidationError(
                f"system shape mismatch: matrix {self.matrix.shape}, rhs {self.rhs.shape}")

    def set_dirichlet(self, rows, values) -> None:
        """Replace ``rows`` by identity rows with the given values."""
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        values = np.broadcast_to(np.asarray(values, dtype=float), rows.shape)
        A = self.matrix.tolil()
        for r, v in zip(rows, values):
            A.rows[r] = [int(r)]
            A.data[r] = [1.0]
            self.rhs[r] = v
            self.bc_rows.append((int(r), float(v)))
        self.matrix = A.tocsr()

    def residual(self, x) -> float:
        return float(np.max(np.abs(self.matrix @ x - self.rhs))) if self.rhs.size else 0.0


def _bandwidth(A: sp.csr_matrix) -> int:
    coo = A.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


def _solve_banded(A: sp.csr_matrix, b: np.ndarray, bw: int) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((2 * bw + 1, n))
    coo = A.tocoo()
    ab[bw + coo.row - coo.col, coo.col] += coo.data
    return scipy.linalg.solve_banded((bw, bw), ab, b)


def solve_linear(system: LinearSystem, tol: float = RESIDUAL_TOL,
                 iterative_threshold: int = ITERATIVE_THRESHOLD) -> np.ndarray:
    """Solve ``system`` and guarantee ``|Ax-b|_inf <= tol*|b|_inf``.

    Narrow-band matrices go through LAPACK banded elimination, wider ones
    through sparse LU; above ``iterative_threshold`` unknowns an
    ILU-preconditioned BiCGSTAB is used instead.
    """
    A, b = system.matrix, system.rhs
    n = A.shape[0]
    bnorm = float(np.max(np.abs(b))) if n else 0.0
    if n == 0:
        return np.zeros(0)
    if bnorm == 0.0:
        return np.zeros(n)
    target = tol * bnorm
    bw = _bandwidth(A)
    try:
        if n > iterative_threshold:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            prec = spla.LinearOperator(A.shape, ilu.solve)
            x, info = spla.bicgstab(A, b, rtol=tol * 1e-2, atol=0.0, M=prec, maxiter=5000)
            solve = ilu.solve
        elif bw <= BANDED_MAX_BANDWIDTH:
            x = _solve_banded(A, b, bw)
            solve = lambda r: _solve_banded(A, r, bw)  # noqa: E731
        else:
            lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
            x = lu.solve(b)
            solve = lu.solve
    except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values", residual=np.inf)
    res = system.residual(x)
    for _ in range(3):
        if res <= target:
            break
        x = x - solve(A @ x - b)
        res = system.residual(x)
    if res > target:
        raise SolverError(f"residual above tolerance {target:.3e}", residual=res)
    return x


@dataclass
class Operator:
    """Semi-discrete operator ``mass * du/dt = -stiffness @ u + forcing``.

    ``dirichlet`` maps node index to an imposed value.
    """

    mass: np.ndarray
    stiffness: sp.spmatrix
    forcing: np.ndarray
    dirichlet: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.mass.size

    def _apply_dirichlet(self, system: LinearSystem) -> LinearSystem:
        if self.dirichlet:
            rows = np.fromiter(self.dirichlet.keys(), dtype=int)
            vals = np.fromiter(self.dirichlet.values(), dtype=float)
            system.set_dirichlet(rows, vals)
        return system

    def steady_system(self) -> LinearSystem:
        return self._apply_dirichlet(
            LinearSystem(self.stiffness.copy(), self.forcing.copy()))

    def implicit_system(self, u_prev: np.ndarray, dt: float) -> LinearSystem:
        A = sp.diags(self.mass / dt) + self.stiffness
        rhs = self.mass / dt * u_prev + self.forcing
        return self._apply_dirichlet(LinearSystem(A, rhs))


@dataclass(frozen=True)
class TimeStepper:
    dt: float
    t_end: float
    scheme: str = "backward-euler"

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.t_end >= self.dt:
            problems.append("t_end must be at least dt")
        if self.scheme != "backward-euler":
            problems.append(f"unsupported scheme {self.scheme!r}")
        if problems:
            raise ValidationError(problems)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def step_backward_euler(state: Field, operator: Operator, dt: float) -> Field:
    """One implicit Euler step: ``(M/dt + K) u_new = M/dt u + f``."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if state.values.size != operator.size:
        raise ValidationError("state and operator live on different grids")
    u = solve_linear(operator.implicit_system(state.values, dt))
    return Field(u, state.grid, state.t + dt)


def diffusion_operator(grid: Grid1D, D: float, sigma=0.0, *, sink_until: Optional[float] = None,
                       source=None, robin_left: float = 0.0, inflow_right: float = 0.0,
                       dirichlet_right: Optional[float] = None) -> Operator:
    """Vertex-centred finite volumes for ``u_t = D u'' - sigma u + source``.

    The reaction and source terms are lumped onto the part of each control
    volume lying below ``sink_until`` (the whole grid when ``None``), which
    keeps the indicator of the hair zone exactly conservative.  At ``x=0``
    the outward flux is ``robin_left * u``; at the right end either a
    Dirichlet value or a prescribed inflow ``D u'(x_end)`` is imposed.
    """
    x = grid.nodes
    h = grid.spacing
    n = x.size
    k = D / h
    main = np.zeros(n)
    main[:-1] += k
    main[1:] += k
    K = sp.diags([main, -k, -k], [0, 1, -1], format="csr")

    if sink_until is None:
        inside = np.ones(n - 1, dtype=bool)
    else:
        inside = x[1:] <= sink_until + 1e-12 * max(1.0, abs(sink_until))
    vol_sink = np.zeros(n)
    vol_sink[:-1] += np.where(inside, 0.5 * h, 0.0)
    vol_sink[1:] += np.where(inside, 0.5 * h, 0.0)

    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    K = K + sp.diags(sigma * vol_sink)
    K = K.tolil()
    K[0, 0] += robin_left
    forcing = np.zeros(n)
    if source is not None:
        forcing += np.broadcast_to(np.asarray(source, dtype=float), (n,)) * vol_sink
    forcing[-1] += inflow_right
    dirichlet = {} if dirichlet_right is None else {n - 1: float(dirichlet_right)}
    return Operator(grid.volumes(), K.tocsr(), forcing, dirichlet)


def newton_scalar(f: Callable[[float], float], df: Callable[[float], float], x0: float,
                  tol: float = 1e-12, bracket=None, maxiter: int = 100) -> float:
    """Newton iteration with an optional bisection safeguard.

    With ``bracket=(a, b)`` and ``f(a) <= 0 <= f(b)`` every step that would
    leave the bracket, or fails to shrink the residual, is replaced by a
    bisection step, so monotone ``f`` always converges.
    """
    x = float(x0)
    lo = hi = None
    if bracket is not None:
        lo, hi = map(float, bracket)
        if f(lo) > 0 or f(hi) < 0:
            raise ValidationError(f"bracket {bracket} does not enclose a root")
        x = min(max(x, lo), hi)
    fx = f(x)
    for _ in range(maxiter):
        if abs(fx) <= tol:
            return x
        if lo is not None:
            if fx < 0:
                lo = x
            else:
                hi = x
        d = df(x)
        x_new = x - fx / d if d != 0 and np.isfinite(d) else np.nan
        if lo is not None and not (lo <= x_new <= hi):
            x_new = 0.5 * (lo + hi)
        if not np.isfinite(x_new):
            break
        f_new = f(x_new)
        if lo is not None and abs(f_new) > abs(fx):
            x_new = 0.5 * (lo + hi)
            f_new = f(x_new)
        if x_new == x and abs(f_new) > tol:
            break
        x, fx = x_new, f_new
    if abs(fx) <= tol:
        return x
    raise ConvergenceError("Newton iteration did not converge", last=x, residual=abs(fx))


def observed_orders(h, err) -> np.ndarray:
    """Pairwise convergence orders ``log(e_k/e_{k+1}) / log(h_k/h_{k+1})``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])

"""Resolved-hair solver on the axisymmetric equal-area cell.

The square cell of side ``eps`` around one hair is replaced by a disc of the
same area, radius ``eps/sqrt(pi)``.  The problem is then two-dimensional in
``(r, z)``: the hair is the rectangle ``r < r_eps, z < L`` cut out of it.

Discretisation is vertex-centred finite volumes on a tensor grid.  Every
fluid cell hands a quarter of its ring volume and half of each face flux to
its four corners, which gives a symmetric M-matrix and exact discrete
conservation.  The common factor ``2 pi`` of the ring measure is dropped
from the assembly and restored in reported totals.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .correctors import CorrectorParams
from .errors import ConvergenceError, GeometryError, ModeError, ValidationError
from .numerics import Operator, TimeStepper, solve_linear
from .scenario import Scenario

log = logging.getLogger(__name__)

DEFAULT_NR = 96
DEFAULT_NZ = 96
DEFAULT_Z_GRADING = 2.0
PICARD_TOL = 1e-12
PICARD_MAX_ITER = 200


@dataclass(frozen=True)
class AxiGrid:
    """Tensor grid in ``(r, z)`` with the hair cut out.

    ``mask[i, j]`` is True for nodes that carry an unknown.  In annulus mode
    the hair spans the full height and the grid starts at ``r_eps``.
    """

    r: np.ndarray
    z: np.ndarray
    r_eps: float
    i_eps: int
    j_L: int
    grading: float
    annulus: bool = False
    z_grading: float = 1.0

    @property
    def shape(self):
        return self.r.size, self.z.size

    @property
    def outer_radius(self) -> float:
        return float(self.r[-1])

    @property
    def L(self) -> float:
        return float(self.z[self.j_L])

    def fluid_cells(self) -> np.ndarray:
        """Boolean ``(n_r, n_z)`` array of cells outside the hair."""
        nr, nz = self.r.size - 1, self.z.size - 1
        solid = np.zeros((nr, nz), dtype=bool)
        if not self.annulus:
            solid[: self.i_eps, : self.j_L] = True
        return ~solid

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        f = self.fluid_cells()
        m[:-1, :-1] |= f
        m[1:, :-1] |= f
        m[:-1, 1:] |= f
        m[1:, 1:] |= f
        return m

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())


def _graded(r0: float, r1: float, n: int, grading: float) -> np.ndarray:
    """Blend of a logarithmic and a uniform map of ``[r0, r1]`` onto ``n`` cells."""
    s = np.linspace(0.0, 1.0, n + 1)
    geo = r0 * (r1 / r0) ** s
    lin = r0 + s * (r1 - r0)
    r = grading * geo + (1.0 - grading) * lin
    r[0], r[-1] = r0, r1
    return r


def _axial(L: float, M: float, n_z: int, power: float) -> tuple:
    """Nodes on ``[0, M]`` clustered at ``L`` like ``dist**(1/power)``.

    Clustering at the hair tip is what keeps second-order convergence in the
    presence of the re-entrant corner at ``(r_eps, L)``.
    """
    below = min(max(int(round(n_z * L / M)), 1), n_z - 1)
    s_lo = np.linspace(0.0, 1.0, below + 1)
    s_hi = np.linspace(0.0, 1.0, n_z - below + 1)
    lower = L * (1.0 - (1.0 - s_lo) ** power)
    upper = L + (M - L) * s_hi ** power
    lower[-1] = upper[0] = L
    upper[-1] = M
    return np.concatenate([lower, upper[1:]]), below


def _check_sizes(n_r, n_z, grading, z_grading=1.0):
    problems = []
    if not z_grading >= 1.0:
        problems.append("z_grading must be at least 1")
    if n_r < 16 or n_z < 16:
        problems.append("n_r and n_z must be at least 16")
    if not 0.0 <= grading <= 1.0:
        problems.append("grading must lie in [0, 1]")
    if problems:
        raise ValidationError(problems)


def cell_radius(epsilon: float) -> float:
    """Radius of the disc with the area ``eps^2`` of the square cell."""
    return epsilon / math.sqrt(math.pi)


def build_axi_grid(scenario: Scenario, n_r: int = DEFAULT_NR, n_z: int = DEFAULT_NZ,
                   grading: float = 1.0, z_grading: float = DEFAULT_Z_GRADING) -> AxiGrid:
    """Grid for the resolved problem.

    ``n_r // 8`` uniform cells cover the hair radius, the rest are graded
    from ``r_eps`` to the cell radius (``grading = 1`` is purely
    logarithmic).  Axially the nodes cluster at the tip ``L`` with power
    ``z_grading`` (1 is uniform on each side).  Doubling ``n_r`` and ``n_z``
    (multiples of 8) nests grids.
    """
    _check_sizes(n_r, n_z, grading, z_grading)
    if scenario.regime != "reference":
        raise ValidationError("build_axi_grid needs a scenario in the reference regime")
    r_eps = scenario.r_eps
    rho_cell = cell_radius(scenario.epsilon)
    if r_eps >= rho_cell:
        raise GeometryError([f"hair radius {r_eps:.4g} does not fit in the cell radius {rho_cell:.4g}"])
    n_in = max(2, n_r // 8)
    inner = np.linspace(0.0, r_eps, n_in + 1)
    outer = _graded(r_eps, rho_cell, n_r - n_in, grading)
    r = np.concatenate([inner, outer[1:]])
    z, j_L = _axial(scenario.L, scenario.M, n_z, z_grading)
    return AxiGrid(r, z, r_eps, n_in, j_L, float(grading), z_grading=float(z_grading))


def build_annulus_grid(params: CorrectorParams, n_r: int = 32, n_z: int = 16,
                       grading: float = 1.0, height: float = 1.0) -> AxiGrid:
    """Grid on ``[r_eps, eps*rho] x [0, height]`` for the corrector test."""
    _check_sizes(n_r, n_z, grading)
    r = _graded(params.r_eps, params.outer_radius, n_r, grading)
    z = np.linspace(0.0, height, n_z + 1)
    return AxiGrid(r, z, params.r_eps, 0, n_z, float(grading), annulus=True)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class _Assembly:
    grid: AxiGrid
    index: np.ndarray        # full (i, j) -> compact index, -1 where masked
    nodes: np.ndarray        # compact -> flat full index
    volume: np.ndarray
    diffusion: sp.csr_matrix
    hair_weight: np.ndarray  # surface measure times eps^2 kappa / r_eps
    root_weight: np.ndarray  # beta times the bottom face measure
    dirichlet: dict = field(default_factory=dict)

    def stiffness(self, hair_coefficient) -> sp.csr_matrix:
        return (self.diffusion + sp.diags(self.root_weight + self.hair_weight * hair_coefficient)).tocsr()


def _assemble(grid: AxiGrid, D: float, hair_rate: float, beta: float,
              top_value: Optional[float], outer_value: Optional[float]) -> _Assembly:
    r, z = grid.r, grid.z
    nr1, nz1 = grid.shape
    mask = grid.mask
    index = -np.ones(mask.shape, dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    n = int(mask.sum())

    fi, fj = np.nonzero(grid.fluid_cells())
    ri, ro = r[fi], r[fi + 1]
    rm = 0.5 * (ri + ro)
    hr = ro - ri
    hz = z[fj + 1] - z[fj]
    m_in = 0.5 * (rm ** 2 - ri ** 2)
    m_out = 0.5 * (ro ** 2 - rm ** 2)
    a = index[fi, fj]
    b = index[fi + 1, fj]
    c = index[fi, fj + 1]
    d = index[fi + 1, fj + 1]

    volume = np.zeros(n)
    for nodes_, w in ((a, m_in), (c, m_in), (b, m_out), (d, m_out)):
        np.add.at(volume, nodes_, 0.5 * hz * w)

    w_r = D * rm * 0.5 * hz / hr
    w_in = D * m_in / hz
    w_out = D * m_out / hz
    p = np.concatenate([a, c, a, b])
    q = np.concatenate([b, d, c, d])
    w = np.concatenate([w_r, w_r, w_in, w_out])
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([p, q, q, p])
    vals = np.concatenate([w, w, -w, -w])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    root = np.zeros(n)
    bottom = fj == 0
    if beta:
        np.add.at(root, a[bottom], beta * m_in[bottom])
        np.add.at(root, b[bottom], beta * m_out[bottom])

    hair = np.zeros(n)
    if hair_rate:
        js = np.arange(grid.j_L)
        seg = z[js + 1] - z[js]
        np.add.at(hair, index[grid.i_eps, js], 0.5 * hair_rate * seg)
        np.add.at(hair, index[grid.i_eps, js + 1], 0.5 * hair_rate * seg)

    dirichlet = {}
    if top_value is not None:
        for k in index[:, -1][index[:, -1] >= 0]:
            dirichlet[int(k)] = float(top_value)
    if outer_value is not None:
        for k in index[-1, :][index[-1, :] >= 0]:
            dirichlet[int(k)] = float(outer_value)
    flat = np.flatnonzero(mask.ravel())
    return _Assembly(grid, index, flat, volume, K, hair, root, dirichlet)


# ---------------------------------------------------------------------------
# solution object


@dataclass
class ReferenceSolution:
    """Resolved field; ``values[k]`` is ``(n_r+1, n_z+1)`` with NaN inside the hair."""

    scenario: Optional[Scenario]
    grid: AxiGrid
    times: np.ndarray
    values: np.ndarray
    steady: bool
    _assembly: _Assembly = field(repr=False, default=None)
    _uptake: object = field(repr=False, default=None)
    picard_history: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def surface_profile(self, k: int = -1):
        """``(z, u(r_eps, z))`` along the hair surface."""
        j = self.grid.j_L + 1
        return self.grid.z[:j], self.values[k][self.grid.i_eps, :j]

    def slice(self, z: float, k: int = -1):
        """Radial profile ``(r, u(r, z))`` at height ``z``; hair nodes are NaN."""
        zz = self.grid.z
        if not zz[0] <= z <= zz[-1]:
            raise ValidationError(f"z={z} outside [0, {zz[-1]}]")
        u = self.values[k]
        j = int(np.clip(np.searchsorted(zz, z) - 1, 0, zz.size - 2))
        t = (z - zz[j]) / (zz[j + 1] - zz[j])
        if t == 0.0:
            row = u[:, j]
        elif t == 1.0:
            row = u[:, j + 1]
        else:
            row = (1 - t) * u[:, j] + t * u[:, j + 1]
        if z < self.grid.L and not self.grid.annulus:
            row = row.copy()
            row[: self.grid.i_eps] = np.nan
        return self.grid.r.copy(), row

    def cell_average(self, z: float, k: int = -1) -> float:
        return cell_average_profile(self, z, k)

    @property
    def uptake_total(self):
        return total_uptake(self)


def _ring_integral(r, u):
    """``int r u dr`` of the piecewise-linear interpolant."""
    h = np.diff(r)
    return float(np.sum(h * (r[:-1] * 0.5 * (u[:-1] + u[1:]) + h * (u[:-1] / 6 + u[1:] / 3))))


def cell_average_profile(solution: ReferenceSolution, z: float, k: int = -1) -> float:
    """Area average of ``u`` over the cross-section at height ``z``.

    Below the hair tip the section is the annulus around the hair; from the
    tip upwards it is the full disc.
    """
    r, row = solution.slice(z, k)
    start = solution.grid.i_eps if (z < solution.grid.L and not solution.grid.annulus) else 0
    r, row = r[start:], row[start:]
    return _ring_integral(r, row) / (0.5 * (r[-1] ** 2 - r[0] ** 2))


@dataclass(frozen=True)
class Uptake:
    """Per-cell fluxes, ``2 pi`` included."""

    hair: float
    root: float
    influx: float

    @property
    def imbalance(self) -> float:
        """``|influx - hair - root|`` relative to the influx."""
        scale = max(abs(self.influx), 1e-300)
        return abs(self.influx - self.hair - self.root) / scale


def _compact(solution: ReferenceSolution, k: int = -1) -> np.ndarray:
    return solution.values[k].ravel()[solution._assembly.nodes]


def total_uptake(solution: ReferenceSolution) -> Uptake:
    """Hair uptake, root uptake and boundary influx of a steady solution."""
    if not solution.steady:
        raise ModeError("total_uptake needs a steady solution; use mass_balance for transients")
    asm = solution._assembly
    u = _compact(solution)
    g = solution._uptake
    hair = float(np.sum(asm.hair_weight * g.g(u)))
    root = float(np.sum(asm.root_weight * u))
    rows = np.fromiter(asm.dirichlet.keys(), dtype=int)
    influx = float(np.sum((asm.diffusion @ u)[rows])) if rows.size else 0.0
    return Uptake(2 * math.pi * hair, 2 * math.pi * root, 2 * math.pi * influx)


def mass_balance(solution: ReferenceSolution) -> np.ndarray:
    """Per-step ``|d/dt mass + uptake - influx|`` relative to the largest term."""
    asm = solution._assembly
    g = solution._uptake
    rows = np.fromiter(asm.dirichlet.keys(), dtype=int)
    free = np.ones(asm.volume.size, dtype=bool)
    free[rows] = False
    out = []
    for k in range(1, solution.times.size):
        dt = solution.times[k] - solution.times[k - 1]
        u, up = _compact(solution, k), _compact(solution, k - 1)
        storage = asm.volume * (u - up) / dt
        sinks = asm.hair_weight * g.g(u) + asm.root_weight * u
        div = asm.diffusion @ u
        influx = float(np.sum((storage + div + sinks)[rows])) if rows.size else 0.0
        change = float(np.sum(storage[free]))
        uptake = float(np.sum(sinks[free]))
        scale = max(abs(change), abs(uptake), abs(influx), 1e-300)
        out.append(abs(change + uptake - influx) / scale)
    return np.array(out)


# ---------------------------------------------------------------------------
# solvers


def _secant_coefficient(uptake, u):
    if uptake.is_linear:
        return np.ones_like(u)
    return uptake.secant(np.maximum(u, 0.0))


def _solve_frozen(asm, uptake, u_start, build, tol, max_iter):
    """Picard on the hair term: freeze ``g(u)/u``, solve, repeat."""
    if uptake.is_linear or not np.any(asm.hair_weight):
        return solve_linear(build(asm.stiffness(1.0))), []
    u = u_start
    history = []
    for _ in range(max_iter):
        u_new = solve_linear(build(asm.stiffness(_secant_coefficient(uptake, u))))
        update = float(np.max(np.abs(u_new - u))) / max(float(np.max(np.abs(u_new))), 1e-300)
        history.append(update)
        u = u_new
        if update <= tol:
            return u, history
    raise ConvergenceError("hair-surface Picard iteration did not converge", last=u,
                           residual=history[-1], history=history)


def _expand(asm: _Assembly, u: np.ndarray) -> np.ndarray:
    full = np.full(asm.grid.shape, np.nan)
    full.ravel()[asm.nodes] = u
    return full


def solve_reference(scenario: Scenario, grid: Optional[AxiGrid] = None, *, n_r: int = DEFAULT_NR,
                    n_z: int = DEFAULT_NZ, grading: float = 1.0,
                    z_grading: float = DEFAULT_Z_GRADING, tol: float = PICARD_TOL,
                    max_iter: int = PICARD_MAX_ITER) -> ReferenceSolution:
    """Steady or backward-Euler transient solve of the resolved problem."""
    if scenario.regime != "reference":
        raise ValidationError("solve_reference needs a scenario in the reference regime")
    if grid is None:
        grid = build_axi_grid(scenario, n_r, n_z, grading, z_grading)
    eps, kappa = scenario.epsilon, scenario.kappa
    top = scenario.top_value if scenario.top_bc == "dirichlet" else None
    asm = _assemble(grid, scenario.D_u, eps ** 2 * kappa, scenario.beta, top, None)
    uptake = scenario.uptake
    dirichlet = asm.dirichlet

    if scenario.mode == "steady":
        def build(K):
            return Operator(asm.volume, K, np.zeros(asm.volume.size), dirichlet).steady_system()
        start = np.full(asm.volume.size, top if top is not None else 1.0)
        u, hist = _solve_frozen(asm, uptake, start, build, tol, max_iter)
        return ReferenceSolution(scenario, grid, np.zeros(1), _expand(asm, u)[None], True,
                                 asm, uptake, hist)

    stepper = TimeStepper(scenario.dt, scenario.T)
    zfull = np.broadcast_to(grid.z, grid.shape).ravel()[asm.nodes]
    u = scenario.initial_profile(zfull)
    for k, v in dirichlet.items():
        u[k] = v
    states = [_expand(asm, u)]
    history = []
    u_older = None
    for _ in range(stepper.n_steps):
        u_prev = u
        # linear extrapolation of the last two steps starts Picard closer to the fixed point
        guess = u_prev if u_older is None else np.maximum(2.0 * u_prev - u_older, 0.0)
        u_older = u_prev

        def build(K):
            return Operator(asm.volume, K, np.zeros(asm.volume.size), dirichlet).implicit_system(
                u_prev, stepper.dt)
        u, hist = _solve_frozen(asm, uptake, guess, build, tol, max_iter)
        history.append(len(hist))
        states.append(_expand(asm, u))
    return ReferenceSolution(scenario, grid, stepper.times(), np.array(states), False,
                             asm, uptake, history)


def solve_annulus(params: CorrectorParams, grid: Optional[AxiGrid] = None, n_r: int = 32,
                  n_z: int = 16, grading: float = 1.0) -> ReferenceSolution:
    """Annulus test mode: hair over the full height, ``u = 1`` on ``r = eps*rho``.

    The exact solution is the z-independent closed-form corrector.
    """
    from .scenario import LINEAR

    if grid is None:
        grid = build_annulus_grid(params, n_r, n_z, grading)
    asm = _assemble(grid, params.D_u, params.epsilon ** 2 * params.kappa, 0.0, None, 1.0)
    system = Operator(asm.volume, asm.stiffness(1.0), np.zeros(asm.volume.size),
                      asm.dirichlet).steady_system()
    u = solve_linear(system)
    return ReferenceSolution(None, grid, np.zeros(1), _expand(asm, u)[None], True, asm, LINEAR)

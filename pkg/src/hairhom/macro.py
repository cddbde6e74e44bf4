"""Homogenised problems in the hair zone and above it.

With laterally uniform data every macroscopic field depends on the height
``x3`` only, so all solvers work on a :class:`~hairhom.numerics.Grid1D`.
``u0`` lives on ``[0, M]``; the corrections ``u1`` and ``U2`` on the hair
zone ``[0, L]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError, InvalidModelError, ValidationError
from .numerics import (Field, Grid1D, Operator, Series, TimeStepper, diffusion_operator,
                       newton_scalar, solve_linear)
from .scenario import Scenario, Uptake, canonical_regime, get_uptake

log = logging.getLogger(__name__)

PICARD_TOL = 1e-10
PICARD_MAX_ITER = 200
PICARD_RELAXATION = 0.8
DEFAULT_NODES = 513


def sink_coefficient(regime: str, kappa: float, D_u: float, lam: float = 0.0) -> float:
    """Linear effective sink rate: ``2 pi kappa`` or ``2 pi kappa / (1 + lam kappa/D_u)``."""
    regime = canonical_regime(regime)
    if regime == "standard":
        return 2 * math.pi * kappa
    if regime == "distinguished":
        return 2 * math.pi * kappa / (1.0 + lam * kappa / D_u)
    raise ValidationError("sink_coefficient needs the standard or distinguished regime")


def _uptake_name(g) -> str:
    return get_uptake(g).name if isinstance(g, (str, Uptake)) else "custom"


def h_of_u0(u0, kappa_tilde: float, g: Union[str, Uptake] = "michaelis-menten"):
    """Hair-surface concentration ``h`` solving ``h + kappa_tilde g(h) = u0``.

    Michaelis-Menten uses the non-negative root of the quadratic
    ``h^2 + (kappa_tilde + 1 - u0) h - u0 = 0`` (in a cancellation-free
    form), linear uptake gives ``u0/(1 + kappa_tilde)``, and any other
    monotone law goes through bracketed Newton on ``[0, u0]``.
    """
    uptake = get_uptake(g)
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 < 0):
        raise ValidationError("u0 must be non-negative")
    if kappa_tilde < 0:
        raise ValidationError("kappa_tilde must be non-negative")
    if kappa_tilde == 0:
        return u0.copy() if u0.ndim else float(u0)
    if uptake.name == "linear":
        return u0 / (1.0 + kappa_tilde)
    if uptake.name == "michaelis-menten":
        b = u0 - kappa_tilde - 1.0
        root = np.sqrt(b * b + 4.0 * u0)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(b >= 0, 0.5 * (root + b), 2.0 * u0 / (root - b))
        # g >= 0 bounds h by u0; the clip only removes round-off
        return np.where(u0 == 0, 0.0, np.minimum(h, u0))

    def solve_one(v):
        f = lambda h: h + kappa_tilde * float(uptake.g(h)) - v  # noqa: E731

        def df(h):
            d = float(uptake.dg(h))
            if d < 0:
                raise InvalidModelError(f"uptake law decreasing at h={h:.6g} (g'={d:.3g})")
            return 1.0 + kappa_tilde * d

        hi = max(v, 1.0)
        while f(hi) < 0:
            hi *= 2.0
        lo = 0.0
        while f(lo) > 0:
            lo = lo - hi
        h = newton_scalar(f, df, v / (1.0 + kappa_tilde * float(uptake.dg(v))),
                          tol=1e-13, bracket=(lo, hi))
        df(h)
        return h

    out = np.vectorize(solve_one, otypes=[float])(u0)
    return out if out.ndim else float(out)


def effective_sink_mm_explicit(u0, kappa: float, kappa_tilde: float):
    """Closed-form distinguished-regime Michaelis-Menten sink, written out."""
    u0 = np.asarray(u0, dtype=float)
    X = np.sqrt((u0 - kappa_tilde - 1.0) ** 2 + 4.0 * u0) + u0 - kappa_tilde - 1.0
    return 2 * math.pi * kappa * X / (2.0 + X)


def effective_sink(u0, scenario: Scenario, regime: Optional[str] = None):
    """Volumetric sink at averaged concentration ``u0`` in the hair zone."""
    regime = canonical_regime(regime or scenario.regime)
    uptake = scenario.uptake
    u0 = np.asarray(u0, dtype=float)
    if regime == "standard":
        if uptake.is_linear:
            return sink_coefficient(regime, scenario.kappa, scenario.D_u) * u0
        return 2 * math.pi * scenario.kappa * uptake.g(u0)
    if regime == "distinguished":
        lam = scenario.lambda_for(regime)
        if uptake.is_linear:
            return sink_coefficient(regime, scenario.kappa, scenario.D_u, lam) * u0
        h = h_of_u0(u0, lam * scenario.kappa / scenario.D_u, uptake)
        return 2 * math.pi * scenario.kappa * uptake.g(h)
    raise ValidationError("effective_sink needs the standard or distinguished regime")


def sink_secant(u0, scenario: Scenario, regime: str):
    """``effective_sink(u)/u`` with its limit at ``u = 0``; the Picard coefficient."""
    regime = canonical_regime(regime)
    u0 = np.asarray(u0, dtype=float)
    if scenario.uptake.is_linear:
        lam = scenario.lambda_for(regime) if regime == "distinguished" else 0.0
        return np.full_like(u0, sink_coefficient(regime, scenario.kappa, scenario.D_u, lam))
    small = np.abs(u0) < 1e-14
    safe = np.where(small, 1.0, np.maximum(u0, 0.0))
    vals = effective_sink(safe, scenario, regime) / safe
    if np.any(small):
        g0 = float(scenario.uptake.dg(0.0))
        if regime == "distinguished":
            kt = scenario.lambda_for(regime) * scenario.kappa / scenario.D_u
            limit = 2 * math.pi * scenario.kappa * g0 / (1.0 + kt * g0)
        else:
            limit = 2 * math.pi * scenario.kappa * g0
        vals = np.where(small, limit, vals)
    return vals


def u0_closed_form(x, S: float, D_u: float, beta: float, L: float, M: float, top_value: float = 1.0):
    """Steady linear ``u0`` with sink ``S`` on ``[0, L]`` and Dirichlet top.

    ``A (cosh mx + beta/(D m) sinh mx)`` below ``L``, linear above.
    """
    x = np.asarray(x, dtype=float)
    if S == 0:
        c1 = 1.0 + beta * L / D_u
        c2 = beta / D_u
        below = 1.0 + beta * np.minimum(x, L) / D_u
    else:
        m = math.sqrt(S / D_u)
        q = beta / (D_u * m)
        c1 = math.cosh(m * L) + q * math.sinh(m * L)
        c2 = m * (math.sinh(m * L) + q * math.cosh(m * L))
        xm = np.minimum(x, L)
        below = np.cosh(m * xm) + q * np.sinh(m * xm)
    A = top_value / (c1 + c2 * (M - L))
    return np.where(x <= L, A * below, A * (c1 + c2 * (x - L)))


# ---------------------------------------------------------------------------
# u0


def _macro_regime(scenario: Scenario) -> str:
    if scenario.regime == "reference":
        raise ValidationError("macroscopic solvers need the standard or distinguished regime")
    return scenario.regime


def _grid_for(scenario: Scenario, grid: Optional[Grid1D], n_nodes: int) -> Grid1D:
    if grid is None:
        return Grid1D.build(scenario.L, scenario.M, n_nodes)
    if abs(grid.L - scenario.L) > 1e-12 or abs(grid.M - scenario.M) > 1e-12:
        raise ValidationError("grid does not match the scenario's L and M")
    return grid


def _u0_operator(scenario: Scenario, grid: Grid1D, sigma) -> Operator:
    top = scenario.top_value if scenario.top_bc == "dirichlet" else None
    return diffusion_operator(grid, scenario.D_u, sigma, sink_until=scenario.L,
                              robin_left=scenario.beta, dirichlet_right=top)


def _picard(solve, u_start, secant, tol, max_iter, label):
    """Fixed point ``u = solve(secant(u))`` with relaxation on oscillation."""
    u = u_start
    history = []
    omega = 1.0
    for it in range(max_iter):
        u_new = solve(secant(u))
        scale = max(float(np.max(np.abs(u_new))), 1e-300)
        update = float(np.max(np.abs(u_new - u))) / scale
        history.append(update)
        if update <= tol:
            return u_new, history
        if len(history) > 1 and update > history[-2]:
            omega = PICARD_RELAXATION
        u = omega * u_new + (1 - omega) * u
    raise ConvergenceError(f"{label}: Picard iteration did not converge", last=u,
                           residual=history[-1], history=history)


def solve_u0(scenario: Scenario, grid: Optional[Grid1D] = None, n_nodes: int = DEFAULT_NODES,
             tol: float = PICARD_TOL, max_iter: int = PICARD_MAX_ITER):
    """Leading-order concentration on ``[0, M]``.

    Returns a :class:`Field` in steady mode and a :class:`Series` of every
    backward-Euler step in transient mode.
    """
    regime = _macro_regime(scenario)
    grid = _grid_for(scenario, grid, n_nodes)
    linear = scenario.uptake.is_linear
    secant = lambda u: sink_secant(u, scenario, regime)  # noqa: E731

    if scenario.mode == "steady":
        if linear:
            u = solve_linear(_u0_operator(scenario, grid, secant(np.zeros(1))[0]).steady_system())
        else:
            start = np.full(grid.nodes.size, scenario.top_value if scenario.top_bc == "dirichlet" else 1.0)
            u, _ = _picard(lambda s: solve_linear(_u0_operator(scenario, grid, s).steady_system()),
                           start, secant, tol, max_iter, "u0")
        return Field(u, grid, 0.0)

    stepper = TimeStepper(scenario.dt, scenario.T)
    u = scenario.initial_profile(grid.nodes)
    if scenario.top_bc == "dirichlet":
        u[-1] = scenario.top_value
    out = [u]
    op = _u0_operator(scenario, grid, secant(np.zeros(1))[0]) if linear else None
    for _ in range(stepper.n_steps):
        u_prev = u
        if linear:
            u = solve_linear(op.implicit_system(u_prev, stepper.dt))
        else:
            u, _ = _picard(
                lambda s: solve_linear(_u0_operator(scenario, grid, s).implicit_system(u_prev, stepper.dt)),
                u_prev, secant, tol, max_iter, "u0 step")
        out.append(u)
    return Series(stepper.times(), np.array(out), grid)


# ---------------------------------------------------------------------------
# corrections


def _require_linear(scenario: Scenario, what: str):
    if not scenario.uptake.is_linear:
        raise ConfigurationError(f"{what} is only derived for linear hair uptake")


def _reduction_factor(scenario: Scenario, regime: str) -> float:
    """1 in the standard regime, ``1/(1 + lam kappa/D_u)`` in the distinguished one."""
    if regime == "distinguished":
        return 1.0 / (1.0 + scenario.lambda_for(regime) * scenario.kappa / scenario.D_u)
    return 1.0


def _restrict(u0, hz: Grid1D):
    n = hz.nodes.size
    if isinstance(u0, Series):
        return u0.values[:, :n]
    return u0.values[:n]


def solve_u1(scenario: Scenario, u0):
    """First-order correction on the hair zone; identically zero in regime B."""
    regime = _macro_regime(scenario)
    grid = u0.grid
    hz = grid.hair_zone()
    u0_hz = _restrict(u0, hz)
    if regime == "distinguished" or scenario.kappa == 0:
        return _like(u0, hz, np.zeros_like(u0_hz))
    _require_linear(scenario, "the first-order correction")
    k, D = scenario.kappa, scenario.D_u
    lam = scenario.lambda_for(regime)
    sigma = 2 * math.pi * k
    gain = 2 * math.pi * k * lam * (k / D)

    def operator(u0_vals):
        return diffusion_operator(hz, D, sigma, source=gain * u0_vals, robin_left=scenario.beta)

    if isinstance(u0, Field):
        return Field(solve_linear(operator(u0_hz).steady_system()), hz, u0.t)
    dt = np.diff(u0.times)
    out = [np.zeros(hz.nodes.size)]
    for n in range(dt.size):
        out.append(solve_linear(operator(u0_hz[n + 1]).implicit_system(out[-1], dt[n])))
    return Series(u0.times, np.array(out), hz)


def _like(u0, hz, values):
    if isinstance(u0, Series):
        return Series(u0.times, values, hz)
    return Field(values, hz, u0.t)


def interface_gradient(u0_values, grid: Grid1D, D_u: float, du_dt_at_L: float = 0.0) -> float:
    """``du0/dx3`` at ``L`` from the discrete flux of the hair-free half cell."""
    i = grid.interface_index
    h = grid.nodes[i + 1] - grid.nodes[i]
    return (u0_values[i + 1] - u0_values[i]) / h - 0.5 * h * du_dt_at_L / D_u


def solve_U2(scenario: Scenario, u0, u1, psi_mean: Optional[float]):
    """Averaged second-order field ``U2`` on the hair zone.

    Both regimes share one assembly: the distinguished problem is the
    standard one with every hair coefficient scaled by the reduction factor
    and without the first-order coupling, so at ``lam = 0`` the two agree
    bit for bit.
    """
    if psi_mean is None:
        raise ConfigurationError("U2 needs the cell mean of psi")
    regime = _macro_regime(scenario)
    grid = u0.grid
    hz = grid.hair_zone()
    u0_hz = _restrict(u0, hz)
    if scenario.kappa == 0:
        return _like(u0, hz, np.zeros_like(u0_hz))
    _require_linear(scenario, "the second-order correction")
    k, D, beta = scenario.kappa, scenario.D_u, scenario.beta
    q = _reduction_factor(scenario, regime)
    sigma = 2 * math.pi * k * q
    production = 4 * math.pi ** 2 * (k * k / D) * (q * q) * psi_mean
    flux_gain = -2 * math.pi * k * q * psi_mean
    lam = scenario.lambda_for(regime) if regime == "standard" else 0.0
    u1_vals = u1.values

    def source(n=None):
        a = u0_hz if n is None else u0_hz[n]
        s = production * a
        if regime == "standard":
            b = u1_vals if n is None else u1_vals[n]
            s = s + 2 * math.pi * k * lam * (k / D) * (b - lam * (k / D) * a)
        return s

    def operator(src, grad):
        return diffusion_operator(hz, D, sigma, source=src, robin_left=beta,
                                  inflow_right=D * flux_gain * grad)

    if isinstance(u0, Field):
        grad = interface_gradient(u0.values, grid, D)
        return Field(solve_linear(operator(source(), grad).steady_system()), hz, u0.t)

    times = u0.times
    initial = -2 * math.pi * (k / D) * q * psi_mean * scenario.initial_profile(hz.nodes)
    out = [initial]
    for n in range(times.size - 1):
        dt = times[n + 1] - times[n]
        dudt = (u0.values[n + 1, grid.interface_index] - u0.values[n, grid.interface_index]) / dt
        grad = interface_gradient(u0.values[n + 1], grid, D, dudt)
        out.append(solve_linear(operator(source(n + 1), grad).implicit_system(out[-1], dt)))
    return Series(times, np.array(out), hz)


# ---------------------------------------------------------------------------
# assembled solution and reconstruction


@dataclass
class MacroSolution:
    regime: str
    scenario: Scenario
    u0: Union[Field, Series]
    u1: Optional[Union[Field, Series]] = None
    U2: Optional[Union[Field, Series]] = None
    psi_mean: Optional[float] = None

    @property
    def grid(self) -> Grid1D:
        return self.u0.grid

    @property
    def psi_coefficient(self) -> float:
        """Factor ``c`` in ``u2 = U2 + c u0 psi``."""
        s = self.scenario
        return 2 * math.pi * (s.kappa / s.D_u) * _reduction_factor(s, self.regime)

    def fields_at(self, k: int = -1):
        """``(u0, u1, U2)`` nodal arrays at time index ``k`` (steady: the only state)."""
        def pick(f):
            if f is None:
                return None
            return f.values[k] if isinstance(f, Series) else f.values
        return pick(self.u0), pick(self.u1), pick(self.U2)

    def cell_mean(self, z, k: int = -1, order: int = 0):
        """Cell average of the expansion at heights ``z``."""
        z = np.asarray(z, dtype=float)
        u0, u1, U2 = self.fields_at(k)
        base = np.interp(z, self.grid.nodes, u0)
        if order == 0:
            return base
        if U2 is None or u1 is None:
            raise ConfigurationError("second-order quantities were not computed")
        hz = self.grid.hair_zone().nodes
        eps = self.scenario.epsilon
        zc = np.minimum(z, self.scenario.L)
        corr = eps * np.interp(zc, hz, u1) + eps ** 2 * (
            np.interp(zc, hz, U2) + self.psi_coefficient * np.interp(zc, hz, u0[: hz.size]) * self.psi_mean)
        return np.where(z <= self.scenario.L, base + corr, base)


def solve_macro(scenario: Scenario, grid: Optional[Grid1D] = None, n_nodes: int = DEFAULT_NODES,
                psi_mean: Optional[float] = None, order: int = 0) -> MacroSolution:
    u0 = solve_u0(scenario, grid, n_nodes)
    sol = MacroSolution(scenario.regime, scenario, u0, psi_mean=psi_mean)
    if order >= 1:
        sol.u1 = solve_u1(scenario, u0)
    if order >= 2:
        sol.U2 = solve_U2(scenario, u0, sol.u1, psi_mean)
    return sol


def reconstruct_second_order(scenario: Scenario, macro: MacroSolution, psi, x, k: int = -1):
    """Two-scale value ``u0 + eps u1 + eps^2 (U2 + c u0 psi(x_hat/eps))``.

    ``x`` has shape ``(..., 3)``.  Above the hair zone the leading-order
    value is returned.  Points inside a hair raise :class:`DomainError`.
    """
    from .cell import psi_eval

    x = np.asarray(x, dtype=float)
    eps = scenario.epsilon
    z = x[..., 2]
    y = x[..., :2] / eps
    y = y - np.round(y)
    inside = (np.hypot(y[..., 0], y[..., 1]) < scenario.hair_ratio) & (z < scenario.L)
    if np.any(inside):
        raise DomainError("evaluation point lies inside a root hair")
    u0, u1, U2 = macro.fields_at(k)
    grid = macro.grid
    base = np.interp(z, grid.nodes, u0)
    in_zone = z <= scenario.L
    if not np.any(in_zone):
        return base
    if u1 is None or U2 is None:
        raise ConfigurationError("second-order quantities were not computed")
    hz = grid.hair_zone().nodes
    zc = np.minimum(z, scenario.L)
    u0z = np.interp(zc, hz, u0[: hz.size])
    yz = np.where(in_zone[..., None], y, 0.25)
    psi_vals = psi_eval(psi, yz)
    corr = eps * np.interp(zc, hz, u1) + eps ** 2 * (
        np.interp(zc, hz, U2) + macro.psi_coefficient * u0z * psi_vals)
    return np.where(in_zone, base + corr, base)

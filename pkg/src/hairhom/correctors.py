"""Closed-form annulus correctors used as analytic oracles.

On the annulus ``r_eps < r < eps*rho`` the corrector solves
``Laplace(w) = 0`` with ``D_u dw/dr = (eps^2 kappa / r_eps) w`` on the hair
and ``w = 1`` on the outer circle.  It is ``A ln r + B`` with

    A = kappa eps^2 / (D_u + kappa (s + eps^2 ln rho))
    B = (D_u + kappa (s - eps^2 ln eps)) / (D_u + kappa (s + eps^2 ln rho))

where ``s = lambda`` in the distinguished regime and ``s = eps*lambda`` in
the standard one; in both cases ``s = eps^2 ln(1/a_eps)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ValidationError
from .scenario import canonical_regime, lambda_from_a

DEFAULT_RHO = 0.25


@dataclass(frozen=True)
class CorrectorParams:
    epsilon: float
    a_eps: Optional[float]
    kappa: float
    D_u: float
    regime: str = "distinguished"
    rho: float = DEFAULT_RHO
    lam: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "regime", canonical_regime(self.regime))
        problems = []
        if self.regime == "reference":
            problems.append("corrector regime must be standard or distinguished")
        if not 0 < self.rho < 0.5:
            problems.append("rho must lie in (0, 1/2)")
        if not (self.epsilon > 0 and self.kappa > 0 and self.D_u > 0):
            problems.append("epsilon, kappa and D_u must be positive")
        if (self.a_eps is None) == (self.lam is None):
            problems.append("give exactly one of a_eps and lambda")
        if problems:
            raise ValidationError(problems)
        if self.a_eps is not None:
            if not 0 < self.r_eps < self.epsilon * self.rho:
                problems.append("need 0 < r_eps < eps*rho")
            if not self.scale + self.epsilon ** 2 * math.log(self.rho) > 0:
                problems.append("admissibility eps^2 ln(1/a_eps) + eps^2 ln(rho) > 0 violated")
        elif not self._denominator() > 0:
            # parameters given through lambda only: the flux formulas need a
            # positive denominator, the annulus itself may be empty
            problems.append("D_u + kappa (s + eps^2 ln rho) must be positive")
        if problems:
            raise ValidationError(problems)

    @property
    def has_annulus(self) -> bool:
        return 0 < self.r_eps < self.outer_radius

    @property
    def lambda_value(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        return lambda_from_a(self.regime, self.epsilon, self.a_eps)

    @property
    def scale(self) -> float:
        """``eps^2 ln(1/a_eps)`` written through the regime's lambda."""
        lam = self.lambda_value
        return lam if self.regime == "distinguished" else self.epsilon * lam

    @property
    def r_eps(self) -> float:
        if self.a_eps is not None:
            return self.epsilon * self.a_eps
        return self.epsilon * math.exp(-self.scale / self.epsilon ** 2)

    @property
    def outer_radius(self) -> float:
        return self.epsilon * self.rho

    def _denominator(self) -> float:
        return self.D_u + self.kappa * (self.scale + self.epsilon ** 2 * math.log(self.rho))

    @property
    def coefficients(self):
        """``(A, B)`` in ``w = A ln r + B``."""
        den = self._denominator()
        A = self.kappa * self.epsilon ** 2 / den
        B = (self.D_u + self.kappa * (self.scale - self.epsilon ** 2 * math.log(self.epsilon))) / den
        return A, B


def _check_radii(params: CorrectorParams, r, closed=True):
    r = np.asarray(r, dtype=float)
    lo, hi = params.r_eps, params.outer_radius
    if not params.has_annulus:
        raise DomainError("the hair fills the corrector annulus for these parameters")
    tol = 1e-12 * hi
    bad = (r < lo - tol) | (r > hi + tol) if closed else (r <= lo) | (r >= hi)
    if np.any(bad):
        raise DomainError(f"radius outside the annulus [{lo:.3e}, {hi:.3e}]")
    return r


def w_closed_form(params: CorrectorParams, r):
    r = _check_radii(params, r)
    A, B = params.coefficients
    if r.ndim == 0 and r == params.outer_radius:
        return 1.0
    return A * np.log(r) + B


def w_derivative(params: CorrectorParams, r):
    r = _check_radii(params, r)
    A, _ = params.coefficients
    return A / r


def w_boundary_flux(params: CorrectorParams) -> float:
    """``D_u dw/dr`` on the outer circle; constant by radial symmetry."""
    return params.epsilon * (params.kappa / params.rho) / (
        1.0 + (params.kappa / params.D_u) * (params.scale + params.epsilon ** 2 * math.log(params.rho)))


def per_cell_uptake(params: CorrectorParams) -> float:
    """Hair uptake per unit height, ``2 pi r_eps (eps^2 kappa/r_eps) w(r_eps)``.

    Uses ``w(r_eps) = D_u / (D_u + kappa (s + eps^2 ln rho))``, which stays
    meaningful for parameters given through lambda alone.
    """
    return 2 * np.pi * params.epsilon ** 2 * params.kappa * params.D_u / params._denominator()


def corrector_residual(params: CorrectorParams, sample_radii=None) -> dict:
    """Relative residuals of the closed form on its annulus problem.

    ``interior`` is ``|w'' + w'/r|`` relative to ``|w''| + |w'/r|`` with both
    derivatives taken analytically; ``robin`` compares the two sides of the
    hair condition; ``dirichlet`` is ``|w(eps*rho) - 1|``.
    """
    A, B = params.coefficients
    if sample_radii is None:
        sample_radii = np.geomspace(params.r_eps, params.outer_radius, 34)[1:-1]
    r = _check_radii(params, sample_radii, closed=False)
    d1 = A / r
    d2 = -A / r ** 2
    interior = np.abs(d2 + d1 / r) / (np.abs(d2) + np.abs(d1 / r))
    re = params.r_eps
    lhs = params.D_u * A / re
    rhs = params.epsilon ** 2 * params.kappa / re * (A * math.log(re) + B)
    robin = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
    dirichlet = abs(float(w_closed_form(params, params.outer_radius)) - 1.0)
    return {"interior": float(interior.max()) if r.size else 0.0,
            "robin": robin, "dirichlet": dirichlet}

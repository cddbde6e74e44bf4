"""Periodic cell function: ``Laplace(psi) = delta - 1`` on the unit torus.

``psi`` is the zero-mean lattice Green's function plus a constant, chosen
so that ``2*pi*psi(y) - ln|y| -> 0`` at the origin.  The constant is the
cell mean of ``psi`` and is what the second-order macroscopic problems need.

Lattice sums are evaluated with an Ewald split at parameter ``alpha``::

    sum_{k != 0} exp(2 pi i k.y) / (4 pi^2 |k|^2)
        = sum_{k != 0} exp(-pi^2 |k|^2 / alpha^2) cos(2 pi k.y) / (4 pi^2 |k|^2)
          + (1/4pi) sum_n E1(alpha^2 |y + n|^2) - 1/(4 alpha^2)

Both sums converge like Gaussians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .errors import DomainError, ValidationError

EULER_GAMMA = 0.5772156649015329
_TAIL = 50.0  # arguments beyond this contribute below 1e-23


def _ein(x):
    """Entire exponential integral ``Ein(x) = gamma + ln x + E1(x)``, stable at 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 1.0
    xs = x[small]
    term = xs.copy()
    acc = xs.copy()
    for k in range(2, 30):
        term = -term * xs / k
        acc += term / k
    out[small] = acc
    xl = x[~small]
    out[~small] = EULER_GAMMA + np.log(xl) + exp1(xl)
    return out


def _reduce(y):
    """Map points to the cell centred on the nearest lattice point."""
    y = np.asarray(y, dtype=float)
    return y - np.round(y)


@dataclass(frozen=True)
class CellPsi:
    modes: int
    ewald_split: float
    mean: float
    error_estimate: float

    @property
    def coeffs(self) -> np.ndarray:
        """Fourier coefficients on ``[-N, N]^2``; index ``[N, N]`` is ``k = 0``."""
        k = np.arange(-self.modes, self.modes + 1)
        k2 = (k[:, None] ** 2 + k[None, :] ** 2).astype(float)
        with np.errstate(divide="ignore"):
            c = -1.0 / (4.0 * np.pi ** 2 * k2)
        c[self.modes, self.modes] = self.mean
        return c

    # internal lattice sums --------------------------------------------
    def _k_cut(self) -> int:
        return min(self.modes, int(math.ceil(self.ewald_split * math.sqrt(_TAIL) / math.pi)) + 1)

    def _n_cut(self) -> int:
        return int(math.ceil(math.sqrt(_TAIL) / self.ewald_split)) + 1

    def _fourier(self, y):
        kc = self._k_cut()
        k = np.arange(-kc, kc + 1)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        kx, ky = kx.ravel(), ky.ravel()
        k2 = (kx ** 2 + ky ** 2).astype(float)
        keep = k2 > 0
        kx, ky, k2 = kx[keep], ky[keep], k2[keep]
        w = np.exp(-np.pi ** 2 * k2 / self.ewald_split ** 2) / (4 * np.pi ** 2 * k2)
        phase = 2 * np.pi * (y[..., 0, None] * kx + y[..., 1, None] * ky)
        return np.cos(phase) @ w

    def _images(self, y, skip_origin):
        nc = self._n_cut()
        n = np.arange(-nc, nc + 1)
        nx, ny = np.meshgrid(n, n, indexing="ij")
        nx, ny = nx.ravel(), ny.ravel()
        if skip_origin:
            keep = (nx != 0) | (ny != 0)
            nx, ny = nx[keep], ny[keep]
        d2 = (y[..., 0, None] + nx) ** 2 + (y[..., 1, None] + ny) ** 2
        return exp1(self.ewald_split ** 2 * d2).sum(axis=-1) / (4 * np.pi)

    def _smooth_part(self, y):
        """Green's function minus ``ln|y|/2pi``, without the cell mean."""
        a2 = self.ewald_split ** 2
        r2 = y[..., 0] ** 2 + y[..., 1] ** 2
        near = (_ein(a2 * r2) - EULER_GAMMA - math.log(a2)) / (4 * np.pi)
        return -(self._fourier(y) + self._images(y, True) + near - 1.0 / (4 * a2))


def build_cell_psi(modes: int = 64, ewald_split: float = 2.0) -> CellPsi:
    """Assemble the cell function and fix its mean by the log-matching rule."""
    if modes < 8:
        raise ValidationError("modes must be at least 8")
    if not ewald_split > 0:
        raise ValidationError("ewald_split must be positive")
    probe = CellPsi(int(modes), float(ewald_split), 0.0, 0.0)
    regular_at_origin = float(probe._smooth_part(np.zeros((1, 2)))[0])
    a2 = ewald_split ** 2
    # first neglected Fourier shell and real-space shell, doubled
    k = probe._k_cut() + 1
    n = probe._n_cut() + 1
    tail = (8 * k * math.exp(-np.pi ** 2 * k ** 2 / a2) / (4 * np.pi ** 2 * k ** 2)
            + 8 * n * float(exp1(a2 * n ** 2)) / (4 * np.pi))
    return CellPsi(int(modes), float(ewald_split), -regular_at_origin, 2.0 * tail)


def psi_eval(cell: CellPsi, y) -> np.ndarray:
    """``psi`` at points ``y`` (shape ``(..., 2)``), periodic in both directions."""
    y = _reduce(y)
    r = np.hypot(y[..., 0], y[..., 1])
    if np.any(r == 0):
        raise DomainError("psi is singular at lattice points")
    return cell.mean + cell._smooth_part(y) + np.log(r) / (2 * np.pi)


def psi_regular(cell: CellPsi, y) -> np.ndarray:
    """``psi(y) - ln|y|/2pi`` evaluated without cancellation; finite at 0."""
    y = _reduce(y)
    return cell.mean + cell._smooth_part(y)


def matching_residual(cell: CellPsi, radius: float, n_angles: int = 64, phase: float = 0.0) -> float:
    """Average of ``2*pi*psi - ln|y|`` over the circle ``|y| = radius``."""
    if not 0 < radius < 0.5:
        raise ValidationError("radius must lie in (0, 1/2)")
    theta = phase + 2 * np.pi * np.arange(n_angles) / n_angles
    y = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return float(np.mean(2 * np.pi * psi_regular(cell, y)))


def ring_average(cell: CellPsi, radius, n_angles: int = 32) -> np.ndarray:
    """Angular average of ``psi`` over circles of the given radii."""
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    theta = (np.arange(n_angles) + 0.5) * 2 * np.pi / n_angles
    y = radius[:, None, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)[None]
    return psi_eval(cell, y).mean(axis=1)


def psi_mean_finite_difference(sizes=(256, 512, 1024), sigma: float = 0.05):
    """Independent estimate of the cell mean of ``psi``.

    The delta is replaced by a normalised Gaussian of fixed width ``sigma``,
    the five-point periodic Poisson problem is solved exactly by FFT
    diagonalisation, and the value at the origin is corrected analytically:
    for the smoothed Green's function, ``G_sigma(0) = (ln sigma + ln2/2 -
    gamma/2)/2pi + R0 - sigma^2/2`` with ``R0`` the regular value sought.
    Richardson extrapolation over the three ``h^2, h^4`` levels removes the
    discretisation error.  Returns ``(extrapolated, [(N, estimate), ...])``.
    """
    estimates = []
    for n in sizes:
        h = 1.0 / n
        idx = np.arange(n)
        d = np.minimum(idx, n - idx) * h
        r2 = d[:, None] ** 2 + d[None, :] ** 2
        bump = np.exp(-r2 / (2 * sigma ** 2))
        bump /= bump.sum() * h * h
        rhs_hat = np.fft.fft2(bump - 1.0)
        s = np.sin(np.pi * idx / n) ** 2
        symbol = -4.0 / h ** 2 * (s[:, None] + s[None, :])
        symbol[0, 0] = 1.0
        sol_hat = rhs_hat / symbol
        sol_hat[0, 0] = 0.0
        g0 = float(np.real(np.fft.ifft2(sol_hat))[0, 0])
        r0 = g0 - (math.log(sigma) + 0.5 * math.log(2) - 0.5 * EULER_GAMMA) / (2 * np.pi) + 0.5 * sigma ** 2
        estimates.append((n, -r0))
    hs = np.array([1.0 / n for n, _ in estimates])
    vals = np.array([v for _, v in estimates])
    if len(estimates) >= 3:
        A = np.stack([np.ones(3), hs[-3:] ** 2, hs[-3:] ** 4], axis=1)
        extrapolated = float(np.linalg.solve(A, vals[-3:])[0])
    elif len(estimates) == 2:
        extrapolated = float((4 * vals[1] - vals[0]) / 3)
    else:
        extrapolated = float(vals[0])
    return extrapolated, estimates

"""Estimator-style wrappers: configure in ``__init__``, solve in ``fit``, evaluate in ``predict``.

``fit`` takes no training data; it solves the model for the parameters held
by the estimator.  ``X`` is accepted and ignored so the objects compose with
scikit-learn utilities such as ``clone`` and ``get_params``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import macro, reference
from .cell import build_cell_psi
from .errors import ValidationError
from .scenario import Scenario


class _ScenarioParams(BaseEstimator):
    def __init__(self, regime="distinguished", epsilon=0.5, a_eps=0.01, lam=None, L=0.5, M=1.0,
                 beta=0.0, D_u=1.0, kappa=1.0, uptake="linear", top_bc="dirichlet", top_value=1.0):
        self.regime = regime
        self.epsilon = epsilon
        self.a_eps = a_eps
        self.lam = lam
        self.L = L
        self.M = M
        self.beta = beta
        self.D_u = D_u
        self.kappa = kappa
        self.uptake = uptake
        self.top_bc = top_bc
        self.top_value = top_value

    def _scenario(self, regime=None) -> Scenario:
        a_eps = None if self.lam is not None else self.a_eps
        return Scenario(regime or self.regime, epsilon=self.epsilon, a_eps=a_eps, lam=self.lam,
                        L=self.L, M=self.M, beta=self.beta, D_u=self.D_u, kappa=self.kappa,
                        uptake=self.uptake, top_bc=self.top_bc, top_value=self.top_value)


class MacroscopicModel(_ScenarioParams):
    """Steady homogenised model in the standard or distinguished regime.

    ``predict`` accepts heights of shape ``(n, 1)`` and returns the cell
    mean of the expansion to ``order``, or points ``(n, 3)`` and returns the
    pointwise two-scale reconstruction (``order=2`` only).
    """

    def __init__(self, regime="distinguished", epsilon=0.5, a_eps=0.01, lam=None, L=0.5, M=1.0,
                 beta=0.0, D_u=1.0, kappa=1.0, uptake="linear", top_bc="dirichlet", top_value=1.0,
                 order=0, n_nodes=macro.DEFAULT_NODES, psi_modes=64):
        super().__init__(regime, epsilon, a_eps, lam, L, M, beta, D_u, kappa, uptake, top_bc, top_value)
        self.order = order
        self.n_nodes = n_nodes
        self.psi_modes = psi_modes

    def fit(self, X=None, y=None):
        scenario = self._scenario()
        if scenario.regime == "reference":
            raise ValidationError("use ReferenceModel for the resolved problem")
        if self.order not in (0, 2):
            raise ValidationError("order must be 0 or 2")
        self.psi_ = build_cell_psi(self.psi_modes)
        self.solution_ = macro.solve_macro(scenario, n_nodes=self.n_nodes, psi_mean=self.psi_.mean,
                                           order=self.order)
        self.sink_ = float(macro.sink_coefficient(scenario.regime, scenario.kappa, scenario.D_u,
                                                  scenario.lambda_value))
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X, ensure_min_features=1)
        if X.shape[1] == 1:
            return self.solution_.cell_mean(X[:, 0], order=self.order)
        if X.shape[1] == 3:
            if self.order != 2:
                raise ValidationError("pointwise reconstruction needs order=2")
            return macro.reconstruct_second_order(self.solution_.scenario, self.solution_, self.psi_, X)
        raise ValidationError("X must have one column (height) or three (x1, x2, x3)")


class ReferenceModel(_ScenarioParams):
    """Resolved-hair steady solve; ``predict`` evaluates ``u`` at ``(r, z)`` pairs."""

    def __init__(self, epsilon=0.5, a_eps=0.01, L=0.5, M=1.0, beta=0.0, D_u=1.0, kappa=1.0,
                 uptake="linear", top_bc="dirichlet", top_value=1.0, n_r=reference.DEFAULT_NR,
                 n_z=reference.DEFAULT_NZ, grading=1.0, z_grading=reference.DEFAULT_Z_GRADING):
        super().__init__("reference", epsilon, a_eps, None, L, M, beta, D_u, kappa, uptake, top_bc, top_value)
        self.n_r = n_r
        self.n_z = n_z
        self.grading = grading
        self.z_grading = z_grading

    def fit(self, X=None, y=None):
        self.solution_ = reference.solve_reference(self._scenario(), n_r=self.n_r, n_z=self.n_z,
                                                   grading=self.grading, z_grading=self.z_grading)
        return self

    def cell_average(self, z):
        check_is_fitted(self, "solution_")
        return np.array([reference.cell_average_profile(self.solution_, float(v)) for v in np.atleast_1d(z)])

    def predict(self, X):
        """Bilinear interpolation of the nodal field; NaN inside the hair."""
        check_is_fitted(self, "solution_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValidationError("X must have two columns (r, z)")
        g = self.solution_.grid
        u = self.solution_.final
        r = np.clip(X[:, 0], g.r[0], g.r[-1])
        z = np.clip(X[:, 1], g.z[0], g.z[-1])
        i = np.clip(np.searchsorted(g.r, r, side="right") - 1, 0, g.r.size - 2)
        j = np.clip(np.searchsorted(g.z, z, side="right") - 1, 0, g.z.size - 2)
        s = (r - g.r[i]) / (g.r[i + 1] - g.r[i])
        t = (z - g.z[j]) / (g.z[j + 1] - g.z[j])
        out = ((1 - s) * (1 - t) * u[i, j] + s * (1 - t) * u[i + 1, j]
               + (1 - s) * t * u[i, j + 1] + s * t * u[i + 1, j + 1])
        inside = (X[:, 0] < g.r_eps) & (X[:, 1] < g.L)
        out[inside] = np.nan
        return out

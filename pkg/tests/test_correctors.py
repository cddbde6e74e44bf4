import math

import numpy as np
import pytest

from hairhom.correctors import (CorrectorParams, corrector_residual, per_cell_uptake, w_boundary_flux,
                                w_closed_form, w_derivative)
from hairhom.errors import DomainError, ValidationError
from hairhom.macro import sink_coefficient

from conftest import SINK_B_A001


@pytest.fixture
def params():
    return CorrectorParams(0.5, 0.01, 1.0, 1.0)


def test_outer_value_exactly_one(params):
    assert w_closed_form(params, params.outer_radius) == 1.0


def test_inner_value(params):
    lam = params.lambda_value
    expected = 1.0 / (1.0 + (lam + 0.25 * math.log(0.25)))
    assert float(w_closed_form(params, params.r_eps)) == pytest.approx(expected, rel=1e-13)


def test_residuals_round_off(params):
    res = corrector_residual(params)
    assert res["interior"] <= 1e-13 and res["robin"] <= 1e-13 and res["dirichlet"] == 0.0


def test_domain_errors(params):
    with pytest.raises(DomainError):
        w_closed_form(params, params.outer_radius * 1.1)
    with pytest.raises(DomainError):
        w_closed_form(params, params.r_eps / 2)


def test_invalid_params():
    with pytest.raises(ValidationError):
        CorrectorParams(0.5, 0.5, 1.0, 1.0)          # hair wider than eps*rho
    with pytest.raises(ValidationError):
        CorrectorParams(0.5, 0.01, 1.0, 1.0, rho=0.7)
    with pytest.raises(ValidationError):
        CorrectorParams(0.5, 0.01, 1.0, 1.0, lam=1.0)


def test_flux_constant_and_matches_derivative(params):
    r = params.outer_radius
    assert params.D_u * float(w_derivative(params, r)) == pytest.approx(w_boundary_flux(params), rel=1e-13)


def test_flux_limit_is_effective_sink():
    # per unit cell area, the outer-circle flux approaches the regime sink as eps -> 0
    vals = []
    for eps in (0.5, 0.25, 0.125, 0.0625):
        p = CorrectorParams(eps, None, 1.0, 1.0, lam=1.151292546497023)
        vals.append(w_boundary_flux(p) * 2 * math.pi * eps * p.rho / eps ** 2)
    gaps = np.abs(np.array(vals) - SINK_B_A001)
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 0.03


def test_per_cell_uptake_limit_regime_A():
    vals = [per_cell_uptake(CorrectorParams(e, None, 1.0, 1.0, "standard", lam=0.5)) / e ** 2
            for e in (0.1, 0.01, 0.001)]
    S = sink_coefficient("standard", 1.0, 1.0)
    gaps = np.abs(np.array(vals) - S)
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 1e-2


def test_lambda_zero_is_formal_only():
    p = CorrectorParams(0.5, None, 1.0, 1.0, lam=0.0)
    assert not p.has_annulus
    with pytest.raises(DomainError):
        w_closed_form(p, 0.1)
    assert per_cell_uptake(p) > 0

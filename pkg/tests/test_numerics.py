import numpy as np
import pytest
import scipy.sparse as sp

from hairhom.errors import SolverError, ValidationError
from hairhom.numerics import (Field, Grid1D, LinearSystem, TimeStepper, diffusion_operator,
                              newton_scalar, observed_orders, solve_linear, step_backward_euler)


def test_grid_has_node_at_interface():
    g = Grid1D.build(0.5, 1.0, 11)
    assert g.L == 0.5 and g.M == 1.0
    assert g.hair_zone().nodes[-1] == 0.5
    assert g.volumes().sum() == pytest.approx(1.0)


def test_grid_rejects_bad_nodes():
    with pytest.raises(ValidationError):
        Grid1D(np.array([0.0, 0.5, 0.4]), 1)


@pytest.mark.parametrize("n", [50, 2000])
def test_solve_linear_banded_and_sparse(n):
    rng = np.random.default_rng(0)
    main = 4 + rng.random(n)
    A = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1], format="csr")
    if n > 100:
        A = (A + sp.eye(n, k=40) * -0.1 + sp.eye(n, k=-40) * -0.1).tocsr()
    x = rng.random(n)
    system = LinearSystem(A, A @ x)
    np.testing.assert_allclose(solve_linear(system), x, rtol=1e-10)


def test_solve_linear_singular_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve_linear(LinearSystem(A, np.array([1.0, 2.0])))


def test_zero_rhs_gives_zero():
    A = sp.eye(3, format="csr")
    assert np.all(solve_linear(LinearSystem(A, np.zeros(3))) == 0)


def test_diffusion_operator_quadratic_exact():
    # u = 1 - x^2/2 solves u'' = -1 on [0,1], u'(0)=0, u(1)=1/2; FV is exact for quadratics
    g = Grid1D.build(0.5, 1.0, 21)
    op = diffusion_operator(g, 1.0, 0.0, source=1.0, dirichlet_right=0.5)
    u = solve_linear(op.steady_system())
    np.testing.assert_allclose(u, 1 - g.nodes ** 2 / 2, atol=1e-12)


def test_backward_euler_step_decays():
    g = Grid1D.build(0.5, 1.0, 11)
    op = diffusion_operator(g, 1.0, 1.0, dirichlet_right=0.0)
    f = step_backward_euler(Field(np.ones(11), g), op, 0.1)
    assert f.t == pytest.approx(0.1)
    assert np.all(f.values <= 1.0) and f.values[-1] == 0.0


def test_time_stepper():
    ts = TimeStepper(0.01, 1.0)
    assert ts.n_steps == 100 and ts.times()[-1] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        TimeStepper(0.0, 1.0)


def test_newton_scalar_bracketed():
    root = newton_scalar(lambda x: x ** 3 - 2, lambda x: 3 * x ** 2, 10.0, bracket=(0, 10))
    assert root == pytest.approx(2 ** (1 / 3), rel=1e-12)


def test_observed_orders():
    h = np.array([0.1, 0.05, 0.025])
    np.testing.assert_allclose(observed_orders(h, 3 * h ** 2), [2, 2])

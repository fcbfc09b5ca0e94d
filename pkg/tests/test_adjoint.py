import numpy as np
import pytest

from conftest import make_data
from fbpcontrol.adjoint import adjoint_rhs, solve_adjoint
from fbpcontrol.state import jacobian, solve_newton


def test_zero_rhs_zero_adjoint(rng):
    data = make_data(2)
    disc = data.disc
    st, _, lu = solve_newton(disc, 0.3 * rng.standard_normal(disc.n + 1))
    adj = solve_adjoint(disc, st, np.zeros(disc.size), lu)
    assert np.abs(adj.S).max() == 0 and np.abs(adj.R).max() == 0


def test_tracking_rhs_vanishes_on_target():
    data = make_data(2)
    disc = data.disc
    st, _, _ = solve_newton(disc, np.zeros(disc.n + 1))
    np.testing.assert_array_equal(adjoint_rhs(disc, st, st.G), 0.0)


@pytest.mark.parametrize("mu", [0.0, 0.7])
def test_transpose_duality(rng, mu):
    data = make_data(3)
    disc = data.disc
    st, _, lu = solve_newton(disc, 0.5 * rng.standard_normal(disc.n + 1))
    rhs = adjoint_rhs(disc, st, data.gamma_d, mu=mu)
    adj = solve_adjoint(disc, st, rhs, lu)
    w = disc.pack(type(st)(adj.S, adj.R0))
    J = jacobian(disc, st)
    assert np.abs(J.T @ w - rhs).max() <= 1e-12 * max(1, np.abs(rhs).max())
    b = rng.standard_normal(disc.size)
    x = lu.solve(b)
    assert abs(x @ rhs - b @ w) <= 1e-10 * abs(x @ rhs)


def test_lifted_adjoint_field(rng):
    data = make_data(2)
    disc = data.disc
    st, _, lu = solve_newton(disc, rng.standard_normal(disc.n + 1))
    adj = solve_adjoint(disc, st, adjoint_rhs(disc, st, data.gamma_d), lu)
    np.testing.assert_allclose(adj.R[disc.mesh.gamma_nodes], adj.S, atol=1e-15)
    assert adj.S[0] == 0 and adj.S[-1] == 0

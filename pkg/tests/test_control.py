import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_data
from fbpcontrol.checks import gradient_check
from fbpcontrol.control import (
    ControlConfig,
    ProblemData,
    check_variational_inequality,
    hessian_min_eig,
    l2_norm,
    optimize,
    project_ball,
    random_admissible,
    reduced_cost,
    reduced_gradient,
)
from fbpcontrol.state import solve_newton

M9 = make_data(2).M


@pytest.mark.parametrize("mu", [0.0, 0.5])
def test_gradient_second_order_differences(rng, mu):
    data = make_data(3)
    cfg = ControlConfig(lam=1e-3, mu=mu, radius=0.9)
    for U in random_admissible(data, 0.9, 5, rng):
        h = rng.standard_normal(len(U))
        chk = gradient_check(U, h, cfg, data)
        assert chk.best <= 1e-6
        assert 1.7 <= chk.order <= 2.3


def test_target_reachable_by_zero_control():
    data = make_data(3)
    st, _, _ = solve_newton(data.disc, np.zeros(data.disc.n + 1))
    data = ProblemData(data.disc, st.G)
    res = optimize(ControlConfig(lam=0.1), data)
    assert res.trace.iterations == 0
    assert np.abs(res.U).max() == 0 and res.cost == 0


def test_cost_is_nonnegative_and_splits(rng):
    data = make_data(2)
    U = random_admissible(data, 0.9, 1, rng)[0]
    J1 = reduced_cost(U, ControlConfig(lam=1.0), data)
    J0 = reduced_cost(U, ControlConfig(lam=1e-12), data)
    assert J0 >= 0
    assert J1 - J0 == pytest.approx(0.5 * (1 - 1e-12) * l2_norm(data, U) ** 2, rel=1e-10)


def _vec(n=9):
    return arrays(np.float64, n, elements=st.floats(-50, 50))


@settings(max_examples=60, deadline=None)
@given(_vec(), st.floats(0.01, 10))
def test_projection_properties(U, r):
    P = project_ball(U, r, M9)
    norm = math.sqrt(P @ M9 @ P)
    assert norm <= r * (1 + 1e-12)
    np.testing.assert_allclose(project_ball(P, r, M9), P, rtol=1e-12, atol=1e-14)
    if math.sqrt(U @ M9 @ U) <= r:
        np.testing.assert_array_equal(P, U)


@settings(max_examples=40, deadline=None)
@given(_vec(), _vec(), st.floats(0.1, 5))
def test_projection_obtuse_angle(U, W, r):
    # (U - P U, W - P U)_M <= 0 for every W in the ball
    P = project_ball(U, r, M9)
    Wp = project_ball(W, r, M9)
    assert (U - P) @ M9 @ (Wp - P) <= 1e-9 * (1 + abs(U @ M9 @ U))


def test_projection_infinite_radius_and_errors():
    U = np.arange(9.0)
    np.testing.assert_array_equal(project_ball(U, math.inf, M9), U)
    with pytest.raises(ValueError):
        project_ball(U, 0.0, M9)


def test_config_validation():
    with pytest.raises(ValueError):
        ControlConfig(lam=0.0)
    with pytest.raises(ValueError):
        ControlConfig(lam=1.0, mu=-1)
    with pytest.raises(ValueError):
        ControlConfig(lam=1.0, radius=-1)


@pytest.mark.parametrize("metric", ["gauss-newton", "l2"])
def test_optimizer_certificates(rng, metric):
    data = make_data(3)
    cfg = ControlConfig(lam=1e-3, radius=0.9)
    res = optimize(cfg, data, metric=metric)
    assert res.grad_map_norm <= 1e-9
    assert res.control_norm <= 0.9 + 1e-12
    vi = check_variational_inequality(res, random_admissible(data, 0.9, 100, rng), cfg, data)
    assert vi.ok and vi.min_pairing >= -1e-8


def test_active_constraint_gradient_points_inward(rng):
    data = make_data(3)
    cfg = ControlConfig(lam=1e-6, radius=0.9)
    res = optimize(cfg, data)
    assert res.control_norm == pytest.approx(0.9, abs=1e-10)
    # KKT: gradient is a nonpositive multiple of U, up to the stopping tolerance
    g = res.gradient
    c = (g @ data.M @ res.U) / (res.U @ data.M @ res.U)
    assert c < 0
    assert l2_norm(data, g - c * res.U) <= 2 * cfg.grad_tol


def test_optimum_beats_random_admissible(rng):
    data = make_data(2)
    cfg = ControlConfig(lam=1e-4, radius=0.9)
    res = optimize(cfg, data)
    for U in random_admissible(data, 0.9, 10, rng):
        assert reduced_cost(U, cfg, data) >= res.cost - 1e-15


def test_hessian_pure_quadratic(rng):
    # H = lam*M + B^T M B has known generalized eigenvalues
    data = make_data(2)
    M = data.M.toarray()
    n = len(M)
    Q = rng.standard_normal((n, n))
    B = Q @ Q.T / n
    H = 0.3 * M + B.T @ M @ B
    from scipy.linalg import eigh

    expect = eigh(H, M, eigvals_only=True)[0]
    rep = hessian_min_eig(np.zeros(n), ControlConfig(lam=0.3), data, grad_coef=lambda U: H @ U)
    assert rep.min_eig == pytest.approx(expect, rel=1e-8)
    assert rep.asymmetry <= 1e-10


def test_hessian_scales_with_lambda():
    data = make_data(2)
    for lam in (1.0, 10.0):
        cfg = ControlConfig(lam=lam)
        res = optimize(cfg, data)
        sig = hessian_min_eig(res.U, cfg, data).min_eig
        # the tracking part is positive semidefinite and small
        assert lam * (1 - 1e-10) <= sig <= lam * 1.05


def test_reduced_gradient_zero_at_optimum():
    data = make_data(2)
    cfg = ControlConfig(lam=1e-2)
    res = optimize(cfg, data)
    assert l2_norm(data, reduced_gradient(res.U, cfg, data)) <= 1e-9


def test_example1_optima_respect_slope_bound():
    data = make_data(4)
    for lam in (1.0, 1e-3, 1e-6):
        res = optimize(ControlConfig(lam=lam, radius=0.9), data)
        assert np.abs(np.diff(res.state.G)).max() * data.disc.n <= 1.0

import numpy as np
import pytest

from fbpcontrol.assembly import (
    assemble_B_Gamma,
    assemble_B_Omega,
    assemble_coupling_blocks,
    assemble_mass_1d,
    integrate_bulk,
    lift_boundary,
    lift_matrix,
    load_bulk,
    CellGeometry,
)
from fbpcontrol.checks import Q1_LAPLACE
from fbpcontrol.mesh import build_bulk_mesh, build_trace_mesh


def test_single_cell_laplace_matrix():
    m = build_bulk_mesh(0, n_base=1)
    K = assemble_B_Omega(m, np.zeros(2)).toarray()
    c = m.cells[0]
    assert np.abs(K[np.ix_(c, c)] - Q1_LAPLACE).max() <= 1e-14


def test_laplace_stiffness_is_h_independent():
    K0 = assemble_B_Omega(build_bulk_mesh(0, 1), np.zeros(2))
    for lv in (1, 3):
        m = build_bulk_mesh(lv)
        K = assemble_B_Omega(m, np.zeros(m.n + 1))
        assert K.diagonal()[m.interior].max() == pytest.approx(8 / 3)
        assert K0.diagonal().max() == pytest.approx(2 / 3)


@pytest.mark.parametrize("c", [0.0, 0.25, -0.4])
def test_energy_with_constant_profile(c):
    # A = diag(1 + c, 1 / (1 + c)) for a flat profile
    m = build_bulk_mesh(2)
    K = assemble_B_Omega(m, np.full(m.n + 1, c))
    x1, x2 = m.coords.T
    assert x1 @ K @ x1 == pytest.approx(1 + c, rel=1e-13)
    assert x2 @ K @ x2 == pytest.approx(1 / (1 + c), rel=1e-13)
    np.testing.assert_allclose(K @ np.ones(m.n_nodes), 0, atol=1e-13)


def test_symmetry_for_curved_profile():
    m = build_bulk_mesh(2)
    G = 0.1 * np.sin(np.pi * np.linspace(0, 1, m.n + 1))
    K = assemble_B_Omega(m, G)
    assert abs(K - K.T).max() <= 1e-15
    # positive semidefinite with the constants as kernel
    w = np.linalg.eigvalsh(K.toarray())
    assert w[0] > -1e-12 and w[1] > 1e-6


def test_mass_and_stiffness_1d():
    t = build_trace_mesh(build_bulk_mesh(2))
    M = assemble_mass_1d(t)
    one = np.ones(t.n_nodes)
    assert one @ M @ one == pytest.approx(1.0)
    assert t.nodes @ M @ t.nodes == pytest.approx(1 / 3)
    B = assemble_B_Gamma(t, 2.0)
    assert t.nodes @ B @ t.nodes == pytest.approx(2.0)
    with pytest.raises(ValueError):
        assemble_B_Gamma(t, 0.0)


def test_coupling_blocks_match_differences(rng):
    m = build_bulk_mesh(2)
    G = 0.05 * rng.standard_normal(m.n + 1)
    W = rng.standard_normal(m.n_nodes)
    C1, C2 = assemble_coupling_blocks(m, G, W)
    C = (C1 + C2).toarray()
    e = 1e-6
    for k in range(m.n + 1):
        d = np.zeros(m.n + 1)
        d[k] = e
        fd = (assemble_B_Omega(m, G + d) @ W - assemble_B_Omega(m, G - d) @ W) / (2 * e)
        np.testing.assert_allclose(C[:, k], fd, atol=1e-8)


def test_lift_interpolates_product():
    m = build_bulk_mesh(1)
    xi = np.sin(np.pi * np.linspace(0, 1, m.n + 1))
    out = lift_boundary(xi, m)
    x1, x2 = m.coords.T
    np.testing.assert_allclose(out, np.sin(np.pi * x1) * x2, atol=1e-15)
    assert lift_matrix(m).shape == (m.n_nodes, m.n + 1)
    with pytest.raises(ValueError):
        lift_boundary(np.ones(m.n + 1), m)
    with pytest.raises(ValueError):
        lift_boundary(np.zeros(3), m)


def test_quadrature_integrals():
    m = build_bulk_mesh(1)
    geo = CellGeometry.of(m)
    # 2x2 Gauss is exact for bicubics
    f = geo.x1**3 * geo.x2**2
    assert integrate_bulk(m, f) == pytest.approx(1 / 12, rel=1e-14)
    assert load_bulk(m, np.ones_like(f)).sum() == pytest.approx(1.0)

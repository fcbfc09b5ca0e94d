import numpy as np
import pytest

from fbpcontrol.geometry import DegenerateGeometryError, eval_A, eval_A1, eval_A2, eval_DA


def test_identity_for_flat_boundary():
    A = eval_A(0.0, 0.0, np.linspace(0, 1, 5))
    np.testing.assert_array_equal(A, np.broadcast_to(np.eye(2), (5, 2, 2)))


def test_unit_determinant_grid():
    g, dg, x2 = np.meshgrid(np.linspace(-0.9, 2, 10), np.linspace(-3, 3, 10), np.linspace(0, 1, 10))
    A = eval_A(g, dg, x2)
    assert np.abs(np.linalg.det(A) - 1).max() <= 1e-12
    np.testing.assert_array_equal(A[..., 0, 1], A[..., 1, 0])
    # symmetric positive definite
    assert np.all(np.linalg.eigvalsh(A) > 0)


def test_hand_values():
    A = eval_A(1.0, 2.0, 0.5)
    np.testing.assert_allclose(A, [[2.0, -1.0], [-1.0, 1.0]])


@pytest.mark.parametrize("g,dg,x2", [(0.3, -0.7, 0.4), (-0.5, 1.5, 1.0), (0.0, 0.2, 0.0)])
def test_partials_against_differences(g, dg, x2):
    e = 1e-6
    dA_g = (eval_A(g + e, dg, x2) - eval_A(g - e, dg, x2)) / (2 * e)
    dA_s = (eval_A(g, dg + e, x2) - eval_A(g, dg - e, x2)) / (2 * e)
    np.testing.assert_allclose(eval_A1(g, dg, x2), dA_g, atol=1e-8)
    np.testing.assert_allclose(eval_A2(g, dg, x2), dA_s, atol=1e-8)
    np.testing.assert_allclose(
        eval_DA(g, dg, x2, 0.3, -2.0), 0.3 * dA_g - 2.0 * dA_s, atol=1e-8
    )


def test_collapse_rejected():
    with pytest.raises(DegenerateGeometryError):
        eval_A(-1.0, 0.0, 0.5)
    with pytest.raises(DegenerateGeometryError):
        eval_A1(np.array([0.0, -1.2]), 0.0, 0.5)

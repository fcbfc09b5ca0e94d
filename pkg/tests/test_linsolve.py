import numpy as np
import pytest
import scipy.sparse as sp

from fbpcontrol.assembly import assemble_B_Gamma, assemble_mass_1d
from fbpcontrol.linsolve import Factorization, SingularMatrixError, factorize, solve
from fbpcontrol.mesh import build_bulk_mesh, build_trace_mesh


@pytest.mark.parametrize("kappa", [1.0, 0.5, 3.0])
def test_trace_laplacian_exact_at_nodes(kappa):
    # -kappa G'' = 1 with G(0)=G(1)=0 has G = z(1-z)/(2 kappa); P1 is nodally exact
    t = build_trace_mesh(build_bulk_mesh(3))
    it = np.arange(1, t.n)
    A = assemble_B_Gamma(t, kappa)[it][:, it]
    b = (assemble_mass_1d(t) @ np.ones(t.n_nodes))[it]
    z = t.nodes[it]
    np.testing.assert_allclose(factorize(A).solve(b), z * (1 - z) / (2 * kappa), atol=1e-14)


def test_transpose_upper_triangular():
    f = Factorization(sp.csr_matrix([[1.0, 1.0], [0.0, 1.0]]))
    np.testing.assert_allclose(f.solve([2.0, 1.0]), [1.0, 1.0])
    np.testing.assert_allclose(solve(f, [1.0, 2.0], transpose=True), [1.0, 1.0])


def test_random_well_conditioned(rng):
    A = rng.standard_normal((50, 50)) + 50 * np.eye(50)
    b = rng.standard_normal(50)
    f = factorize(sp.csc_matrix(A))
    x = f.solve(b)
    assert np.abs(A @ x - b).max() / np.abs(b).max() <= 1e-10
    y = f.solve(b, transpose=True)
    assert np.abs(A.T @ y - b).max() / np.abs(b).max() <= 1e-10


def test_duality(rng):
    A = sp.random(40, 40, density=0.1, random_state=3) + 5 * sp.eye(40)
    f = factorize(A)
    b, c = rng.standard_normal((2, 40))
    assert abs(f.solve(b) @ c - b @ f.solve(c, transpose=True)) <= 1e-10 * abs(f.solve(b) @ c)


def test_multiple_rhs(rng):
    A = sp.diags([1.0, 2.0, 4.0])
    B = rng.standard_normal((3, 2))
    np.testing.assert_allclose(factorize(A).solve(B), B / [[1.0], [2.0], [4.0]])


def test_singular_detected():
    with pytest.raises(SingularMatrixError):
        factorize(sp.csr_matrix([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError):
        factorize(sp.csr_matrix((3, 3)))


def test_errors_and_empty():
    with pytest.raises(ValueError):
        factorize(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError, match="dimension mismatch"):
        factorize(sp.eye(3)).solve(np.ones(4))
    assert factorize(sp.csr_matrix((0, 0))).solve(np.zeros(0)).shape == (0,)

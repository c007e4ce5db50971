import numpy as np
import pytest
import scipy.sparse as sp

from rodspec import fem
from rodspec.eigensolve import (ConvergenceError, FactorizationError, factor_solve, inertia, ldlt_factor,
                                relative_residual, smallest_eigenpairs)
from rodspec.geometry import CoefficientSet
from rodspec.mesh import mesh_cell, refine


def laplacian_1d(n):
    h = 1.0 / (n + 1)
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h ** 2


def test_diag_solve():
    F = ldlt_factor(sp.diags([1.0, 2.0, 3.0], format="csr"))
    np.testing.assert_allclose(factor_solve(F, np.array([1.0, 2.0, 3.0])), 1.0, rtol=1e-15)
    assert F.inertia == (0, 0, 3)


def test_laplacian_solve_residual():
    K = laplacian_1d(400)
    b = np.random.default_rng(1).standard_normal(400)
    x = factor_solve(ldlt_factor(K), b)
    assert np.linalg.norm(K @ x - b) / np.linalg.norm(b) <= 1e-10


def test_singular_shift_retry():
    K = sp.diags([1.0, 2.0, 3.0], format="csr")
    F = ldlt_factor(K, sp.identity(3, format="csr"), sigma=2.0)
    assert F.retries >= 1 and F.sigma < 2.0
    assert F.inertia[0] == 1 and F.inertia[2] == 2


def test_inertia_counts():
    K = laplacian_1d(50)
    lam = np.sort(np.linalg.eigvalsh(K.toarray()))
    assert inertia(K, sp.identity(50), 0.5 * (lam[4] + lam[5])) == 5


def test_diag_pairs():
    K = sp.diags([1.0, 2.0, 3.0], format="csr")
    pairs = smallest_eigenpairs(K, sp.identity(3, format="csr"), 2)
    assert [p.value for p in pairs] == pytest.approx([1.0, 2.0], abs=1e-14)
    np.testing.assert_allclose(np.abs(pairs[0].vector), [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(pairs[1].vector), [0, 1, 0], atol=1e-12)


def test_fdm_closed_form():
    n = 500
    h = 1.0 / (n + 1)
    K = laplacian_1d(n)
    pairs = smallest_eigenpairs(K, sp.identity(n, format="csr"), 3, tol=1e-11)
    exact = [(2 / h ** 2) * (1 - np.cos(k * np.pi * h)) for k in (1, 2, 3)]
    for p, e in zip(pairs, exact):
        assert abs(p.value - e) / e <= 1e-10
        assert relative_residual(K, sp.identity(n), p.value, p.vector) <= 1e-9
    vals = [p.value for p in pairs]
    assert vals == sorted(vals) and not pairs.multiple_pairs


def test_shift_invariance():
    K = laplacian_1d(300)
    M = sp.identity(300, format="csr")
    a = [p.value for p in smallest_eigenpairs(K, M, 4, shift=0.0)]
    b = [p.value for p in smallest_eigenpairs(K, M, 4, shift=-250.0, seed=7)]
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_multiplicity_flag():
    K = sp.diags([1.0, 1.0, 2.0, 5.0, 7.0], format="csr")
    pairs = smallest_eigenpairs(K, sp.identity(5, format="csr"), 3)
    assert pairs.multiple_pairs == ((0, 1),)
    assert pairs[0].multiple and pairs[1].multiple and not pairs[2].multiple
    assert [p.value for p in pairs] == pytest.approx([1, 1, 2], abs=1e-12)
    assert abs(pairs[0].vector @ pairs[1].vector) < 1e-12


def test_cell_laplacian_pi_squared(plain):
    # periodic in y1, Neumann in y2: first nonzero eigenvalue of the unit cell is (2 pi)^2 in y1 versus
    # pi^2 in y2 (cos(pi (y2 + 1/2))), so the smallest nonzero one is pi^2
    vals = []
    m = mesh_cell(plain, 0.0, 1 / 8)
    for mesh in (m, refine(m)):
        dofs = fem.make_dofmap(mesh, periodic=True)
        K = fem.assemble_stiffness(mesh, CoefficientSet.isotropic("1", "1"), None, dofs)
        M = fem.assemble_mass(mesh, None, None, dofs)
        ones = np.ones((dofs.n_dofs, 1))
        pairs = smallest_eigenpairs(K, M, 1, shift=-1.0, deflate=ones)
        vals.append(pairs[0].value)
    rich = (4 * vals[1] - vals[0]) / 3
    assert abs(vals[1] - np.pi ** 2) < abs(vals[0] - np.pi ** 2)
    assert abs(rich - np.pi ** 2) / np.pi ** 2 < 1e-3


def test_generalized_m_normalised():
    rng = np.random.default_rng(3)
    n = 60
    d = rng.uniform(1, 2, n)
    M = sp.diags(d, format="csr")
    K = laplacian_1d(n)
    pairs = smallest_eigenpairs(K, M, 3, seed=11)
    for p in pairs:
        assert p.vector @ (M @ p.vector) == pytest.approx(1.0, abs=1e-12)
        assert p.vector[np.argmax(np.abs(p.vector))] > 0
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(M.toarray(), K.toarray())).real)[:3]
    np.testing.assert_allclose([p.value for p in pairs], ref, rtol=1e-9)


def test_bad_count():
    with pytest.raises(ValueError):
        smallest_eigenpairs(sp.identity(3, format="csr"), sp.identity(3, format="csr"), 4)

import math

import numpy as np
import pytest

from rodspec.direct import (
    normalization_exponent, normalization_target, potential_floor, rescaled_nu, solve_direct,
    solve_example_1d,
)
from rodspec.effective import hermite_eigenpairs
from rodspec.geometry import CoefficientSet, RodGeometry, minimize_cbar

QUAD = CoefficientSet.isotropic("1", "1 + x1^2")


@pytest.fixture(scope="module")
def plain_ladder(plain):
    return {N: solve_direct(plain, QUAD, RodGeometry(N), 1, 5, 1 / 16) for N in (4, 8, 16)}


def test_beta0_dirichlet_laplacian(plain):
    s = solve_direct(plain, CoefficientSet.isotropic("1", "0"), RodGeometry(4), 0, 3, 1 / 16)
    assert s.values[0] == pytest.approx(math.pi ** 2, rel=5e-2)
    # thin cross-section: the low modes are the axial ones (j pi)^2
    assert s.values[1] == pytest.approx(4 * math.pi ** 2, rel=5e-2)
    assert s.normalization["target"] == 1.0


def test_beta1_lemma_bounds(plain_ladder):
    scaled = []
    for N, s in plain_ladder.items():
        eps = s.epsilon
        nu = math.sqrt(eps) * (s.values[0] - 1.0 / eps)
        scaled.append(nu)
        assert 0.0 < nu < 5.0
    # bounded by a single constant and approaching the effective value 1
    assert max(scaled) / min(scaled) < 2.0


def test_beta1_gaps_positive(plain_ladder):
    for s in plain_ladder.values():
        assert np.all(s.gaps > 0)
        assert s.multiple_pairs == ()


def test_rayleigh_normalization_floor(plain_ladder):
    for s in plain_ladder.values():
        rq = s.rayleigh_quotients()
        assert np.all(np.abs(rq - s.values) <= 1e-9 * s.values)
        assert s.normalization["max_rel_error"] <= 1e-8
        assert s.normalization["target"] == pytest.approx(s.epsilon ** 1.25 * 1.0)
        assert s.values[0] > potential_floor(QUAD, s.mesh) / s.epsilon


def test_m_orthogonality(plain_ladder):
    s = plain_ladder[4]
    X = np.array(s.vectors)
    G = X @ (s.M @ X.T) / s.normalization["target"]
    np.testing.assert_allclose(G, np.eye(len(X)), atol=1e-8)


def test_normalization_targets():
    assert normalization_exponent(0) == 0 and normalization_exponent(2) == 0.5
    assert normalization_exponent(1) == 0.25 and normalization_exponent(1, 4) == pytest.approx(1 / 6)
    assert normalization_target(1 / 9, 1, 2.0) == pytest.approx((1 / 9) ** 1.25 * 2.0)
    assert normalization_target(1 / 9, 0, 2.0) == 1.0


def test_sign_alignment_against_reference(disk):
    profile = minimize_cbar(disk, QUAD)
    refs = hermite_eigenpairs(0.78, profile.cbar_curvature, 3)
    s = solve_direct(disk, QUAD, RodGeometry(4), 1, 3, 1 / 16, profile=profile, reference=refs)
    z = s.mesh.vertices[:, 0] / s.epsilon ** 0.25
    for j, r in enumerate(refs, start=1):
        vref = s.dofs.restrict(r(z))
        assert float(s.vectors[j - 1] @ (s.M @ vref)) > 0


def test_rescaled_operator_agrees(plain_ladder):
    s = plain_ladder[4]
    nu_direct = math.sqrt(s.epsilon) * (s.values[:3] - 1.0 / s.epsilon)
    nu_rescaled = rescaled_nu(s, QUAD, 1.0, 3)
    np.testing.assert_allclose(nu_rescaled, nu_direct, rtol=1e-6)


def test_seed_independence(plain):
    a = solve_direct(plain, QUAD, RodGeometry(4), 1, 3, 1 / 16, seed=1)
    b = solve_direct(plain, QUAD, RodGeometry(4), 1, 3, 1 / 16, seed=7)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-10)


def test_bad_beta(plain):
    with pytest.raises(ValueError):
        solve_direct(plain, QUAD, RodGeometry(4), 3, 1, 1 / 16)


# --- one-dimensional example ---------------------------------------------------

@pytest.fixture(scope="module")
def example_ladder():
    return [solve_example_1d(e, 2 ** 14, extrapolate=True) for e in (1e-2, 4e-3, 1e-3)]


def test_example_ground_pair(example_ladder):
    ex = example_ladder[0]
    assert ex.mu1 > 1.0
    pred = math.exp(-5.0)
    assert ex.predicted_sup_err == pytest.approx(pred)
    assert 0.5 * pred <= ex.sup_err <= 2.0 * pred
    assert ex.lambda1 == pytest.approx(100.0 + 10.0 * ex.mu1)
    assert np.max(ex.v1) == pytest.approx(1.0)
    assert ex.v1[0] == 0 and ex.v1[-1] == 0
    np.testing.assert_allclose(ex.x[[0, -1]], [-1.0, 1.0])


def test_example_monotone_toward_one(example_ladder):
    mus = [ex.mu1 for ex in example_ladder]
    assert mus[0] > mus[1] > mus[2]
    assert abs(mus[-1] - 1.0) < 0.05
    extrapolated = [ex.mu1_extrapolated for ex in example_ladder]
    assert all(mu > 1.0 for mu in extrapolated)
    assert extrapolated[0] > extrapolated[1] > extrapolated[2]


def test_example_grid_floor():
    with pytest.raises(ValueError):
        solve_example_1d(1e-2, 512)

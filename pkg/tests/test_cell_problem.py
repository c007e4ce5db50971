import math

import numpy as np
import pytest

from rodspec.cell_problem import (
    CellProblemError, a_eff_profile, beta2_effective, build_cell_system, effective_matrix,
    lambda1_curvature, solve_cell_eigen, solve_corrector,
)
from rodspec.geometry import CellGeometry, CoefficientSet, CrossSection

# frozen regression values for the disk hole r = 0.3, a = I (energy form)
DISK_A_EFF = {16: 0.7800584560478909, 32: 0.7790237270811857, 64: 0.7787384581993906}

LAYERED = CoefficientSet.isotropic("2 + cos(2*pi*y1)", "1")


# --- correctors -------------------------------------------------------------

def test_identity_no_hole_correctors(plain):
    N = solve_corrector(plain, CoefficientSet.isotropic("1", "1"), 0.0, 1 / 16)
    assert np.max(np.abs(N[1].values)) <= 1e-10
    v2 = N[2].vertex_values()
    y2 = N[2].system.mesh.vertices[:, 1]
    dev = v2 + y2
    assert np.max(np.abs(dev - dev.mean())) <= 1e-8


def test_corrector_gauge_is_mean_zero(disk, model_coeffs):
    N = solve_corrector(disk, model_coeffs, 0.0, 1 / 16)
    for k in (1, 2):
        assert abs(N[k].mean) <= 1e-10


def test_corrector_periodic_trace(disk, model_coeffs):
    N = solve_corrector(disk, model_coeffs, 0.0, 1 / 16)
    m = N[1].system.mesh
    v = N[1].vertex_values()
    pairs = np.asarray(m.periodic_pairs)
    assert len(pairs) > 0
    np.testing.assert_array_equal(v[pairs[:, 0]], v[pairs[:, 1]])


def test_layered_corrector_flux_is_constant(plain):
    from rodspec.fem import element_coordinates

    N = solve_corrector(plain, LAYERED, 0.0, 1 / 64)
    sysm = N[1].system
    m = sysm.mesh
    # N_1 depends on y1 only (up to the P1 splitting of each square)
    v = N[1].vertex_values()
    cols = np.unique(np.round(m.vertices[:, 0], 12), return_inverse=True)[1]
    spread = np.full(cols.max() + 1, -np.inf)
    np.maximum.at(spread, cols, v)
    low = np.full(cols.max() + 1, np.inf)
    np.minimum.at(low, cols, v)
    assert np.max(spread - low) <= 1e-4
    # the flux a (1 + d N_1 / d y1), averaged over each y1-strip, is constant
    g = sysm.gradients(N[1].values)
    flux = sysm.tensor[0] * (1.0 + g[:, 0])
    xs = np.unique(np.round(m.vertices[:, 0], 12))
    strip = np.searchsorted(xs, element_coordinates(m, 0.0)[1]) - 1
    col = np.bincount(strip, sysm.areas * flux) / np.bincount(strip, sysm.areas)
    assert np.max(np.abs(col - col.mean())) <= 1e-3
    assert col.mean() == pytest.approx(math.sqrt(3.0), abs=5e-3)


def test_layered_harmonic_mean(plain):
    A = effective_matrix(plain, LAYERED, 0.0, 1 / 64)
    assert A.a_eff == pytest.approx(math.sqrt(3.0), abs=5e-3)


# --- effective matrix -------------------------------------------------------

def test_identity_no_hole_matrix(plain):
    A = effective_matrix(plain, CoefficientSet.isotropic("1", "1"), 0.0, 1 / 16)
    np.testing.assert_allclose(A.A, [[1.0, 0.0], [0.0, 0.0]], atol=1e-8)


@pytest.mark.parametrize("n", [16, 32])
def test_disk_regression(disk, n):
    A = effective_matrix(disk, CoefficientSet.isotropic("1", "1"), 0.0, 1 / n)
    assert A.a_eff == pytest.approx(DISK_A_EFF[n], rel=1e-9)


def test_disk_self_convergence():
    a16, a32, a64 = DISK_A_EFF[16], DISK_A_EFF[32], DISK_A_EFF[64]
    # monotone, contracting differences; Richardson estimate inside the bracket
    assert a16 > a32 > a64
    assert abs(a32 - a64) < 0.5 * abs(a16 - a32)
    rich = a64 + (a64 - a32) / 3.0
    assert 0.778 < rich < a64


def test_matrix_structure(disk, model_coeffs):
    A = effective_matrix(disk, model_coeffs, 0.0, 1 / 32)
    scale = A.norm
    assert A.asymmetry <= 1e-10 * scale
    assert np.min(np.linalg.eigvalsh(A.A)) >= -1e-10 * scale
    assert A.off_axis <= 5e-3 * scale
    assert A.a_eff > 0


def test_energy_flux_agreement(disk, model_coeffs):
    coarse = effective_matrix(disk, model_coeffs, 0.0, 1 / 32)
    fine = effective_matrix(disk, model_coeffs, 0.0, 1 / 64)
    assert fine.form_discrepancy <= 5e-3 * fine.norm
    assert fine.form_discrepancy <= max(coarse.form_discrepancy, 1e-12 * fine.norm)


def test_translation_invariance():
    a = CoefficientSet.isotropic("1", "1")
    centred = CellGeometry("y1^2 + y2^2 - 0.04", CrossSection(0.5), True)
    shifted = CellGeometry("(y1 - 0.25)^2 + y2^2 - 0.04", CrossSection(0.5), True)
    a0 = effective_matrix(centred, a, 0.0, 1 / 32).a_eff
    a1 = effective_matrix(shifted, a, 0.0, 1 / 32).a_eff
    assert abs(a0 - a1) <= 1e-3 * a0


def test_scaling_is_exact(disk):
    base = CoefficientSet.isotropic("1 + 0.2*y2^2", "1")
    sysm = build_cell_system(disk, base, 0.0, 1 / 16)
    A1 = effective_matrix(disk, base, 0.0, 1 / 16, system=sysm).A
    scaled = base.scaled(2.5)
    sysm2 = build_cell_system(disk, scaled, 0.0, 1 / 16, mesh=sysm.mesh)
    A2 = effective_matrix(disk, scaled, 0.0, 1 / 16, system=sysm2).A
    np.testing.assert_allclose(A2, 2.5 * A1, rtol=1e-12, atol=1e-14)


def test_a_eff_profile_reuses_constant_slice(disk):
    vals = a_eff_profile(disk, CoefficientSet.isotropic("1", "1 + x1^2"), [-0.3, 0.0, 0.4], 1 / 16)
    np.testing.assert_allclose(vals, DISK_A_EFF[16], rtol=1e-12)


def test_incompatible_load_detected(disk, monkeypatch):
    from rodspec import cell_problem as cp
    coeffs = CoefficientSet.isotropic("1", "1")
    orig = cp.fem.assemble_corrector_rhs
    monkeypatch.setattr(cp.fem, "assemble_corrector_rhs", lambda *a, **kw: orig(*a, **kw) + 1.0)
    with pytest.raises(CellProblemError, match="incompatible"):
        solve_corrector(disk, coeffs, 0.0, 1 / 16)


# --- cell eigenproblem -------------------------------------------------------

def test_constant_potential_eigenpair(disk):
    coeffs = CoefficientSet("1 + 0.3*y2^2", "0.1*y2", "1", "2.5")
    d = solve_cell_eigen(disk, coeffs, 0.0, 1 / 16)
    assert d.lambda1 == pytest.approx(2.5, abs=1e-8)
    np.testing.assert_allclose(d.p1, 1.0, atol=1e-7)
    assert d.positive and d.gap > 0


def test_eigen_bounds_from_potential(plain):
    d = solve_cell_eigen(plain, CoefficientSet.isotropic("1", "1 + 0.2*cos(2*pi*y1)"), 0.0, 1 / 16)
    # min c < lambda_1 <= mean c (Rayleigh quotient of the constant)
    assert 0.8 < d.lambda1 < 1.0
    assert d.positive
    assert d.system.integrate(d.p1 * 0 + 1) == pytest.approx(d.system.measure)
    assert float(d.p1 @ (d.system.M @ d.p1)) == pytest.approx(d.system.measure, rel=1e-12)


def test_additive_curvature(plain):
    coeffs = CoefficientSet.isotropic("1", "1 + x1^2 + 0.2*cos(2*pi*y1)")
    assert lambda1_curvature(plain, coeffs, 1 / 16) == pytest.approx(2.0, abs=5e-2)


# --- large-potential quantities ------------------------------------------------

def test_c_eff_vanishes_without_x1(disk):
    coeffs = CoefficientSet.isotropic("1 + 0.3*sin(2*pi*y1)", "1 + 0.2*cos(2*pi*y1) + 0.1*y2")
    b = beta2_effective(disk, coeffs, 1 / 16)
    assert abs(b.c_eff) <= 1e-6


def test_weighted_reduces_to_unweighted(disk):
    b = beta2_effective(disk, CoefficientSet.isotropic("1", "1.7"), 1 / 16)
    assert b.a_eff_w == pytest.approx(b.a_eff_unweighted, abs=1e-10)
    assert b.a_eff_w == pytest.approx(DISK_A_EFF[16], abs=1e-10)


def test_c_eff_step_halving(disk):
    # no y1-reflection symmetry, so c_eff is genuinely nonzero
    coeffs = CoefficientSet("1 + 0.3*x1*sin(2*pi*y1)", "0", "1",
                            "1 + x1^2 + 0.3*cos(2*pi*y1) + 0.3*x1*sin(2*pi*y1)")
    b1 = beta2_effective(disk, coeffs, 1 / 16, delta=1e-3)
    b2 = beta2_effective(disk, coeffs, 1 / 16, delta=5e-4)
    assert abs(b1.c_eff) > 1e-3
    assert abs(b2.c_eff - b1.c_eff) <= 1e-3 * abs(b1.c_eff)
    assert b1.p1_min > 0


def test_c_eff_symmetric_data_vanishes(disk):
    # y1 -> -y1 symmetry makes every term of the integrand odd
    coeffs = CoefficientSet("1 + 0.3*x1*cos(2*pi*y1)", "0", "1",
                            "1 + x1^2 + 0.3*(1 + 2*x1)*cos(2*pi*y1)")
    assert abs(beta2_effective(disk, coeffs, 1 / 16).c_eff) <= 1e-8

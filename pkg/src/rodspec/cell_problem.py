"""Cell problems on the perforated periodicity cell.

* correctors ``N_k``: ``-div(a (grad N_k + e_k)) = 0`` in ``Y(x1)``, periodic in
  ``y1``, conormal condition on the hole and the lateral sides;
* the effective matrix ``A_ik = |Y|^{-1} int a (e_i + grad N_i).(e_k + grad N_k)``
  and ``a_eff = A_11``;
* the principal cell eigenpair ``(lambda_1(x1), p_1)`` of
  ``-div(a grad p) + c p = lambda p`` and the derived large-potential
  quantities (weighted corrector, weighted ``a_eff``, ``c_eff``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .eigensolve import smallest_eigenpairs
from .geometry import CellGeometry, CoefficientSet
from .mesh import Tag, TriMesh, mesh_cell

COMPATIBILITY_TOL = 1e-8
DELTA_X1 = 1e-3


class CellProblemError(RuntimeError):
    pass


@dataclass
class CellSystem:
    """Assembled periodic cell system at one slice ``x1``."""

    mesh: TriMesh
    dofs: fem.DofMap
    x1: float
    coeffs: CoefficientSet
    tensor: tuple
    K: object
    M: object
    grads: np.ndarray
    areas: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.areas.sum())

    def at(self, x1: float) -> "CellSystem":
        """Same mesh (frozen geometry) with coefficients re-evaluated at ``x1``."""
        return build_cell_system(self.mesh.geometry, self.coeffs, x1, self.mesh.h, mesh=self.mesh)

    def potential_mass(self):
        return fem.assemble_mass(self.mesh, self.coeffs.c, self.x1, self.dofs)

    def integrate(self, u_dofs: np.ndarray) -> float:
        """``int_Y u`` for a P1 function given by DOF values."""
        u = self.dofs.expand(u_dofs)[self.mesh.triangles]
        return float(np.sum(self.areas * u.mean(axis=1)))

    def gradients(self, u_dofs: np.ndarray) -> np.ndarray:
        """Element-wise constant gradient ``(nt, 2)``."""
        u = self.dofs.expand(u_dofs)[self.mesh.triangles]
        return np.einsum("ti,tid->td", u, self.grads)


def build_cell_system(geom: CellGeometry, coeffs: CoefficientSet, x1: float, h: float,
                      mesh: TriMesh | None = None) -> CellSystem:
    m = mesh_cell(geom, x1, h) if mesh is None else mesh
    dofs = fem.periodicify(m)
    tensor = fem.element_tensor(m, coeffs, x1)
    K = fem.assemble_stiffness(m, coeffs, x1, dofs, tensor=tensor)
    M = fem.assemble_mass(m, None, x1, dofs)
    g, area = fem.element_gradients(m)
    return CellSystem(m, dofs, float(x1), coeffs, tensor, K, M, g, area)


# --- correctors ------------------------------------------------------------

@dataclass
class CorrectorField:
    axis: int
    values: np.ndarray          # DOF values (periodic), mean zero over Y
    system: CellSystem
    weight: np.ndarray | None = None

    def vertex_values(self) -> np.ndarray:
        return self.system.dofs.expand(self.values)

    @property
    def mean(self) -> float:
        return self.system.integrate(self.values) / self.system.measure


def _solve_pinned(K, b):
    """Solve a singular (constants-in-kernel) system by pinning DOF 0."""
    n = K.shape[0]
    Ks = K[1:, 1:].tocsc()
    x = np.zeros(n)
    if n > 1:
        x[1:] = spla.splu(Ks).solve(b[1:])
    return x


def solve_corrector(geom: CellGeometry, coeffs: CoefficientSet, x1: float, h: float,
                    system: CellSystem | None = None, weight: np.ndarray | None = None) -> dict:
    """Correctors ``{1: N_1, 2: N_2}`` with mean-zero gauge.

    Parameters
    ----------
    weight : optional element weight (``p1**2`` for the large-potential case).

    Raises
    ------
    CellProblemError
        If the discrete right-hand side violates the compatibility condition.
    """
    sysm = build_cell_system(geom, coeffs, x1, h) if system is None else system
    if weight is None:
        K = sysm.K
    else:
        K = fem.assemble_stiffness(sysm.mesh, coeffs, x1, sysm.dofs, weight=weight, tensor=sysm.tensor)
    ones = np.ones(sysm.dofs.n_dofs)
    area1 = float(ones @ (sysm.M @ ones))
    out = {}
    for k in (1, 2):
        b = fem.assemble_corrector_rhs(sysm.mesh, coeffs, k, x1, sysm.dofs, weight=weight,
                                       tensor=sysm.tensor)
        nb = np.linalg.norm(b)
        # constants are in the kernel: the load must integrate them to zero
        if abs(b.sum()) > COMPATIBILITY_TOL * max(nb, 1e-300) and abs(b.sum()) > 1e-14:
            raise CellProblemError(f"corrector load for axis {k} is incompatible: sum={b.sum():.3e}")
        x = _solve_pinned(K, b - b.sum() / len(b))
        x -= (ones @ (sysm.M @ x)) / area1
        out[k] = CorrectorField(k, x, sysm, weight)
    return out


# --- effective matrix --------------------------------------------------------

@dataclass
class EffectiveMatrix:
    x1_slice: float
    A: np.ndarray
    A_flux: np.ndarray
    correctors: dict = field(repr=False, default_factory=dict)

    @property
    def a_eff(self) -> float:
        return float(self.A[0, 0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    @property
    def form_discrepancy(self) -> float:
        return float(np.max(np.abs(self.A - self.A_flux)))

    @property
    def asymmetry(self) -> float:
        return float(abs(self.A[0, 1] - self.A[1, 0]))

    @property
    def off_axis(self) -> float:
        """``max |A_km|`` over ``m != 1`` (second column)."""
        return float(np.max(np.abs(self.A[:, 1])))


def _energy_matrix(sysm: CellSystem, correctors: dict, weight=None):
    """Energy and flux forms of the effective matrix."""
    a11, a12, a22 = sysm.tensor
    w = sysm.areas * (1.0 if weight is None else weight)
    E = []
    for k in (1, 2):
        g = sysm.gradients(correctors[k].values)
        g[:, k - 1] += 1.0
        E.append(g)
    aE = [np.stack([a11 * e[:, 0] + a12 * e[:, 1], a12 * e[:, 0] + a22 * e[:, 1]], axis=1) for e in E]
    A = np.empty((2, 2))
    Af = np.empty((2, 2))
    for i in range(2):
        for k in range(2):
            A[i, k] = np.sum(w * np.sum(E[i] * aE[k], axis=1))
            Af[i, k] = np.sum(w * aE[k][:, i])
    area = sysm.measure
    return A / area, Af / area


def effective_matrix(geom: CellGeometry, coeffs: CoefficientSet, x1: float, h: float,
                     system: CellSystem | None = None) -> EffectiveMatrix:
    """``A^eff`` by the energy form, with the flux form kept for comparison."""
    sysm = build_cell_system(geom, coeffs, x1, h) if system is None else system
    N = solve_corrector(geom, coeffs, x1, h, system=sysm)
    A, Af = _energy_matrix(sysm, N)
    return EffectiveMatrix(float(x1), A, Af, N)


def a_eff_profile(geom: CellGeometry, coeffs: CoefficientSet, x1s, h: float) -> np.ndarray:
    """``a_eff(x1)`` on a set of slices (one cell solve per slice).

    When neither the hole nor ``a`` depends on ``x1`` a single solve is reused.
    """
    x1s = np.atleast_1d(np.asarray(x1s, dtype=float))
    a_vars = set().union(*(e.variables for e in (coeffs.a11, coeffs.a12, coeffs.a22)))
    if not geom.depends_on_x1 and "x1" not in a_vars:
        return np.full(x1s.shape, effective_matrix(geom, coeffs, float(x1s[0]), h).a_eff)
    return np.array([effective_matrix(geom, coeffs, float(x), h).a_eff for x in x1s])


# --- cell eigenproblem (large-potential case) --------------------------------

@dataclass
class CellEigenData:
    x1_slice: float
    lambda1: float
    p1: np.ndarray
    lambda2: float
    system: CellSystem = field(repr=False)
    min_p1: float = 0.0
    lambda1_curvature: float = float("nan")

    @property
    def positive(self) -> bool:
        return self.min_p1 >= -1e-8

    @property
    def gap(self) -> float:
        return self.lambda2 - self.lambda1


def solve_cell_eigen(geom: CellGeometry, coeffs: CoefficientSet, x1: float, h: float,
                     system: CellSystem | None = None, seed: int = 42) -> CellEigenData:
    """Principal pair of ``-div(a grad p) + c p = lambda p`` on ``Y(x1)``.

    ``p1`` is normalised by ``int p1^2 = |Y|`` with its largest-magnitude DOF
    positive.

    Raises
    ------
    CellProblemError
        If the first eigenvalue is not simple.
    """
    sysm = build_cell_system(geom, coeffs, x1, h) if system is None else system
    C = sysm.potential_mass()
    A = (sysm.K + C).tocsr()
    x1c, y1c, y2c = fem.element_coordinates(sysm.mesh, x1)
    cmin = float(np.min(coeffs.potential(x1c, y1c, y2c)))
    pairs = smallest_eigenpairs(A, sysm.M, 2, shift=cmin - 1e-3 * max(1.0, abs(cmin)), seed=seed)
    lam1, lam2 = pairs[0].value, pairs[1].value
    if lam2 - lam1 <= 1e-8 * max(1.0, abs(lam1)):
        raise CellProblemError(f"first cell eigenvalue is not simple at x1={x1:g}")
    p = pairs[0].vector
    k = int(np.argmax(np.abs(p)))
    if p[k] < 0:
        p = -p
    p = p * np.sqrt(sysm.measure / float(p @ (sysm.M @ p)))
    return CellEigenData(float(x1), float(lam1), p, float(lam2), sysm, float(p.min()))


def lambda1_curvature(geom: CellGeometry, coeffs: CoefficientSet, h: float, x1: float = 0.0,
                      step: float = 0.05) -> float:
    """``lambda_1''(x1)`` by the 5-point central difference (slices remeshed)."""
    vals = [solve_cell_eigen(geom, coeffs, x1 + s * step, h).lambda1 for s in (-2, -1, 0, 1, 2)]
    return float((-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * step * step))


@dataclass
class Beta2Effective:
    a_eff_w: float
    c_eff: float
    lambda1_0: float
    lambda1_curv: float
    a_eff_unweighted: float
    p1_min: float
    delta: float
    cell: CellEigenData = field(repr=False, default=None)


def _p1_squared_weight(sysm: CellSystem, p: np.ndarray) -> np.ndarray:
    """Element average of ``p^2`` for a P1 function (exact)."""
    v = sysm.dofs.expand(p)[sysm.mesh.triangles]
    return (np.sum(v * v, axis=1) + v[:, 0] * v[:, 1] + v[:, 1] * v[:, 2] + v[:, 2] * v[:, 0]) / 6.0


def _aligned(ref: CellEigenData, other: CellEigenData) -> np.ndarray:
    """``other.p1`` with its sign matched to ``ref`` (negative overlap flips)."""
    overlap = float(ref.p1 @ (ref.system.M @ other.p1))
    return -other.p1 if overlap < 0 else other.p1


def c_eff_integral(base: CellEigenData, p_plus: np.ndarray, p_minus: np.ndarray,
                   coeffs_plus: tuple, coeffs_minus: tuple, delta: float) -> float:
    """Quadrature of the ``c_eff`` integrand on the frozen cell mesh.

    The integrand is read as ``p1 (d_x1 a_1j d_j p1 + a_1j d_x1 d_j p1
    + d_i(a_i1 d_x1 p1))``; the last term is integrated by parts, giving a
    volume term ``-grad p1 . (a e_1) d_x1 p1`` and conormal edge terms on the
    hole and the lateral sides (the periodic faces cancel).
    """
    sysm = base.system
    m = sysm.mesh
    p = base.p1
    q = (p_plus - p_minus) / (2 * delta)           # d_x1 p1 (DOF values)
    a11, a12, a22 = sysm.tensor
    da = [(cp - cm) / (2 * delta) for cp, cm in zip(coeffs_plus, coeffs_minus)]
    gp = sysm.gradients(p)
    gq = sysm.gradients(q)
    pv = sysm.dofs.expand(p)[m.triangles]
    pmean = pv.mean(axis=1)
    qv = sysm.dofs.expand(q)[m.triangles]
    pq = (np.sum(pv * qv, axis=1) + 0.5 * (pv[:, 0] * (qv[:, 1] + qv[:, 2]) + pv[:, 1] * (qv[:, 0] + qv[:, 2])
                                            + pv[:, 2] * (qv[:, 0] + qv[:, 1]))) / 6.0
    t1 = pmean * (da[0] * gp[:, 0] + da[1] * gp[:, 1])
    t2 = pmean * (a11 * gq[:, 0] + a12 * gq[:, 1])
    t3 = -(gp[:, 0] * a11 + gp[:, 1] * a12) * pq
    vol = float(np.sum(sysm.areas * (t1 + t2 + t3)))

    # boundary term  int_{dY} p1 q (a e_1).n  over hole and lateral edges
    be = m.boundary_edges
    owner = _edge_owner(m)
    pe = m.vertices[be]
    t = pe[:, 1] - pe[:, 0]
    length = np.hypot(t[:, 0], t[:, 1])
    # boundary edges keep the orientation of their triangle (ccw), so the
    # outward normal is the tangent rotated clockwise
    n = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    tri = owner(be)
    flux = a11[tri] * n[:, 0] + a12[tri] * n[:, 1]
    pvb = sysm.dofs.expand(p)[be]
    qvb = sysm.dofs.expand(q)[be]
    # Simpson rule is exact for the product of two linears
    prod = (pvb[:, 0] * qvb[:, 0] + pvb[:, 1] * qvb[:, 1]) / 6.0 + \
        4.0 * (0.25 * (pvb[:, 0] + pvb[:, 1]) * (qvb[:, 0] + qvb[:, 1])) / 6.0
    bnd = float(np.sum(length * flux * prod))
    return -(vol + bnd) / sysm.measure


def _edge_owner(m: TriMesh):
    t = m.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    idx = np.tile(np.arange(len(t)), 3)
    table = {(int(a), int(b)): int(i) for (a, b), i in zip(e, idx)}

    def lookup(edges):
        return np.array([table[(int(a), int(b))] for a, b in edges], dtype=np.int64)
    return lookup


def beta2_effective(geom: CellGeometry, coeffs: CoefficientSet, h: float,
                    delta: float = DELTA_X1, curvature_step: float = 0.05,
                    seed: int = 42) -> Beta2Effective:
    """Coefficients of the limit oscillator for the ``eps^-2`` potential.

    ``x1``-derivatives of ``p1`` and ``a`` are central differences with step
    ``delta`` on the mesh of ``Y(0)`` (geometry frozen at the minimiser).
    """
    base = solve_cell_eigen(geom, coeffs, 0.0, h, seed=seed)
    sysm = base.system
    plus = solve_cell_eigen(geom, coeffs, delta, h, system=sysm.at(delta), seed=seed)
    minus = solve_cell_eigen(geom, coeffs, -delta, h, system=sysm.at(-delta), seed=seed)
    p_plus, p_minus = _aligned(base, plus), _aligned(base, minus)
    c_eff = c_eff_integral(base, p_plus, p_minus, plus.system.tensor, minus.system.tensor, delta)

    w = _p1_squared_weight(sysm, base.p1)
    N = solve_corrector(geom, coeffs, 0.0, h, system=sysm, weight=w)
    Aw, _ = _energy_matrix(sysm, N, weight=w)
    N0 = solve_corrector(geom, coeffs, 0.0, h, system=sysm)
    A0, _ = _energy_matrix(sysm, N0)
    curv = lambda1_curvature(geom, coeffs, h, 0.0, curvature_step)
    base.lambda1_curvature = curv
    return Beta2Effective(float(Aw[0, 0]), float(c_eff), base.lambda1, curv, float(A0[0, 0]),
                          base.min_p1, delta, base)

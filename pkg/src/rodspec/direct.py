"""The full eps-dependent problems.

Rod problem (2D, P1 FEM)::

    -div(a^eps grad u) + eps^{-beta} c^eps u = lam u   in Omega_eps,
    conormal derivative 0 on the lateral sides and hole boundaries,
    u = 0 at the rod ends x1 = +-1/2.

and the explicit one-dimensional example ``-u'' + (1 + x^2)/eps u = lam u`` on
``(-1, 1)``, solved in the rescaled variable ``y = x / eps^{1/4}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .eigensolve import smallest_eigenpairs
from .geometry import CellGeometry, CoefficientSet, PotentialProfile, RodGeometry, minimize_cbar
from .mesh import Tag, TriMesh, mesh_rod


class DirectError(RuntimeError):
    pass


def normalization_exponent(beta: int, flatness: int = 2) -> float:
    """Exponent ``gamma`` of the localisation scale ``eps^gamma``."""
    if beta == 0:
        return 0.0
    if beta == 2:
        return 0.5
    return 1.0 / (flatness + 2)


def normalization_target(epsilon: float, beta: int, q_measure: float, flatness: int = 2) -> float:
    """``||u||^2`` prescribed for the rod eigenfunctions (2D: ``eps^{d-1} = eps``)."""
    if beta == 0:
        return 1.0
    return epsilon ** normalization_exponent(beta, flatness) * epsilon * q_measure


@dataclass
class DirectSpectrum:
    epsilon: float
    beta: int
    values: np.ndarray
    vectors: list                 # DOF vectors, post-scaled
    mesh: TriMesh = field(repr=False)
    dofs: fem.DofMap = field(repr=False)
    K: object = field(repr=False)
    C: object = field(repr=False)
    M: object = field(repr=False)
    normalization: dict = field(default_factory=dict)
    residuals: np.ndarray | None = None
    multiple_pairs: tuple = ()
    sigma: float = 0.0
    seed: int = 42
    flatness: int = 2
    x1_min: float = 0.0

    @property
    def operator(self):
        return (self.K + self.epsilon ** -self.beta * self.C).tocsr()

    def vertex_vector(self, j: int) -> np.ndarray:
        """Eigenfunction ``j`` (1-based) at mesh vertices (zero at the ends)."""
        return self.dofs.expand(self.vectors[j - 1])

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.values)

    def rayleigh_quotients(self) -> np.ndarray:
        A = self.operator
        return np.array([(x @ (A @ x)) / (x @ (self.M @ x)) for x in self.vectors])


def solve_direct(geom: CellGeometry, coeffs: CoefficientSet, rod: RodGeometry, beta: int,
                 j_max: int, h_y: float, *, tol: float = 1e-9, seed: int = 42,
                 profile: PotentialProfile | None = None, reference=None,
                 flatness: int | None = None, mesh: TriMesh | None = None) -> DirectSpectrum:
    """Solve the rod eigenproblem for ``beta`` in ``{0, 1, 2}``.

    Parameters
    ----------
    reference : optional list of callables ``v_j(z)``; eigenvector ``j`` is
        sign-aligned so that ``int u_j v_j((x1 - x1_min)/eps^gamma) >= 0``.
    profile : averaged-potential data; computed when omitted and ``beta > 0``.
    """
    if beta not in (0, 1, 2):
        raise ValueError("beta must be 0, 1 or 2")
    eps = rod.epsilon
    m = mesh_rod(geom, rod, h_y) if mesh is None else mesh
    dofs = fem.make_dofmap(m, dirichlet=(Tag.END_MINUS, Tag.END_PLUS))
    K = fem.assemble_stiffness(m, coeffs, None, dofs)
    C = fem.assemble_mass(m, coeffs.c, None, dofs)
    M = fem.assemble_mass(m, None, None, dofs)
    A = (K + eps ** -beta * C).tocsr()

    if beta > 0 and profile is None:
        profile = minimize_cbar(geom, coeffs)
    k = flatness if flatness is not None else (profile.flatness_order if profile else 2)
    sigma = 0.0 if beta == 0 else 0.9 * eps ** -beta * profile.cbar_min

    pairs = smallest_eigenpairs(A, M, j_max, tol=tol, shift=sigma, seed=seed)
    values = np.array([p.value for p in pairs])
    target = normalization_target(eps, beta, geom.cross_section.measure, k)
    gamma = normalization_exponent(beta, k)
    x1_min = 0.0 if profile is None else profile.x1_min

    vectors = []
    x1_nodes = m.vertices[:, 0]
    for j, p in enumerate(pairs, start=1):
        x = p.vector * math.sqrt(target / float(p.vector @ (M @ p.vector)))
        if reference is not None and j <= len(reference):
            z = (x1_nodes - x1_min) / eps ** gamma
            vref = dofs.restrict(np.asarray(reference[j - 1](z), dtype=float))
            if float(x @ (M @ vref)) < 0:
                x = -x
        vectors.append(x)
    achieved = [float(x @ (M @ x)) for x in vectors]
    rec = {"target": target, "achieved": achieved, "gamma": gamma,
           "max_rel_error": float(max(abs(a / target - 1) for a in achieved))}
    return DirectSpectrum(eps, beta, values, vectors, m, dofs, K, C, M, rec,
                          np.array([p.residual for p in pairs]), pairs.multiple_pairs,
                          float(pairs.sigma), seed, k, x1_min)


def potential_floor(coeffs: CoefficientSet, m: TriMesh) -> float:
    """Minimum of ``c`` over element centroids (discrete minimum-principle proxy)."""
    x1, y1, y2 = fem.element_coordinates(m)
    return float(np.min(coeffs.potential(x1, y1, y2)))


# --- rescaled operator ------------------------------------------------------------

def rescaled_nu(spec: DirectSpectrum, coeffs: CoefficientSet, cbar0: float, j_max: int | None = None,
                tol: float = 1e-10, seed: int = 42) -> np.ndarray:
    """``nu^eps`` from the rescaled problem assembled directly (``beta = 1``).

    The mesh is stretched by ``eps^{-1/4}`` (``z = x / eps^{1/4}``) while the
    coefficients keep their physical arguments; the operator is
    ``-div(a grad v) + (c - c̄(0))/sqrt(eps) v = nu v``.
    """
    if spec.beta != 1:
        raise ValueError("the rescaled check is implemented for beta = 1")
    eps = spec.epsilon
    s = eps ** 0.25
    m = spec.mesh
    zm = TriMesh(m.vertices / s, m.triangles, m.boundary_edges, m.boundary_tags, m.periodic_pairs,
                 h=m.h / s, kind="rod", epsilon=m.epsilon, geometry=m.geometry,
                 tri_cell=m.tri_cell, cell_slices=m.cell_slices)
    x1, y1, y2 = fem.element_coordinates(m)
    tensor = coeffs.matrix(x1, y1, y2)
    pot = (coeffs.potential(x1, y1, y2) - cbar0) / math.sqrt(eps)
    K = fem.assemble_stiffness(zm, coeffs, None, spec.dofs, tensor=tensor)
    # keep the mass weight positive; the offset is removed again below
    offset = 1.0 - min(0.0, float(pot.min()))
    C = fem.assemble_mass(zm, pot + offset, None, spec.dofs)
    M = fem.assemble_mass(zm, None, None, spec.dofs)
    n = len(spec.values) if j_max is None else j_max
    pairs = smallest_eigenpairs((K + C - offset * M).tocsr(), M, n, tol=tol,
                                shift=float(pot.min()) - 1.0, seed=seed)
    return np.array([p.value for p in pairs])


# --- one-dimensional example --------------------------------------------------------

@dataclass
class Example1D:
    epsilon: float
    n: int
    mu1: float
    lambda1: float
    y: np.ndarray
    v1: np.ndarray
    sup_err: float
    predicted_sup_err: float
    mu1_extrapolated: float = float("nan")

    @property
    def x(self) -> np.ndarray:
        return self.epsilon ** 0.25 * self.y

    @property
    def u1(self) -> np.ndarray:
        return self.v1


def _example_level(epsilon: float, n: int, seed: int):
    L = epsilon ** -0.25
    h = 2 * L / (n + 1)
    y = -L + h * np.arange(1, n + 1)
    main = 2.0 / h ** 2 + y * y
    off = -np.ones(n - 1) / h ** 2
    A = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    pair = smallest_eigenpairs(A, sp.identity(n, format="csr"), 1, tol=1e-9, shift=0.0, seed=seed)[0]
    return L, y, pair


def solve_example_1d(epsilon: float, n: int = 2 ** 14, seed: int = 42,
                     extrapolate: bool = False) -> Example1D:
    """Ground pair of ``-v'' + y^2 v = mu v`` on ``|y| < eps^{-1/4}``, ``v = 0`` at the ends.

    ``n`` is the number of interior grid points.  ``v1`` is scaled to unit
    maximum and includes the boundary zeros, so ``sup_err`` compares the
    whole closed interval against ``exp(-y^2/2)``.  With ``extrapolate`` the
    value ``mu1`` from grids ``n`` and ``2n + 1`` is Richardson-extrapolated
    (the 3-point scheme has an ``O(h^2)`` bias that swamps ``mu1 - 1`` at
    small ``eps``).
    """
    if n < 1024:
        raise ValueError("n must be >= 1024")
    L, y, pair = _example_level(epsilon, n, seed)
    v = pair.vector / np.max(np.abs(pair.vector))
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    yy = np.concatenate([[-L], y, [L]])
    vv = np.concatenate([[0.0], v, [0.0]])
    sup_err = float(np.max(np.abs(vv - np.exp(-0.5 * yy * yy))))
    mu = pair.value
    mu_x = float("nan")
    if extrapolate:
        _, _, fine = _example_level(epsilon, 2 * n + 1, seed)
        mu_x = fine.value + (fine.value - mu) / 3.0
    return Example1D(epsilon, n, float(mu), 1.0 / epsilon + mu / math.sqrt(epsilon), yy, vv,
                     sup_err, math.exp(-0.5 / math.sqrt(epsilon)), float(mu_x))

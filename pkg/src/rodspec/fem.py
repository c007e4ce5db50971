"""P1 finite elements: stiffness, weighted mass, corrector loads, DOF maps.

Matrices are ``scipy.sparse`` CSR.  Assembly evaluates coefficients at
element centroids (one-point quadrature) and returns the system already
reduced to the free DOFs of a :class:`DofMap`: Dirichlet vertices are
removed and periodic slaves are folded into their masters via
``K_red = P^T K P``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .expr import Expr, as_expr
from .geometry import CoefficientSet
from .mesh import Tag, TriMesh

ELIMINATED = -1

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class DofMap:
    """Vertex-to-DOF map.

    ``dof[v]`` is the free DOF of vertex ``v`` or :data:`ELIMINATED`.
    Periodic slaves share the DOF of their master (alias chains have length 1
    because masters are never slaves).
    """

    dof: np.ndarray
    n_dofs: int

    @classmethod
    def identity(cls, n_vertices: int) -> "DofMap":
        return cls(np.arange(n_vertices), n_vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.dof)

    @property
    def eliminated(self) -> np.ndarray:
        return np.flatnonzero(self.dof == ELIMINATED)

    def prolongation(self) -> sp.csr_matrix:
        """``P`` with ``u_vertices = P @ u_dofs``."""
        keep = np.flatnonzero(self.dof != ELIMINATED)
        return sp.csr_matrix((np.ones(len(keep)), (keep, self.dof[keep])),
                             shape=(self.n_vertices, self.n_dofs))

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Vertex values from DOF values (eliminated vertices are zero)."""
        out = np.zeros(self.n_vertices)
        keep = self.dof != ELIMINATED
        out[keep] = np.asarray(u)[self.dof[keep]]
        return out

    def restrict(self, u_vertices: np.ndarray) -> np.ndarray:
        """DOF values from vertex values (takes the master's value)."""
        out = np.zeros(self.n_dofs)
        keep = np.flatnonzero(self.dof != ELIMINATED)
        out[self.dof[keep[::-1]]] = np.asarray(u_vertices)[keep[::-1]]
        return out


def make_dofmap(m: TriMesh, dirichlet=(), periodic: bool = False) -> DofMap:
    """Build a DOF map with Dirichlet elimination and optional periodicity.

    Raises
    ------
    AssemblyError
        If a vertex is both Dirichlet and part of a periodic pair.
    """
    nv = m.n_vertices
    status = np.arange(nv)
    elim = m.tagged_vertices(*dirichlet) if dirichlet else np.zeros(0, np.int64)
    if periodic and len(m.periodic_pairs):
        pp = m.periodic_pairs
        clash = np.intersect1d(elim, pp.ravel())
        if len(clash):
            raise AssemblyError(f"vertex {int(clash[0])} is both Dirichlet and periodic")
        if np.intersect1d(pp[:, 0], pp[:, 1]).size:
            raise AssemblyError("periodic alias chain longer than one")
        status[pp[:, 1]] = pp[:, 0]
    status[elim] = ELIMINATED
    owners = np.flatnonzero(status == np.arange(nv))
    number = -np.ones(nv, dtype=np.int64)
    number[owners] = np.arange(len(owners))
    dof = np.where(status == ELIMINATED, ELIMINATED, number[np.maximum(status, 0)])
    return DofMap(dof.astype(np.int64), len(owners))


def apply_dirichlet(m: TriMesh, tags) -> DofMap:
    return make_dofmap(m, dirichlet=tuple(tags))


def periodicify(m: TriMesh) -> DofMap:
    return make_dofmap(m, periodic=True)


# --- element geometry ------------------------------------------------------

def element_gradients(m: TriMesh):
    """Barycentric gradients ``(nt, 3, 2)`` and areas ``(nt,)``.

    Raises
    ------
    AssemblyError
        On a singular (zero or negative area) element.
    """
    p = m.vertices[m.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(det <= 0):
        bad = int(np.flatnonzero(det <= 0)[0])
        raise AssemblyError(f"singular element Jacobian in triangle {bad}")
    g = np.empty(p.shape)
    g[:, 0, 0] = y[:, 1] - y[:, 2]
    g[:, 1, 0] = y[:, 2] - y[:, 0]
    g[:, 2, 0] = y[:, 0] - y[:, 1]
    g[:, 0, 1] = x[:, 2] - x[:, 1]
    g[:, 1, 1] = x[:, 0] - x[:, 2]
    g[:, 2, 1] = x[:, 1] - x[:, 0]
    g /= det[:, None, None]
    return g, 0.5 * det


def element_coordinates(m: TriMesh, x1_context=None, points=None):
    """``(x1, y1, y2)`` at element centroids (or given per-element points)."""
    pts = m.centroids() if points is None else points
    if m.kind == "cell":
        x1 = m.x1 if x1_context is None else x1_context
        return np.full(len(pts), float(x1)), pts[:, 0].copy(), pts[:, 1].copy()
    n_half = (len(m.cell_slices) - 1) // 2
    return m.local_coordinates(pts, cell=m.tri_cell - n_half)


def element_values(m: TriMesh, field, x1_context=None) -> np.ndarray:
    """Centroid values of an expression (or pass-through of an element array)."""
    if field is None:
        return np.ones(m.n_triangles)
    if isinstance(field, np.ndarray):
        if field.shape != (m.n_triangles,):
            raise ValueError("element array has the wrong length")
        return field.astype(float)
    e = as_expr(field)
    x1, y1, y2 = element_coordinates(m, x1_context)
    return np.broadcast_to(e(x1=x1, y1=y1, y2=y2), (m.n_triangles,)).astype(float)


def element_tensor(m: TriMesh, coeffs: CoefficientSet, x1_context=None):
    x1, y1, y2 = element_coordinates(m, x1_context)
    return coeffs.matrix(x1, y1, y2)


def _scatter(m: TriMesh, Ke: np.ndarray, dofs: DofMap | None) -> sp.csr_matrix:
    t = m.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = m.n_vertices
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    if dofs is not None:
        P = dofs.prolongation()
        A = (P.T @ A @ P).tocsr()
    # exact symmetry and no stored zeros
    A = (0.5 * (A + A.T)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def assemble_stiffness(m: TriMesh, coeffs: CoefficientSet, x1_context=None,
                       dofs: DofMap | None = None, weight=None, tensor=None) -> sp.csr_matrix:
    """Stiffness matrix of ``-div(w a grad u)``.

    Parameters
    ----------
    weight : optional per-element multiplier (e.g. ``p1**2``).
    tensor : optional precomputed ``(a11, a12, a22)`` element arrays.
    """
    g, area = element_gradients(m)
    a11, a12, a22 = element_tensor(m, coeffs, x1_context) if tensor is None else tensor
    w = area * (1.0 if weight is None else element_values(m, weight, x1_context))
    ag0 = a11[:, None] * g[:, :, 0] + a12[:, None] * g[:, :, 1]
    ag1 = a12[:, None] * g[:, :, 0] + a22[:, None] * g[:, :, 1]
    Ke = w[:, None, None] * (ag0[:, :, None] * g[:, None, :, 0] + ag1[:, :, None] * g[:, None, :, 1])
    return _scatter(m, Ke, dofs)


def assemble_mass(m: TriMesh, weight=None, x1_context=None, dofs: DofMap | None = None) -> sp.csr_matrix:
    """Consistent P1 mass matrix with a centroid weight (``None`` means one)."""
    _, area = element_gradients(m)
    wv = element_values(m, weight, x1_context)
    if np.any(wv < 0):
        warnings.warn(f"negative mass weight on {int(np.sum(wv < 0))} elements", RuntimeWarning)
    Ke = (area * wv)[:, None, None] * _MASS_REF[None]
    return _scatter(m, Ke, dofs)


def assemble_corrector_rhs(m: TriMesh, coeffs: CoefficientSet, k: int, x1_context=None,
                           dofs: DofMap | None = None, weight=None, tensor=None) -> np.ndarray:
    """Load ``b[phi] = -int w a_{ik} d_i phi`` of the cell problem for axis ``k``."""
    if k not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    g, area = element_gradients(m)
    a11, a12, a22 = element_tensor(m, coeffs, x1_context) if tensor is None else tensor
    col = (a11, a12) if k == 1 else (a12, a22)
    w = area * (1.0 if weight is None else element_values(m, weight, x1_context))
    be = -w[:, None] * (col[0][:, None] * g[:, :, 0] + col[1][:, None] * g[:, :, 1])
    b = np.bincount(m.triangles.ravel(), weights=be.ravel(), minlength=m.n_vertices)
    if dofs is not None:
        b = dofs.prolongation().T @ b
    return b


def assemble_load(m: TriMesh, f, dofs: DofMap | None = None) -> np.ndarray:
    """Load vector ``int f phi`` with the edge-midpoint rule; ``f(points)`` in mesh coordinates."""
    _, area = element_gradients(m)
    p = m.vertices[m.triangles]
    mids = [0.5 * (p[:, 0] + p[:, 1]), 0.5 * (p[:, 1] + p[:, 2]), 0.5 * (p[:, 2] + p[:, 0])]
    fm = [np.asarray(f(q), dtype=float) for q in mids]
    # basis values at midpoints: phi_i = 1/2 on the two edges touching vertex i
    be = np.stack([0.5 * (fm[0] + fm[2]), 0.5 * (fm[0] + fm[1]), 0.5 * (fm[1] + fm[2])], axis=1)
    be *= (area / 3.0)[:, None]
    b = np.bincount(m.triangles.ravel(), weights=be.ravel(), minlength=m.n_vertices)
    if dofs is not None:
        b = dofs.prolongation().T @ b
    return b


def l2_error(m: TriMesh, u_vertices: np.ndarray, exact) -> float:
    """``||u_h - exact||_{L2}`` with the edge-midpoint rule (exact for quadratics)."""
    _, area = element_gradients(m)
    p = m.vertices[m.triangles]
    u = u_vertices[m.triangles]
    err = np.zeros(m.n_triangles)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        q = 0.5 * (p[:, i] + p[:, j])
        d = 0.5 * (u[:, i] + u[:, j]) - np.asarray(exact(q), dtype=float)
        err += d * d
    return float(np.sqrt(np.sum(err * area / 3.0)))

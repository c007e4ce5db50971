"""Rod and cell geometry, averaged potential, and hypothesis checks.

The periodicity cell is ``[-1/2, 1/2) x (-w, w)`` in the fast variables
``(y1, y2)``; the perforated cell ``Y(x1)`` is where the level set
``F(x1, y1, y2)`` is strictly positive.  ``y1`` is always reduced into
``[-1/2, 1/2)`` before any field is evaluated, so periodicity holds by
construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .expr import Expr, as_expr

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FLATNESS_THRESHOLD = 1e-5


class GeometryError(ValueError):
    pass


class HypothesisViolation(ValueError):
    """A structural assumption on the coefficients or geometry fails.

    ``witness`` carries the offending sample point when one exists.
    """

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message if witness is None else f"{message} at {tuple(witness)}")


def reduce_y1(y1):
    """Map ``y1`` into ``[-1/2, 1/2)`` (values already in range are returned unchanged)."""
    y1 = np.asarray(y1, dtype=float)
    inside = (y1 >= -0.5) & (y1 < 0.5)
    return np.where(inside, y1, np.mod(y1 + 0.5, 1.0) - 0.5)


@dataclass(frozen=True)
class CrossSection:
    half_width: float = 0.5

    def __post_init__(self):
        if not self.half_width > 0:
            raise GeometryError("cross-section half width must be positive")

    @property
    def measure(self) -> float:
        return 2.0 * self.half_width


@dataclass(frozen=True)
class CellGeometry:
    F: Expr
    cross_section: CrossSection = field(default_factory=CrossSection)
    hole_present: bool = True

    def __post_init__(self):
        object.__setattr__(self, "F", as_expr(self.F))

    @property
    def half_width(self) -> float:
        return self.cross_section.half_width

    @property
    def cell_area(self) -> float:
        """``|□|`` (the y1 period is 1)."""
        return self.cross_section.measure

    @property
    def depends_on_x1(self) -> bool:
        return self.hole_present and "x1" in self.F.variables

    def level(self, x1, y1, y2):
        """Level-set values; with no hole the cell is everywhere "outside"."""
        y1 = reduce_y1(y1)
        shape = np.broadcast(np.asarray(x1), y1, np.asarray(y2)).shape
        if not self.hole_present:
            return np.ones(shape)
        return np.broadcast_to(self.F(x1=x1, y1=y1, y2=y2), shape).astype(float)

    def level_gradient(self, x1, y1, y2, step: float = 1e-6):
        """Central-difference ``grad_y F``."""
        y1 = reduce_y1(y1)
        shape = np.broadcast(np.asarray(x1), y1, np.asarray(y2)).shape
        if not self.hole_present:
            return np.zeros(shape), np.zeros(shape)
        # difference the expression itself so the stencil never wraps across the seam
        F = lambda a, b: np.broadcast_to(self.F(x1=x1, y1=a, y2=b), shape).astype(float)
        g1 = (F(y1 + step, y2) - F(y1 - step, y2)) / (2 * step)
        g2 = (F(y1, y2 + step) - F(y1, y2 - step)) / (2 * step)
        return g1, g2


@dataclass(frozen=True)
class RodGeometry:
    """Rod with ``2 N + 1`` cells, so that ``epsilon = 1/(2N+1)``."""

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise GeometryError("N_cells must be an integer >= 1")

    @property
    def epsilon(self) -> float:
        return 1.0 / (2 * self.n_cells + 1)

    @property
    def cell_count(self) -> int:
        return 2 * self.n_cells + 1

    @property
    def cell_centers(self) -> np.ndarray:
        """Slow-variable midpoints ``epsilon * j``, ``j = -N..N``."""
        return self.epsilon * np.arange(-self.n_cells, self.n_cells + 1)

    interval = (-0.5, 0.5)


@dataclass(frozen=True)
class CoefficientSet:
    a11: Expr
    a12: Expr
    a22: Expr
    c: Expr
    ellipticity_floor: float = 1e-3

    def __post_init__(self):
        for name in ("a11", "a12", "a22", "c"):
            object.__setattr__(self, name, as_expr(getattr(self, name)))

    @classmethod
    def isotropic(cls, a="1", c="1", ellipticity_floor: float = 1e-3):
        return cls(a, "0", a, c, ellipticity_floor)

    def _shape(self, x1, y1, y2):
        return np.broadcast(np.asarray(x1, dtype=float), np.asarray(y1, dtype=float),
                            np.asarray(y2, dtype=float)).shape

    def matrix(self, x1, y1, y2):
        """Return ``(a11, a12, a22)`` broadcast to the sample shape (``a21 = a12``)."""
        y1 = reduce_y1(y1)
        shape = self._shape(x1, y1, y2)
        return tuple(np.broadcast_to(e(x1=x1, y1=y1, y2=y2), shape).astype(float)
                     for e in (self.a11, self.a12, self.a22))

    def potential(self, x1, y1, y2):
        y1 = reduce_y1(y1)
        return np.broadcast_to(self.c(x1=x1, y1=y1, y2=y2), self._shape(x1, y1, y2)).astype(float)

    def shifted(self, dc: float) -> "CoefficientSet":
        """Same coefficients with ``c + dc``."""
        c = as_expr(f"({self.c.pretty()}) + ({float(dc)!r})")
        return CoefficientSet(self.a11, self.a12, self.a22, c, self.ellipticity_floor)

    def scaled(self, alpha: float) -> "CoefficientSet":
        """Same potential with the diffusion matrix multiplied by ``alpha``."""
        s = lambda e: as_expr(f"({float(alpha)!r}) * ({e.pretty()})")
        return CoefficientSet(s(self.a11), s(self.a12), s(self.a22), self.c,
                              self.ellipticity_floor * alpha)


@dataclass(frozen=True)
class PotentialProfile:
    x1_min: float
    cbar_min: float
    cbar_curvature: float
    flatness_order: int = 2
    boundary_min: bool = False
    leading_derivative: float = float("nan")

    @property
    def boundary_side(self) -> int:
        """+1 if the minimum sits at x1 = -1/2 (rod lies to its right), -1 at +1/2."""
        if not self.boundary_min:
            return 0
        return 1 if self.x1_min < 0 else -1

    @property
    def leading_coefficient(self) -> float:
        """``c̄^(k)(x1_min) / k!`` for flatness order ``k``."""
        return self.leading_derivative / math.factorial(self.flatness_order)


def chi(geom: CellGeometry, x1, y) -> np.ndarray:
    """Indicator of the perforated cell, 1 iff ``F > 0`` (0 on the level set)."""
    y = np.asarray(y, dtype=float)
    return (geom.level(x1, y[..., 0], y[..., 1]) > 0).astype(int)


def _quad_grid(geom: CellGeometry, quad_n: int):
    w = geom.half_width
    s1 = (np.arange(quad_n) + 0.5) / quad_n - 0.5
    s2 = -w + (np.arange(quad_n) + 0.5) * (2 * w / quad_n)
    Y1, Y2 = np.meshgrid(s1, s2, indexing="ij")
    return Y1, Y2, (1.0 / quad_n) * (2 * w / quad_n)


def _coverage(geom: CellGeometry, x1, quad_n: int):
    """Smoothed indicator samples on the midpoint grid, shape ``(len(x1), n, n)``.

    The sharp indicator is replaced by an erf ramp over one quadrature spacing
    of the signed distance ``F/|grad F|``.  The ramp is odd about the level set,
    so the area stays second-order accurate, and the samples vary smoothly with
    ``x1`` (needed for finite differences of the averaged potential).
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    Y1, Y2, dA = _quad_grid(geom, quad_n)
    if not geom.hole_present:
        return np.ones((x1.size,) + Y1.shape), Y1, Y2, dA
    spacing = min(1.0 / quad_n, 2 * geom.half_width / quad_n)
    X = x1[:, None, None]
    phi = geom.level(X, Y1[None], Y2[None])
    g1, g2 = np.gradient(phi, 1.0 / quad_n, 2 * geom.half_width / quad_n, axis=(1, 2))
    grad = np.sqrt(g1 * g1 + g2 * g2)
    dist = phi / np.maximum(grad, 1e-14)
    cov = 0.5 * (1.0 + erf(dist / (0.5 * spacing)))
    return cov, Y1, Y2, dA


def cell_measure(geom: CellGeometry, x1, quad_n: int = 512):
    """Measure ``|Y(x1)|`` of the perforated cell by midpoint quadrature.

    ``x1`` may be a scalar or an array of slices.
    """
    if quad_n < 32:
        raise ValueError("quad_n must be >= 32")
    scalar = np.ndim(x1) == 0
    out = np.empty(np.size(x1))
    for s, chunk in _chunks(np.atleast_1d(x1), quad_n):
        cov, _, _, dA = _coverage(geom, chunk, quad_n)
        out[s] = cov.sum(axis=(1, 2)) * dA
    return float(out[0]) if scalar else out


def cbar(geom: CellGeometry, coeffs: CoefficientSet, x1, quad_n: int = 512):
    """Average of ``c(x1, .)`` over ``Y(x1)``."""
    if quad_n < 32:
        raise ValueError("quad_n must be >= 32")
    scalar = np.ndim(x1) == 0
    xs = np.atleast_1d(np.asarray(x1, dtype=float))
    out = np.empty(xs.size)
    for s, chunk in _chunks(xs, quad_n):
        cov, Y1, Y2, dA = _coverage(geom, chunk, quad_n)
        cvals = coeffs.potential(chunk[:, None, None], Y1[None], Y2[None])
        meas = cov.sum(axis=(1, 2))
        if np.any(meas * dA <= 0):
            raise GeometryError("degenerate perforated cell: measure <= 0")
        out[s] = (cov * cvals).sum(axis=(1, 2)) / meas
    return float(out[0]) if scalar else out


def _chunks(xs, quad_n, budget=4_000_000):
    step = max(1, budget // (quad_n * quad_n))
    for i in range(0, xs.size, step):
        yield slice(i, min(i + step, xs.size)), xs[i:i + step]


# --- minimisation of the averaged potential -------------------------------

def _central_derivative(f, x, order: int, h: float) -> float:
    """Central finite-difference estimate of the ``order``-th derivative."""
    stencils = {
        2: ([-1, 0, 1], [1, -2, 1]),
        4: ([-2, -1, 0, 1, 2], [1, -4, 6, -4, 1]),
        6: ([-3, -2, -1, 0, 1, 2, 3], [1, -6, 15, -20, 15, -6, 1]),
        8: ([-4, -3, -2, -1, 0, 1, 2, 3, 4], [1, -8, 28, -56, 70, -56, 28, -8, 1]),
    }
    offsets, weights = stencils[order]
    vals = f(x + h * np.asarray(offsets, dtype=float))
    return float(np.dot(weights, vals) / h**order)


def minimize_cbar(geom: CellGeometry, coeffs: CoefficientSet, quad_n: int = 256,
                  samples: int = 1024, coarse_quad_n: int = 64) -> PotentialProfile:
    """Locate the global minimum of the averaged potential on ``[-1/2, 1/2]``.

    Dense sampling on a coarse quadrature brackets every local minimum; each
    bracket is refined by golden section with the accurate quadrature and
    polished by Newton steps on central differences.  The flatness order is
    the first even derivative whose central-difference estimate exceeds
    ``1e-5 * max(1, |c̄_min|)``.

    Raises
    ------
    HypothesisViolation
        If the minimum is not unique or the curvature is not positive.
    """
    f = lambda x: cbar(geom, coeffs, x, quad_n)
    xs = np.linspace(-0.5, 0.5, samples)
    coarse = cbar(geom, coeffs, xs, coarse_quad_n)

    # local minima of the sampled profile, plateaus collapsed to one index
    idx = [i for i in range(samples)
           if (i == 0 or coarse[i] <= coarse[i - 1]) and (i == samples - 1 or coarse[i] < coarse[i + 1])]
    idx.sort(key=lambda i: coarse[i])
    candidates = []
    for i in idx[:4]:
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, samples - 1)]
        x = _golden(f, lo, hi, 1e-10)
        candidates.append((f(x), x))
    candidates.sort()
    fmin, xmin = candidates[0]
    scale = max(1.0, abs(fmin))
    spacing = xs[1] - xs[0]
    for fv, xv in candidates[1:]:
        if fv - fmin <= 1e-9 * scale and abs(xv - xmin) > 3 * spacing:
            raise HypothesisViolation("averaged potential has no unique global minimum",
                                      witness=(xmin, xv))

    eps = np.finfo(float).eps
    h2 = max(1e-4, eps ** 0.25)
    curvature = _central_derivative(f, xmin, 2, h2)
    # Newton polish on the central-difference gradient (golden section alone is
    # limited to ~sqrt(eps) in the argument)
    if curvature > FLATNESS_THRESHOLD * scale:
        for _ in range(3):
            grad = (f(xmin + h2) - f(xmin - h2)) / (2 * h2)
            step = grad / curvature
            if abs(step) > spacing:
                break
            xmin = float(np.clip(xmin - step, -0.5, 0.5))
        fmin = f(xmin)
        curvature = _central_derivative(f, xmin, 2, h2)

    boundary = abs(abs(xmin) - 0.5) <= 1e-6
    if boundary:
        xmin = math.copysign(0.5, xmin)
        fmin = f(xmin)

    order, derivative = 2, curvature
    for k in (2, 4, 6, 8):
        hk = h2 if k == 2 else max(10.0 ** (-8.0 / (k + 2)), eps ** (1.0 / (k + 2)))
        derivative = curvature if k == 2 else _central_derivative(f, xmin, k, hk)
        if abs(derivative) > FLATNESS_THRESHOLD * scale:
            order = k
            break
    else:
        raise HypothesisViolation("averaged potential is flat to 8th order at its minimum",
                                  witness=(xmin,))
    if derivative <= 0:
        raise HypothesisViolation(
            f"nonpositive leading derivative (order {order}) at the minimum", witness=(xmin,))
    return PotentialProfile(x1_min=float(xmin), cbar_min=float(fmin),
                            cbar_curvature=float(curvature), flatness_order=order,
                            boundary_min=bool(boundary), leading_derivative=float(derivative))


def _golden(f, a: float, b: float, tol: float) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # endpoints are admissible minimisers (boundary minimum)
    best = min((f(a), a), (f(b), b), ((fc, c) if fc <= fd else (fd, d)))
    return float(best[1])


# --- hypotheses -------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""
    witness: tuple | None = None


@dataclass
class HypothesisReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def lines(self):
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = "" if c.witness is None else f" witness={tuple(round(float(v), 6) for v in c.witness)}"
            yield f"{c.name:<24s} {status} {c.detail}{extra}"


def _first_witness(mask, *grids):
    i = np.flatnonzero(mask.ravel())[0]
    return tuple(float(g.ravel()[i]) for g in grids)


def validate_hypotheses(geom: CellGeometry, coeffs: CoefficientSet, n: int = 64) -> HypothesisReport:
    """Sampled checks of the structural assumptions.

    Never raises for a violated hypothesis; each failure is reported with the
    first offending sample point ``(x1, y1, y2)``.
    """
    w = geom.half_width
    x1 = np.linspace(-0.5, 0.5, n)
    y1 = np.linspace(-0.5, 0.5, n, endpoint=False)
    y2 = np.linspace(-w, w, n)
    X1, Y1, Y2 = np.meshgrid(x1, y1, y2, indexing="ij")
    checks = []

    try:
        a11, a12, a22 = coeffs.matrix(X1, Y1, Y2)
        c = coeffs.potential(X1, Y1, Y2)
    except Exception as exc:  # evaluation errors are hypothesis failures here
        checks.append(HypothesisCheck("H1:coefficients", False, f"evaluation failed: {exc}"))
        return HypothesisReport(checks)

    finite = np.isfinite(a11) & np.isfinite(a12) & np.isfinite(a22) & np.isfinite(c)
    if not finite.all():
        checks.append(HypothesisCheck("H1:bounded", False, "non-finite coefficient",
                                      _first_witness(~finite, X1, Y1, Y2)))
    else:
        checks.append(HypothesisCheck("H1:bounded", True, "coefficients finite on samples"))
    bad = ~(c > 0)
    checks.append(HypothesisCheck("H1:positive-potential", not bad.any(), "c > 0 on samples",
                                  _first_witness(bad, X1, Y1, Y2) if bad.any() else None))
    # smoothness proxy: bounded second differences in x1
    if finite.all() and n >= 3:
        d2 = np.abs(np.diff(c, 2, axis=0)) / (x1[1] - x1[0]) ** 2
        checks.append(HypothesisCheck("H1:smoothness-proxy", bool(np.isfinite(d2).all()),
                                      f"max |d2c/dx1^2| ~ {float(d2.max()):.3g}"))

    tr = 0.5 * (a11 + a22)
    disc = np.sqrt(0.25 * (a11 - a22) ** 2 + a12 ** 2)
    lam_min = tr - disc
    bad = ~(lam_min >= coeffs.ellipticity_floor)
    checks.append(HypothesisCheck(
        "H2:ellipticity", not bad.any(),
        f"min eigenvalue {float(np.nanmin(lam_min)):.4g} vs floor {coeffs.ellipticity_floor:g}",
        _first_witness(bad, X1, Y1, Y2) if bad.any() else None))

    if geom.hole_present:
        F0 = geom.level(x1, 0.0, 0.0)
        bad = ~(F0 < 0)
        checks.append(HypothesisCheck("H1:hole-contains-origin", not bad.any(), "F(x1,0,0) < 0",
                                      (float(x1[bad][0]), 0.0, 0.0) if bad.any() else None))
        XF, YF = np.meshgrid(x1, y2, indexing="ij")
        Ff = geom.level(XF, -0.5, YF)
        bad = ~(Ff > 0)
        checks.append(HypothesisCheck(
            "H1:face-positivity", not bad.any(), "F(x1, +-1/2, y2) > 0",
            (float(XF[bad][0]), -0.5, float(YF[bad][0])) if bad.any() else None))

    try:
        profile = minimize_cbar(geom, coeffs)
        detail = (f"min at x1={profile.x1_min:.6g}, c̄={profile.cbar_min:.6g}, "
                  f"order {profile.flatness_order}, c̄''={profile.cbar_curvature:.6g}"
                  + (", boundary minimum" if profile.boundary_min else ""))
        checks.append(HypothesisCheck("H3:unique-minimum", True, detail))
    except (HypothesisViolation, GeometryError) as exc:
        checks.append(HypothesisCheck("H3:unique-minimum", False, str(exc),
                                      getattr(exc, "witness", None)))
    return HypothesisReport(checks)

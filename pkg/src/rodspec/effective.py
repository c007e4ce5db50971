"""One-dimensional limit problems.

* harmonic oscillator ``-a v'' + (1/2) c'' z^2 v = nu v`` on the line, in
  closed form (Hermite functions) and by finite differences;
* the flat-minimum oscillator with potential ``b z^k``;
* the half-line oscillator (boundary minimum) with a Dirichlet wall at 0;
* the oscillator with a constant shift (``c_eff``) of the large-potential case;
* the Sturm--Liouville problem on ``I = (-1/2, 1/2)`` of the bounded-potential case.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .eigensolve import smallest_eigenpairs

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

N_START = 255
N_MAX = 2 ** 15
CONV_TOL = 1e-8
BOUNDARY_MASS_TOL = 1e-8


class EffectiveError(RuntimeError):
    pass


class Kind(enum.Enum):
    OSC_K2 = "osc_k2"
    OSC_FLAT_K = "osc_flat_k"
    OSC_HALFLINE = "osc_halfline"
    SL_BETA0 = "sl_beta0"
    OSC_BETA2 = "osc_beta2"


@dataclass(frozen=True)
class EffectiveModel:
    """Limit oscillator ``-a v'' + (shift + coefficient |z|^k) v = nu v``.

    For ``k = 2`` the coefficient is ``curvature / 2``.  ``side = +1`` puts the
    half-line at ``z > 0`` (minimum at the left rod end), ``-1`` at ``z < 0``.
    """

    kind: Kind
    a_eff: float
    curvature: float = float("nan")
    flatness: int = 2
    coefficient: float = float("nan")
    shift: float = 0.0
    side: int = 1
    L: float | None = None
    n: int | None = None

    def __post_init__(self):
        if not self.a_eff > 0:
            raise ValueError("a_eff must be positive")
        if self.flatness % 2 or self.flatness < 2:
            raise ValueError("flatness order must be even and >= 2")
        if math.isnan(self.coefficient):
            if math.isnan(self.curvature):
                raise ValueError("give the curvature or the leading coefficient")
            object.__setattr__(self, "coefficient", 0.5 * self.curvature)
        if not self.coefficient > 0:
            raise ValueError("potential coefficient must be positive")
        if self.L is not None and not self.L > 0:
            raise ValueError("truncation L must be positive")

    @classmethod
    def oscillator(cls, a_eff, curvature, **kw):
        return cls(Kind.OSC_K2, a_eff, curvature=curvature, **kw)

    @classmethod
    def flat(cls, a_eff, k: int, coefficient: float, **kw):
        return cls(Kind.OSC_FLAT_K, a_eff, flatness=k, coefficient=coefficient, **kw)

    @classmethod
    def halfline(cls, a_eff, curvature, side: int = 1, **kw):
        return cls(Kind.OSC_HALFLINE, a_eff, curvature=curvature, side=side, **kw)

    @classmethod
    def beta2(cls, a_eff_w, lambda1_curvature, c_eff, **kw):
        return cls(Kind.OSC_BETA2, a_eff_w, curvature=lambda1_curvature, shift=c_eff, **kw)

    @property
    def theta(self) -> float:
        return self.coefficient / self.a_eff  # = c''/(2a) for k = 2

    def potential(self, z):
        return self.shift + self.coefficient * np.abs(z) ** self.flatness

    def default_L(self, j_max: int) -> float:
        if self.flatness == 2:
            return 12.0 * self.theta ** -0.25
        k = self.flatness
        nu_est = 2.0 * j_max ** (2.0 * k / (k + 2)) * self.a_eff ** (k / (k + 2.0)) \
            * self.coefficient ** (2.0 / (k + 2))
        return float((50.0 * nu_est / self.coefficient) ** (1.0 / k))


@dataclass
class EffectiveEigenPair:
    """Eigenpair with ``int v^2 = 1``; ``v`` is sampled on ``z`` (zero outside)."""

    nu: float
    z: np.ndarray
    v: np.ndarray
    closed_form: Callable | None = field(default=None, repr=False)
    index: int = 1

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.closed_form is not None:
            return self.closed_form(z)
        return np.interp(z, self.z, self.v, left=0.0, right=0.0)

    def l2_norm(self) -> float:
        return float(np.sqrt(_trapezoid(self.v ** 2, self.z)))


# --- Hermite closed form -----------------------------------------------------

def hermite_coefficients(n: int) -> list:
    """Integer coefficients (ascending powers) of the physicists' ``H_n``."""
    prev, cur = [1], [0, 2]
    if n == 0:
        return prev
    for m in range(1, n):
        nxt = [0] * (m + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += 2 * c
        for i, c in enumerate(prev):
            nxt[i] -= 2 * m * c
        prev, cur = cur, nxt
    return cur


def gaussian_moment(power: int) -> Fraction:
    """``int s^p e^{-s^2} ds / sqrt(pi)`` as an exact rational."""
    if power % 2:
        return Fraction(0)
    m = Fraction(1)
    for i in range(1, power // 2 + 1):
        m *= Fraction(2 * i - 1, 2)
    return m


def hermite_norm_squared(n: int) -> Fraction:
    """``int H_n(s)^2 e^{-s^2} ds / sqrt(pi)`` from the coefficients and exact moments."""
    c = hermite_coefficients(n)
    total = Fraction(0)
    for i, ci in enumerate(c):
        if ci == 0:
            continue
        for j, cj in enumerate(c):
            if cj:
                total += ci * cj * gaussian_moment(i + j)
    return total


def _hermite_values(n: int, s: np.ndarray) -> np.ndarray:
    h0 = np.ones_like(s)
    if n == 0:
        return h0
    h1 = 2 * s
    for m in range(1, n):
        h0, h1 = h1, 2 * s * h1 - 2 * m * h0
    return h1


def _sign_for(values: np.ndarray) -> float:
    """Sign making ``v > 0`` at the first point where ``|v| > max|v|/2``."""
    a = np.abs(values)
    i = int(np.argmax(a > 0.5 * a.max()))
    return 1.0 if values[i] >= 0 else -1.0


def hermite_eigenpairs(a_eff: float, curvature: float, j_max: int, shift: float = 0.0,
                       n_plot: int = 801) -> list:
    """Exact eigenpairs of ``-a v'' + (shift + c'' z^2 / 2) v = nu v``.

    ``nu_j = shift + (2j - 1) sqrt(a c'' / 2)`` and
    ``v_j(z) ∝ H_{j-1}(theta^{1/4} z) exp(-sqrt(theta) z^2 / 2)``,
    ``theta = c'' / (2a)``.
    """
    if not (a_eff > 0 and curvature > 0):
        raise ValueError("a_eff and curvature must be positive")
    theta = curvature / (2.0 * a_eff)
    q = theta ** 0.25
    omega = math.sqrt(a_eff * curvature / 2.0)
    zmax = 12.0 / q
    z = np.linspace(-zmax, zmax, n_plot)
    out = []
    for j in range(1, j_max + 1):
        n = j - 1
        # ||v||^2 = sqrt(pi) * N_n / theta^{1/4}
        norm = math.sqrt(math.sqrt(math.pi) * float(hermite_norm_squared(n)) / q)

        def v(zz, n=n, norm=norm, sign=1.0):
            s = q * np.asarray(zz, dtype=float)
            return sign * _hermite_values(n, s) * np.exp(-0.5 * s * s) / norm

        sign = _sign_for(v(z))
        f = (lambda zz, v=v, sign=sign: sign * v(zz))
        nu = shift + (2 * j - 1) * omega
        out.append(EffectiveEigenPair(float(nu), z, f(z), closed_form=f, index=j))
    return out


def closed_form_nu(model: EffectiveModel, j: int) -> float:
    """Closed-form ``nu_j`` where one exists (quadratic potentials)."""
    omega = math.sqrt(model.a_eff * model.coefficient)  # sqrt(a c''/2)
    if model.kind in (Kind.OSC_K2, Kind.OSC_BETA2):
        return model.shift + (2 * j - 1) * omega
    if model.kind is Kind.OSC_HALFLINE:
        return model.shift + (4 * j - 1) * omega
    raise ValueError(f"no closed form for {model.kind}")


# --- finite differences --------------------------------------------------------

def _fdm_level(model: EffectiveModel, L: float, n: int, j_max: int, seed: int = 42):
    if model.kind is Kind.OSC_HALFLINE:
        h = L / (n + 1)
        z = h * np.arange(1, n + 1)
        if model.side < 0:
            z = -z[::-1]
    else:
        h = 2 * L / (n + 1)
        z = -L + h * np.arange(1, n + 1)
    main = 2 * model.a_eff / h ** 2 + model.potential(z)
    off = -model.a_eff / h ** 2 * np.ones(n - 1)
    A = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    floor = float(np.min(model.potential(z)))
    pairs = smallest_eigenpairs(A, sp.identity(n, format="csr"), j_max,
                                shift=floor - 1e-3 * max(1.0, abs(floor)), seed=seed)
    return z, h, pairs


def _boundary_mass(z, v, h, L) -> float:
    return float(np.sum(v[np.abs(z) > 0.9 * L] ** 2) * h)


def solve_oscillator_fdm(model: EffectiveModel, j_max: int, seed: int = 42) -> list:
    """Truncated 3-point FDM with Richardson extrapolation over grid doubling.

    Grids ``n -> 2n + 1`` halve the spacing exactly; the Richardson table is
    advanced until the extrapolated ``nu_j`` change by less than ``1e-8``
    (relative) or ``n`` would exceed ``2^15``.  Eigenfunctions come from the
    finest grid.

    Raises
    ------
    EffectiveError
        If the eigenfunction mass near the truncation boundary exceeds
        ``1e-8`` even after doubling ``L`` once, or the values do not settle.
    """
    if model.kind is Kind.SL_BETA0:
        raise ValueError("use solve_sturm_liouville_beta0 for the bounded-potential case")
    L = model.L if model.L is not None else model.default_L(j_max)
    for attempt in range(2):
        result = _richardson(model, L, j_max, seed)
        z, h, pairs, nus, converged = result
        vs = []
        worst = 0.0
        for p in pairs:
            v = p.vector / math.sqrt(h * float(p.vector @ p.vector))
            vs.append(v)
            worst = max(worst, _boundary_mass(z, v, h, L))
        if worst <= BOUNDARY_MASS_TOL:
            break
        if attempt == 1 or model.L is not None and attempt:
            raise EffectiveError(f"eigenfunction mass {worst:.2e} near the truncation boundary")
        L *= 2
    if not converged:
        raise EffectiveError("FDM eigenvalues did not converge up to n = 2^15")
    out = []
    for j, (nu, v) in enumerate(zip(nus, vs), start=1):
        zz, vv = _with_walls(model, z, v, L)
        vv = vv * _sign_for(vv)
        out.append(EffectiveEigenPair(float(nu), zz, vv, index=j))
    return out


def _with_walls(model, z, v, L):
    if model.kind is Kind.OSC_HALFLINE:
        if model.side > 0:
            return np.concatenate([[0.0], z, [L]]), np.concatenate([[0.0], v, [0.0]])
        return np.concatenate([[-L], z, [0.0]]), np.concatenate([[0.0], v, [0.0]])
    return np.concatenate([[-L], z, [L]]), np.concatenate([[0.0], v, [0.0]])


def _richardson(model, L, j_max, seed):
    n = model.n if model.n is not None else N_START
    table = []
    last = None
    converged = False
    while True:
        z, h, pairs = _fdm_level(model, L, n, j_max, seed)
        row = [np.array([p.value for p in pairs])]
        for m, prev in enumerate(table[-1] if table else [], start=1):
            row.append(row[m - 1] + (row[m - 1] - prev) / (4 ** m - 1))
            if m == len(table[-1]):
                break
        table.append(row)
        best = row[-1]
        if last is not None:
            change = np.max(np.abs(best - last) / np.maximum(np.abs(best), 1e-300))
            if change < CONV_TOL:
                converged = True
                break
        last = best
        if 2 * n + 1 > N_MAX:
            break
        n = 2 * n + 1
    return z, h, pairs, best, converged


# --- bounded potential: Sturm--Liouville on I ----------------------------------

def _profile(p, x):
    if callable(p):
        return np.broadcast_to(np.asarray(p(x), dtype=float), x.shape).astype(float)
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return np.full(x.shape, float(p))
    return p


def solve_sturm_liouville_beta0(a_eff_profile, cbar_profile, j_max: int, n: int = 2048,
                                weight_profile=None, seed: int = 42) -> list:
    """``-(rho a u')' + rho c̄ u = lam rho u`` on ``(-1/2, 1/2)``, ``u(+-1/2) = 0``.

    Profiles are callables of ``x1`` or constants; ``rho`` (default 1) is the
    cell measure ``|Y(x1)|``, which only matters when the holes vary along the
    rod.  Conservative 3-point scheme with ``a`` sampled at cell midpoints and
    ``n`` interior nodes.  Eigenvectors are normalised by ``h sum rho u^2 = 1``.
    """
    h = 1.0 / (n + 1)
    x = -0.5 + h * np.arange(1, n + 1)
    xm = -0.5 + h * (np.arange(n + 1) + 0.5)
    a_mid = _profile(a_eff_profile, xm)
    c = _profile(cbar_profile, x)
    if np.any(a_mid <= 0):
        raise EffectiveError("a_eff profile must be positive")
    rho_mid = np.ones(n + 1) if weight_profile is None else _profile(weight_profile, xm)
    rho = np.ones(n) if weight_profile is None else _profile(weight_profile, x)
    flux = rho_mid * a_mid / h ** 2
    main = flux[:-1] + flux[1:] + rho * c
    A = sp.diags([-flux[1:-1], main, -flux[1:-1]], [-1, 0, 1], format="csr")
    M = sp.diags(rho, format="csr")
    floor = float(np.min(c))
    pairs = smallest_eigenpairs(A, M, j_max, shift=floor - 1e-3 * max(1.0, abs(floor)), seed=seed)
    out = []
    for j, p in enumerate(pairs, start=1):
        u = p.vector / math.sqrt(h * float(p.vector @ (rho * p.vector)))
        zz = np.concatenate([[-0.5], x, [0.5]])
        uu = np.concatenate([[0.0], u, [0.0]])
        out.append(EffectiveEigenPair(float(p.value), zz, uu * _sign_for(uu), index=j))
    return out

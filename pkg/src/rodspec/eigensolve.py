"""Sparse symmetric generalised eigensolver ``K x = lam M x``.

The factorisation is SuperLU run in symmetric mode with diagonal pivoting
only (``diag_pivot_thresh=0``), i.e. ``P A P^T = L D L^T`` with ``U = D L^T``.
The signs of ``diag(U)`` give the inertia of ``A = K - sigma M`` (Sylvester),
used to choose the shift and to verify that no eigenvalue was missed.

Eigenpairs come from a Lanczos process on ``(K - sigma M)^{-1} M`` in the
``M`` inner product with full (two-pass) reorthogonalisation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

TINY_PIVOT = 1e-13
MAX_SHIFT_RETRIES = 5


class FactorizationError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals=None):
        self.residuals = residuals
        super().__init__(message)


def _norm_max(A) -> float:
    if sp.issparse(A):
        return float(abs(A).max()) if A.nnz else 0.0
    return float(np.max(np.abs(A))) if np.size(A) else 0.0


@dataclass
class Factor:
    """Symmetric factorisation of ``K - sigma M`` with inertia."""

    lu: object
    A: sp.csc_matrix
    sigma: float
    retries: int
    n_negative: int
    n_positive: int

    @property
    def inertia(self):
        return self.n_negative, 0, self.n_positive

    def solve(self, b: np.ndarray) -> np.ndarray:
        return factor_solve(self, b)


def _try_factor(A: sp.csc_matrix):
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:  # "Factor is exactly singular"
        return None, str(exc)
    d = lu.U.diagonal()
    scale = max(np.max(np.abs(d)), 1e-300)
    if not np.all(np.isfinite(d)) or np.min(np.abs(d)) <= TINY_PIVOT * scale:
        return None, "tiny pivot"
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None, "off-diagonal pivoting"
    return lu, ""


def ldlt_factor(K, M=None, sigma: float = 0.0) -> Factor:
    """Factor ``K - sigma M``; on a zero/tiny pivot move the shift down and retry.

    Each retry lowers ``sigma`` by ``1e-3 * ||K|| / ||M||`` (max-norms), at
    most five times.

    Raises
    ------
    FactorizationError
        If every attempt hits a tiny pivot.
    """
    K = sp.csc_matrix(K)
    n = K.shape[0]
    Mm = sp.identity(n, format="csc") if M is None else sp.csc_matrix(M)
    step = 1e-3 * _norm_max(K) / max(_norm_max(Mm), 1e-300)
    if step == 0:
        step = 1e-3
    s = float(sigma)
    reason = ""
    for attempt in range(MAX_SHIFT_RETRIES + 1):
        A = (K - s * Mm).tocsc() if s != 0 else K.copy()
        lu, reason = _try_factor(A)
        if lu is not None:
            d = lu.U.diagonal()
            if attempt:
                log.info("factorisation succeeded after %d shift retries (sigma=%g)", attempt, s)
            return Factor(lu, A, s, attempt, int(np.sum(d < 0)), int(np.sum(d > 0)))
        s -= step
    raise FactorizationError(f"factorisation failed after {MAX_SHIFT_RETRIES} shift retries: {reason}")


def factor_solve(F: Factor, b: np.ndarray) -> np.ndarray:
    """Solve with one step of iterative refinement."""
    b = np.asarray(b, dtype=float)
    x = F.lu.solve(b)
    r = b - F.A @ x
    x = x + F.lu.solve(r)
    return x


def inertia(K, M, sigma: float) -> int:
    """Number of eigenvalues of ``(K, M)`` strictly below ``sigma``."""
    return ldlt_factor(K, M, sigma).n_negative


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    multiple: bool = False


class EigenResult(list):
    """List of :class:`EigenPair` (ascending) with solver metadata."""

    sigma: float = 0.0
    seed: int = 0
    steps: int = 0
    multiple_pairs: tuple = ()


def relative_residual(K, M, lam: float, x: np.ndarray) -> float:
    Kx = K @ x
    Mx = M @ x
    den = np.linalg.norm(Kx) + abs(lam) * np.linalg.norm(Mx)
    return float(np.linalg.norm(Kx - lam * Mx) / max(den, 1e-300))


def attainable_residual(K, M, lam: float, x: np.ndarray, normK: float, normM: float) -> float:
    """Roundoff floor of :func:`relative_residual` for a vector stored in double precision."""
    den = np.linalg.norm(K @ x) + abs(lam) * np.linalg.norm(M @ x)
    return float(16 * np.finfo(float).eps * (normK + abs(lam) * normM) * np.linalg.norm(x)
                 / max(den, 1e-300))


def _row_norm(A) -> float:
    return float(abs(A).sum(axis=1).max()) if A.nnz else 0.0


def _accepted(K, M, vals, X, res, tol, norms):
    floors = np.array([attainable_residual(K, M, v, X[:, i], *norms) for i, v in enumerate(vals)])
    return res <= np.maximum(tol, floors)


def _m_orthogonalize(w, Q, MQ):
    if Q.shape[1]:
        for _ in range(2):
            w = w - Q @ (MQ.T @ w)
    return w


def _lanczos(F: Factor, K, M, want: int, tol: float, rng, locked, max_steps: int,
             start=None, norms=(1.0, 1.0)):
    """One Lanczos cycle; returns converged (values, vectors, residuals) and Ritz data."""
    n = K.shape[0]
    LQ = locked[0]
    LMQ = locked[1]
    cap = min(max_steps, n - LQ.shape[1])
    Q = np.zeros((n, 0))
    MQ = np.zeros((n, 0))
    alphas, betas = [], []
    v = rng.standard_normal(n) if start is None else np.asarray(start, float).copy()
    v = _m_orthogonalize(v, LQ, LMQ)
    Mv = M @ v
    nv = np.sqrt(max(v @ Mv, 0.0))
    if nv == 0:
        v = _m_orthogonalize(rng.standard_normal(n), LQ, LMQ)
        Mv = M @ v
        nv = np.sqrt(v @ Mv)
    v, Mv = v / nv, Mv / nv
    beta_prev = 0.0
    best = None
    used = 0
    for j in range(cap):
        Q = np.column_stack([Q, v])
        MQ = np.column_stack([MQ, Mv])
        w = F.solve(Mv)
        a = float(Mv @ w)
        w = w - a * v
        if j:
            w = w - beta_prev * Q[:, j - 1]
        w = _m_orthogonalize(w, LQ, LMQ)
        w = _m_orthogonalize(w, Q, MQ)
        Mw = M @ w
        b = float(np.sqrt(max(w @ Mw, 0.0)))
        alphas.append(a)
        used = j + 1
        kdim = j + 1
        exhausted = kdim == cap
        scale = max(abs(a), max(np.abs(alphas)))
        invariant = b <= 1e-12 * scale
        if invariant and not exhausted:
            # invariant subspace: continue with a fresh direction
            w = _m_orthogonalize(rng.standard_normal(n), LQ, LMQ)
            w = _m_orthogonalize(w, Q, MQ)
            Mw = M @ w
            nw = np.sqrt(max(w @ Mw, 0.0))
            betas.append(0.0)
            beta_prev = 0.0
            v, Mv = w / nw, Mw / nw
        else:
            betas.append(b)
            beta_prev = b
            if not exhausted:
                v, Mv = w / b, Mw / b
        check = exhausted or invariant or (kdim >= want and (kdim - want) % 5 == 0)
        if not check:
            continue
        theta, S = sla.eigh_tridiagonal(np.array(alphas), np.array(betas[:-1])) if kdim > 1 else \
            (np.array(alphas), np.ones((1, 1)))
        order = np.argsort(-theta)  # largest theta <-> eigenvalue closest above sigma
        take = order[:min(want, kdim)]
        vals = F.sigma + 1.0 / theta[take]
        X = Q @ S[:, take]
        res = np.array([relative_residual(K, M, lv, X[:, i]) for i, lv in enumerate(vals)])
        best = (vals, X, res, Q @ S[:, order[:min(want + 2, kdim)]])
        ritz_est = np.abs(b * S[-1, take]) / np.maximum(np.abs(theta[take]), 1e-300)
        if len(take) == want and np.all(theta[take] > 0) and (
                np.all(_accepted(K, M, vals, X, res, tol, norms)) or np.all(ritz_est <= 1e-13)
                or exhausted):
            return best, used, True
        if exhausted:
            break
    return best, used, False


def smallest_eigenpairs(K, M, count: int, tol: float = 1e-9, shift: float = 0.0, seed: int = 42,
                        deflate=None, max_steps: int = 500, restarts: int = 3,
                        verify: bool = True) -> EigenResult:
    """Return the ``count`` smallest eigenpairs of ``K x = lam M x``.

    Parameters
    ----------
    shift : initial shift ``sigma0``; it is lowered until ``K - sigma M`` has
        no negative pivots, so it only needs to be a guess from below.
    deflate : optional ``(n, p)`` array of known eigenvectors to project out
        in the ``M`` inner product (e.g. constants for a pure Neumann problem).
    verify : check with an inertia count that ``count`` eigenvalues (plus the
        deflated ones below) lie below the midpoint to the next Ritz value.

    Notes
    -----
    A pair is accepted when its relative residual is below ``tol`` or below
    the rounding floor :func:`attainable_residual` of the pair -- for badly
    conditioned pencils (fine 1D grids) ``tol`` itself can be unreachable in
    double precision.

    Raises
    ------
    ConvergenceError
        After ``restarts`` cycles of at most ``max_steps`` Lanczos steps.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if count < 1:
        raise ValueError("count must be >= 1")
    n_defl = 0 if deflate is None else np.atleast_2d(np.asarray(deflate).T).shape[0]
    if count > n - n_defl:
        raise ValueError("count exceeds the problem dimension")
    rng = np.random.default_rng(seed)
    scale = _norm_max(K) / max(_norm_max(M), 1e-300)

    sigma = float(shift)
    F = ldlt_factor(K, M, sigma)
    for _ in range(20):
        expected_below = 0 if deflate is None else _deflated_below(K, M, deflate, F.sigma)
        if F.n_negative - expected_below <= 0:
            break
        sigma = F.sigma - max(abs(F.sigma), 1e-3 * scale, 1e-12)
        F = ldlt_factor(K, M, sigma)
    else:
        raise ConvergenceError("could not place the shift below the spectrum")

    if deflate is None:
        LQ = np.zeros((n, 0))
    else:
        LQ = _m_orthonormal(np.asarray(deflate, float).reshape(n, -1), M)
    locked = (LQ, M @ LQ)

    norms = (_row_norm(K), _row_norm(M))
    total_steps = 0
    result = None
    start = None
    for cycle in range(restarts + 1):
        best, used, ok = _lanczos(F, K, M, count, tol, rng, locked, max_steps, start, norms)
        total_steps += used
        if ok:
            result = best
            break
        if best is not None:
            # restart from the combination of current Ritz vectors
            start = best[1].sum(axis=1)
            result = best
    else:
        res = None if result is None else result[2]
        raise ConvergenceError(
            f"Lanczos did not converge to tol={tol:g} in {restarts} restarts", residuals=res)

    vals, X, res, extra = result
    if not np.all(_accepted(K, M, vals, X, res, tol, norms)):
        vals, X, res, extra = _polish(F, K, M, vals, X, extra, locked, tol, norms)
        if not np.all(_accepted(K, M, vals, X, res, tol, norms)):
            raise ConvergenceError(
                f"eigenpairs did not reach tol={tol:g} (best residuals {np.max(res):.2e})",
                residuals=res)
    if verify and count + n_defl < n:
        # a single Krylov sequence sees one vector per eigenspace: if the inertia
        # count reveals missing eigenvalues (multiplicities), lock what was found
        # and search again from a fresh start vector
        for _ in range(restarts + 1):
            missing = _missing_count(K, M, vals, extra, count, deflate)
            if missing <= 0:
                break
            LQ2 = _m_orthonormal(np.column_stack([LQ, X]), M)
            want = min(missing, n - LQ2.shape[1])
            best, used, _ = _lanczos(F, K, M, want, tol, rng, (LQ2, M @ LQ2), max_steps, None, norms)
            total_steps += used
            if best is None:
                break
            v2, X2, r2, e2 = best
            if not np.all(_accepted(K, M, v2, X2, r2, tol, norms)):
                v2, X2, r2, e2 = _polish(F, K, M, v2, X2, e2, (LQ2, M @ LQ2), tol, norms)
            allv = np.concatenate([vals, v2])
            allX = np.column_stack([X, X2])
            allr = np.concatenate([res, r2])
            order = np.argsort(allv)
            keep, drop = order[:count], order[count:]
            extra = np.column_stack([allX[:, drop], e2, extra])
            vals, X, res = allv[keep], allX[:, keep], allr[keep]
        else:
            missing = _missing_count(K, M, vals, extra, count, deflate)
        if missing > 0:
            raise ConvergenceError(f"inertia check failed: {missing} eigenvalue(s) missing below "
                                   f"the last computed value {vals[-1]:.6g}")

    order = np.argsort(vals)
    vals, X, res = vals[order], X[:, order], res[order]
    # M-normalise and sign-fix deterministically (largest |entry| positive)
    for i in range(len(vals)):
        x = X[:, i]
        x = x / np.sqrt(x @ (M @ x))
        k = int(np.argmax(np.abs(x)))
        X[:, i] = x if x[k] >= 0 else -x

    out = EigenResult()
    gaps = np.diff(vals)
    gscale = max(np.max(np.abs(vals)), scale * 1e-16, 1e-300)
    multiple = np.zeros(len(vals), bool)
    mult_pairs = []
    for i, g in enumerate(gaps):
        if g < 1e-12 * gscale:
            multiple[i] = multiple[i + 1] = True
            mult_pairs.append((i, i + 1))
    for i in range(len(vals)):
        out.append(EigenPair(float(vals[i]), X[:, i].copy(), float(res[i]), bool(multiple[i])))
    out.sigma, out.seed, out.steps = F.sigma, seed, total_steps
    out.multiple_pairs = tuple(mult_pairs)
    return out


def _polish(F, K, M, vals, X, extra, locked, tol, norms, sweeps: int = 3):
    """Block inverse iteration followed by Rayleigh--Ritz on ``[Op X, X, extra]``.

    Lanczos Ritz vectors of an ill-conditioned pencil carry an error of order
    ``eps * cond(K)`` in the ``K``-residual; one or two sweeps remove it.
    """
    count = len(vals)
    LQ, LMQ = locked
    V0 = np.column_stack([X, extra])
    for _ in range(sweeps):
        W = np.column_stack([F.solve(M @ V0[:, i]) for i in range(V0.shape[1])])
        V = np.column_stack([W, V0])
        V = _m_orthogonalize(V, LQ, LMQ)
        Qv, _ = np.linalg.qr(V)
        H = Qv.T @ (K @ Qv)
        G = Qv.T @ (M @ Qv)
        w, S = sla.eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
        keep = w > F.sigma
        w, S = w[keep], S[:, keep]
        Y = Qv @ S
        vals, X = w[:count], Y[:, :count]
        res = np.array([relative_residual(K, M, vals[i], X[:, i]) for i in range(count)])
        V0 = Y[:, :min(Y.shape[1], count + 2)]
        if np.all(_accepted(K, M, vals, X, res, tol, norms)):
            break
    return vals, X, res, V0


def _m_orthonormal(V, M):
    G = V.T @ (M @ V)
    L = np.linalg.cholesky(G)
    return np.linalg.solve(L, V.T).T


def _deflated_below(K, M, V, sigma):
    V = np.asarray(V, float).reshape(K.shape[0], -1)
    lam = np.array([(V[:, i] @ (K @ V[:, i])) / (V[:, i] @ (M @ V[:, i])) for i in range(V.shape[1])])
    return int(np.sum(lam < sigma))


def _missing_count(K, M, vals, extra, count, deflate) -> int:
    """Eigenvalues the inertia count finds below the midpoint to the next Ritz value, minus ``count``."""
    lam_last = float(np.max(vals))
    nxt = None
    if extra.shape[1]:
        cand = np.sort([(x @ (K @ x)) / (x @ (M @ x)) for x in extra.T])
        above = cand[cand > lam_last * (1 + 1e-10) + 1e-14]
        if len(above):
            nxt = above[0]
    mid = 0.5 * (lam_last + nxt) if nxt is not None else lam_last + 1e-6 * max(abs(lam_last), 1.0)
    below = ldlt_factor(K, M, mid).n_negative
    expected = count + (0 if deflate is None else _deflated_below(K, M, deflate, mid))
    return below - expected

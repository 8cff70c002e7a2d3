"""Dense matrix functions: SVD, pseudo-inverse, PSD square root, truncation, QR.

Numerical rank is decided by one policy throughout the package: a singular
value counts when it exceeds ``max(m, n) * sigma_max * eps * 8``. Callers
that know the natural scale of a matrix (covariances of derived vectors,
for instance) may pass an absolute floor so that round-off residue of an
exactly-zero matrix is not inverted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, InputError, NotPSD

EPS = np.finfo(float).eps
RANK_FACTOR = 8.0


def default_tol(shape, smax: float) -> float:
    return max(shape) * smax * EPS * RANK_FACTOR


def _resolve_tol(tol, M, s) -> float:
    smax = float(s[0]) if s.size else 0.0
    if tol is None:
        return default_tol(M.shape, smax)
    if callable(tol):
        return float(tol(M, s))
    return float(tol)


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD restricted to the numerical rank: M ~ U diag(S) V^T."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    tol: float
    all_s: np.ndarray

    @property
    def rank(self) -> int:
        return self.S.size

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def _fix_signs(U, V):
    # largest-magnitude entry of every U column made positive
    if U.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    sgn = np.sign(U[idx, np.arange(U.shape[1])])
    sgn[sgn == 0] = 1.0
    return U * sgn, V * sgn


def _order_ties(U, S, V):
    # exact ties in S: order columns lexicographically by the sign-fixed U
    order = list(range(S.size))
    i = 0
    while i < S.size:
        j = i
        while j + 1 < S.size and S[j + 1] == S[i]:
            j += 1
        if j > i:
            block = sorted(range(i, j + 1), key=lambda c: tuple(-U[:, c]))
            order[i : j + 1] = block
        i = j + 1
    return U[:, order], S[order], V[:, order]


def svd(M, tol=None) -> SvdResult:
    """Thin SVD with numerical rank cut-off.

    Parameters
    ----------
    M : array_like, shape (m, n)
    tol : None, float or callable
        None uses the default policy; a float is an absolute cut-off; a
        callable receives ``(M, singular_values)`` and returns one.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"svd expects a matrix, got shape {M.shape}")
    m, n = M.shape
    if m == 0 or n == 0:
        z = np.zeros(0)
        return SvdResult(np.zeros((m, 0)), z, np.zeros((n, 0)), 0.0, z)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    cut = _resolve_tol(tol, M, s)
    r = int(np.sum(s > cut))
    U, V = _fix_signs(U[:, :r], Vt[:r].T)
    U, S, V = _order_ties(U, s[:r], V)
    return SvdResult(U, S, V, cut, s)


def pinv(M, tol=None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse from the truncated SVD."""
    M = np.asarray(M, dtype=float)
    res = svd(M, tol)
    return (res.V / res.S) @ res.U.T


def _check_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotPSD(f"expected a square matrix, got shape {M.shape}")
    scale = 1.0 + np.max(np.abs(M), initial=0.0)
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * scale:
        raise NotPSD("matrix is not symmetric")
    return 0.5 * (M + M.T)


def psd_sqrt(M) -> np.ndarray:
    """Symmetric PSD root S with S @ S = M."""
    M = _check_symmetric(M)
    lam, Q = np.linalg.eigh(M)
    tr = float(np.trace(M))
    if lam.size and lam[0] < -1e-8 * max(tr, 0.0) and lam[0] < -EPS:
        raise NotPSD(f"minimum eigenvalue {lam[0]:.3g} below -1e-8*trace")
    # eigenvalues at round-off level would become ~sqrt(eps) after the root
    cut = M.shape[0] * EPS * RANK_FACTOR * max(float(lam[-1]) if lam.size else 0.0, 0.0)
    lam = np.where(lam > cut, lam, 0.0)
    return (Q * np.sqrt(lam)) @ Q.T


@dataclass(frozen=True)
class PsdFactors:
    """Square root and pseudo-inverses of a covariance from one eigensolve.

    ``sqrt``, ``pinv_sqrt`` and ``pinv`` share the kept eigenspace, so
    identities such as ``pinv @ sqrt == pinv_sqrt`` hold to round-off.
    """

    sqrt: np.ndarray
    pinv_sqrt: np.ndarray
    pinv: np.ndarray
    range_proj: np.ndarray
    rank: int
    tol: float

    @property
    def null_proj(self) -> np.ndarray:
        return np.eye(self.range_proj.shape[0]) - self.range_proj


def psd_factors(M, scale: float = 0.0) -> PsdFactors:
    """Factor a covariance matrix.

    ``scale`` is a reference magnitude (e.g. the trace of the covariance
    the matrix was derived from); eigenvalues below
    ``n * eps * 8 * max(lambda_max, scale)`` are treated as zero.
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    n = M.shape[0]
    lam, Q = np.linalg.eigh(M)
    lmax = float(max(lam[-1], 0.0)) if n else 0.0
    cut = n * EPS * RANK_FACTOR * max(lmax, scale)
    keep = lam > cut
    Qk, lk = Q[:, keep], lam[keep]
    root = np.sqrt(lk)
    return PsdFactors(
        sqrt=(Qk * root) @ Qk.T,
        pinv_sqrt=(Qk / root) @ Qk.T,
        pinv=(Qk / lk) @ Qk.T,
        range_proj=Qk @ Qk.T,
        rank=int(keep.sum()),
        tol=cut,
    )


def condition_number(M) -> float:
    """Spectral condition number of a symmetric PSD matrix (inf if singular)."""
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    if lam.size == 0:
        return float("inf")
    if lam[0] <= 0:
        return float("inf")
    return float(lam[-1] / lam[0])


@dataclass(frozen=True)
class Truncation:
    """Best rank-eta approximation K = U diag(S) V^T and its residual."""

    K: np.ndarray
    tail_energy: float
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    eta: int
    rank: int

    @property
    def gain(self) -> float:
        """Retained energy sum_{j <= eta} sigma_j^2."""
        return float(np.sum(self.S**2))


def truncate(M, eta: int, tol=None) -> Truncation:
    """Eckart-Young truncation of M to rank ``min(eta, numerical rank)``."""
    if eta < 0:
        raise InputError("eta must be nonnegative")
    M = np.asarray(M, dtype=float)
    res = svd(M, tol)
    k = min(int(eta), res.rank)
    U, S, V = res.U[:, :k], res.S[:k], res.V[:, :k]
    tail = float(np.sum(res.all_s[k:] ** 2))
    return Truncation((U * S) @ V.T, tail, U, S, V, k, res.rank)


def qr(M):
    """Reduced QR with a nonnegative diagonal of R."""
    M = np.asarray(M, dtype=float)
    Q, R = np.linalg.qr(M, mode="reduced")
    sgn = np.sign(np.diag(R))
    sgn[sgn == 0] = 1.0
    return Q * sgn, R * sgn[:, None]

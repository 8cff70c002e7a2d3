"""Orthogonalization of lifted views u_1..u_p into v_1..v_p.

Three constructions are provided:

``orthonormalize``
    whitened Gram-Schmidt chain with inverse covariances; requires every
    chain covariance to be invertible and yields Cov(v_i, v_j) = delta_ij I.
``orthogonalize``
    pseudo-inverse chain with no invertibility requirement; yields
    Cov(v_i, v_j) = 0 for i != j.
``qr_orthogonalize``
    QR factorization of the stacked sample matrix; the resulting sample
    blocks satisfy V_i V_j^T = delta_ij I.

Orthogonality is always meant for centered moments. Each system keeps the
coefficients needed to push unseen realizations through the same maps
(:func:`replay`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import matfun
from .empirical import Ensemble, centered_cross, check_compatible
from .errors import InputError, ShapeMismatch, SingularCovariance

COND_LIMIT = 1.0 / (100.0 * matfun.EPS)


class OrthoMode(str, enum.Enum):
    ORTHONORMAL = "orthonormal"
    ORTHOGONAL = "orthogonal"
    SAMPLE_QR = "sample_qr"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class OrthoSystem:
    """Orthogonalized views plus the maps that produced them.

    Attributes
    ----------
    vs : list of Ensemble
    mode : OrthoMode
    coefs : dict
        ``(i, k) -> C_ik`` (0-based, k < i) so that
        ``w_i = u_i - sum_k C_ik w_k``.
    whiten : list of ndarray
        ``v_i = whiten[i] @ w_i``; identity for the pseudo-inverse chain.
    stack_map, offset : ndarray or None
        Stacked affine map ``v = stack_map @ u + offset`` (QR mode only).
    scales : list of float
        trace Cov(u_k, u_k); reference magnitude for rank decisions.
    diagnostics : dict
    """

    vs: list
    mode: OrthoMode
    coefs: dict
    whiten: list
    dims: tuple
    scales: tuple
    stack_map: np.ndarray = None
    offset: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def gram(self) -> np.ndarray:
        """p x p table of max |Cov(v_i, v_j) - delta_ij I [orthonormal only]|."""
        return self.diagnostics["gram"]

    def orthogonality_residual(self) -> float:
        g = self.gram
        off = g[~np.eye(self.p, dtype=bool)]
        return float(off.max(initial=0.0))

    def normality_residual(self) -> float:
        return float(np.diag(self.gram).max(initial=0.0))


def _check_views(us):
    us = list(us)
    if not us:
        raise InputError("need at least one view")
    for u in us[1:]:
        check_compatible(us[0], u)
    return us


def _gram_table(vs, orthonormal):
    p = len(vs)
    g = np.zeros((p, p))
    for i in range(p):
        for j in range(i, p):
            c = centered_cross(vs[i], vs[i] if i == j else vs[j])
            if i == j and orthonormal:
                c = c - np.eye(c.shape[0])
            g[i, j] = g[j, i] = np.max(np.abs(c), initial=0.0)
    return g


def _scales(us):
    return tuple(float(np.trace(centered_cross(u, u))) for u in us)


def _inv_sqrt(C):
    lam, Q = np.linalg.eigh(0.5 * (C + C.T))
    return (Q / np.sqrt(lam)) @ Q.T


def orthonormalize(us) -> OrthoSystem:
    """Whitened chain: w_i = u_i - sum_k Cov(u_i,w_k) Cov(w_k,w_k)^{-1} w_k.

    Raises
    ------
    SingularCovariance
        naming the first (1-based) k whose chain covariance has condition
        number above ``1/(100 eps)``.
    """
    us = _check_views(us)
    ws, coefs, whiten, vs = [], {}, [], []
    for i, u in enumerate(us):
        w = u.data
        for k, wk in enumerate(ws):
            Cww = centered_cross(wk, wk)
            C = np.linalg.solve(Cww, centered_cross(wk, u)).T
            coefs[(i, k)] = C
            w = w - C @ wk.data
        w_ens = u.with_data(w, f"w{i + 1}")
        Cii = centered_cross(w_ens, w_ens)
        cond = matfun.condition_number(Cii)
        if not cond < COND_LIMIT:
            raise SingularCovariance(i + 1, cond)
        W = _inv_sqrt(Cii)
        whiten.append(W)
        ws.append(w_ens)
        vs.append(u.with_data(W @ w, f"v{i + 1}"))
    diag = {"gram": _gram_table(vs, True)}
    return OrthoSystem(
        vs, OrthoMode.ORTHONORMAL, coefs, whiten,
        tuple(u.d for u in us), _scales(us), diagnostics=diag,
    )


def orthogonalize(us, a_policy=None) -> OrthoSystem:
    """Pseudo-inverse chain: v_i = u_i - sum_k Z_ik v_k.

    ``Z_ik = Cov(u_i,v_k) Cov(v_k,v_k)^+ + A_ik (I - Cov(v_k,v_k) Cov(v_k,v_k)^+)``.

    Parameters
    ----------
    us : sequence of Ensemble
    a_policy : callable, optional
        ``a_policy(i, k, shape)`` with 1-based i, k returns A_ik or None.
        All A_ik are zero by default.
    """
    us = _check_views(us)
    scales = _scales(us)
    vs, coefs, factors = [], {}, []
    cond_eq = {}
    for i, u in enumerate(us):
        w = u.data
        for k, vk in enumerate(vs):
            fk = factors[k]
            Cuv = centered_cross(u, vk)
            Z = Cuv @ fk.pinv
            if a_policy is not None:
                A = a_policy(i + 1, k + 1, (u.d, vk.d))
                if A is not None:
                    Z = Z + np.asarray(A, dtype=float) @ fk.null_proj
            coefs[(i, k)] = Z
            cov_kk = centered_cross(vk, vk)
            cond_eq[(i + 1, k + 1)] = float(
                np.max(np.abs(Cuv @ fk.pinv @ cov_kk - Cuv), initial=0.0)
            )
            w = w - Z @ vk.data
        v = u.with_data(w, f"v{i + 1}")
        vs.append(v)
        factors.append(matfun.psd_factors(centered_cross(v, v), scales[i]))
    diag = {
        "gram": _gram_table(vs, False),
        "cond_eq": cond_eq,
        "ranks": [f.rank for f in factors],
    }
    whiten = [np.eye(u.d) for u in us]
    return OrthoSystem(
        vs, OrthoMode.ORTHOGONAL, coefs, whiten,
        tuple(u.d for u in us), scales, diagnostics=diag,
    )


def qr_orthogonalize(us, center: bool = True) -> OrthoSystem:
    """Orthogonalize through a QR factorization of the stacked samples.

    The stacked sample matrix ``U = [U_1; ...; U_p]`` must be square
    (total dimension equal to q) and the weights uniform. Rows of the
    result satisfy ``V V^T = I``.

    With ``center=True`` (default) the rows are built in the complement of
    the constant vector, with one constant row appended last, so that the
    blocks are also orthogonal in the centered-covariance sense. With
    ``center=False`` the raw stack is factored as is (``U^T = Q R``,
    ``V = Q^T``).
    """
    us = _check_views(us)
    q = us[0].q
    if not np.allclose(us[0].weights, 1.0 / q, rtol=0, atol=1e-15):
        raise InputError("qr_orthogonalize requires uniform weights")
    dims = [u.d for u in us]
    N = sum(dims)
    if N != q:
        raise ShapeMismatch(f"stacked dimension {N} must equal realization count {q}")
    U = np.vstack([u.data for u in us])
    if center:
        mu = U.mean(axis=1)
        H, _ = np.linalg.qr(np.ones((q, 1)), mode="complete")
        P = H[:, 1:]
        Qc, R = matfun.qr(P.T @ (U - mu[:, None]).T)
        top = (P @ Qc).T
        V = np.vstack([top, np.full((1, q), 1.0 / np.sqrt(q))])
        Rt = R.T
        stack_map = np.vstack([matfun.pinv(Rt), np.zeros((1, N))])
        offset = -stack_map @ mu
        offset[-1] = 1.0 / np.sqrt(q)
    else:
        Q, R = matfun.qr(U.T)
        V = Q.T
        Rt = R.T
        stack_map = matfun.pinv(Rt)
        offset = np.zeros(N)
    rdiag = np.abs(np.diag(R))
    rtol = matfun.default_tol(R.shape, float(rdiag.max(initial=0.0)))
    expected = q - 1 if center else q
    deficient = int(np.sum(rdiag > rtol)) < expected
    vs, start = [], 0
    for i, d in enumerate(dims):
        vs.append(Ensemble(V[start : start + d], us[i].weights, f"v{i + 1}"))
        start += d
    raw = np.zeros((len(vs), len(vs)))
    for i in range(len(vs)):
        for j in range(len(vs)):
            c = vs[i].data @ vs[j].data.T
            if i == j:
                c = c - np.eye(dims[i])
            raw[i, j] = np.max(np.abs(c), initial=0.0)
    diag = {
        "gram": _gram_table(vs, False),
        "raw_gram": raw,
        "rank_deficient": deficient,
        "centered": center,
    }
    return OrthoSystem(
        vs, OrthoMode.SAMPLE_QR, {}, [np.eye(d) for d in dims], tuple(dims),
        _scales(us), stack_map=stack_map, offset=offset, diagnostics=diag,
    )


def replay(sys: OrthoSystem, new_us) -> list:
    """Apply the stored orthogonalizing maps to new realizations.

    ``new_us`` holds p arrays (or ensembles) of shape ``(n_k, q')``; the
    result is the list of v'_k arrays.
    """
    arrays = []
    for k, u in enumerate(new_us):
        a = u.data if isinstance(u, Ensemble) else np.asarray(u, dtype=float)
        if a.ndim == 1:
            a = a[:, None] if sys.dims[k] > 1 else a[None, :]
        arrays.append(a)
    if len(arrays) != sys.p:
        raise ShapeMismatch(f"expected {sys.p} views, got {len(arrays)}")
    qn = arrays[0].shape[1]
    for k, a in enumerate(arrays):
        if a.shape != (sys.dims[k], qn):
            raise ShapeMismatch(
                f"view {k + 1}: expected {sys.dims[k]} rows and {qn} columns, got {a.shape}"
            )
    if sys.stack_map is not None:
        V = sys.stack_map @ np.vstack(arrays) + sys.offset[:, None]
        out, start = [], 0
        for d in sys.dims:
            out.append(V[start : start + d])
            start += d
        return out
    ws, out = [], []
    for i, a in enumerate(arrays):
        w = a
        for k, wk in enumerate(ws):
            w = w - sys.coefs[(i, k)] @ wk
        ws.append(w)
        out.append(sys.whiten[i] @ w)
    return out

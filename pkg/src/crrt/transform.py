"""Combined reduced-rank transform: fitting, prediction, errors, compression.

The estimate of x from the orthogonalized views v_1..v_p is

    x_hat = f0 + sum_k F_k v_k

with each F_k obtained from its own rank-constrained (or unconstrained)
least-squares problem. Because the views are mutually uncorrelated the p
problems decouple, and the mean squared error of the fitted transform has
a closed form in the singular values of the per-term targets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import matfun
from .empirical import Ensemble, centered_cross, check_compatible, mean, mse
from .errors import BudgetExceeded, InputError, ModeMismatch, NotFactorized, ShapeMismatch
from .lifting import LiftKind, lift_array
from .ortho import OrthoMode, OrthoSystem, replay

IDENTITY_RTOL = 1e-6
POINTWISE = (LiftKind.IDENTITY, LiftKind.HADAMARD_POWER, LiftKind.COSINE)


class FitMode(str, enum.Enum):
    CONSTRAINED_INVERTIBLE = "constrained_invertible"
    CONSTRAINED_GENERAL = "constrained_general"
    UNCONSTRAINED_INVERTIBLE = "unconstrained_invertible"
    UNCONSTRAINED_GENERAL = "unconstrained_general"

    def __str__(self):
        return self.value

    @property
    def constrained(self) -> bool:
        return self.value.startswith("constrained")

    @property
    def invertible(self) -> bool:
        return self.value.endswith("invertible")

    @classmethod
    def select(cls, constrained, invertible):
        return {
            (True, True): cls.CONSTRAINED_INVERTIBLE,
            (True, False): cls.CONSTRAINED_GENERAL,
            (False, True): cls.UNCONSTRAINED_INVERTIBLE,
            (False, False): cls.UNCONSTRAINED_GENERAL,
        }[(bool(constrained), bool(invertible))]


@dataclass(frozen=True)
class RankBudget:
    """Requested ranks (eta_1, ..., eta_p)."""

    etas: tuple

    def __post_init__(self):
        etas = tuple(int(e) for e in self.etas)
        if any(e < 0 for e in etas):
            raise InputError(f"ranks must be nonnegative, got {etas}")
        object.__setattr__(self, "etas", etas)

    @property
    def total(self) -> int:
        return sum(self.etas)

    def __len__(self):
        return len(self.etas)


@dataclass(eq=False)
class Term:
    """Fitted operator of one view and its compression factors."""

    F: np.ndarray
    gain: float
    singular_values: np.ndarray
    eta_requested: int | None = None
    eta_kept: int | None = None
    B1: np.ndarray | None = None
    B2: np.ndarray | None = None
    has_null_part: bool = False
    solvability_residual: float = 0.0


@dataclass(eq=False)
class TransformModel:
    f0: np.ndarray
    terms: list
    mode: FitMode
    ortho: OrthoSystem
    mean_x: np.ndarray
    mean_vs: list
    trace_exx: float
    lifts: list | None = None

    @property
    def m(self) -> int:
        return self.f0.shape[0]

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def dims(self) -> tuple:
        return tuple(t.F.shape[1] for t in self.terms)

    @property
    def factorized(self) -> bool:
        return self.mode.constrained and all(t.B1 is not None for t in self.terms)

    @property
    def theoretical_error(self) -> float:
        return self.trace_exx - sum(t.gain for t in self.terms)


@dataclass(frozen=True)
class ErrorReport:
    """Closed-form and measured accuracy of a fitted transform."""

    theoretical: float
    empirical: float
    per_term_gain: tuple
    compression_ratio: float | None
    trace_exx: float
    mode: FitMode
    etas_requested: tuple | None = None
    etas_kept: tuple | None = None
    extra: dict = field(default_factory=dict)

    @property
    def identity_residual(self) -> float:
        return abs(self.theoretical - self.empirical)

    @property
    def tolerance(self) -> float:
        return IDENTITY_RTOL * (1.0 + self.trace_exx)

    @property
    def ok(self) -> bool:
        return self.identity_residual <= self.tolerance


def _as_budget(budget, p):
    if budget is None:
        return None
    if not isinstance(budget, RankBudget):
        budget = RankBudget(tuple(budget))
    if len(budget) != p:
        raise InputError(f"budget has {len(budget)} ranks but the system has {p} terms")
    return budget


def fit(x: Ensemble, sys: OrthoSystem, budget=None, a_policy=None, path="auto",
        lifts=None) -> TransformModel:
    """Fit f0 and F_1..F_p on the training ensemble.

    Parameters
    ----------
    x : Ensemble
        Reference signal, shape (m, q).
    sys : OrthoSystem
        Orthogonalized views sharing x's outcomes.
    budget : RankBudget, sequence of int or None
        Ranks per term; None fits the unconstrained filter.
    a_policy : callable, optional
        ``a_policy(k, shape)`` (1-based k) returns the free matrix A_k of
        the pseudo-inverse path, or None. Zero by default.
    path : {"auto", "invertible", "general"}
        "invertible" uses the orthonormal-system formulas and needs an
        orthonormal system; "general" works with any orthogonal system;
        "auto" picks by the system mode.
    lifts : list of LiftSpec, optional
        Stored on the model so that :func:`predict` accepts raw observations.
    """
    for v in sys.vs:
        check_compatible(x, v)
    p = sys.p
    budget = _as_budget(budget, p)
    if path == "auto":
        invertible = sys.mode == OrthoMode.ORTHONORMAL
    elif path == "invertible":
        if sys.mode != OrthoMode.ORTHONORMAL:
            raise ModeMismatch(
                f"the invertible path needs an orthonormal system, got {sys.mode}"
            )
        invertible = True
    elif path == "general":
        invertible = False
    else:
        raise InputError(f"unknown path {path!r}")
    m = x.d
    n = max(sys.dims)
    if budget is not None and budget.total > min(m, n):
        raise BudgetExceeded(
            f"sum of ranks {budget.total} exceeds min(m, n) = {min(m, n)}"
        )
    mode = FitMode.select(budget is not None, invertible)
    mean_x = mean(x)
    trace_exx = float(np.trace(centered_cross(x, x)))

    terms = [None] * p
    for k, v in enumerate(sys.vs):
        Exv = centered_cross(x, v)
        A = None
        if a_policy is not None and not invertible:
            A = a_policy(k + 1, (m, v.d))
            if A is not None:
                A = np.asarray(A, dtype=float)
                if A.shape != (m, v.d):
                    raise ShapeMismatch(f"A_{k + 1} must have shape {(m, v.d)}")
        if invertible:
            if budget is None:
                res = matfun.svd(Exv)
                terms[k] = Term(Exv.copy(), float(np.sum(Exv * Exv)), res.S)
            else:
                tr = matfun.truncate(Exv, budget.etas[k])
                terms[k] = Term(
                    tr.K, tr.gain, tr.S, budget.etas[k], tr.eta,
                    B1=tr.U * tr.S, B2=tr.V.T,
                )
            continue
        fac = matfun.psd_factors(centered_cross(v, v), sys.scales[k])
        target = Exv @ fac.pinv_sqrt
        if budget is None:
            F = Exv @ fac.pinv
            if A is not None:
                F = F + A @ fac.null_proj
            res = matfun.svd(target)
            terms[k] = Term(F, float(np.sum(target * target)), res.S,
                            has_null_part=A is not None and bool(np.any(A)))
            continue
        tr = matfun.truncate(target, budget.etas[k])
        F = tr.K @ fac.pinv_sqrt
        null_part = False
        if A is not None and np.any(A):
            F = F + A @ fac.null_proj
            null_part = True
            if matfun.svd(F).rank > budget.etas[k]:
                raise BudgetExceeded(
                    f"A_{k + 1} raises rank of F_{k + 1} above {budget.etas[k]}"
                )
        solv = float(np.max(np.abs(tr.K @ fac.pinv_sqrt @ fac.sqrt - tr.K), initial=0.0))
        terms[k] = Term(
            F, tr.gain, tr.S, budget.etas[k], tr.eta,
            B1=tr.U * tr.S, B2=tr.V.T @ fac.pinv_sqrt,
            has_null_part=null_part, solvability_residual=solv,
        )

    mean_vs = [mean(v) for v in sys.vs]
    f0 = mean_x - sum((t.F @ mv for t, mv in zip(terms, mean_vs)), np.zeros(m))
    return TransformModel(f0, terms, mode, sys, mean_x, mean_vs, trace_exx,
                          None if lifts is None else list(lifts))


def _as_array(y):
    a = y.data if isinstance(y, Ensemble) else np.asarray(y, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    return a


def predict_views(model: TransformModel, us) -> np.ndarray:
    """Estimate x from lifted (not yet orthogonalized) views u_1..u_p."""
    vs = replay(model.ortho, us)
    out = np.repeat(model.f0[:, None], vs[0].shape[1], axis=1)
    for t, v in zip(model.terms, vs):
        out = out + t.F @ v
    return out


def lift_views(model: TransformModel, y, refs=None) -> list:
    if model.lifts is None:
        raise InputError("model carries no lift specification; use predict_views")
    y = _as_array(y)
    if model.lifts[0].kind in POINTWISE and y.shape[0] != model.ortho.dims[0]:
        raise ShapeMismatch(
            f"expected observations with {model.ortho.dims[0]} rows, got {y.shape[0]}"
        )
    return [lift_array(spec, y, refs) for spec in model.lifts]


def predict(model: TransformModel, y_new, refs=None) -> np.ndarray:
    """T_p(y) = f0 + sum_k F_k Q_k phi_k(y) for realizations in columns."""
    return predict_views(model, lift_views(model, y_new, refs))


def training_prediction(model: TransformModel) -> np.ndarray:
    out = np.repeat(model.f0[:, None], model.ortho.vs[0].q, axis=1)
    for t, v in zip(model.terms, model.ortho.vs):
        out = out + t.F @ v.data
    return out


def error_report(model: TransformModel, x: Ensemble) -> ErrorReport:
    """Closed-form accuracy next to the measured J on the training ensemble."""
    xhat = x.with_data(training_prediction(model), "xhat")
    constrained = model.mode.constrained
    return ErrorReport(
        theoretical=model.theoretical_error,
        empirical=mse(x, xhat),
        per_term_gain=tuple(t.gain for t in model.terms),
        compression_ratio=compression_ratio(model) if constrained else None,
        trace_exx=model.trace_exx,
        mode=model.mode,
        etas_requested=tuple(t.eta_requested for t in model.terms) if constrained else None,
        etas_kept=tuple(t.eta_kept for t in model.terms) if constrained else None,
        extra={
            "solvability_residual": max(t.solvability_residual for t in model.terms),
        },
    )


def _check_factorized(model):
    if not model.factorized:
        raise NotFactorized(f"model in mode {model.mode} has no rank factors")
    if any(t.has_null_part for t in model.terms):
        raise NotFactorized("compression requires A_k = 0 for every term")


def code_length(model: TransformModel) -> int:
    _check_factorized(model)
    return sum(t.eta_kept for t in model.terms)


def compress_views(model: TransformModel, us) -> np.ndarray:
    _check_factorized(model)
    vs = replay(model.ortho, us)
    blocks = [t.B2 @ v for t, v in zip(model.terms, vs)]
    return np.vstack(blocks) if blocks else np.zeros((0, vs[0].shape[1]))


def compress(model: TransformModel, y_new, refs=None) -> np.ndarray:
    """Codes B2_k v_k stacked over k; shape (sum eta'_k, q')."""
    _check_factorized(model)
    return compress_views(model, lift_views(model, y_new, refs))


def decompress(model: TransformModel, code) -> np.ndarray:
    """Reconstruction f0 + sum_k B1_k code_k."""
    _check_factorized(model)
    code = np.asarray(code, dtype=float)
    total = code_length(model)
    if code.ndim != 2 or code.shape[0] != total:
        raise ShapeMismatch(f"code must have {total} rows, got shape {code.shape}")
    out = np.repeat(model.f0[:, None], code.shape[1], axis=1)
    start = 0
    for t in model.terms:
        out = out + t.B1 @ code[start : start + t.eta_kept]
        start += t.eta_kept
    return out


def compression_ratio(model: TransformModel, m: int | None = None) -> float:
    """(eta'_1 + ... + eta'_p) / m."""
    if not model.mode.constrained:
        raise NotFactorized("compression ratio is defined for constrained models only")
    m = model.m if m is None else m
    return sum(t.eta_kept for t in model.terms) / m


def objective(x: Ensemble, sys: OrthoSystem, f, Fs) -> float:
    """J(f, F_1..F_p) = E ||x - f - sum_k F_k v_k||^2 evaluated directly."""
    pred = np.repeat(np.asarray(f, dtype=float)[:, None], x.q, axis=1)
    for F, v in zip(Fs, sys.vs):
        pred = pred + F @ v.data
    return mse(x, x.with_data(pred))


def objective_parts(x: Ensemble, sys: OrthoSystem, f, Fs, path="invertible"):
    """Split J into (J0, J1, J2).

    J0 is the attainable floor, J1 the intercept mismatch and J2 the
    operator mismatch. The invertible split assumes an orthonormal system;
    the general split weights each operator by Cov(v_k, v_k)^{1/2}.
    """
    mx = mean(x)
    trace_exx = float(np.trace(centered_cross(x, x)))
    resid = np.asarray(f, dtype=float) - mx
    j0 = trace_exx
    j2 = 0.0
    for k, (F, v) in enumerate(zip(Fs, sys.vs)):
        resid = resid + F @ mean(v)
        Exv = centered_cross(x, v)
        if path == "invertible":
            j0 -= float(np.sum(Exv * Exv))
            j2 += float(np.sum((F - Exv) ** 2))
        else:
            fac = matfun.psd_factors(centered_cross(v, v), sys.scales[k])
            target = Exv @ fac.pinv_sqrt
            j0 -= float(np.sum(target * target))
            j2 += float(np.sum((F @ fac.sqrt - target) ** 2))
    j1 = float(resid @ resid)
    return j0, j1, j2

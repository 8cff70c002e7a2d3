"""Reference transforms and the error gaps separating them from T_p.

All comparisons run on centered data. The Wiener filter and the KLT are
computed here from their own formulas rather than through
:func:`crrt.transform.fit`, so that the reduction checks compare two
independent code paths.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import matfun
from .empirical import Ensemble, center, check_compatible, mean, mse, raw_cross
from .errors import BudgetExceeded, InputError, NumericalError
from .lifting import LiftSpec, apply_lift
from .ortho import orthogonalize, orthonormalize
from .transform import FitMode, Term, TransformModel, fit, training_prediction

VOLTERRA_MAX_N = 32
IDENTITY_ATOL = 1e-8


class IdentityViolation(NumericalError):
    pass


def _single_view_system(y: Ensemble):
    # Q_1 = I, phi_1 = I: the chain of one view is the view itself
    return orthogonalize([y])


def _centered_pair(x, y):
    check_compatible(x, y)
    return center(x), center(y)


def _linear_model(x, y, F, mode, sv, gain, B1=None, B2=None, eta=None, kept=None):
    sys = _single_view_system(y)
    f0 = mean(x) - F @ mean(y)
    trace = float(np.trace(raw_cross(center(x), center(x))))
    term = Term(F, gain, sv, eta, kept, B1, B2)
    return TransformModel(f0, [term], mode, sys, mean(x), [mean(y)], trace,
                          [LiftSpec.identity()])


def wiener(x: Ensemble, y: Ensemble) -> TransformModel:
    """Generalized Wiener filter F = E_xy E_yy^+ on centered data."""
    xc, yc = _centered_pair(x, y)
    Eyy = raw_cross(yc, yc)
    fac = matfun.psd_factors(Eyy, float(np.trace(Eyy)))
    Exy = raw_cross(xc, yc)
    F = Exy @ fac.pinv
    target = Exy @ fac.pinv_sqrt
    return _linear_model(x, y, F, FitMode.UNCONSTRAINED_GENERAL,
                         matfun.svd(target).S, float(np.sum(target**2)))


def klt(x: Ensemble, y: Ensemble, eta: int) -> TransformModel:
    """Rank-eta Karhunen-Loeve estimator G_eta (E_yy^{1/2})^+ on centered data."""
    if eta < 0 or eta > min(x.d, y.d):
        raise BudgetExceeded(f"eta={eta} outside [0, min(m, n) = {min(x.d, y.d)}]")
    xc, yc = _centered_pair(x, y)
    Eyy = raw_cross(yc, yc)
    fac = matfun.psd_factors(Eyy, float(np.trace(Eyy)))
    target = raw_cross(xc, yc) @ fac.pinv_sqrt
    tr = matfun.truncate(target, eta)
    F = tr.K @ fac.pinv_sqrt
    return _linear_model(x, y, F, FitMode.CONSTRAINED_GENERAL, tr.S, tr.gain,
                         tr.U * tr.S, tr.V.T @ fac.pinv_sqrt, eta, tr.eta)


def model_error(model: TransformModel, x: Ensemble) -> float:
    """Measured E||x - T(y)||^2 on the training ensemble."""
    return mse(x, x.with_data(training_prediction(model)))


def volterra_features(y: Ensemble, max_n: int = VOLTERRA_MAX_N) -> Ensemble:
    """s = [1, y, z] with z_j = y_j * y, dimension 1 + n + n^2."""
    n = y.d
    if n > max_n:
        raise InputError(f"degree-2 features need n <= {max_n}, got n = {n}")
    Y = y.data
    z = (Y[:, None, :] * Y[None, :, :]).reshape(n * n, y.q)
    return y.with_data(np.vstack([np.ones((1, y.q)), Y, z]), "s")


def volterra2_spectrum(x: Ensemble, y: Ensemble, max_n: int = VOLTERRA_MAX_N):
    """Nonzero singular values of Cov(x, s) (Cov(s, s)^{1/2})^+ on centered data."""
    xc, yc = _centered_pair(x, y)
    s = center(volterra_features(yc, max_n))
    Ess = raw_cross(s, s)
    fac = matfun.psd_factors(Ess, float(np.trace(Ess)))
    return matfun.svd(raw_cross(xc, s) @ fac.pinv_sqrt).S


def volterra2_error(x: Ensemble, y: Ensemble, r: int, max_n: int = VOLTERRA_MAX_N) -> float:
    """Measured error of the best rank-r estimator linear in s = [1, y, y*y]."""
    alphas = volterra2_spectrum(x, y, max_n)
    if r < 0 or r > alphas.size:
        raise BudgetExceeded(f"r={r} exceeds the numerical rank {alphas.size}")
    xc, yc = _centered_pair(x, y)
    s = volterra_features(yc, max_n)
    model = fit(xc, orthogonalize([s]), [r], path="general")
    return model_error(model, xc)


@dataclass(frozen=True)
class ComparisonReport:
    """Errors of the baselines and of T_p on one centered ensemble."""

    wiener_error: float
    tp_error: float
    gap_wiener: float
    wiener_formula: float
    klt_error: float | None = None
    tp_constrained_error: float | None = None
    gap_klt: float | None = None
    volterra2_error: float | None = None
    volterra_rank: int | None = None
    delta_p: float | None = None
    trace_exx: float = 0.0

    @property
    def residual_wiener(self) -> float:
        """|(wiener - gap_wiener) - tp| for the unconstrained filter."""
        return abs(self.wiener_error - self.gap_wiener - self.tp_error)

    @property
    def residual_wiener_formula(self) -> float:
        return abs(self.wiener_error - self.wiener_formula)

    @property
    def residual_klt(self):
        if self.klt_error is None:
            return None
        return abs(self.klt_error - self.gap_klt - self.tp_constrained_error)

    @property
    def residual_volterra(self):
        if self.volterra2_error is None:
            return None
        return abs(self.volterra2_error - self.delta_p - self.tp_constrained_error)

    def residuals(self) -> dict:
        out = {
            "residual_wiener": self.residual_wiener,
            "residual_wiener_formula": self.residual_wiener_formula,
        }
        if self.klt_error is not None:
            out["residual_klt"] = self.residual_klt
            out["residual_volterra"] = self.residual_volterra
        return out


def _gains(xc, vs, scales, etas=None):
    """Per-view squared norms (or top-eta singular energies) of the targets."""
    gains = []
    for k, v in enumerate(vs):
        vc = center(v)
        Evv = raw_cross(vc, vc)
        fac = matfun.psd_factors(Evv, scales[k])
        target = raw_cross(xc, vc) @ fac.pinv_sqrt
        if etas is None:
            gains.append(float(np.sum(target**2)))
        else:
            s = matfun.svd(target).S[: etas[k]]
            gains.append(float(np.sum(s**2)))
    return gains


def compare(x: Ensemble, y: Ensemble, p=None, budget=None, lifts=None,
            mode="orthogonal", volterra_rank=None, check=True,
            max_n: int = VOLTERRA_MAX_N) -> ComparisonReport:
    """Fit Wiener, KLT, degree-2 Volterra and T_p on the same centered data.

    ``lifts`` defaults to identity for p = 1 and identity, power 2, ... for
    larger p. The KLT is fitted with rank eta_1 and the Volterra estimator
    with rank ``volterra_rank`` (default: the total budget, capped at the
    numerical rank). Delta_p is reported with its sign.
    """
    if lifts is None:
        p = 1 if p is None else p
        lifts = [LiftSpec.identity()] + [LiftSpec.power(k) for k in range(2, p + 1)]
    lifts = list(lifts)
    p = len(lifts) if p is None else p
    if len(lifts) != p:
        raise InputError(f"{len(lifts)} lifts given for p = {p}")
    if lifts[0] != LiftSpec.identity():
        raise InputError("comparisons need phi_1 = identity")
    if budget is not None:
        budget = tuple(int(e) for e in budget)
        if len(budget) != p:
            raise InputError(f"budget has {len(budget)} ranks for p = {p}")
    xc, yc = _centered_pair(x, y)
    us = [apply_lift(spec, yc) for spec in lifts]
    if mode == "orthogonal":
        sys = orthogonalize(us)
    elif mode == "orthonormal":
        sys = orthonormalize(us)
    else:
        raise InputError(f"compare supports orthogonal or orthonormal systems, not {mode!r}")
    sys = dataclasses.replace(sys, vs=[center(v) for v in sys.vs])
    trace = float(np.trace(raw_cross(xc, xc)))

    w_model = wiener(xc, yc)
    w_err = model_error(w_model, xc)
    tp_u = fit(xc, sys, None, path="general")
    tp_err = model_error(tp_u, xc)
    g_unc = _gains(xc, sys.vs, sys.scales)
    report = dict(
        wiener_error=w_err, tp_error=tp_err, gap_wiener=sum(g_unc[1:]),
        wiener_formula=trace - g_unc[0], trace_exx=trace,
    )
    if budget is not None:
        k_err = model_error(klt(xc, yc, budget[0]), xc)
        tp_c = fit(xc, sys, budget, path="general")
        g_con = _gains(xc, sys.vs, sys.scales, budget)
        alphas = volterra2_spectrum(xc, yc, max_n)
        r = min(sum(budget), alphas.size) if volterra_rank is None else int(volterra_rank)
        v_err = volterra2_error(xc, yc, r, max_n)
        report.update(
            klt_error=k_err, tp_constrained_error=model_error(tp_c, xc),
            gap_klt=sum(g_con[1:]), volterra2_error=v_err, volterra_rank=r,
            delta_p=sum(g_con) - float(np.sum(alphas[:r] ** 2)),
        )
    rep = ComparisonReport(**report)
    if check:
        tol = IDENTITY_ATOL * max(1.0, trace)
        bad = {k: v for k, v in rep.residuals().items() if v > tol}
        if bad:
            raise IdentityViolation(f"comparison identities violated: {bad}")
    return rep

"""Seeded invariant suites shared by ``crrt selftest`` and the test suite.

Every suite draws its own synthetic ensembles from a generator seeded by
the caller, so a given seed always produces the same report lines.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import baselines, matfun, ortho
from .empirical import Ensemble, centered_cross, mean
from .errors import SingularCovariance
from .lifting import LiftSpec, apply_lift
from .transform import (
    code_length, compress, compression_ratio, decompress, error_report, fit,
    objective, objective_parts, predict,
)

LIFT_POOL = (LiftSpec.identity(), LiftSpec.power(2), LiftSpec.cosine(1))


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.number}] {self.name}: {self.detail}"


def random_weights(rng, q):
    if rng.random() < 0.5:
        return None
    w = rng.random(q) + 0.05
    return w / w.sum()


def random_observation(rng, n, q, deficient, weights=None):
    if deficient and n >= 2:
        r = int(rng.integers(1, n))
        if rng.random() < 0.5:
            y = rng.normal(size=(n, r)) @ rng.normal(size=(r, q))
        else:
            y = rng.normal(size=(n, q))
            y[-1] = y[0]
    else:
        y = rng.normal(size=(n, q))
    y = y + rng.normal(size=(n, 1))
    return Ensemble(y, weights)


def random_signal(rng, m, y):
    n, q = y.data.shape
    Y = y.data
    x = rng.normal(size=(m, n)) @ Y + 0.5 * rng.normal(size=(m, n)) @ (Y**2)
    x = x + 0.3 * rng.normal(size=(m, n)) @ np.cos(Y) + 0.2 * rng.normal(size=(m, q))
    return y.with_data(x + rng.normal(size=(m, 1)), "x")


def random_instance(rng, deficient=None, m_max=6, n_max=8, p_max=3, q_range=(50, 500)):
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    q = int(rng.integers(q_range[0], q_range[1] + 1))
    if deficient is None:
        deficient = bool(rng.random() < 0.5)
    y = random_observation(rng, n, q, deficient, random_weights(rng, q))
    x = random_signal(rng, m, y)
    lifts = list(LIFT_POOL[:p])
    return x, y, lifts


def random_budget(rng, p, cap):
    etas, left = [], cap
    for _ in range(p):
        e = int(rng.integers(0, left + 1))
        etas.append(e)
        left -= e
    return tuple(etas)


def _views(y, lifts):
    return [apply_lift(spec, y) for spec in lifts]


def _systems(us):
    """(orthonormal or None, orthogonal) systems for the given views."""
    try:
        on = ortho.orthonormalize(us)
    except SingularCovariance:
        on = None
    return on, ortho.orthogonalize(us)


def _timed(number, name, body):
    t0 = time.perf_counter()
    passed, detail = body()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)


def error_identities(rng, instances=100):
    def body():
        worst, fits, fails = 0.0, 0, 0
        for _ in range(instances):
            x, y, lifts = random_instance(rng)
            us = _views(y, lifts)
            on, og = _systems(us)
            cap = min(x.d, y.d)
            for sys, path in ((on, "invertible"), (og, "general")):
                if sys is None:
                    continue
                for budget in (None, random_budget(rng, len(lifts), cap)):
                    rep = error_report(fit(x, sys, budget, path=path), x)
                    fits += 1
                    worst = max(worst, rep.identity_residual / (1.0 + rep.trace_exx))
                    fails += not rep.ok
        return fails == 0, f"{fits} fits, max |J - closed form|/(1+tr) = {worst:.2e}"

    return _timed(1, "error identities", body)


def orthogonality(rng, instances=40):
    def body():
        on_err = og_err = range_err = agree = 0.0
        for i in range(instances):
            q = int(rng.integers(50, 300))
            n = int(rng.integers(2, 7))
            p = int(rng.integers(2, 4))
            y = random_observation(rng, n, q, False, random_weights(rng, q))
            us = _views(y, LIFT_POOL[:p])
            on = ortho.orthonormalize(us)
            og = ortho.orthogonalize(us)
            on_err = max(on_err, float(on.gram.max()))
            for k in range(p):
                agree = max(agree, float(np.max(np.abs(
                    on.whiten[k] @ og.vs[k].data - on.vs[k].data))))
            yd = random_observation(rng, n, q, True, y.weights)
            degenerate = [yd, yd, apply_lift(LiftSpec.power(2), yd)]
            if i % 2:
                degenerate = [yd, apply_lift(LiftSpec.power(2), yd), yd]
            og_err = max(og_err, ortho.orthogonalize(degenerate).orthogonality_residual())
            g = random_signal(rng, int(rng.integers(1, 5)), yd)
            Ehh = centered_cross(yd, yd)
            Egh = centered_cross(g, yd)
            range_err = max(range_err, float(np.max(np.abs(Egh @ matfun.pinv(Ehh) @ Ehh - Egh))))
        worst = max(on_err, og_err, range_err, agree)
        detail = (f"orthonormal {on_err:.1e}, orthogonal {og_err:.1e}, "
                  f"range identity {range_err:.1e}, chain agreement {agree:.1e}")
        return worst <= 1e-8, detail

    return _timed(2, "orthogonality", body)


def eckart_young(rng, matrices=200, candidates=1000):
    def body():
        worst = -np.inf
        for _ in range(matrices):
            m, n = (int(v) for v in rng.integers(1, 5, size=2))
            M = rng.normal(size=(m, n)) * rng.choice([0.1, 1.0, 10.0])
            eta = int(rng.integers(0, min(m, n) + 1))
            tr = matfun.truncate(M, eta)
            half = candidates // 2
            A = rng.normal(size=(half, m, eta))
            B = rng.normal(size=(half, eta, n))
            far = A @ B
            eps = 10.0 ** rng.uniform(-6, 0, size=(candidates - half, 1, 1))
            Ua = tr.U[None] + eps * rng.normal(size=(candidates - half, m, eta))
            Vb = tr.V.T[None] + eps * rng.normal(size=(candidates - half, eta, n))
            near = (Ua * tr.S) @ Vb
            cand = np.concatenate([far, near])
            err = np.sum((M[None] - cand) ** 2, axis=(1, 2))
            worst = max(worst, float(tr.tail_energy - err.min()))
        return worst <= 1e-9, f"max (tail - best candidate) = {worst:.2e}"

    return _timed(3, "Eckart-Young oracle", body)


def reductions(rng, instances=20):
    def body():
        w_gap = k_gap = 0.0
        c4 = c5 = c6 = wf = 0.0
        for i in range(instances):
            x, y, _ = random_instance(rng, deficient=bool(i % 2))
            sys = ortho.orthogonalize([y])
            tpu = fit(x, sys, None, path="general")
            wm = baselines.wiener(x, y)
            w_gap = max(w_gap, float(np.max(np.abs(tpu.terms[0].F - wm.terms[0].F))),
                        float(np.max(np.abs(tpu.f0 - wm.f0))))
            eta = int(rng.integers(0, min(x.d, y.d) + 1))
            tpc = fit(x, sys, [eta], path="general")
            km = baselines.klt(x, y, eta)
            k_gap = max(k_gap, float(np.max(np.abs(tpc.terms[0].F - km.terms[0].F))),
                        float(np.max(np.abs(tpc.f0 - km.f0))))
            x2, y2, lifts = random_instance(rng, deficient=bool(i % 2), n_max=5)
            if len(lifts) == 1:
                lifts = list(LIFT_POOL[:2])
            budget = random_budget(rng, len(lifts), min(x2.d, y2.d))
            rep = baselines.compare(x2, y2, budget=budget, lifts=lifts, check=False)
            c4 = max(c4, rep.residual_wiener)
            wf = max(wf, rep.residual_wiener_formula)
            c5 = max(c5, rep.residual_klt)
            c6 = max(c6, rep.residual_volterra)
        ok = w_gap <= 1e-10 and k_gap <= 1e-9 and max(c4, c5, c6, wf) <= 1e-8
        detail = (f"wiener {w_gap:.1e}, klt {k_gap:.1e}, wiener gap {c4:.1e}, "
                  f"wiener formula {wf:.1e}, klt gap {c5:.1e}, volterra gap {c6:.1e}")
        return ok, detail

    return _timed(4, "reductions", body)


def monotonicity(rng, instances=50, slack=1e-10):
    def body():
        worst, checks = -np.inf, 0
        for _ in range(instances):
            x, y, _ = random_instance(rng)
            us = _views(y, LIFT_POOL)
            on, og = _systems(us)
            cap = min(x.d, y.d)
            for sys, path in ((on, "invertible"), (og, "general")):
                if sys is None:
                    continue
                sub = [ortho.orthogonalize(us[:p]) if path == "general"
                       else ortho.orthonormalize(us[:p]) for p in (1, 2, 3)]
                prev = None
                for p, s in enumerate(sub, start=1):
                    e = fit(x, s, None, path=path).theoretical_error
                    if prev is not None:
                        worst = max(worst, e - prev)
                        checks += 1
                    prev = e
                budget = list(random_budget(rng, 3, cap))
                prev_c = None
                for p, s in enumerate(sub, start=1):
                    e = fit(x, s, budget[:p], path=path).theoretical_error
                    if prev_c is not None:
                        worst = max(worst, e - prev_c)
                        checks += 1
                    prev_c = e
                base = fit(x, sys, budget, path=path).theoretical_error
                for k in range(3):
                    if sum(budget) < cap and budget[k] < min(x.d, sys.dims[k]):
                        up = list(budget)
                        up[k] += 1
                        worst = max(worst, fit(x, sys, up, path=path).theoretical_error - base)
                        checks += 1
        return worst <= slack, f"{checks} increments, max increase = {worst:.2e}"

    return _timed(5, "monotonicity", body)


def _random_params(rng, x, sys):
    f = mean(x) + rng.normal(size=x.d)
    Fs = [rng.normal(size=(x.d, n)) for n in sys.dims]
    return f, Fs


def j_decomposition(rng, draws=50):
    def body():
        worst = 0.0
        for i in range(draws):
            x, y, lifts = random_instance(rng, deficient=False if i % 2 else None)
            us = _views(y, lifts)
            on, og = _systems(us)
            for sys, path in ((on, "invertible"), (og, "general")):
                if sys is None:
                    continue
                f, Fs = _random_params(rng, x, sys)
                J = objective(x, sys, f, Fs)
                parts = objective_parts(x, sys, f, Fs, path)
                worst = max(worst, abs(J - sum(parts)) / max(1.0, abs(J)))
        return worst <= 1e-8, f"max relative |J - (J0+J1+J2)| = {worst:.2e}"

    return _timed(6, "J decomposition", body)


def compression_round_trip(rng, models=10, inputs=100):
    def body():
        worst, length_ok, ratio_ok = 0.0, True, True
        for i in range(models):
            x, y, lifts = random_instance(rng, deficient=bool(i % 2))
            us = _views(y, lifts)
            on, og = _systems(us)
            sys, path = (on, "invertible") if (on is not None and i % 3 == 0) else (og, "general")
            budget = random_budget(rng, len(lifts), min(x.d, y.d))
            model = fit(x, sys, budget, path=path, lifts=lifts)
            ynew = rng.normal(size=(y.d, inputs)) + mean(y)[:, None]
            code = compress(model, ynew)
            kept = sum(t.eta_kept for t in model.terms)
            length_ok &= code.shape == (kept, inputs) and code_length(model) == kept
            ratio_ok &= compression_ratio(model) == kept / x.d
            worst = max(worst, float(np.max(np.abs(decompress(model, code) - predict(model, ynew)))))
        ok = worst <= 1e-10 and length_ok and ratio_ok
        return ok, (f"max |decompress(compress) - predict| = {worst:.2e}, "
                    f"code length {'ok' if length_ok else 'WRONG'}, "
                    f"ratio {'exact' if ratio_ok else 'WRONG'}")

    return _timed(7, "compression round trip", body)


def optimality_probe(rng, models=10, perturbations=200):
    def body():
        worst, probes = -np.inf, 0
        per_model = perturbations // models
        for i in range(models):
            x, y, lifts = random_instance(rng, deficient=bool(i % 2))
            us = _views(y, lifts)
            on, og = _systems(us)
            sys, path = (on, "invertible") if (on is not None and i % 4 < 2) else (og, "general")
            budget = None if i % 5 == 4 else random_budget(rng, len(lifts), min(x.d, y.d))
            model = fit(x, sys, budget, path=path)
            Fs0 = [t.F for t in model.terms]
            J0 = objective(x, sys, model.f0, Fs0)
            for _ in range(per_model):
                scale = 10.0 ** rng.uniform(-6, 0)
                f = model.f0 + scale * rng.normal(size=x.d)
                Fs = []
                for k, F in enumerate(Fs0):
                    G = F + scale * rng.normal(size=F.shape)
                    if budget is not None:
                        G = matfun.truncate(G, budget[k]).K
                    Fs.append(G)
                worst = max(worst, J0 - objective(x, sys, f, Fs))
                probes += 1
        return worst <= 1e-9, f"{probes} probes, max J decrease = {worst:.2e}"

    return _timed(8, "optimality probing", body)


SUITES = (
    error_identities, orthogonality, eckart_young, reductions,
    monotonicity, j_decomposition, compression_round_trip, optimality_probe,
)


def run_all(seed: int = 0):
    """Run suites 1-8, each from its own child generator of ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(len(SUITES))
    return [suite(np.random.default_rng(s)) for suite, s in zip(SUITES, seeds)]


def run_one(number: int, seed: int = 0) -> CriterionResult:
    seeds = np.random.SeedSequence(seed).spawn(len(SUITES))
    return SUITES[number - 1](np.random.default_rng(seeds[number - 1]))

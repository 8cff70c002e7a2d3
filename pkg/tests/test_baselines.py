import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crrt import baselines, ortho, transform
from crrt.empirical import Ensemble, center, centered_cross
from crrt.errors import BudgetExceeded, InputError
from crrt.lifting import LiftSpec
from conftest import gaussian_pair


def test_wiener_examples(rng):
    y = Ensemble(rng.normal(size=(3, 50)))
    w = baselines.wiener(y, y)
    np.testing.assert_allclose(w.terms[0].F, np.eye(3), atol=1e-12)
    assert baselines.model_error(w, y) == pytest.approx(0.0, abs=1e-20)

    y = Ensemble(np.array([[1.0, -1.0, 1.0, -1.0]]))
    x = y.with_data(np.array([[1.0, 1.0, -1.0, -1.0]]))
    np.testing.assert_allclose(baselines.wiener(x, y).terms[0].F, 0.0, atol=1e-15)

    x = Ensemble(np.array([[1.0, -1.0]]))
    y = x.with_data(np.array([[2.0, -2.0]]))
    np.testing.assert_allclose(baselines.wiener(x, y).terms[0].F, [[0.5]])


def test_wiener_restores_means(rng):
    x, y = gaussian_pair(rng)
    w = baselines.wiener(x, y)
    pred = transform.predict(w, y.data)
    np.testing.assert_allclose(pred.mean(axis=1), x.data.mean(axis=1), atol=1e-10)


@pytest.mark.parametrize("deficient", [False, True])
def test_wiener_is_single_term_fit(rng, deficient):
    x, y = gaussian_pair(rng, deficient=deficient)
    w = baselines.wiener(x, y)
    tp = transform.fit(x, ortho.orthogonalize([y]))
    np.testing.assert_allclose(w.terms[0].F, tp.terms[0].F, atol=1e-10)
    np.testing.assert_allclose(w.f0, tp.f0, atol=1e-10)


def test_klt_full_rank_is_wiener(rng):
    x, y = gaussian_pair(rng, m=3, n=4)
    k = baselines.klt(x, y, 3)
    w = baselines.wiener(x, y)
    np.testing.assert_allclose(k.terms[0].F, w.terms[0].F, atol=1e-9)


def test_klt_zero_rank(rng):
    x, y = gaussian_pair(rng)
    k = baselines.klt(x, y, 0)
    trace = np.trace(centered_cross(x, x))
    assert baselines.model_error(k, x) == pytest.approx(trace)


def test_klt_on_itself_matches_eigen_tail(rng):
    y = Ensemble(rng.normal(size=(3, 3)) @ rng.normal(size=(3, 300)))
    k = baselines.klt(y, y, 2)
    lam = np.linalg.eigvalsh(np.cov(y.data, bias=True))
    assert baselines.model_error(k, y) == pytest.approx(lam[0], rel=1e-9)


def test_klt_budget(rng):
    x, y = gaussian_pair(rng, m=2, n=4)
    with pytest.raises(BudgetExceeded):
        baselines.klt(x, y, 3)


def test_volterra_features_layout():
    y = Ensemble(np.array([[1.0, 2.0], [3.0, -1.0]]))
    s = baselines.volterra_features(y).data
    assert s.shape == (7, 2)
    np.testing.assert_allclose(s[:, 0], [1, 1, 3, 1, 3, 3, 9])
    with pytest.raises(InputError):
        baselines.volterra_features(y, max_n=1)


def test_volterra_exact_quadratic(rng):
    y = Ensemble(rng.normal(size=(3, 200)))
    x = y.with_data(y.data**2)
    r = baselines.volterra2_spectrum(x, y).size
    assert baselines.volterra2_error(x, y, r) <= 1e-8


def test_volterra_zero_rank(rng):
    x, y = gaussian_pair(rng, m=2, n=3)
    xc = center(x)
    assert baselines.volterra2_error(x, y, 0) == pytest.approx(np.trace(xc.data @ xc.data.T) / x.q)


def test_volterra_linear_signal_matches_klt(rng):
    y = Ensemble(rng.normal(size=(4, 300)))
    x = y.with_data(rng.normal(size=(3, 4)) @ y.data)
    for r in (1, 2):
        assert baselines.volterra2_error(x, y, r) == pytest.approx(
            baselines.model_error(baselines.klt(x, y, r), x), abs=1e-8)


def test_volterra_rank_check(rng):
    x, y = gaussian_pair(rng, m=2, n=3)
    with pytest.raises(BudgetExceeded):
        baselines.volterra2_error(x, y, 3)


def test_compare_single_identity_term(rng):
    x, y = gaussian_pair(rng)
    rep = baselines.compare(x, y, p=1)
    assert rep.gap_wiener == 0
    assert rep.tp_error == pytest.approx(rep.wiener_error, abs=1e-10)
    rep = baselines.compare(x, y, p=1, budget=[2])
    assert rep.gap_klt == 0
    assert rep.tp_constrained_error == pytest.approx(rep.klt_error, abs=1e-10)


def test_compare_informative_second_lift(rng):
    y = Ensemble(rng.normal(size=(3, 300)))
    x = y.with_data(y.data + y.data**2)
    rep = baselines.compare(x, y, lifts=[LiftSpec.identity(), LiftSpec.power(2)], budget=(2, 1))
    assert rep.gap_wiener > 0.1
    assert rep.residual_wiener <= 1e-8
    assert rep.residual_klt <= 1e-8
    assert rep.residual_volterra <= 1e-8
    for err in (rep.wiener_error, rep.klt_error, rep.volterra2_error):
        assert err <= rep.trace_exx + 1e-12


def test_compare_reports_negative_delta(rng):
    # Volterra with the full quadratic basis beats a rank-limited T_p here
    y = Ensemble(rng.normal(size=(3, 300)))
    x = y.with_data(y.data * y.data[::-1])
    rep = baselines.compare(x, y, lifts=[LiftSpec.identity(), LiftSpec.power(2)], budget=(1, 1),
                            volterra_rank=2)
    assert rep.delta_p < 0
    assert rep.residual_volterra <= 1e-8


def test_compare_input_checks(rng):
    x, y = gaussian_pair(rng)
    with pytest.raises(InputError):
        baselines.compare(x, y, lifts=[LiftSpec.power(2)])
    with pytest.raises(InputError):
        baselines.compare(x, y, p=2, budget=(1,))
    with pytest.raises(InputError):
        baselines.compare(x, y, p=2, mode="sample_qr")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_comparison_identities(seed, deficient):
    gen = np.random.default_rng(seed)
    x, y = gaussian_pair(gen, m=int(gen.integers(1, 4)), n=int(gen.integers(2, 5)),
                         q=int(gen.integers(40, 150)), deficient=deficient)
    lifts = [LiftSpec.identity(), LiftSpec.power(2), LiftSpec.cosine(1)]
    budget = (1, 0, 0) if x.d == 1 else (1, 1, 0)
    rep = baselines.compare(x, y, lifts=lifts, budget=budget)
    assert max(rep.residuals().values()) <= 1e-8 * max(1.0, rep.trace_exx)

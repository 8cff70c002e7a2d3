import numpy as np
import pytest

from crrt import ortho, transform
from crrt.empirical import Ensemble, center, mse
from crrt.errors import InputError, UnresolvedReference
from crrt.lifting import LiftKind, LiftSpec, apply_lift, build_recursive_lifts


def test_pointwise_examples():
    y = Ensemble(np.array([[1.0, -2.0]]))
    np.testing.assert_array_equal(apply_lift(LiftSpec.identity(), y).data, y.data)
    np.testing.assert_allclose(apply_lift(LiftSpec.power(2), y).data, [[1.0, 4.0]])
    c = Ensemble(np.array([[0.0, np.pi]]))
    np.testing.assert_allclose(apply_lift(LiftSpec.cosine(1), c).data, [[1.0, -1.0]])


def test_spec_validation_and_parse():
    with pytest.raises(InputError):
        LiftSpec.power(0)
    with pytest.raises(InputError):
        LiftSpec.cosine(-1)
    assert LiftSpec.parse("power 3") == LiftSpec.power(3)
    assert LiftSpec.parse("cos 2") == LiftSpec.cosine(2)
    assert LiftSpec.parse("identity") == LiftSpec.identity()
    for bad in ("", "power", "power x", "sine 2"):
        with pytest.raises(InputError):
            LiftSpec.parse(bad)
    assert str(LiftSpec.power(3)) == "power 3"


def test_external_reference(rng):
    y = Ensemble(rng.normal(size=(2, 10)))
    ext = y.with_data(rng.normal(size=(3, 10)), "ext")
    assert apply_lift(LiftSpec.external("e"), y, {"e": ext}) is ext
    with pytest.raises(UnresolvedReference):
        apply_lift(LiftSpec.external("missing"), y, {})


def test_lifts_commute_with_permutation(rng):
    y = Ensemble(rng.normal(size=(3, 12)))
    order = rng.permutation(12)
    for spec in (LiftSpec.identity(), LiftSpec.power(3), LiftSpec.cosine(2)):
        np.testing.assert_array_equal(
            apply_lift(spec, y.permuted(order)).data, apply_lift(spec, y).data[:, order]
        )


def test_recursive_base_case(rng):
    y = Ensemble(rng.normal(size=(2, 30)))
    x = y.with_data(rng.normal(size=(2, 30)))
    us = build_recursive_lifts(x, y, 1)
    assert len(us) == 1 and us[0] is y


def test_recursive_exact_linear():
    y = Ensemble(np.array([[1.0, -0.5, 2.0, 0.0, -1.5]]))
    x = y.with_data(2 * y.data)
    us = build_recursive_lifts(x, y, 2)
    np.testing.assert_allclose(us[1].data, x.data, atol=1e-12)
    model = transform.fit(x, ortho.orthogonalize(us))
    assert transform.error_report(model, x).empirical <= 1e-20


@pytest.mark.parametrize("mode", ["general", "invertible"])
def test_recursive_monotone(rng, mode):
    y = center(Ensemble(rng.normal(size=(3, 200))))
    x = y.with_data(y.data**2 + 0.1 * rng.normal(size=(3, 200)))
    errors = []
    for p in (1, 2, 3):
        us = build_recursive_lifts(x, y, p, mode=mode)
        sys = ortho.orthogonalize(us)
        errors.append(transform.fit(x, sys).theoretical_error)
    assert errors[1] <= errors[0] + 1e-10
    assert errors[2] <= errors[1] + 1e-10


def test_recursive_models_replay(rng):
    y = Ensemble(rng.normal(size=(2, 80)))
    x = y.with_data(np.vstack([y.data[0] * y.data[1], np.sin(y.data[0])]))
    us, specs, refs = build_recursive_lifts(x, y, 3, return_models=True)
    assert [s.kind for s in specs] == [LiftKind.IDENTITY, LiftKind.RECURSIVE, LiftKind.RECURSIVE]
    model = transform.fit(x, ortho.orthogonalize(us), lifts=specs)
    np.testing.assert_allclose(
        transform.predict(model, y.data, refs), transform.training_prediction(model), atol=1e-10
    )


def test_recursive_bad_mode(rng):
    y = Ensemble(rng.normal(size=(2, 10)))
    with pytest.raises(InputError):
        build_recursive_lifts(y, y, 2, mode="fast")
    with pytest.raises(InputError):
        build_recursive_lifts(y, y, 0)

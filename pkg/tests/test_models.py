"""Tests for the four linear model families."""

import io

import numpy as np
import pytest

from rejopt.exceptions import (
    ConfigError,
    DomainError,
    NotFittedError,
    ParseError,
    ShapeError,
)
from rejopt.models import (
    BinarySVM,
    LogisticClassifier,
    MulticlassSVM,
    OrdinalSVM,
    _bsvm_risk_oracle,
    _lr_risk_oracle,
    _msvm_risk_oracle,
    _svor_risk_oracle,
    fold_model_normalization,
    load_model,
    make_classifier,
    save_model,
)


def random_problem(seed, n=30, d=4, n_classes=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (rng.integers(0, n_classes, size=n) + 1).astype(np.int64)
    # make sure every class shows up so n_classes inference is stable
    y[:n_classes] = np.arange(1, n_classes + 1)
    return X, y


def central_difference(fn, theta, h=1e-6):
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


def lr_with_logits(logits):
    """Hand-built one-feature logistic model: activations(x=[1]) == logits."""
    logits = np.asarray(logits, dtype=np.float64)
    model = LogisticClassifier()
    model.coef_ = np.zeros((logits.size, 1))
    model.intercept_ = logits.copy()
    model.n_classes_ = logits.size
    model.n_features_in_ = 1
    model.report_ = type("R", (), {"relative_gap": 0.0})()
    return model


# --- risk oracles at the zero vector -----------------------------------------


def test_lr_risk_at_zero_is_log_of_class_count():
    X, y = random_problem(0, n_classes=4)
    oracle = _lr_risk_oracle(X, y, 4)
    risk, grad = oracle(np.zeros(4 * 4 + 4))
    assert risk == pytest.approx(np.log(4.0), abs=1e-12)
    assert grad.shape == (4 * 4 + 4,)


def test_msvm_risk_at_zero_is_one():
    X, y = random_problem(1, n_classes=3)
    oracle = _msvm_risk_oracle(X, y, 3)
    risk, _ = oracle(np.zeros(3 * 4 + 3))
    assert risk == pytest.approx(1.0, abs=1e-12)


def test_bsvm_risk_at_zero_is_one():
    X, y = random_problem(2, n_classes=2)
    oracle = _bsvm_risk_oracle(X, y)
    risk, _ = oracle(np.zeros(5))
    assert risk == pytest.approx(1.0, abs=1e-12)


def test_svor_risk_at_zero_is_class_count_minus_one():
    X, y = random_problem(3, n_classes=5)
    oracle = _svor_risk_oracle(X, y, 5)
    risk, _ = oracle(np.zeros(4 + 4))
    assert risk == pytest.approx(4.0, abs=1e-12)


# --- oracle gradients and convexity ------------------------------------------


def smooth_theta(oracle_value, dim, seed, clearance):
    """Random theta at which ``oracle_value`` is locally smooth.

    ``clearance(theta)`` returns the smallest distance to a kink; redraw
    until it comfortably exceeds the finite-difference step.
    """
    rng = np.random.default_rng(seed)
    for _ in range(100):
        theta = rng.normal(size=dim)
        if clearance(theta) > 1e-3:
            return theta
    raise AssertionError("could not find a smooth point")


def test_lr_oracle_gradient_matches_finite_differences():
    X, y = random_problem(10, n=25, d=3, n_classes=3)
    oracle = _lr_risk_oracle(X, y, 3)
    rng = np.random.default_rng(11)
    for _ in range(3):
        theta = rng.normal(size=3 * 3 + 3)
        risk, grad = oracle(theta)
        fd = central_difference(lambda t: oracle(t)[0], theta)
        denom = max(np.linalg.norm(fd), 1.0)
        assert np.linalg.norm(grad - fd) / denom < 1e-5


def hinge_clearance_bsvm(X, y):
    signs = np.where(y == 2, 1.0, -1.0)

    def clearance(theta):
        act = X @ theta[:-1] + theta[-1]
        return float(np.abs(1.0 - signs * act).min())

    return clearance


def test_bsvm_oracle_gradient_matches_finite_differences():
    X, y = random_problem(12, n=20, d=3, n_classes=2)
    oracle = _bsvm_risk_oracle(X, y)
    theta = smooth_theta(oracle, 4, seed=13, clearance=hinge_clearance_bsvm(X, y))
    _, grad = oracle(theta)
    fd = central_difference(lambda t: oracle(t)[0], theta)
    assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1.0) < 1e-5


def test_svor_oracle_gradient_matches_finite_differences():
    X, y = random_problem(14, n=20, d=3, n_classes=4)
    oracle = _svor_risk_oracle(X, y, 4)

    def clearance(theta):
        t = X @ theta[:3]
        slacks = np.abs(1.0 - t[:, None] + theta[3:][None, :])
        slacks2 = np.abs(1.0 + t[:, None] - theta[3:][None, :])
        return float(min(slacks.min(), slacks2.min()))

    theta = smooth_theta(oracle, 3 + 3, seed=15, clearance=clearance)
    _, grad = oracle(theta)
    fd = central_difference(lambda t: oracle(t)[0], theta)
    assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1.0) < 1e-5


def test_msvm_oracle_gradient_matches_finite_differences():
    X, y = random_problem(16, n=20, d=3, n_classes=3)
    oracle = _msvm_risk_oracle(X, y, 3)

    def clearance(theta):
        A = X @ theta[: 3 * 3].reshape(3, 3).T
        onehot = np.zeros_like(A)
        onehot[np.arange(20), y - 1] = 1.0
        margins = A + (1.0 - onehot)
        part = np.partition(margins, -2, axis=1)
        return float((part[:, -1] - part[:, -2]).min())

    theta = smooth_theta(oracle, 3 * 3 + 3, seed=17, clearance=clearance)
    _, grad = oracle(theta)
    fd = central_difference(lambda t: oracle(t)[0], theta)
    assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1.0) < 1e-5


@pytest.mark.parametrize(
    "builder,n_classes,dim",
    [
        (lambda X, y: _lr_risk_oracle(X, y, 3), 3, 3 * 4 + 3),
        (lambda X, y: _msvm_risk_oracle(X, y, 3), 3, 3 * 4 + 3),
        (lambda X, y: _bsvm_risk_oracle(X, y), 2, 4 + 1),
        (lambda X, y: _svor_risk_oracle(X, y, 3), 3, 4 + 2),
    ],
    ids=["lr", "msvm", "bsvm", "svor"],
)
def test_risk_oracles_are_convex_along_random_chords(builder, n_classes, dim):
    X, y = random_problem(20, n_classes=n_classes)
    oracle = builder(X, y)
    rng = np.random.default_rng(21)
    for _ in range(10):
        a = rng.normal(size=dim)
        b = rng.normal(size=dim)
        mid = 0.5 * (a + b)
        assert oracle(mid)[0] <= 0.5 * (oracle(a)[0] + oracle(b)[0]) + 1e-9


@pytest.mark.parametrize(
    "builder,n_classes,dim",
    [
        (lambda X, y: _lr_risk_oracle(X, y, 3), 3, 3 * 4 + 3),
        (lambda X, y: _msvm_risk_oracle(X, y, 3), 3, 3 * 4 + 3),
        (lambda X, y: _bsvm_risk_oracle(X, y), 2, 4 + 1),
        (lambda X, y: _svor_risk_oracle(X, y, 3), 3, 4 + 2),
    ],
    ids=["lr", "msvm", "bsvm", "svor"],
)
def test_risk_oracles_satisfy_the_subgradient_inequality(builder, n_classes, dim):
    X, y = random_problem(22, n_classes=n_classes)
    oracle = builder(X, y)
    rng = np.random.default_rng(23)
    for _ in range(10):
        a = rng.normal(size=dim)
        b = rng.normal(size=dim)
        risk_a, grad_a = oracle(a)
        risk_b, _ = oracle(b)
        assert risk_b >= risk_a + grad_a @ (b - a) - 1e-9


# --- logistic classifier ------------------------------------------------------


def test_lr_posterior_from_known_logits():
    model = lr_with_logits([np.log(2.0), 0.0])
    probs = model.predict_proba(np.array([[1.0]]))
    assert probs[0] == pytest.approx([2.0 / 3.0, 1.0 / 3.0], abs=1e-12)


def test_lr_zero_parameters_give_the_uniform_posterior():
    model = lr_with_logits([0.0, 0.0, 0.0, 0.0, 0.0])
    probs = model.predict_proba(np.array([[1.0]]))
    np.testing.assert_allclose(probs[0], np.full(5, 0.2), atol=1e-15)


def test_lr_posterior_rows_sum_to_one_and_stay_positive():
    X, y = random_problem(30, n=60, d=5, n_classes=4)
    model = LogisticClassifier(C=0.5).fit(X, y)
    probs = model.predict_proba(X)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert (probs > 0.0).all()


def test_lr_posterior_survives_huge_activations():
    model = lr_with_logits([1e4, 0.0])
    probs = model.predict_proba(np.array([[1.0]]))
    assert np.isfinite(probs).all()
    assert probs[0, 0] == pytest.approx(1.0)
    assert probs[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_lr_uncertainty_is_one_minus_top_posterior():
    model = lr_with_logits([np.log(0.7), np.log(0.3)])
    unc = model.uncertainty(np.array([[1.0]]))
    assert unc[0] == pytest.approx(0.3, abs=1e-12)


def test_lr_fits_separable_data_to_full_accuracy():
    X = np.array([[-2.0], [-1.5], [1.5], [2.0]])
    y = np.array([1, 1, 2, 2])
    model = LogisticClassifier(C=0.1, gap_tol=1e-6).fit(X, y)
    np.testing.assert_array_equal(model.predict(X), y)
    assert model.report_.converged


# --- prediction rules ---------------------------------------------------------


def test_argmax_prediction_breaks_ties_toward_the_smaller_class():
    model = lr_with_logits([1.0, 1.0, 0.0])
    assert model.predict(np.array([[1.0]]))[0] == 1


def test_prediction_ignores_a_constant_shift_of_all_activations():
    X, y = random_problem(31, n_classes=3)
    model = LogisticClassifier(C=1.0).fit(X, y)
    shifted = fold_model_normalization(model, np.zeros(4), np.ones(4))
    shifted.intercept_ = shifted.intercept_ + 17.5
    np.testing.assert_array_equal(model.predict(X), shifted.predict(X))


def test_bsvm_predicts_class_two_only_on_positive_activations():
    model = BinarySVM()
    model.coef_ = np.array([1.0, 0.0])
    model.intercept_ = 0.0
    model.n_classes_ = 2
    model.n_features_in_ = 2
    model.report_ = type("R", (), {"relative_gap": 0.0})()
    X = np.array([[2.0, 1.0], [-2.0, 1.0], [0.0, 5.0]])
    np.testing.assert_array_equal(model.predict(X), [2, 1, 1])


def test_bsvm_uncertainty_is_negated_absolute_activation():
    model = BinarySVM()
    model.coef_ = np.array([1.0, 0.0])
    model.intercept_ = 0.0
    model.n_classes_ = 2
    model.n_features_in_ = 2
    model.report_ = type("R", (), {"relative_gap": 0.0})()
    unc = model.uncertainty(np.array([[2.0, 1.0]]))
    assert unc[0] == pytest.approx(-2.0, abs=1e-15)


def test_msvm_uncertainty_is_negated_top_activation():
    X, y = random_problem(32, n_classes=3)
    model = MulticlassSVM(C=1.0).fit(X, y)
    acts = model.decision_function(X)
    np.testing.assert_allclose(model.uncertainty(X), -acts.max(axis=1), atol=1e-15)


def ordinal_stub(w, thresholds):
    model = OrdinalSVM()
    model.coef_ = np.asarray(w, dtype=np.float64)
    model.thresholds_ = np.asarray(thresholds, dtype=np.float64)
    model.n_classes_ = len(thresholds) + 1
    model.n_features_in_ = len(w)
    model.report_ = type("R", (), {"relative_gap": 0.0})()
    return model


def test_svor_prediction_counts_cleared_thresholds():
    model = ordinal_stub([1.0], [0.0, 1.0])
    X = np.array([[0.5], [-0.5], [1.5], [0.0], [1.0]])
    # projections 0.5, -0.5, 1.5, 0.0, 1.0; strict comparisons against (0, 1)
    np.testing.assert_array_equal(model.predict(X), [2, 1, 3, 1, 2])


def test_svor_uncertainty_is_negated_distance_to_nearest_threshold():
    model = ordinal_stub([1.0], [0.0, 1.0])
    unc = model.uncertainty(np.array([[0.5], [2.5], [-0.25]]))
    np.testing.assert_allclose(unc, [-0.5, -1.5, -0.25], atol=1e-15)


def test_margin_scores_scale_linearly_with_the_parameters():
    X, y = random_problem(33, n_classes=2)
    model = BinarySVM(C=1.0).fit(X, y)
    doubled = fold_model_normalization(model, np.zeros(4), np.ones(4))
    doubled.coef_ = 2.0 * model.coef_
    doubled.intercept_ = 2.0 * model.intercept_
    np.testing.assert_allclose(
        doubled.decision_function(X), 2.0 * model.decision_function(X), rtol=1e-12
    )
    np.testing.assert_allclose(
        doubled.uncertainty(X), 2.0 * model.uncertainty(X), rtol=1e-12
    )


# --- solver quality -----------------------------------------------------------


def test_bsvm_drives_separable_hinge_risk_to_zero():
    X = np.array([[-1.0], [1.0]])
    y = np.array([1, 2])
    model = BinarySVM(C=0.01, gap_tol=1e-8).fit(X, y)
    oracle = _bsvm_risk_oracle(X, y)
    risk, _ = oracle(np.concatenate([model.coef_, [model.intercept_]]))
    assert risk <= 1e-3
    np.testing.assert_array_equal(model.predict(X), y)


def test_msvm_biases_stay_at_zero():
    X, y = random_problem(34, n_classes=3)
    model = MulticlassSVM(C=1.0).fit(X, y)
    np.testing.assert_array_equal(model.intercept_, np.zeros(3))


def test_svor_improves_on_the_zero_parameter_risk():
    rng = np.random.default_rng(35)
    t = rng.uniform(-2.0, 2.0, size=80)
    X = t[:, None]
    y = np.digitize(t, [-0.5, 0.5]) + 1  # monotone labels 1..3
    model = OrdinalSVM(C=0.1, gap_tol=1e-5).fit(X, y)
    oracle = _svor_risk_oracle(X, y.astype(np.int64), 3)
    at_zero, _ = oracle(np.zeros(3))
    fitted_risk, _ = oracle(np.concatenate([model.coef_, model.thresholds_]))
    assert at_zero == pytest.approx(2.0, abs=1e-12)
    assert fitted_risk < at_zero
    # ordering should be essentially recovered on well separated points
    clear = np.abs(np.abs(t) - 0.5) > 0.2
    assert (model.predict(X)[clear] == y[clear]).mean() > 0.9


def test_primal_value_includes_the_regularizer():
    X, y = random_problem(36, n_classes=2)
    model = BinarySVM(C=2.0, gap_tol=1e-6).fit(X, y)
    theta = np.concatenate([model.coef_, [model.intercept_]])
    oracle = _bsvm_risk_oracle(X, y)
    risk, _ = oracle(theta)
    expected = risk + 0.5 * 2.0 * float(theta @ theta)
    assert model.report_.primal_value <= expected + 1e-9


# --- factory and validation ----------------------------------------------------


def test_make_classifier_dispatches_on_family_and_class_count():
    assert isinstance(make_classifier("lr", 4), LogisticClassifier)
    assert isinstance(make_classifier("svm", 2), BinarySVM)
    assert isinstance(make_classifier("svm", 5), MulticlassSVM)
    assert isinstance(make_classifier("svor", 3), OrdinalSVM)


def test_make_classifier_forwards_parameters():
    model = make_classifier("lr", 3, C=3.5, max_iters=50)
    assert model.C == 3.5
    assert model.max_iters == 50


def test_make_classifier_rejects_unknown_families():
    with pytest.raises(ConfigError):
        make_classifier("forest", 3)


def test_binary_svm_rejects_more_than_two_classes():
    X, y = random_problem(37, n_classes=3)
    with pytest.raises(DomainError):
        BinarySVM().fit(X, y)


def test_fit_rejects_labels_beyond_the_declared_class_count():
    X, y = random_problem(38, n_classes=3)
    with pytest.raises(DomainError):
        LogisticClassifier().fit(X, y, n_classes=2)


def test_fit_rejects_empty_training_sets():
    with pytest.raises(ShapeError):
        LogisticClassifier().fit(np.empty((0, 3)), np.empty(0, dtype=np.int64))


def test_predict_requires_a_fitted_model():
    with pytest.raises(NotFittedError):
        LogisticClassifier().predict(np.zeros((1, 2)))


def test_inference_rejects_mismatched_feature_counts():
    X, y = random_problem(39, n_classes=2)
    model = BinarySVM().fit(X, y)
    with pytest.raises(ShapeError):
        model.predict(np.zeros((2, 7)))


# --- normalization folding ------------------------------------------------------


@pytest.mark.parametrize("family,n_classes", [("lr", 3), ("svm", 2), ("svm", 3), ("svor", 3)])
def test_folding_normalization_reproduces_decisions_on_raw_features(family, n_classes):
    rng = np.random.default_rng(40)
    raw = rng.normal(loc=5.0, scale=3.0, size=(50, 4))
    y = (rng.integers(0, n_classes, size=50) + 1).astype(np.int64)
    y[:n_classes] = np.arange(1, n_classes + 1)
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    normalized = (raw - mean) / scale
    model = make_classifier(family, n_classes, C=1.0).fit(normalized, y)
    folded = fold_model_normalization(model, mean, scale)
    np.testing.assert_array_equal(folded.predict(raw), model.predict(normalized))
    np.testing.assert_allclose(
        folded.uncertainty(raw), model.uncertainty(normalized), atol=1e-9
    )


def test_folding_rejects_mismatched_statistics():
    X, y = random_problem(41, n_classes=2)
    model = BinarySVM().fit(X, y)
    with pytest.raises(ShapeError):
        fold_model_normalization(model, np.zeros(2), np.ones(2))


def test_folding_requires_a_fitted_model():
    with pytest.raises(NotFittedError):
        fold_model_normalization(BinarySVM(), np.zeros(2), np.ones(2))


# --- serialization ---------------------------------------------------------------


@pytest.mark.parametrize("family,n_classes", [("lr", 3), ("svm", 2), ("svm", 3), ("svor", 3)])
def test_save_load_round_trip_is_exact(family, n_classes):
    X, y = random_problem(42, n_classes=n_classes)
    model = make_classifier(family, n_classes, C=0.7).fit(X, y)
    buffer = io.StringIO()
    save_model(model, buffer, header_comments=["trained for the round-trip test"])
    buffer.seek(0)
    loaded = load_model(buffer)
    assert loaded.kind == model.kind
    assert loaded.n_classes_ == model.n_classes_
    assert loaded.C == model.C
    np.testing.assert_array_equal(loaded.coef_, model.coef_)
    if family == "svor":
        np.testing.assert_array_equal(loaded.thresholds_, model.thresholds_)
    else:
        np.testing.assert_array_equal(
            np.atleast_1d(loaded.intercept_), np.atleast_1d(model.intercept_)
        )
    np.testing.assert_array_equal(loaded.predict(X), model.predict(X))
    np.testing.assert_array_equal(loaded.uncertainty(X), model.uncertainty(X))
    assert loaded.report_.relative_gap == model.report_.relative_gap


def test_save_model_requires_a_fitted_model():
    with pytest.raises(NotFittedError):
        save_model(BinarySVM(), io.StringIO())


def test_load_model_rejects_a_missing_header():
    with pytest.raises(ParseError):
        load_model(io.StringIO("kind logistic\n"))


def test_load_model_rejects_unknown_kinds():
    text = "rejopt-model 1\nkind forest\nn_classes 2\nn_features 1\nC 1.0\ngap 0.0\n"
    with pytest.raises(ParseError):
        load_model(io.StringIO(text))


def test_load_model_rejects_truncated_files():
    text = "rejopt-model 1\nkind logistic\nn_classes 2\n"
    with pytest.raises(ParseError):
        load_model(io.StringIO(text))


def test_load_model_rejects_malformed_floats():
    text = (
        "rejopt-model 1\nkind bsvm\nn_classes 2\nn_features 1\nC 1.0\ngap 0.0\n"
        "w oops\nb 0.0\n"
    )
    with pytest.raises(ParseError):
        load_model(io.StringIO(text))


def test_load_model_rejects_wrong_parameter_shapes():
    text = (
        "rejopt-model 1\nkind bsvm\nn_classes 2\nn_features 2\nC 1.0\ngap 0.0\n"
        "w 1.0\nb 0.0\n"
    )
    with pytest.raises(ParseError):
        load_model(io.StringIO(text))


def test_load_model_skips_comment_lines():
    X, y = random_problem(43, n_classes=2)
    model = BinarySVM(C=1.0).fit(X, y)
    buffer = io.StringIO()
    save_model(model, buffer, header_comments=["first", "second"])
    text = buffer.getvalue()
    assert text.startswith("# first\n# second\n")
    loaded = load_model(io.StringIO(text))
    np.testing.assert_array_equal(loaded.coef_, model.coef_)

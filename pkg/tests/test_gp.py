import numpy as np
import pytest

from drcurve.gp import (
    KERNEL_FAMILIES,
    STATIONARY_FAMILIES,
    GprConditioningError,
    GprInputError,
    JitterPolicy,
    KernelSpec,
    fit,
    fit_hyperparameters,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    model_from_record,
    model_to_record,
    predict_mean,
    predict_mean_batch,
    predict_var,
    predict_var_batch,
)


# ---------------------------------------------------------------------------
# oracle: from-scratch kernels and explicit-inverse posterior, kept separate
# from the library's code path on purpose

def oracle_kernel(spec, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.family == "linear":
        return spec.signal_variance * float((a - spec.offset) @ (b - spec.offset))
    r = np.sqrt(float(np.sum(((a - b) / spec.length_scale) ** 2)))
    s = spec.signal_variance
    if spec.family == "se":
        return s * np.exp(-0.5 * r * r)
    if spec.family == "exponential":
        return s * np.exp(-r)
    if spec.family == "matern32":
        return s * (1 + np.sqrt(3) * r) * np.exp(-np.sqrt(3) * r)
    if spec.family == "matern52":
        return s * (1 + np.sqrt(5) * r + 5 * r * r / 3) * np.exp(-np.sqrt(5) * r)
    if spec.family == "rational_quadratic":
        return s * (1 + r * r / (2 * spec.alpha)) ** (-spec.alpha)
    raise AssertionError(spec.family)


def oracle_posterior(spec, X, y, noise, xq):
    m = len(y)
    K = np.array([[oracle_kernel(spec, X[i], X[j]) for j in range(m)] for i in range(m)])
    A = np.linalg.inv(K + noise * np.eye(m))
    ks = np.array([oracle_kernel(spec, xq, X[i]) for i in range(m)])
    mean = float(ks @ A @ y)
    var = float(oracle_kernel(spec, xq, xq) + noise - ks @ A @ ks)
    return mean, var


# ---------------------------------------------------------------------------
# kernels

def test_se_at_zero_distance_is_signal_variance():
    spec = KernelSpec("se")
    for x in ([0.0], [3.5, -1.0], [1e3]):
        assert kernel_eval(spec, x, x) == pytest.approx(1.0, abs=1e-12)


def test_se_closed_form_at_unit_distance():
    spec = KernelSpec("se")
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_rq_approaches_se_for_large_alpha():
    rq = KernelSpec("rational_quadratic", alpha=1e6)
    se = KernelSpec("se")
    k_rq = kernel_eval(rq, [0.0], [1.0])
    k_se = kernel_eval(se, [0.0], [1.0])
    assert abs(k_rq - k_se) < 1e-6


def test_kernel_symmetry_all_families():
    rng = np.random.default_rng(0)
    for family in KERNEL_FAMILIES:
        spec = KernelSpec(family, signal_variance=1.7, length_scale=0.8,
                          alpha=1.3, offset=0.2)
        for _ in range(20):
            a, b = rng.normal(size=3), rng.normal(size=3)
            assert kernel_eval(spec, a, b) == pytest.approx(
                kernel_eval(spec, b, a), abs=1e-12
            )


def test_kernel_matches_oracle_all_families():
    rng = np.random.default_rng(1)
    for family in KERNEL_FAMILIES:
        spec = KernelSpec(family, signal_variance=2.0, length_scale=1.4,
                          alpha=0.7, offset=-0.3)
        for _ in range(20):
            a, b = rng.normal(size=2), rng.normal(size=2)
            assert kernel_eval(spec, a, b) == pytest.approx(
                oracle_kernel(spec, a, b), abs=1e-12
            )


def test_gram_matrices_are_positive_semidefinite():
    rng = np.random.default_rng(2)
    for family in KERNEL_FAMILIES:
        spec = KernelSpec(family, signal_variance=1.0, length_scale=0.5)
        X = rng.normal(size=(15, 3))
        K = kernel_matrix(spec, X, X)
        eig = np.linalg.eigvalsh(K)
        assert eig.min() >= -1e-8 * np.trace(K)


def test_kernel_dimension_mismatch():
    with pytest.raises(GprInputError):
        kernel_eval(KernelSpec("se"), [0.0], [0.0, 1.0])


def test_per_dimension_length_scales():
    spec = KernelSpec("se", length_scale=np.array([1.0, 10.0]))
    near = kernel_eval(spec, [0.0, 0.0], [0.0, 1.0])   # long scale, small effect
    far = kernel_eval(spec, [0.0, 0.0], [1.0, 0.0])    # short scale, large effect
    assert near > far


# ---------------------------------------------------------------------------
# conditioning

def test_empty_model_predicts_prior():
    spec = KernelSpec("se", signal_variance=2.5)
    model = fit(np.zeros((0, 2)), [], spec, noise_variance=0.1)
    assert predict_mean(model, [1.0, 2.0]) == 0.0
    assert predict_var(model, [1.0, 2.0]) == pytest.approx(2.6)


def test_duplicate_inputs_with_zero_noise_fail_without_jitter():
    X = np.array([[1.0], [1.0]])
    with pytest.raises(GprConditioningError):
        fit(X, [0.5, 0.7], KernelSpec("se"), 0.0, jitter=JitterPolicy.none())


def test_jitter_escalation_reports_final_level():
    X = np.array([[1.0], [1.0]])
    try:
        fit(X, [0.5, 0.7], KernelSpec("se"), 0.0, jitter=JitterPolicy(attempts=0))
    except GprConditioningError as err:
        assert err.final_jitter >= 0.0


def test_factor_reconstructs_covariance():
    X = np.array([[0.0], [1.0]])
    model = fit(X, [1.0, -1.0], KernelSpec("se"), noise_variance=0.3)
    K = kernel_matrix(model.spec, X, X) + 0.3 * np.eye(2)
    recon = model.factor @ model.factor.T
    assert np.linalg.norm(recon - K) / np.linalg.norm(K) < 1e-10


def test_interpolates_noiseless_training_point():
    model = fit([[2.0]], [3.7], KernelSpec("se"), 0.0)
    assert predict_mean(model, [2.0]) == pytest.approx(3.7, abs=1e-9)
    assert predict_var(model, [2.0]) == pytest.approx(0.0, abs=1e-9)


def test_far_query_decays_to_prior():
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 1, size=(6, 1))
    y = rng.normal(size=6) * 4.0
    model = fit(X, y, KernelSpec("se", length_scale=0.3), 1e-6)
    assert abs(predict_mean(model, [50.0])) < 1e-6 * np.max(np.abs(y))
    assert predict_var(model, [50.0]) == pytest.approx(1.0 + 1e-6, abs=1e-9)


def test_two_point_posterior_matches_dense_oracle():
    spec = KernelSpec("se", signal_variance=1.5, length_scale=0.7)
    X = np.array([[0.0], [1.0]])
    y = np.array([0.3, -0.6])
    model = fit(X, y, spec, 0.05)
    for xq in ([0.5], [0.0], [2.3]):
        mean, var = oracle_posterior(spec, X, y, 0.05, np.asarray(xq))
        assert predict_mean(model, xq) == pytest.approx(mean, abs=1e-10)
        assert predict_var(model, xq) == pytest.approx(var, abs=1e-10)


def test_posterior_matches_dense_oracle_many_random_instances():
    rng = np.random.default_rng(4)
    for k in range(60):
        family = KERNEL_FAMILIES[k % len(KERNEL_FAMILIES)]
        spec = KernelSpec(family, signal_variance=rng.uniform(0.5, 2.0),
                          length_scale=rng.uniform(0.3, 2.0),
                          alpha=rng.uniform(0.5, 3.0), offset=rng.uniform(-1, 1))
        m = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        X = rng.normal(size=(m, d))
        y = rng.normal(size=m)
        noise = rng.uniform(0.01, 0.5)
        model = fit(X, y, spec, noise)
        xq = rng.normal(size=d)
        mean, var = oracle_posterior(spec, X, y, noise, xq)
        assert predict_mean(model, xq) == pytest.approx(mean, abs=1e-8)
        assert predict_var(model, xq) == pytest.approx(var, abs=1e-8)


def test_posterior_variance_never_exceeds_prior():
    rng = np.random.default_rng(5)
    spec = KernelSpec("matern52", signal_variance=2.0, length_scale=1.0)
    X = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    model = fit(X, y, spec, 0.1)
    for _ in range(50):
        xq = rng.normal(size=2) * 3
        assert predict_var(model, xq) <= 2.0 + 0.1 + 1e-9


def test_adding_data_never_increases_variance():
    rng = np.random.default_rng(6)
    spec = KernelSpec("se", length_scale=0.8)
    for _ in range(10):
        X = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        small = fit(X[:5], y[:5], spec, 0.05)
        big = fit(X, y, spec, 0.05)
        for _ in range(10):
            xq = rng.normal(size=2)
            assert predict_var(big, xq) <= predict_var(small, xq) + 1e-8


def test_standardized_fit_predictions():
    # same posterior shape, shifted prior: far away reverts to the data mean
    rng = np.random.default_rng(7)
    X = rng.uniform(0, 1, size=(8, 1))
    y = 50.0 + rng.normal(size=8)
    model = fit(X, y, KernelSpec("se", length_scale=0.2), 0.01, standardize=True)
    assert predict_mean(model, [30.0]) == pytest.approx(np.mean(y), abs=1e-6)
    at_data = predict_mean(model, X[0])
    assert abs(at_data - y[0]) < 0.5


def test_mismatched_rows_rejected():
    with pytest.raises(GprInputError):
        fit(np.zeros((3, 1)), [1.0, 2.0], KernelSpec("se"), 0.1)


def test_query_dimension_mismatch_rejected():
    model = fit([[0.0, 1.0]], [1.0], KernelSpec("se"), 0.1)
    with pytest.raises(GprInputError):
        predict_mean(model, [1.0])


# ---------------------------------------------------------------------------
# marginal likelihood

def test_lml_single_point_closed_form():
    model = fit([[0.0]], [0.0], KernelSpec("se"), 0.0)
    assert log_marginal_likelihood(model) == pytest.approx(
        -0.5 * np.log(2 * np.pi), abs=1e-12
    )


def test_lml_zero_targets_maximize_fit_term():
    X = np.array([[0.0], [1.0]])
    m0 = fit(X, [0.0, 0.0], KernelSpec("se"), 0.1)
    m1 = fit(X, [1.0, -2.0], KernelSpec("se"), 0.1)
    assert log_marginal_likelihood(m0) > log_marginal_likelihood(m1)


def test_lml_matches_dense_formula():
    spec = KernelSpec("matern32", signal_variance=1.2, length_scale=0.9)
    X = np.array([[0.0], [0.7]])
    y = np.array([0.4, -0.1])
    noise = 0.2
    model = fit(X, y, spec, noise)
    K = kernel_matrix(spec, X, X) + noise * np.eye(2)
    expect = float(
        -0.5 * y @ np.linalg.solve(K, y)
        - 0.5 * np.log(np.linalg.det(K))
        - np.log(2 * np.pi)
    )
    assert log_marginal_likelihood(model) == pytest.approx(expect, abs=1e-9)


def test_lml_requires_data():
    model = fit(np.zeros((0, 1)), [], KernelSpec("se"), 0.1)
    with pytest.raises(GprInputError):
        log_marginal_likelihood(model)


# ---------------------------------------------------------------------------
# hyperparameter fitting

def test_recovers_length_scale_within_factor_two():
    rng = np.random.default_rng(8)
    true = KernelSpec("se", signal_variance=1.0, length_scale=1.0)
    X = rng.uniform(-3, 3, size=(50, 1))
    K = kernel_matrix(true, X, X) + 1e-4 * np.eye(50)
    y = np.linalg.cholesky(K) @ rng.normal(size=50)
    result = fit_hyperparameters(X, y, "se", seed=0)
    assert 0.5 <= result.spec.length_scale <= 2.0


def test_constant_targets_predict_constant():
    rng = np.random.default_rng(9)
    X = rng.uniform(0, 1, size=(20, 2))
    y = np.full(20, 3.3)
    result = fit_hyperparameters(X, y, "se", seed=1, standardize=True)
    model = fit(X, y, result.spec, result.noise_variance, standardize=True)
    for _ in range(10):
        xq = rng.uniform(0, 1, size=2)
        assert predict_mean(model, xq) == pytest.approx(3.3, abs=1e-3)


def test_doubling_targets_doubles_predictions():
    rng = np.random.default_rng(10)
    X = rng.uniform(0, 2, size=(25, 1))
    y = np.sin(2 * X[:, 0]) + 0.05 * rng.normal(size=25)
    r1 = fit_hyperparameters(X, y, "se", seed=3, standardize=True)
    m1 = fit(X, y, r1.spec, r1.noise_variance, standardize=True)
    r2 = fit_hyperparameters(X, 2 * y, "se", seed=3, standardize=True)
    m2 = fit(X, 2 * y, r2.spec, r2.noise_variance, standardize=True)
    for xq in np.linspace(0, 2, 7):
        a, b = predict_mean(m1, [xq]), predict_mean(m2, [xq])
        assert b == pytest.approx(2 * a, abs=2e-2 * max(1.0, abs(a)))


def test_hyperfit_deterministic_given_seed():
    rng = np.random.default_rng(11)
    X = rng.uniform(0, 1, size=(30, 2))
    y = X[:, 0] + 0.1 * rng.normal(size=30)
    a = fit_hyperparameters(X, y, "matern52", seed=42)
    b = fit_hyperparameters(X, y, "matern52", seed=42)
    assert a.spec == b.spec
    assert a.noise_variance == b.noise_variance


def test_hyperfit_requires_two_points():
    with pytest.raises(GprInputError):
        fit_hyperparameters([[0.0]], [1.0], "se", seed=0)


# ---------------------------------------------------------------------------
# serialization

def test_record_round_trip_bit_exact():
    rng = np.random.default_rng(12)
    X = rng.uniform(0, 1, size=(12, 2))
    y = rng.normal(size=12)
    result = fit_hyperparameters(X, y, "rational_quadratic", seed=5)
    model = fit(X, y, result.spec, result.noise_variance, standardize=True)
    record = model_to_record(model)
    clone = model_from_record(record, X, y)
    assert clone.spec == model.spec
    assert clone.noise_variance == model.noise_variance
    assert clone.y_offset == model.y_offset and clone.y_scale == model.y_scale
    xq = rng.uniform(0, 1, size=(5, 2))
    np.testing.assert_array_equal(predict_mean_batch(model, xq), predict_mean_batch(clone, xq))
    np.testing.assert_array_equal(predict_var_batch(model, xq), predict_var_batch(clone, xq))


def test_record_rejects_wrong_training_data():
    X = np.zeros((3, 1))
    y = np.array([1.0, 2.0, 3.0])
    model = fit(X, y, KernelSpec("se"), 0.1)
    record = model_to_record(model)
    with pytest.raises(GprInputError):
        model_from_record(record, X, y + 1.0)

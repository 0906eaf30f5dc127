import itertools

import numpy as np
import pytest

from drcurve.curve import (
    CurveModel,
    _best_split,
    curve_from_json,
    curve_to_json,
    error_metrics,
    fit_curve,
    fit_tree,
    predict_matrix,
    predict_tree,
    query_curve,
    slice_curve,
    tree_error_metrics,
    tree_predict_matrix,
)
from drcurve.idc import ModelInputError
from drcurve.sampling import SampleSet


def synthetic_samples(m=60, k=3, seed=0, noise=0.02, fn=None):
    rng = np.random.default_rng(seed)
    prices = rng.uniform(0.0, 0.5, size=(m, k))
    if fn is None:
        fn = lambda p: 40.0 + 100.0 * p + 25.0 * np.sin(6.0 * p)
    amounts = fn(prices) + noise * rng.normal(size=(m, k))
    amounts = np.maximum(amounts, 0.0)
    labels = tuple(f"idc1_t{j + 1}" for j in range(k))
    seeds = np.arange(m, dtype=np.uint64)
    return SampleSet(prices, amounts, seeds, seed, labels)


# ---------------------------------------------------------------------------
# curve fitting and queries

def test_constant_outputs_predict_constant():
    samples = synthetic_samples(m=24, fn=lambda p: np.full_like(p, 77.0), noise=0.0)
    model = fit_curve(samples, "se", seed=0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        res = query_curve(model, rng.uniform(0, 0.5, 3))
        np.testing.assert_allclose(res.mean, 77.0, atol=1e-3)


def test_refit_same_seed_identical_hyperparameters():
    samples = synthetic_samples(m=30)
    a = fit_curve(samples, "matern32", seed=9)
    b = fit_curve(samples, "matern32", seed=9)
    for ma, mb in zip(a.models, b.models):
        assert ma.spec == mb.spec
        assert ma.noise_variance == mb.noise_variance


def test_synthetic_linear_truth_small_heldout_error():
    fn = lambda p: 20.0 + 180.0 * p
    train = synthetic_samples(m=100, seed=2, noise=0.5, fn=fn)
    test = synthetic_samples(m=60, seed=3, noise=0.5, fn=fn)
    model = fit_curve(train, "se", seed=0)
    report = error_metrics(model, test)
    assert report.n_out == 60 and report.n_within == 0
    assert report.out_pct < 5.0


def test_fit_curve_needs_four_samples():
    samples = synthetic_samples(m=3)
    with pytest.raises(ModelInputError):
        fit_curve(samples, "se", seed=0)


def test_query_band_structure():
    samples = synthetic_samples(m=40, seed=5)
    model = fit_curve(samples, "se", seed=1)
    res = query_curve(model, np.full(3, 0.25))
    assert np.all(res.lower <= res.mean + 1e-12)
    assert np.all(res.mean <= res.upper + 1e-12)
    np.testing.assert_allclose(res.upper - res.mean, res.mean - res.lower, atol=1e-12)
    np.testing.assert_allclose(res.upper - res.mean, 1.96 * np.sqrt(res.variance), atol=1e-12)


def test_query_at_training_point_with_tiny_noise_has_tight_band():
    from drcurve.gp import KernelSpec, fit

    samples = synthetic_samples(m=30, noise=0.0, seed=7)
    spec = KernelSpec("se", signal_variance=1.0, length_scale=0.2)
    models = tuple(
        fit(samples.prices, samples.amounts[:, j], spec, 1e-12, standardize=True)
        for j in range(samples.n_cells)
    )
    model = CurveModel(models, samples.labels, samples.digest())
    res = query_curve(model, samples.prices[4])
    scale = float(np.max(samples.amounts))
    assert np.all(res.upper - res.lower < 1e-3 * scale * 2)


def test_query_dimension_mismatch():
    samples = synthetic_samples(m=20)
    model = fit_curve(samples, "se", seed=0)
    with pytest.raises(ModelInputError):
        query_curve(model, np.zeros(5))


def test_degenerate_variance_collapses_band():
    from drcurve.curve import CurveQueryResult

    res = CurveQueryResult(np.array([1.0]), np.zeros(1), np.array([1.0]), np.array([1.0]))
    assert res.lower[0] == res.mean[0] == res.upper[0]


# ---------------------------------------------------------------------------
# error metric

def test_perfect_predictor_scores_zero():
    samples = synthetic_samples(m=30, noise=0.0)
    model = fit_curve(samples, "se", seed=0)
    pred = predict_matrix(model, samples.prices)
    # error against the model's own predictions as ground truth
    fake = SampleSet(samples.prices, np.maximum(pred, 0.0), samples.sample_seeds,
                     samples.master_seed, samples.labels)
    report = error_metrics(model, fake)
    assert report.within_pct == pytest.approx(0.0, abs=1e-9)


def test_zero_predictor_scores_hundred():
    from drcurve.curve import _normalized_rms_pct

    actual = np.array([[3.0, 4.0], [1.0, 2.0]])
    assert _normalized_rms_pct(np.zeros_like(actual), actual) == pytest.approx(100.0)


def test_constant_predictor_matches_hand_ratio():
    from drcurve.curve import _normalized_rms_pct

    actual = np.array([[2.0], [4.0]])
    pred = np.full_like(actual, 3.0)
    expect = 100.0 * np.sqrt(np.mean((pred - actual) ** 2)) / np.sqrt(np.mean(actual**2))
    assert _normalized_rms_pct(pred, actual) == pytest.approx(expect)
    assert expect == pytest.approx(100.0 * 1.0 / np.sqrt(10.0))


def test_error_metrics_splits_membership():
    train = synthetic_samples(m=40, seed=11)
    main = fit_curve(train, "se", seed=0)
    extra = synthetic_samples(m=10, seed=12)
    mixed = SampleSet(
        np.vstack([train.prices[:5], extra.prices]),
        np.vstack([train.amounts[:5], extra.amounts]),
        np.arange(15, dtype=np.uint64), 0, train.labels,
    )
    report = error_metrics(main, mixed)
    assert report.n_within == 5 and report.n_out == 10
    assert report.within_pct is not None and report.out_pct is not None


def test_error_metrics_empty_split_flagged():
    train = synthetic_samples(m=20, seed=13)
    model = fit_curve(train, "se", seed=0)
    report = error_metrics(model, train)
    assert report.n_out == 0
    assert report.out_pct is None
    assert report.within_pct is not None


# ---------------------------------------------------------------------------
# regression tree

def test_tree_depth_zero_is_global_mean():
    samples = synthetic_samples(m=25, seed=20)
    tree = fit_tree(samples, max_depth=0)
    mean = samples.amounts.mean(axis=0)
    for row in samples.prices[:5]:
        np.testing.assert_allclose(predict_tree(tree, row), mean, atol=1e-12)


def test_tree_recovers_step_function_exactly():
    prices = np.linspace(0, 1, 40)[:, None]
    amounts = np.where(prices > 0.5, 10.0, 2.0)
    samples = SampleSet(prices, amounts, np.arange(40, dtype=np.uint64), 0, ("a",))
    tree = fit_tree(samples, max_depth=1, min_leaf=1)
    pred = tree_predict_matrix(tree, prices)
    np.testing.assert_allclose(pred, amounts, atol=1e-12)


def test_best_split_matches_exhaustive_search():
    rng = np.random.default_rng(30)
    X = rng.uniform(0, 1, size=(10, 2))
    y = rng.normal(size=10)
    got = _best_split(X, y, min_leaf=1)

    best = None
    for dim in range(2):
        for thr in np.unique(X[:, dim]):
            mask = X[:, dim] <= thr
            if mask.sum() == 0 or (~mask).sum() == 0:
                continue
            sse = np.sum((y[mask] - y[mask].mean()) ** 2) + np.sum(
                (y[~mask] - y[~mask].mean()) ** 2
            )
            if best is None or sse < best[0] - 1e-15:
                best = (sse, dim)
    base = np.sum((y - y.mean()) ** 2)
    assert got is not None
    assert got[2] == pytest.approx(base - best[0], abs=1e-10)
    assert got[0] == best[1]


def test_tree_min_leaf_respected():
    samples = synthetic_samples(m=30, seed=31)
    tree = fit_tree(samples, max_depth=10, min_leaf=5)

    def leaves(node):
        if hasattr(node, "value"):
            return [node]
        return leaves(node.left) + leaves(node.right)

    for root in tree.roots:
        for leaf in leaves(root):
            assert leaf.n >= 5


def test_tree_parameter_validation():
    samples = synthetic_samples(m=10)
    with pytest.raises(ModelInputError):
        fit_tree(samples, max_depth=-1)
    with pytest.raises(ModelInputError):
        fit_tree(samples, min_leaf=0)


# ---------------------------------------------------------------------------
# slices

def test_slice_rows_sorted_and_band_ordered():
    samples = synthetic_samples(m=40, seed=40)
    model = fit_curve(samples, "se", seed=0)
    table = slice_curve(model, fixed={1: 0.2, 2: 0.3}, free_dims=(0,), grid=12)
    x = table.rows[:, 0]
    assert np.all(np.diff(x) > 0)
    assert np.all(table.rows[:, 2] <= table.rows[:, 1] + 1e-12)
    assert np.all(table.rows[:, 1] <= table.rows[:, 3] + 1e-12)


def test_slice_grid_of_one_matches_single_query():
    samples = synthetic_samples(m=30, seed=41)
    model = fit_curve(samples, "se", seed=0)
    table = slice_curve(model, fixed={1: 0.1, 2: 0.2}, free_dims=(0,),
                        grid=np.array([0.25]), target=0)
    res = query_curve(model, np.array([0.25, 0.1, 0.2]))
    assert table.rows.shape[0] == 1
    assert table.rows[0, 1] == pytest.approx(res.mean[0], abs=1e-12)


def test_slice_2d_has_lattice_rows():
    samples = synthetic_samples(m=30, seed=42)
    model = fit_curve(samples, "se", seed=0)
    table = slice_curve(model, fixed={2: 0.25}, free_dims=(0, 1), grid=5)
    assert table.rows.shape == (25, 5)


def test_slice_rejects_overlap_and_gaps():
    samples = synthetic_samples(m=20, seed=43)
    model = fit_curve(samples, "se", seed=0)
    with pytest.raises(ModelInputError):
        slice_curve(model, fixed={0: 0.1, 1: 0.1, 2: 0.1}, free_dims=(0,))
    with pytest.raises(ModelInputError):
        slice_curve(model, fixed={1: 0.1}, free_dims=(0,))


def test_slice_csv_mentions_fixed_dims():
    samples = synthetic_samples(m=20, seed=44)
    model = fit_curve(samples, "se", seed=0)
    table = slice_curve(model, fixed={1: 0.15, 2: 0.3}, free_dims=(0,), grid=4)
    text = table.to_csv()
    assert text.startswith("# target: total")
    assert "# fixed[1] = 0.15" in text
    assert "price_dim0,mean,lower,upper" in text


# ---------------------------------------------------------------------------
# serialization

def test_curve_json_round_trip():
    samples = synthetic_samples(m=25, seed=50)
    model = fit_curve(samples, "rational_quadratic", seed=3)
    text = curve_to_json(model, samples)
    clone = curve_from_json(text)
    assert clone.labels == model.labels
    assert clone.train_digest == model.train_digest
    rng = np.random.default_rng(0)
    q = rng.uniform(0, 0.5, size=(4, 3))
    np.testing.assert_array_equal(predict_matrix(clone, q), predict_matrix(model, q))

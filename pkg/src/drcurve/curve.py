"""Price-amount curve estimation: one GP per delivered-amount output, queried
with 95% confidence bands, plus normalized error metrics and a variance-
reduction regression tree baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import (
    GprConditioningError,
    GprModel,
    fit,
    fit_hyperparameters,
    model_from_record,
    model_to_record,
    predict_mean_batch,
    predict_var_batch,
)
from .idc import ModelInputError
from .sampling import SampleSet, derive_seed

Z_95 = 1.96  # two-sided 95% normal quantile

METRIC_DEFINITION = (
    "100 * rms(predicted - actual) / rms(actual), pooled over all outputs"
)


@dataclass(frozen=True)
class CurveModel:
    """The fitted price-to-amount map: one GP per (idc, slot) output."""

    models: tuple[GprModel, ...]
    labels: tuple[str, ...]
    train_digest: str

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.models) != len(self.labels):
            raise ModelInputError("one label per output model required")
        if self.models:
            ref = self.models[0].X
            for m in self.models[1:]:
                if m.X.shape != ref.shape or not np.array_equal(m.X, ref):
                    raise ModelInputError("output models must share training inputs")

    @property
    def n_outputs(self) -> int:
        return len(self.models)

    @property
    def train_inputs(self) -> np.ndarray:
        return self.models[0].X


@dataclass(frozen=True)
class CurveQueryResult:
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def fit_curve(samples: SampleSet, family: str = "se", seed: int = 0,
              n_starts: int = 4, max_iter: int = 120) -> CurveModel:
    """Fit hyperparameters and condition one GP per output column."""
    if samples.n_samples < 4:
        raise ModelInputError("need at least four samples to fit the curve")
    X = samples.prices
    models = []
    for j in range(samples.n_cells):
        y = samples.amounts[:, j]
        try:
            hyper = fit_hyperparameters(
                X, y, family, seed=derive_seed(seed, "output", j),
                standardize=True, n_starts=n_starts, max_iter=max_iter,
            )
            models.append(fit(X, y, hyper.spec, hyper.noise_variance, standardize=True))
        except GprConditioningError as exc:
            raise GprConditioningError(
                f"output {samples.labels[j]!r}: {exc}", exc.final_jitter
            ) from exc
    return CurveModel(tuple(models), samples.labels, samples.digest())


def query_curve(model: CurveModel, price: np.ndarray) -> CurveQueryResult:
    """Mean amounts and 95% bands at one price vector."""
    price = np.asarray(price, dtype=float).ravel()
    if price.shape[0] != model.train_inputs.shape[1]:
        raise ModelInputError(
            f"price vector has {price.shape[0]} entries, model expects "
            f"{model.train_inputs.shape[1]}"
        )
    q = price[None, :]
    mean = np.array([predict_mean_batch(m, q)[0] for m in model.models])
    var = np.array([predict_var_batch(m, q)[0] for m in model.models])
    half = Z_95 * np.sqrt(var)
    return CurveQueryResult(mean, var, mean - half, mean + half)


# ---------------------------------------------------------------------------
# error metrics

@dataclass(frozen=True)
class ErrorReport:
    within_pct: float | None
    out_pct: float | None
    n_within: int
    n_out: int
    definition: str = METRIC_DEFINITION

    def entry(self, split: str) -> float | None:
        return self.within_pct if split == "within" else self.out_pct


def _normalized_rms_pct(pred: np.ndarray, actual: np.ndarray) -> float:
    denom = float(np.sqrt(np.mean(actual**2)))
    if denom == 0.0:
        return 0.0 if np.allclose(pred, 0.0) else float("inf")
    return 100.0 * float(np.sqrt(np.mean((pred - actual) ** 2))) / denom


def predict_matrix(model: CurveModel, prices: np.ndarray) -> np.ndarray:
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    return np.stack([predict_mean_batch(m, prices) for m in model.models], axis=1)


def error_metrics(model: CurveModel, eval_set: SampleSet) -> ErrorReport:
    """Normalized RMS error, split into rows seen at training time and
    held-out rows (membership by exact price-row match)."""
    train_rows = {row.tobytes() for row in np.ascontiguousarray(model.train_inputs)}
    member = np.array([
        np.ascontiguousarray(row).tobytes() in train_rows for row in eval_set.prices
    ])
    pred = predict_matrix(model, eval_set.prices)
    out: dict[str, float | None] = {}
    for split, mask in (("within", member), ("out", ~member)):
        out[split] = (
            _normalized_rms_pct(pred[mask], eval_set.amounts[mask])
            if np.any(mask) else None
        )
    return ErrorReport(out["within"], out["out"], int(member.sum()),
                       int((~member).sum()))


# ---------------------------------------------------------------------------
# regression-tree baseline

@dataclass(frozen=True)
class TreeNode:
    dim: int
    threshold: float
    left: "TreeNode | TreeLeaf"
    right: "TreeNode | TreeLeaf"


@dataclass(frozen=True)
class TreeLeaf:
    value: float
    n: int


@dataclass(frozen=True)
class RegressionTree:
    """One axis-aligned tree per output, greedy variance-reduction splits."""

    roots: tuple[TreeNode | TreeLeaf, ...]
    labels: tuple[str, ...]
    max_depth: int
    min_leaf: int


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """(dim, threshold, sse_reduction) of the best split, or None."""
    n = y.shape[0]
    if n < 2 * min_leaf:
        return None
    base_sse = float(np.sum((y - y.mean()) ** 2))
    best = None
    for dim in range(X.shape[1]):
        order = np.argsort(X[:, dim], kind="stable")
        xs = X[order, dim]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys**2)
        total, total_sq = csum[-1], csq[-1]
        # split after position i (1-based count i+1 on the left)
        counts = np.arange(1, n)
        left_sse = csq[:-1] - csum[:-1] ** 2 / counts
        right_cnt = n - counts
        right_sum = total - csum[:-1]
        right_sse = (total_sq - csq[:-1]) - right_sum**2 / right_cnt
        valid = (counts >= min_leaf) & (right_cnt >= min_leaf) & (xs[:-1] < xs[1:])
        if not np.any(valid):
            continue
        sse = np.where(valid, left_sse + right_sse, np.inf)
        i = int(np.argmin(sse))
        reduction = base_sse - float(sse[i])
        if best is None or reduction > best[2] + 1e-15:
            threshold = 0.5 * (xs[i] + xs[i + 1])
            best = (dim, float(threshold), reduction)
    if best is None or best[2] <= 1e-12:
        return None
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int,
          min_leaf: int) -> TreeNode | TreeLeaf:
    if depth >= max_depth:
        return TreeLeaf(float(y.mean()), y.shape[0])
    split = _best_split(X, y, min_leaf)
    if split is None:
        return TreeLeaf(float(y.mean()), y.shape[0])
    dim, threshold, _ = split
    mask = X[:, dim] <= threshold
    return TreeNode(
        dim, threshold,
        _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf),
        _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf),
    )


def fit_tree(samples: SampleSet, max_depth: int = 8, min_leaf: int = 3) -> RegressionTree:
    if samples.n_samples < 1:
        raise ModelInputError("need at least one sample")
    if max_depth < 0 or min_leaf < 1:
        raise ModelInputError("bad tree parameters")
    roots = tuple(
        _grow(samples.prices, samples.amounts[:, j], 0, max_depth, min_leaf)
        for j in range(samples.n_cells)
    )
    return RegressionTree(roots, samples.labels, max_depth, min_leaf)


def _eval_node(node: TreeNode | TreeLeaf, x: np.ndarray) -> float:
    while isinstance(node, TreeNode):
        node = node.left if x[node.dim] <= node.threshold else node.right
    return node.value


def predict_tree(tree: RegressionTree, price: np.ndarray) -> np.ndarray:
    price = np.asarray(price, dtype=float).ravel()
    return np.array([_eval_node(root, price) for root in tree.roots])


def tree_predict_matrix(tree: RegressionTree, prices: np.ndarray) -> np.ndarray:
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    return np.stack([predict_tree(tree, row) for row in prices], axis=0)


def tree_error_metrics(tree: RegressionTree, train: SampleSet,
                       eval_set: SampleSet) -> ErrorReport:
    train_rows = {row.tobytes() for row in np.ascontiguousarray(train.prices)}
    member = np.array([
        np.ascontiguousarray(row).tobytes() in train_rows for row in eval_set.prices
    ])
    pred = tree_predict_matrix(tree, eval_set.prices)
    within = (
        _normalized_rms_pct(pred[member], eval_set.amounts[member])
        if np.any(member) else None
    )
    out = (
        _normalized_rms_pct(pred[~member], eval_set.amounts[~member])
        if np.any(~member) else None
    )
    return ErrorReport(within, out, int(member.sum()), int((~member).sum()))


# ---------------------------------------------------------------------------
# slices

@dataclass(frozen=True)
class SliceTable:
    """query_curve evaluated over a lattice on one or two free price axes."""

    free_dims: tuple[int, ...]
    fixed: dict[int, float]
    target: str                   # 'total' or an output label
    rows: np.ndarray              # columns: free prices..., mean, lower, upper
    header: tuple[str, ...]

    def to_csv(self) -> str:
        lines = [f"# target: {self.target}"]
        for dim in sorted(self.fixed):
            lines.append(f"# fixed[{dim}] = {self.fixed[dim]!r}")
        lines.append(",".join(self.header))
        for row in self.rows:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def slice_curve(
    model: CurveModel,
    fixed: dict[int, float],
    free_dims: tuple[int, ...] | list[int],
    grid: np.ndarray | int = 25,
    lo: float | None = None,
    hi: float | None = None,
    target: str | int = "total",
) -> SliceTable:
    """Tabulate the curve along one or two free price dimensions.

    `fixed` pins every other dimension; the free axes sweep `grid` points
    between lo and hi (training range by default). `target` picks one output
    label or the total across outputs.
    """
    k = model.train_inputs.shape[1]
    free = tuple(int(d) for d in free_dims)
    if len(free) not in (1, 2):
        raise ModelInputError("free_dims must name one or two dimensions")
    if any(not 0 <= d < k for d in free):
        raise ModelInputError("free dimension out of range")
    overlap = set(free) & set(fixed)
    if overlap:
        raise ModelInputError(f"dimensions {sorted(overlap)} both fixed and free")
    missing = set(range(k)) - set(free) - set(fixed)
    if missing:
        raise ModelInputError(f"dimensions {sorted(missing)} neither fixed nor free")

    if isinstance(grid, int):
        if grid < 1:
            raise ModelInputError("grid must have at least one point")
        lo = float(model.train_inputs.min()) if lo is None else lo
        hi = float(model.train_inputs.max()) if hi is None else hi
        axis = np.linspace(lo, hi, grid)
    else:
        axis = np.asarray(grid, dtype=float)
    axes = [axis] * len(free)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    queries = np.zeros((points.shape[0], k))
    for dim, val in fixed.items():
        queries[:, int(dim)] = val
    for col, dim in enumerate(free):
        queries[:, dim] = points[:, col]

    if target == "total":
        mean = np.zeros(points.shape[0])
        var = np.zeros(points.shape[0])
        for m in model.models:
            mean += predict_mean_batch(m, queries)
            var += predict_var_batch(m, queries)
    else:
        j = target if isinstance(target, int) else model.labels.index(target)
        mean = predict_mean_batch(model.models[j], queries)
        var = predict_var_batch(model.models[j], queries)
        target = model.labels[j]
    half = Z_95 * np.sqrt(var)
    rows = np.column_stack([points, mean, mean - half, mean + half])
    header = tuple(f"price_dim{d}" for d in free) + ("mean", "lower", "upper")
    return SliceTable(free, {int(d): float(v) for d, v in fixed.items()},
                      str(target), rows, header)


# ---------------------------------------------------------------------------
# curve model serialization (training data embedded so queries are standalone)

def curve_to_json(model: CurveModel, samples: SampleSet) -> str:
    import json

    if samples.digest() != model.train_digest:
        raise ModelInputError("sample set does not match the fitted curve")
    doc = {
        "labels": list(model.labels),
        "train_digest": model.train_digest,
        "train_prices": model.train_inputs.tolist(),
        "train_amounts": samples.amounts.tolist(),
        "records": [model_to_record(m) for m in model.models],
    }
    return json.dumps(doc, indent=2)


def curve_from_json(text: str) -> CurveModel:
    import json

    doc = json.loads(text)
    X = np.asarray(doc["train_prices"], dtype=float)
    amounts = np.asarray(doc["train_amounts"], dtype=float)
    models = tuple(
        model_from_record(rec, X, amounts[:, j])
        for j, rec in enumerate(doc["records"])
    )
    return CurveModel(models, tuple(doc["labels"]), doc["train_digest"])

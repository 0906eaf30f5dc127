"""Exact Gaussian-process regression.

Six kernel families, Cholesky-factored posterior mean and variance, marginal
likelihood, and a seeded multi-start simplex search over hyperparameters.
The posterior for noisy observations y at inputs X, queried at x, is

    mean(x) = k(x, X) (K + s2 I)^-1 y
    var(x)  = k(x, x) + s2 - k(x, X) (K + s2 I)^-1 k(X, x)

with K = k(X, X) and s2 the observation noise variance. An optional internal
standardization of y (zero mean, unit variance) shifts the prior to the data
level; hyperparameters of a standardized model live in the standardized space
and predictions are mapped back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

KERNEL_FAMILIES = (
    "se",
    "exponential",
    "matern32",
    "matern52",
    "rational_quadratic",
    "linear",
)
STATIONARY_FAMILIES = KERNEL_FAMILIES[:5]


class GprInputError(ValueError):
    pass


class GprConditioningError(RuntimeError):
    """Covariance not positive definite, even after jitter escalation."""

    def __init__(self, msg: str, final_jitter: float):
        super().__init__(f"{msg} (final jitter {final_jitter:.3e})")
        self.final_jitter = final_jitter


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family and its hyperparameters.

    `length_scale` is shared across input dimensions unless an array is given.
    `alpha` applies to the rational-quadratic family, `offset` to the linear
    family.
    """

    family: str
    signal_variance: float = 1.0
    length_scale: float | np.ndarray = 1.0
    alpha: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise GprInputError(f"unknown kernel family {self.family!r}")
        if self.signal_variance <= 0:
            raise GprInputError("signal variance must be positive")
        ls = np.asarray(self.length_scale, dtype=float)
        if np.any(ls <= 0):
            raise GprInputError("length scale must be positive")
        if self.alpha <= 0:
            raise GprInputError("rational-quadratic alpha must be positive")

    @property
    def is_stationary(self) -> bool:
        return self.family != "linear"


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal regularization ladder used when the factorization fails:
    base_scale * mean(diag), doubled up to `attempts` times."""

    base_scale: float = 1e-10
    attempts: int = 8

    @staticmethod
    def none() -> "JitterPolicy":
        return JitterPolicy(attempts=0)


DEFAULT_JITTER = JitterPolicy()


def _scaled_sqdist(x1: np.ndarray, x2: np.ndarray, length_scale) -> np.ndarray:
    s1 = x1 / length_scale
    s2 = x2 / length_scale
    n1 = np.sum(s1 * s1, axis=1)
    n2 = np.sum(s2 * s2, axis=1)
    d2 = n1[:, None] + n2[None, :] - 2.0 * (s1 @ s2.T)
    return np.maximum(d2, 0.0)


def _stationary_from_sqdist(family: str, d2: np.ndarray, signal_variance: float,
                            alpha: float) -> np.ndarray:
    if family == "se":
        return signal_variance * np.exp(-0.5 * d2)
    r = np.sqrt(d2)
    if family == "exponential":
        return signal_variance * np.exp(-r)
    if family == "matern32":
        a = np.sqrt(3.0) * r
        return signal_variance * (1.0 + a) * np.exp(-a)
    if family == "matern52":
        a = np.sqrt(5.0) * r
        return signal_variance * (1.0 + a + a * a / 3.0) * np.exp(-a)
    if family == "rational_quadratic":
        return signal_variance * np.power(1.0 + d2 / (2.0 * alpha), -alpha)
    raise GprInputError(f"not a stationary family: {family}")


def kernel_matrix(spec: KernelSpec, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Covariance block k(x1, x2) for row-stacked inputs."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[1] != x2.shape[1]:
        raise GprInputError(f"input dimensions differ: {x1.shape[1]} vs {x2.shape[1]}")
    if spec.family == "linear":
        c1 = x1 - spec.offset
        c2 = x2 - spec.offset
        return spec.signal_variance * (c1 @ c2.T)
    d2 = _scaled_sqdist(x1, x2, spec.length_scale)
    return _stationary_from_sqdist(spec.family, d2, spec.signal_variance, spec.alpha)


def kernel_eval(spec: KernelSpec, x: np.ndarray, x2: np.ndarray) -> float:
    """Covariance between two single inputs."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise GprInputError(f"input dimensions differ: {x.shape} vs {x2.shape}")
    return float(kernel_matrix(spec, x[None, :], x2[None, :])[0, 0])


@dataclass(frozen=True)
class GprModel:
    """A fitted (or empty) Gaussian-process regressor for one output."""

    spec: KernelSpec
    X: np.ndarray                 # (m, d) training inputs
    y: np.ndarray                 # (m,) training outputs, raw units
    noise_variance: float
    factor: np.ndarray            # lower Cholesky factor of K + s2 I (+ jitter)
    weights: np.ndarray           # (K + s2 I)^-1 y_internal
    y_offset: float = 0.0         # standardization shift
    y_scale: float = 1.0          # standardization scale
    jitter_used: float = 0.0

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    def y_internal(self) -> np.ndarray:
        return (self.y - self.y_offset) / self.y_scale


def _chol_with_jitter(K: np.ndarray, jitter: JitterPolicy) -> tuple[np.ndarray, float]:
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    base = jitter.base_scale * float(np.mean(np.diag(K))) if K.size else jitter.base_scale
    level = base
    for _ in range(jitter.attempts):
        try:
            return np.linalg.cholesky(K + level * np.eye(K.shape[0])), level
        except np.linalg.LinAlgError:
            level *= 2.0
    raise GprConditioningError("covariance is not positive definite", level / 2.0)


def fit(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec,
    noise_variance: float,
    jitter: JitterPolicy = DEFAULT_JITTER,
    standardize: bool = False,
) -> GprModel:
    """Condition a GP on data: factor K + s2 I and precompute the weight vector.

    With `standardize`, y is shifted and scaled to zero mean and unit variance
    internally; `spec` and `noise_variance` are then interpreted in that space.
    An empty data set yields a prior-only model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise GprInputError(f"{X.shape[0]} input rows but {y.shape[0]} outputs")
    offset, scale = 0.0, 1.0
    if standardize and y.size:
        offset = float(np.mean(y))
        sd = float(np.std(y))
        scale = sd if sd > 0 else 1.0
    return _condition(X, y, spec, noise_variance, jitter, offset, scale)


def _condition(X, y, spec, noise_variance, jitter, offset, scale) -> GprModel:
    if noise_variance < 0:
        raise GprInputError("noise variance must be nonnegative")
    y_int = (y - offset) / scale
    if X.shape[0] == 0:
        return GprModel(spec, X, y, noise_variance, np.zeros((0, 0)), np.zeros(0),
                        offset, scale)
    K = kernel_matrix(spec, X, X)
    K[np.diag_indices_from(K)] += noise_variance
    L, used = _chol_with_jitter(K, jitter)
    weights = cho_solve((L, True), y_int)
    return GprModel(spec, X, y, noise_variance, L, weights, offset, scale, used)


def predict_mean(model: GprModel, x: np.ndarray) -> float:
    """Posterior mean at one query point (prior mean when untrained)."""
    return float(predict_mean_batch(model, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def predict_var(model: GprModel, x: np.ndarray) -> float:
    """Posterior predictive variance (includes the noise term), floored at 0."""
    return float(predict_var_batch(model, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def _check_query(model: GprModel, xq: np.ndarray) -> np.ndarray:
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    if model.n_train and xq.shape[1] != model.X.shape[1]:
        raise GprInputError(
            f"query dimension {xq.shape[1]} != training dimension {model.X.shape[1]}"
        )
    return xq


def predict_mean_batch(model: GprModel, xq: np.ndarray) -> np.ndarray:
    xq = _check_query(model, xq)
    if model.n_train == 0:
        return np.full(xq.shape[0], model.y_offset)
    ks = kernel_matrix(model.spec, xq, model.X)
    return model.y_offset + model.y_scale * (ks @ model.weights)


def predict_var_batch(model: GprModel, xq: np.ndarray) -> np.ndarray:
    xq = _check_query(model, xq)
    spec = model.spec
    if spec.is_stationary:
        prior = np.full(xq.shape[0], spec.signal_variance)
    else:
        centred = xq - spec.offset
        prior = spec.signal_variance * np.sum(centred * centred, axis=1)
    prior = prior + model.noise_variance
    if model.n_train == 0:
        return model.y_scale**2 * prior
    ks = kernel_matrix(model.spec, model.X, xq)
    v = solve_triangular(model.factor, ks, lower=True)
    var = prior - np.sum(v * v, axis=0)
    return model.y_scale**2 * np.maximum(var, 0.0)


def log_marginal_likelihood(model: GprModel) -> float:
    """Marginal log density of the (internal) training outputs under the GP."""
    m = model.n_train
    if m < 1:
        raise GprInputError("need at least one training point")
    y_int = model.y_internal()
    fit_term = -0.5 * float(y_int @ model.weights)
    logdet = -float(np.sum(np.log(np.diag(model.factor))))
    return fit_term + logdet - 0.5 * m * np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# hyperparameter search

@dataclass(frozen=True)
class HyperFit:
    spec: KernelSpec
    noise_variance: float
    log_marginal: float


def _lml_from_parts(K: np.ndarray, y: np.ndarray, jitter: JitterPolicy) -> float:
    L, _ = _chol_with_jitter(K, jitter)
    w = cho_solve((L, True), y)
    return float(-0.5 * (y @ w) - np.sum(np.log(np.diag(L))) - 0.5 * y.size * np.log(2 * np.pi))


def fit_hyperparameters(
    X: np.ndarray,
    y: np.ndarray,
    family: str,
    seed: int = 0,
    standardize: bool = False,
    n_starts: int = 4,
    max_iter: int = 120,
    subset_cap: int = 256,
    jitter: JitterPolicy = DEFAULT_JITTER,
) -> HyperFit:
    """Maximize the marginal likelihood over (signal variance, length scale,
    noise variance, family extras) with seeded multi-start Nelder-Mead on log
    parameters. Deterministic given the seed.

    Data beyond `subset_cap` rows is subsampled (seeded) for the search; the
    returned hyperparameters are meant to be passed to `fit` on the full set.
    """
    if family not in KERNEL_FAMILIES:
        raise GprInputError(f"unknown kernel family {family!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise GprInputError("input/output row mismatch")
    if X.shape[0] < 2:
        raise GprInputError("need at least two points to fit hyperparameters")
    rng = np.random.default_rng(seed)
    if X.shape[0] > subset_cap:
        idx = np.sort(rng.choice(X.shape[0], size=subset_cap, replace=False))
        X, y = X[idx], y[idx]
    offset, scale = 0.0, 1.0
    if standardize:
        offset = float(np.mean(y))
        sd = float(np.std(y))
        scale = sd if sd > 0 else 1.0
    y_int = (y - offset) / scale

    var_y = max(float(np.var(y_int)), 1e-12)
    d2_unit = _scaled_sqdist(X, X, 1.0) if family != "linear" else None
    pos = d2_unit[d2_unit > 0] if d2_unit is not None else np.array([1.0])
    med_dist = float(np.sqrt(np.median(pos))) if pos.size else 1.0
    span = float(np.mean(X.max(axis=0) - X.min(axis=0))) or 1.0

    is_rq = family == "rational_quadratic"
    is_linear = family == "linear"

    def unpack(theta):
        sig = float(np.exp(theta[0]))
        noise = float(np.exp(theta[-1]))
        if is_linear:
            return KernelSpec(family, sig, 1.0, offset=float(theta[1])), noise
        ls = float(np.exp(theta[1]))
        alpha = float(np.exp(theta[2])) if is_rq else 1.0
        return KernelSpec(family, sig, ls, alpha=alpha), noise

    def objective(theta):
        if np.any(np.abs(theta) > 60.0):
            return 1e12
        spec, noise = unpack(theta)
        try:
            if is_linear:
                K = kernel_matrix(spec, X, X)
            else:
                K = _stationary_from_sqdist(
                    family, d2_unit / spec.length_scale**2, spec.signal_variance,
                    spec.alpha,
                )
            K = K + (noise + 1e-12 * var_y) * np.eye(X.shape[0])
            return -_lml_from_parts(K, y_int, jitter)
        except (GprConditioningError, FloatingPointError):
            return 1e12

    starts = []
    heuristic = [np.log(var_y), np.log(max(med_dist, 1e-6)), np.log(0.05 * var_y)]
    if is_rq:
        heuristic = heuristic[:2] + [0.0] + heuristic[2:]
    if is_linear:
        heuristic = [np.log(var_y / max(span**2, 1e-12)), float(np.mean(X)),
                     np.log(0.05 * var_y)]
    starts.append(np.array(heuristic))
    for _ in range(max(0, n_starts - 1)):
        sig = np.log(var_y) + rng.uniform(np.log(1e-4), np.log(1e4))
        noise = np.log(var_y) + rng.uniform(np.log(1e-8), 0.0)
        if is_linear:
            cand = [sig - 2 * np.log(max(span, 1e-6)),
                    rng.uniform(X.min() - 0.5 * span, X.max() + 0.5 * span), noise]
        else:
            ls = np.log(span) + rng.uniform(np.log(0.01), np.log(100.0))
            cand = [sig, ls, noise]
            if is_rq:
                cand.insert(2, rng.uniform(np.log(0.1), np.log(10.0)))
        starts.append(np.array(cand))

    best_val, best_theta = np.inf, None
    for theta0 in starts:
        res = minimize(
            objective, theta0, method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-3, "fatol": 1e-4},
        )
        if res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    if best_theta is None or not np.isfinite(best_val) or best_val >= 1e12:
        raise GprConditioningError("no hyperparameter start produced a usable fit", 0.0)
    spec, noise = unpack(best_theta)
    return HyperFit(spec=spec, noise_variance=noise, log_marginal=-best_val)


# ---------------------------------------------------------------------------
# serialization

def model_to_record(model: GprModel) -> str:
    """Structured text record of a fitted model; hyperparameters round-trip
    bit-exactly (JSON repr of IEEE doubles is lossless)."""
    ls = model.spec.length_scale
    doc = {
        "family": model.spec.family,
        "signal_variance": model.spec.signal_variance,
        "length_scale": ls.tolist() if isinstance(ls, np.ndarray) else ls,
        "alpha": model.spec.alpha,
        "offset": model.spec.offset,
        "noise_variance": model.noise_variance,
        "y_offset": model.y_offset,
        "y_scale": model.y_scale,
        "train_digest": training_digest(model.X, model.y),
        "n_train": model.n_train,
    }
    return json.dumps(doc, indent=2)


def training_digest(X: np.ndarray, y: np.ndarray) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(np.asarray(X, dtype=float)).tobytes())
    h.update(np.ascontiguousarray(np.asarray(y, dtype=float)).tobytes())
    return h.hexdigest()


def model_from_record(record: str, X: np.ndarray, y: np.ndarray,
                      jitter: JitterPolicy = DEFAULT_JITTER) -> GprModel:
    """Rebuild a model from its record plus the training data it names."""
    doc = json.loads(record)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if doc["train_digest"] != training_digest(X, y):
        raise GprInputError("training data does not match the model record")
    ls = doc["length_scale"]
    spec = KernelSpec(
        family=doc["family"], signal_variance=doc["signal_variance"],
        length_scale=np.asarray(ls) if isinstance(ls, list) else ls,
        alpha=doc["alpha"], offset=doc["offset"],
    )
    return _condition(X, y, spec, doc["noise_variance"], jitter,
                      doc["y_offset"], doc["y_scale"])

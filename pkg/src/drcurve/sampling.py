"""Sample-set construction: active selection of DR price points and the
operation solves that turn each price into a delivered amount.

Each sample is produced by (1) picking the next price vector where the fitted
response models are most uncertain, (2) solving the robust first stage at that
price, (3) drawing one realization of the uncertain quantities, and (4)
solving the recourse to read off the delivered amounts. Samples are seeded
individually, so the set is reproducible and can be generated in parallel.
"""

from __future__ import annotations

import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gp import GprModel, KernelSpec, fit, predict_mean_batch, predict_var_batch
from .idc import IdcCase, ModelInputError
from .robust import solve_first_stage, solve_second_stage
from .uncertainty import draw_realization

PricePoint = np.ndarray  # one nonnegative entry per (idc, slot)


class SamplingError(RuntimeError):
    """A sample's operation solve failed; carries the sample index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"sample {index} failed: {cause}")
        self.index = index
        self.cause = cause


def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit stream seed from a master seed and a label path."""
    text = ":".join([str(master), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class CandidateGrid:
    """Uniform lattice over the DR price box, subsampled to a hard cap."""

    levels: int = 5
    cap: int = 4096

    def build(self, case: IdcCase, seed: int) -> np.ndarray:
        if self.levels < 1 or self.cap < 1:
            raise ModelInputError("grid levels and cap must be positive")
        k = case.n_cells
        axis = np.linspace(case.dr_price_low, case.dr_price_high, self.levels)
        total = self.levels**k
        if total <= self.cap:
            mesh = np.meshgrid(*([axis] * k), indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1)
        rng = np.random.default_rng(derive_seed(seed, "lattice"))
        seen = set()
        rows = []
        while len(rows) < self.cap:
            idx = tuple(rng.integers(0, self.levels, size=k))
            if idx in seen:
                continue
            seen.add(idx)
            rows.append(axis[list(idx)])
        return np.asarray(rows)


@dataclass(frozen=True)
class SampleSet:
    """Paired (price vector, delivered amount vector) records."""

    prices: np.ndarray        # (m, k)
    amounts: np.ndarray       # (m, k)
    sample_seeds: np.ndarray  # (m,) uint64
    master_seed: int
    labels: tuple[str, ...]   # k per-cell labels, e.g. idc1_t3

    def __post_init__(self):
        prices = np.atleast_2d(np.asarray(self.prices, dtype=float))
        amounts = np.atleast_2d(np.asarray(self.amounts, dtype=float))
        seeds = np.asarray(self.sample_seeds, dtype=np.uint64).ravel()
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "amounts", amounts)
        object.__setattr__(self, "sample_seeds", seeds)
        object.__setattr__(self, "labels", tuple(self.labels))
        if prices.shape != amounts.shape:
            raise ModelInputError("prices and amounts must have identical shape")
        if seeds.shape[0] != prices.shape[0]:
            raise ModelInputError("one seed per sample required")
        if len(self.labels) != prices.shape[1]:
            raise ModelInputError("one label per output column required")
        if np.any(prices < 0) or np.any(amounts < 0):
            raise ModelInputError("prices and amounts must be nonnegative")

    @property
    def n_samples(self) -> int:
        return self.prices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.prices.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        head = [f"price_{c}" for c in self.labels] + [f"amount_{c}" for c in self.labels]
        buf.write(",".join(head + ["seed"]) + "\n")
        for i in range(self.n_samples):
            cells = [repr(float(v)) for v in self.prices[i]]
            cells += [repr(float(v)) for v in self.amounts[i]]
            cells.append(str(int(self.sample_seeds[i])))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str, master_seed: int = 0) -> "SampleSet":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines:
            raise ModelInputError("empty sample file")
        header = lines[0].split(",")
        if header[-1] != "seed" or len(header) % 2 == 0:
            raise ModelInputError("malformed sample header")
        k = (len(header) - 1) // 2
        price_cols = header[:k]
        amount_cols = header[k:2 * k]
        if not all(c.startswith("price_") for c in price_cols) or not all(
            c.startswith("amount_") for c in amount_cols
        ):
            raise ModelInputError("sample header must list price columns then amount columns")
        labels = tuple(c[len("price_"):] for c in price_cols)
        prices, amounts, seeds = [], [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 2 * k + 1:
                raise ModelInputError(f"row has {len(parts)} fields, expected {2 * k + 1}")
            prices.append([float(v) for v in parts[:k]])
            amounts.append([float(v) for v in parts[k:2 * k]])
            seeds.append(int(parts[-1]))
        return SampleSet(np.asarray(prices), np.asarray(amounts),
                         np.asarray(seeds, dtype=np.uint64), master_seed, labels)

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


# ---------------------------------------------------------------------------
# acquisition

def acquisition_score(models: list[GprModel], candidates: np.ndarray,
                      beta: float) -> np.ndarray:
    """Sum over outputs of beta * mean + posterior standard deviation."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    score = np.zeros(candidates.shape[0])
    for model in models:
        score += np.sqrt(predict_var_batch(model, candidates))
        if beta != 0.0:
            score += beta * predict_mean_batch(model, candidates)
    return score


def next_price_point(models: list[GprModel], candidates: np.ndarray,
                     beta: float = 0.0) -> PricePoint:
    """The candidate the fitted models know least about (plus an optional
    exploitation term scaled by beta). Ties and the untrained cold start both
    resolve to the lowest candidate index."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise ModelInputError("candidate set is empty")
    if beta < 0:
        raise ModelInputError("beta must be nonnegative")
    if not models or all(m.n_train == 0 for m in models):
        return candidates[0].copy()
    score = acquisition_score(models, candidates, beta)
    return candidates[int(np.argmax(score))].copy()


def _acquisition_spec(case: IdcCase) -> KernelSpec:
    span = max(case.dr_price_high - case.dr_price_low, 1e-6)
    return KernelSpec("se", signal_variance=1.0, length_scale=0.25 * span)


def _fit_acquisition_models(case: IdcCase, X: np.ndarray, Y: np.ndarray,
                            cap: int, seed: int, round_idx: int,
                            beta: float) -> list[GprModel]:
    spec = _acquisition_spec(case)
    if X.shape[0] > cap:
        rng = np.random.default_rng(derive_seed(seed, "acq-subset", round_idx))
        idx = np.sort(rng.choice(X.shape[0], size=cap, replace=False))
        X, Y = X[idx], Y[idx]
    if beta == 0.0:
        # all outputs share inputs, kernel and noise, so their posterior
        # variances coincide; one model gives the same acquisition ranking
        return [fit(X, Y[:, 0], spec, noise_variance=1e-4, standardize=True)]
    return [
        fit(X, Y[:, j], spec, noise_variance=1e-4, standardize=True)
        for j in range(Y.shape[1])
    ]


def _select_batch(models: list[GprModel], candidates: np.ndarray, beta: float,
                  count: int) -> list[int]:
    """Indices of the `count` best-scoring distinct candidates under the same
    (stale-within-batch) models; the cold start takes the first indices."""
    if not models or all(m.n_train == 0 for m in models):
        return list(range(min(count, candidates.shape[0])))
    score = acquisition_score(models, candidates, beta)
    order = np.argsort(-score, kind="stable")
    return [int(j) for j in order[:count]]


# ---------------------------------------------------------------------------
# operation solves

def _solve_sample(case: IdcCase, price: np.ndarray, master_seed: int, index: int,
                  scenario_budget: int) -> np.ndarray:
    first = solve_first_stage(
        case, price, scenario_budget=scenario_budget,
        seed=derive_seed(master_seed, "scenarios", index),
    )
    realization = draw_realization(
        case.uncertainty, seed=derive_seed(master_seed, "realization", index)
    )
    second = solve_second_stage(case, first, realization, price)
    return second.dr_amount.ravel()


def _solve_sample_star(args) -> np.ndarray:
    case, price, master_seed, index, scenario_budget = args
    try:
        return _solve_sample(case, price, master_seed, index, scenario_budget)
    except Exception as exc:
        raise SamplingError(index, exc) from exc


def generate_dataset(
    case: IdcCase,
    m: int,
    grid: CandidateGrid | None = None,
    seed: int = 0,
    scenario_budget: int = 16,
    batch_size: int = 1,
    workers: int = 1,
    beta: float = 0.0,
    acquisition_cap: int = 256,
) -> SampleSet:
    """Generate m (price, amount) samples on the case's DR price box.

    Prices come from uncertainty sampling over the candidate lattice
    (batched: models are refit between batches and stale within one). Each
    sample's solves are seeded independently from the master seed, so the
    result is identical for any worker count.
    """
    if m < 1:
        raise ModelInputError("need at least one sample")
    grid = grid or CandidateGrid()
    candidates = grid.build(case, seed)
    k = case.n_cells
    prices = np.zeros((m, k))
    amounts = np.zeros((m, k))
    seeds = np.array([derive_seed(seed, "sample", i) for i in range(m)], dtype=np.uint64)

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def solve_indices(indices: list[int]) -> None:
        args = [(case, prices[i], seed, i, scenario_budget) for i in indices]
        if pool is not None and len(indices) > 1:
            results = list(pool.map(_solve_sample_star, args))
        else:
            results = [_solve_sample_star(a) for a in args]
        for i, amount in zip(indices, results):
            amounts[i] = amount

    try:
        done = 0
        round_idx = 0
        while done < m:
            count = min(max(1, batch_size), m - done, candidates.shape[0])
            models = _fit_acquisition_models(
                case, prices[:done], amounts[:done], acquisition_cap, seed,
                round_idx, beta,
            ) if done else []
            picked = _select_batch(models, candidates, beta, count)
            batch = list(range(done, done + count))
            for i, j in zip(batch, picked):
                prices[i] = candidates[j]
            solve_indices(batch)
            done += count
            round_idx += 1
    finally:
        if pool is not None:
            pool.shutdown()

    return SampleSet(prices, amounts, seeds, seed, tuple(case.cell_labels()))

"""Uncertain operating quantities: forecast boxes and scenario draws.

Three quantities are uncertain per data center and slot: electricity price,
on-site generator output, and interactive IT power. Each has a nominal
forecast, a relative standard deviation that grows linearly with the forecast
horizon, and a hard box the realization is confined to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUANTITIES = ("price", "dg_output", "it_power")

_MAX_REDRAWS = 100


class UncertaintyError(ValueError):
    pass


def _lock(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class QuantityBand:
    """Per-(idc, slot) description of one uncertain quantity."""

    nominal: np.ndarray     # (n_idc, T), physical units
    sigma0: np.ndarray      # relative std at the first slot
    growth: np.ndarray      # relative-std growth per additional slot
    lower: np.ndarray       # (n_idc, T) box floor, absolute units
    upper: np.ndarray       # (n_idc, T) box ceiling, absolute units

    def __post_init__(self):
        for name in ("nominal", "sigma0", "growth", "lower", "upper"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _lock(arr))
        shape = self.nominal.shape
        for name in ("sigma0", "growth", "lower", "upper"):
            if getattr(self, name).shape != shape:
                raise UncertaintyError(f"{name} shape {getattr(self, name).shape} != {shape}")
        if np.any(self.lower > self.upper):
            raise UncertaintyError("empty uncertainty box: lower exceeds upper")
        if np.any(self.nominal < self.lower - 1e-12) or np.any(self.nominal > self.upper + 1e-12):
            raise UncertaintyError("nominal outside its box")
        if np.any(self.sigma0 < 0) or np.any(self.growth < 0):
            raise UncertaintyError("sigma0 and growth must be nonnegative")

    def std(self) -> np.ndarray:
        """Per-slot standard deviation: nominal * sigma0 * (1 + growth * slot)."""
        t_idx = np.arange(self.nominal.shape[1])
        return self.nominal * self.sigma0 * (1.0 + self.growth * t_idx[None, :])

    @staticmethod
    def from_scalars(nominal: np.ndarray, sigma0: float, growth: float,
                     box_halfwidth: float, floor: float = 0.0) -> "QuantityBand":
        """Expand scalar uncertainty settings around a nominal forecast grid.

        The box is nominal * (1 +- box_halfwidth), floored (prices, powers and
        generator output do not go negative here).
        """
        nominal = np.atleast_2d(np.asarray(nominal, dtype=float))
        ones = np.ones_like(nominal)
        lower = np.maximum(floor, nominal * (1.0 - box_halfwidth))
        upper = nominal * (1.0 + box_halfwidth)
        return QuantityBand(nominal, sigma0 * ones, growth * ones, lower, upper)


@dataclass(frozen=True)
class UncertaintyModel:
    """The three uncertain quantity bands, aligned on the same (idc, slot) grid."""

    price: QuantityBand
    dg_output: QuantityBand
    it_power: QuantityBand

    def __post_init__(self):
        shape = self.price.nominal.shape
        for q in QUANTITIES[1:]:
            if getattr(self, q).nominal.shape != shape:
                raise UncertaintyError("quantity grids differ in shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.price.nominal.shape

    def band(self, name: str) -> QuantityBand:
        if name not in QUANTITIES:
            raise UncertaintyError(f"unknown quantity {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class ScenarioRealization:
    """One concrete draw (or vertex profile) of the uncertain quantities."""

    price: np.ndarray      # (n_idc, T) $/kWh
    dg_output: np.ndarray  # (n_idc, T) kW
    it_power: np.ndarray   # (n_idc, T) kW
    label: str = "draw"

    def __post_init__(self):
        for name in ("price", "dg_output", "it_power"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _lock(arr))
        if not (self.price.shape == self.dg_output.shape == self.it_power.shape):
            raise UncertaintyError("realization arrays differ in shape")


def _draw_band(band: QuantityBand, rng: np.random.Generator) -> np.ndarray:
    """Truncated-normal draw: resample out-of-box entries, clamp as last resort."""
    std = band.std()
    values = rng.normal(band.nominal, std)
    for _ in range(_MAX_REDRAWS):
        bad = (values < band.lower) | (values > band.upper)
        if not np.any(bad):
            break
        redraw = rng.normal(band.nominal[bad], std[bad])
        values[bad] = redraw
    return np.clip(values, band.lower, band.upper)


def draw_realization(model: UncertaintyModel, seed: int) -> ScenarioRealization:
    """Draw one realization of all uncertain quantities.

    Deterministic given the seed; each quantity is drawn from a normal centred
    on its nominal with the horizon-growing standard deviation, truncated to
    the box by resampling.
    """
    rng = np.random.default_rng(seed)
    arrays = {name: _draw_band(model.band(name), rng) for name in QUANTITIES}
    return ScenarioRealization(**arrays, label=f"seed={seed}")


def box_profile(model: UncertaintyModel, price: str, dg: str, it: str,
                label: str | None = None) -> ScenarioRealization:
    """Build a profile realization from per-quantity choices in
    {'lower', 'nominal', 'upper'} applied uniformly across slots."""

    def pick(band: QuantityBand, which: str) -> np.ndarray:
        try:
            return getattr(band, which if which != "nominal" else "nominal")
        except AttributeError:
            raise UncertaintyError(f"unknown profile {which!r}") from None

    return ScenarioRealization(
        price=pick(model.price, price),
        dg_output=pick(model.dg_output, dg),
        it_power=pick(model.it_power, it),
        label=label or f"p={price},g={dg},w={it}",
    )

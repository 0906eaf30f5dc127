"""Data-center operation model: power balance, storage dynamics, demand-response
capacity coupling, and terminable workloads.

Conventions: powers in kW, energies in kWh, prices in $/kWh (workload
termination prices in $ per workload). Storage charge power is positive when
charging. Grid draw is nonnegative; on-site generation in excess of demand is
curtailed rather than exported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, MixedBinaryProgram
from .uncertainty import ScenarioRealization, UncertaintyModel


class ModelInputError(ValueError):
    pass


def _lock(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _slot_vector(values, T: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 1:
        arr = np.full(T, arr[0])
    if arr.shape != (T,):
        raise ModelInputError(f"{name} must have one entry per slot ({T}), got {arr.shape}")
    return _lock(arr)


@dataclass(frozen=True)
class TimeGrid:
    n_slots: int
    slot_hours: float = 0.25

    def __post_init__(self):
        if self.n_slots < 1:
            raise ModelInputError("need at least one time slot")
        if self.slot_hours <= 0:
            raise ModelInputError("slot duration must be positive")


@dataclass(frozen=True)
class EssParams:
    """Battery: energy capacity, starting energy, charge/discharge power limit."""

    energy_max: float      # kWh
    energy_initial: float  # kWh
    power_max: float       # kW, symmetric charge/discharge magnitude

    def __post_init__(self):
        if not 0.0 <= self.energy_initial <= self.energy_max:
            raise ModelInputError("initial stored energy must lie in [0, energy_max]")
        if self.power_max < 0:
            raise ModelInputError("storage power limit must be nonnegative")


@dataclass(frozen=True)
class IdcParams:
    """One data center: efficiency factor, nominal demand, storage, forecasts."""

    name: str
    pue: np.ndarray              # per-slot power usage effectiveness, >= 1
    nominal_power: np.ndarray    # per-slot registered nominal demand, kW
    ess: EssParams
    it_interactive: np.ndarray   # per-slot interactive IT power forecast, kW
    dg_output: np.ndarray        # per-slot on-site generation forecast, kW
    elec_price: np.ndarray       # per-slot electricity price forecast, $/kWh

    def __post_init__(self):
        T = np.asarray(self.pue, dtype=float).ravel().size
        for fname in ("pue", "nominal_power", "it_interactive", "dg_output", "elec_price"):
            object.__setattr__(self, fname, _slot_vector(getattr(self, fname), T, fname))
        if np.any(self.pue < 1.0):
            raise ModelInputError(f"{self.name}: PUE must be >= 1")
        for fname in ("nominal_power", "it_interactive", "dg_output", "elec_price"):
            if np.any(getattr(self, fname) < 0):
                raise ModelInputError(f"{self.name}: {fname} must be nonnegative")


@dataclass(frozen=True)
class FlexibleWorkload:
    """A terminable scheduled task with a known per-slot IT power profile."""

    name: str
    host: str                  # IdcParams.name it runs on
    it_power: np.ndarray       # per-slot IT power demand, kW
    termination_price: float   # $ paid (by the operator) to drop the task

    def __post_init__(self):
        arr = np.asarray(self.it_power, dtype=float).ravel()
        object.__setattr__(self, "it_power", _lock(arr))
        if np.any(self.it_power < 0):
            raise ModelInputError(f"{self.name}: workload power must be nonnegative")
        if self.termination_price < 0:
            raise ModelInputError(f"{self.name}: termination price must be nonnegative")


@dataclass(frozen=True)
class IdcCase:
    """A full problem instance; everything the sampling pipeline needs."""

    grid: TimeGrid
    idcs: tuple[IdcParams, ...]
    workloads: tuple[FlexibleWorkload, ...]
    uncertainty: UncertaintyModel
    dr_price_low: float = 0.0   # DR price sampling box, $/kWh
    dr_price_high: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "idcs", tuple(self.idcs))
        object.__setattr__(self, "workloads", tuple(self.workloads))
        T = self.grid.n_slots
        names = [idc.name for idc in self.idcs]
        if len(set(names)) != len(names):
            raise ModelInputError("duplicate data-center names")
        for idc in self.idcs:
            if idc.pue.shape != (T,):
                raise ModelInputError(f"{idc.name}: slot vectors do not match grid ({T})")
        for wl in self.workloads:
            if wl.host not in names:
                raise ModelInputError(f"workload {wl.name}: unknown host {wl.host!r}")
            if wl.it_power.shape != (T,):
                raise ModelInputError(f"workload {wl.name}: profile length != {T}")
        if self.uncertainty.shape != (len(self.idcs), T):
            raise ModelInputError("uncertainty grid does not match (n_idc, T)")
        if not 0.0 <= self.dr_price_low <= self.dr_price_high:
            raise ModelInputError("DR price box must satisfy 0 <= low <= high")

    @property
    def n_idc(self) -> int:
        return len(self.idcs)

    @property
    def n_slots(self) -> int:
        return self.grid.n_slots

    @property
    def n_cells(self) -> int:
        """Number of (idc, slot) cells; the DR price/amount dimension."""
        return self.n_idc * self.n_slots

    def idc_index(self, name: str) -> int:
        for i, idc in enumerate(self.idcs):
            if idc.name == name:
                return i
        raise ModelInputError(f"unknown data center {name!r}")

    def cell_labels(self) -> list[str]:
        return [f"{idc.name}_t{t + 1}" for idc in self.idcs for t in range(self.n_slots)]

    def nominal_power_grid(self) -> np.ndarray:
        return np.vstack([idc.nominal_power for idc in self.idcs])

    def nominal_realization(self) -> ScenarioRealization:
        u = self.uncertainty
        return ScenarioRealization(
            price=u.price.nominal, dg_output=u.dg_output.nominal,
            it_power=u.it_power.nominal, label="nominal",
        )


@dataclass(frozen=True)
class FirstStageDecision:
    """Here-and-now part: workload terminations and the storage schedule."""

    termination: np.ndarray    # (n_wl,) binaries, 1 = terminated
    ess_power: np.ndarray      # (n_idc, T) kW, positive = charging
    ess_energy: np.ndarray     # (n_idc, T) kWh at end of each slot

    def __post_init__(self):
        object.__setattr__(self, "termination", _lock(np.asarray(self.termination, dtype=float).ravel()))
        object.__setattr__(self, "ess_power", _lock(np.atleast_2d(np.asarray(self.ess_power, dtype=float))))
        object.__setattr__(self, "ess_energy", _lock(np.atleast_2d(np.asarray(self.ess_energy, dtype=float))))


@dataclass(frozen=True)
class SecondStageDecision:
    """Wait-and-see part: grid draw and delivered DR per (idc, slot)."""

    grid_power: np.ndarray   # kW drawn from the grid
    dr_amount: np.ndarray    # kW of demand response delivered
    curtailment: np.ndarray  # kW of on-site generation spilled
    shortfall: np.ndarray    # kW of demand that could not be served (over-nominal)
    ess_spill: np.ndarray    # kW of storage discharge dumped (degenerate schedules)

    def __post_init__(self):
        for name in ("grid_power", "dr_amount", "curtailment", "shortfall", "ess_spill"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _lock(arr))


# ---------------------------------------------------------------------------
# power accounting

def total_power_demand(p_it: float, pue: float) -> float:
    """Facility power for a given IT power: cooling and auxiliaries scale the
    IT draw by the PUE factor."""
    if p_it < 0:
        raise ModelInputError("IT power must be nonnegative")
    if pue < 1.0:
        raise ModelInputError("PUE must be >= 1")
    return p_it * pue


def it_power_demand(case: IdcCase, idc: int, t: int, termination,
                    interactive: np.ndarray | None = None) -> float:
    """IT power at (idc, t): interactive flow plus surviving flexible workloads.

    `termination` holds one 0/1 entry per workload in case order. The
    interactive forecast can be overridden with a realized grid.
    """
    if not (0 <= idc < case.n_idc and 0 <= t < case.n_slots):
        raise ModelInputError(f"cell ({idc}, {t}) out of range")
    v = np.asarray(termination, dtype=float).ravel()
    if v.size != len(case.workloads):
        raise ModelInputError("one termination entry per workload required")
    base = case.idcs[idc].it_interactive[t] if interactive is None else interactive[idc, t]
    host = case.idcs[idc].name
    flex = sum(
        wl.it_power[t] * (1.0 - v[k])
        for k, wl in enumerate(case.workloads)
        if wl.host == host
    )
    return float(base + flex)


# ---------------------------------------------------------------------------
# first-stage program assembly

@dataclass(frozen=True)
class FirstStageLayout:
    """Column layout of the first-stage program, for extraction and tests."""

    n_wl: int
    n_idc: int
    n_slots: int
    n_scenarios: int
    v: slice
    ess_power: slice
    ess_energy: slice
    theta: int
    scen_grid: tuple[slice, ...]
    scen_dr: tuple[slice, ...]
    scen_curt: tuple[slice, ...]

    def cell(self, i: int, t: int) -> int:
        return i * self.n_slots + t


def build_first_stage_program(
    case: IdcCase,
    scenarios: list[ScenarioRealization] | tuple[ScenarioRealization, ...],
    dr_price: np.ndarray,
) -> tuple[MixedBinaryProgram, FirstStageLayout]:
    """Assemble the scenario-epigraph program for the here-and-now decisions.

    Variables: termination binaries v, storage power and energy, per-scenario
    recourse (grid power, DR amount, curtailment), and the epigraph variable
    bounding the worst scenario's operating cost. Objective: termination cost
    plus the epigraph. Energy terms carry the slot duration.
    """
    if len(scenarios) == 0:
        raise ModelInputError("need at least one scenario")
    n_idc, T = case.n_idc, case.n_slots
    n_cells = n_idc * T
    n_wl, n_sc = len(case.workloads), len(scenarios)
    dr = np.asarray(dr_price, dtype=float).reshape(n_idc, T)
    if np.any(dr < 0):
        raise ModelInputError("DR prices must be nonnegative")
    dt = case.grid.slot_hours

    # column layout
    v_sl = slice(0, n_wl)
    pess_sl = slice(n_wl, n_wl + n_cells)
    eess_sl = slice(pess_sl.stop, pess_sl.stop + n_cells)
    theta = eess_sl.stop
    pos = theta + 1
    scen_grid, scen_dr, scen_curt = [], [], []
    for _ in range(n_sc):
        scen_grid.append(slice(pos, pos + n_cells)); pos += n_cells
        scen_dr.append(slice(pos, pos + n_cells)); pos += n_cells
        scen_curt.append(slice(pos, pos + n_cells)); pos += n_cells
    n_vars = pos

    nominal = case.nominal_power_grid()
    pue = np.vstack([idc.pue for idc in case.idcs])

    lower = np.zeros(n_vars)
    upper = np.full(n_vars, np.inf)
    upper[v_sl] = 1.0
    for i, idc in enumerate(case.idcs):
        cells = slice(pess_sl.start + i * T, pess_sl.start + (i + 1) * T)
        lower[cells] = -idc.ess.power_max
        upper[cells] = idc.ess.power_max
        cells = slice(eess_sl.start + i * T, eess_sl.start + (i + 1) * T)
        upper[cells] = idc.ess.energy_max
    for s, real in enumerate(scenarios):
        upper[scen_grid[s]] = nominal.ravel()
        upper[scen_dr[s]] = nominal.ravel()
        upper[scen_curt[s]] = real.dg_output.ravel()
    # the epigraph cannot sit below the largest possible DR revenue
    lower[theta] = -float(np.sum(nominal * dr) * dt) - 1.0

    rows, rels, rhs, labels = [], [], [], []

    def add_row(coeffs: dict[int, float], rel: str, b: float, label: str):
        row = np.zeros(n_vars)
        for j, cval in coeffs.items():
            row[j] = cval
        rows.append(row); rels.append(rel); rhs.append(b); labels.append(label)

    # storage energy recursion: E[t] - E[t-1] - dt * P[t] = 0 (E[-1] = initial)
    for i, idc in enumerate(case.idcs):
        for t in range(T):
            coeffs = {eess_sl.start + i * T + t: 1.0, pess_sl.start + i * T + t: -dt}
            b = idc.ess.energy_initial if t == 0 else 0.0
            if t > 0:
                coeffs[eess_sl.start + i * T + t - 1] = -1.0
            add_row(coeffs, "=", b, f"ess_energy[{idc.name},t{t + 1}]")

    # per-scenario recourse rows
    host_power = np.zeros((n_wl, n_idc, T))
    for k, wl in enumerate(case.workloads):
        host_power[k, case.idc_index(wl.host), :] = wl.it_power
    for s, real in enumerate(scenarios):
        for i in range(n_idc):
            for t in range(T):
                c = i * T + t
                # balance: P - P_ess - curt + pue * sum_wl p_wl * v
                #        = pue * (interactive + sum_wl p_wl) - dg
                coeffs = {
                    scen_grid[s].start + c: 1.0,
                    pess_sl.start + c: -1.0,
                    scen_curt[s].start + c: -1.0,
                }
                for k in range(n_wl):
                    if host_power[k, i, t] != 0.0:
                        coeffs[k] = coeffs.get(k, 0.0) + pue[i, t] * host_power[k, i, t]
                demand_all_on = pue[i, t] * (real.it_power[i, t] + host_power[:, i, t].sum())
                add_row(coeffs, "=", demand_all_on - real.dg_output[i, t],
                        f"balance[s{s},{case.idcs[i].name},t{t + 1}]")
                # capacity coupling: P + P_dr <= nominal
                add_row({scen_grid[s].start + c: 1.0, scen_dr[s].start + c: 1.0},
                        "<=", nominal[i, t],
                        f"capacity[s{s},{case.idcs[i].name},t{t + 1}]")
        # epigraph: sum_cells dt * (price * P - dr_price * P_dr) - theta <= 0
        coeffs = {theta: -1.0}
        for c in range(n_cells):
            coeffs[scen_grid[s].start + c] = dt * real.price.ravel()[c]
            coeffs[scen_dr[s].start + c] = -dt * dr.ravel()[c]
        add_row(coeffs, "<=", 0.0, f"worst_cost[s{s}]")

    objective = np.zeros(n_vars)
    for k, wl in enumerate(case.workloads):
        objective[k] = wl.termination_price
    objective[theta] = 1.0

    prog = LinearProgram(
        objective=objective,
        lhs=np.vstack(rows) if rows else np.zeros((0, n_vars)),
        relations=tuple(rels),
        rhs=np.array(rhs),
        lower=lower,
        upper=upper,
        row_labels=tuple(labels),
    )
    layout = FirstStageLayout(
        n_wl=n_wl, n_idc=n_idc, n_slots=T, n_scenarios=n_sc,
        v=v_sl, ess_power=pess_sl, ess_energy=eess_sl, theta=theta,
        scen_grid=tuple(scen_grid), scen_dr=tuple(scen_dr), scen_curt=tuple(scen_curt),
    )
    return MixedBinaryProgram(prog, tuple(range(n_wl))), layout

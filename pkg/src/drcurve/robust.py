"""Two-stage robust dispatch: here-and-now decisions against a scenario set,
then per-slot recourse for a realized draw.

The inner worst case over the uncertainty box is approximated by a finite
scenario set. Operating cost is monotone in each uncertain quantity, so the
box-corner profiles carry the extreme costs; seeded interior samples are added
up to the scenario budget.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .idc import (
    FirstStageDecision,
    IdcCase,
    ModelInputError,
    SecondStageDecision,
    build_first_stage_program,
    it_power_demand,
)
from .lp import (
    DEFAULT_CONFIG,
    LinearProgram,
    LpSolution,
    SolverConfig,
    solve_lp,
    solve_milp,
)
from .uncertainty import ScenarioRealization, box_profile, draw_realization


class ModelInfeasibleError(RuntimeError):
    """The first-stage program has no feasible dispatch."""

    def __init__(self, family: str):
        super().__init__(f"first-stage model infeasible; first violated family: {family}")
        self.family = family


# relief slacks are priced far above any plausible marginal value so they only
# activate when physics forces them
def _relief_penalty(case: IdcCase, dr_price: np.ndarray) -> float:
    price_cap = float(case.uncertainty.price.upper.max(initial=0.0))
    return 10.0 * (price_cap + float(np.max(dr_price, initial=0.0))) + 100.0


@dataclass(frozen=True)
class SlotDispatch:
    """Closed-form recourse for a single (idc, slot)."""

    grid_power: float
    dr_amount: float
    curtailment: float
    shortfall: float
    over_nominal: bool


@dataclass(frozen=True)
class OperationOutcome:
    """A first-stage decision with its realized recourse and cost split."""

    first: FirstStageDecision
    second: SecondStageDecision
    termination_cost: float
    operating_cost: float   # realized grid cost minus DR revenue, $
    total_cost: float

    def to_json(self) -> str:
        def arr(a):
            return np.asarray(a).tolist()

        return json.dumps(
            {
                "termination": arr(self.first.termination),
                "ess_power": arr(self.first.ess_power),
                "ess_energy": arr(self.first.ess_energy),
                "grid_power": arr(self.second.grid_power),
                "dr_amount": arr(self.second.dr_amount),
                "curtailment": arr(self.second.curtailment),
                "shortfall": arr(self.second.shortfall),
                "ess_spill": arr(self.second.ess_spill),
                "termination_cost": self.termination_cost,
                "operating_cost": self.operating_cost,
                "total_cost": self.total_cost,
            },
            indent=2,
        )


def build_scenario_set(case: IdcCase, budget: int, seed: int) -> list[ScenarioRealization]:
    """Corner profiles of the uncertainty box, the nominal profile, and seeded
    interior draws, capped at `budget` scenarios.

    Corners are ordered so that small budgets keep the cost-extremal profiles:
    all-adverse (high price, high IT load, low generation) first, then the
    remaining sign combinations, then nominal, then samples.
    """
    if budget < 1:
        raise ModelInputError("scenario budget must be >= 1")
    corners = sorted(
        itertools.product(("upper", "lower"), repeat=3),
        key=lambda combo: (combo[0] == "lower", combo[1] == "upper", combo[2] == "lower"),
    )
    scenarios = [
        box_profile(case.uncertainty, price=pc, dg=gc, it=ic, label=f"corner:{pc[0]}{gc[0]}{ic[0]}")
        for pc, gc, ic in corners
    ]
    scenarios.append(case.nominal_realization())
    scenarios = scenarios[:budget]
    k = 0
    while len(scenarios) < budget:
        scenarios.append(draw_realization(case.uncertainty, seed=_mix_seed(seed, k)))
        k += 1
    return scenarios


def _mix_seed(seed: int, index: int) -> int:
    import hashlib

    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def solve_first_stage(
    case: IdcCase,
    dr_price: np.ndarray,
    scenario_budget: int = 16,
    seed: int = 0,
    config: SolverConfig = DEFAULT_CONFIG,
) -> FirstStageDecision:
    """Pick workload terminations and the storage schedule against the worst
    scenario in the budgeted set."""
    scenarios = build_scenario_set(case, scenario_budget, seed)
    prog, layout = build_first_stage_program(case, scenarios, dr_price)
    sol = solve_milp(prog, config)
    if sol.status != "optimal":
        family = "unknown"
        if sol.infeasible_row is not None and prog.program.row_labels:
            family = prog.program.row_labels[sol.infeasible_row].split("[")[0]
        raise ModelInfeasibleError(family)
    shape = (case.n_idc, case.n_slots)
    return FirstStageDecision(
        termination=np.round(sol.x[layout.v]),
        ess_power=sol.x[layout.ess_power].reshape(shape),
        ess_energy=sol.x[layout.ess_energy].reshape(shape),
    )


def first_stage_objective(
    case: IdcCase,
    dr_price: np.ndarray,
    scenario_budget: int = 16,
    seed: int = 0,
    config: SolverConfig = DEFAULT_CONFIG,
) -> float:
    """Optimal worst-case objective of the first-stage program (termination
    cost plus epigraph), mainly for monotonicity checks."""
    scenarios = build_scenario_set(case, scenario_budget, seed)
    prog, _ = build_first_stage_program(case, scenarios, dr_price)
    sol = solve_milp(prog, config)
    if sol.status != "optimal":
        raise ModelInfeasibleError("unknown")
    return float(sol.objective)


def _slot_program(raw: float, dg: float, nominal: float, elec_price: float,
                  dr_price: float, penalty: float) -> LinearProgram:
    # variables: [grid, dr, curt, shortfall, spill]
    return LinearProgram(
        objective=[elec_price, -dr_price, 0.0, penalty, penalty],
        lhs=[[1.0, 0.0, -1.0, 1.0, -1.0], [1.0, 1.0, 0.0, 0.0, 0.0]],
        relations=("=", "<="),
        rhs=[raw, nominal],
        lower=[0.0] * 5,
        upper=[np.inf, np.inf, dg, np.inf, np.inf],
        row_labels=("balance", "capacity"),
    )


def solve_second_stage(
    case: IdcCase,
    first: FirstStageDecision,
    realization: ScenarioRealization,
    dr_price: np.ndarray,
    config: SolverConfig = DEFAULT_CONFIG,
) -> SecondStageDecision:
    """Recourse for a known realization: per (idc, slot), minimize grid cost
    minus DR revenue under the balance and capacity rows. Decomposes slot by
    slot because the storage schedule is already fixed."""
    n_idc, T = case.n_idc, case.n_slots
    dr = np.asarray(dr_price, dtype=float).reshape(n_idc, T)
    penalty = _relief_penalty(case, dr)
    grid = np.zeros((n_idc, T))
    amount = np.zeros((n_idc, T))
    curt = np.zeros((n_idc, T))
    short = np.zeros((n_idc, T))
    spill = np.zeros((n_idc, T))
    for i in range(n_idc):
        pue = case.idcs[i].pue
        for t in range(T):
            p_it = it_power_demand(case, i, t, first.termination, interactive=realization.it_power)
            demand = p_it * pue[t]
            raw = demand + first.ess_power[i, t] - realization.dg_output[i, t]
            prog = _slot_program(
                raw, realization.dg_output[i, t], case.idcs[i].nominal_power[t],
                realization.price[i, t], dr[i, t], penalty,
            )
            sol = solve_lp(prog, config)
            if sol.status != "optimal":  # pragma: no cover - relief slacks prevent this
                raise ModelInfeasibleError("slot recourse")
            g, a, cu, sh, sp = sol.x
            if dr[i, t] == 0.0:
                a = 0.0  # no incentive: deliver nothing (deterministic tie-break)
            grid[i, t], amount[i, t] = g, a
            curt[i, t], short[i, t], spill[i, t] = cu, sh, sp
    return SecondStageDecision(grid, amount, curt, short, spill)


def second_stage_closed_form(
    demand: float,
    ess_power: float,
    dg: float,
    nominal: float,
    dr_price_slot: float,
    elec_price_slot: float,
) -> SlotDispatch:
    """Analytic single-slot recourse.

    Grid draw is the net demand floored at zero (excess generation is
    curtailed). With a positive DR price the delivered amount fills the whole
    nominal-capacity gap; at zero price nothing is delivered. Net demand above
    the nominal level is flagged rather than silently clipped.
    """
    if min(demand, dg, nominal, dr_price_slot, elec_price_slot) < 0:
        raise ModelInputError("negative slot input")
    raw = demand + ess_power - dg
    grid = max(0.0, raw)
    curtailment = min(dg, max(0.0, -raw))
    shortfall = 0.0
    over = grid > nominal
    if over:
        shortfall = grid - nominal
        amount = 0.0
    else:
        amount = nominal - grid if dr_price_slot > 0.0 else 0.0
    return SlotDispatch(grid, amount, curtailment, shortfall, over)


def operate(
    case: IdcCase,
    dr_price: np.ndarray,
    realization: ScenarioRealization,
    scenario_budget: int = 16,
    seed: int = 0,
    config: SolverConfig = DEFAULT_CONFIG,
) -> OperationOutcome:
    """Full two-stage evaluation for one realized draw."""
    first = solve_first_stage(case, dr_price, scenario_budget, seed, config)
    second = solve_second_stage(case, first, realization, dr_price, config)
    return assemble_outcome(case, dr_price, first, second, realization)


def assemble_outcome(
    case: IdcCase,
    dr_price: np.ndarray,
    first: FirstStageDecision,
    second: SecondStageDecision,
    realization: ScenarioRealization,
) -> OperationOutcome:
    dr = np.asarray(dr_price, dtype=float).reshape(case.n_idc, case.n_slots)
    dt = case.grid.slot_hours
    term_cost = float(
        sum(w.termination_price * v for w, v in zip(case.workloads, first.termination))
    )
    op_cost = float(
        dt * np.sum(second.grid_power * realization.price - second.dr_amount * dr)
    )
    return OperationOutcome(first, second, term_cost, op_cost, term_cost + op_cost)

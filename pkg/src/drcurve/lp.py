"""Dense linear programming: bounded-variable two-phase simplex and a
branch-and-bound wrapper for programs with binary variables.

Problems here are desk scale (tens to a few hundred variables), so the solver
keeps a dense tableau and favours simplicity over sparse machinery. Variable
bounds are handled implicitly (nonbasic variables rest on a bound), which keeps
the tableau at one row per constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)


class LpInputError(ValueError):
    """Malformed program: dimension mismatch, bad bounds, bad relation."""


class LpCapacityError(LpInputError):
    """Program exceeds a hard size limit of the solver."""


class LpSolverError(RuntimeError):
    """Numerical breakdown (pivot limit, residual check); not infeasibility."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits shared by the LP and branch-and-bound paths."""

    feas_tol: float = 1e-7        # constraint residual tolerance
    bound_tol: float = 1e-9       # variable bound violation tolerance
    opt_tol: float = 1e-7         # optimality margin on the objective
    pivot_tol: float = 1e-9       # smallest usable pivot element
    degenerate_streak: int = 30   # consecutive zero-step pivots before Bland's rule
    max_iterations: int = 50_000
    milp_gap: float = 1e-6        # absolute best-bound pruning gap
    max_binaries: int = 32


DEFAULT_CONFIG = SolverConfig()


def _lock(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


try:
    from scipy.linalg.blas import dger as _dger
except ImportError:  # pragma: no cover - scipy is a hard dependency
    _dger = None


def _rank1_update(T: np.ndarray, col: np.ndarray, rowvec: np.ndarray) -> None:
    """T -= outer(col, rowvec), in place."""
    if _dger is not None and T.flags.c_contiguous:
        _dger(-1.0, rowvec, col, a=T.T, overwrite_a=1)
    else:
        T -= col[:, None] * rowvec[None, :]


@dataclass(frozen=True)
class LinearProgram:
    """minimize objective @ x  subject to  lhs x (<=|=|>=) rhs, lower <= x <= upper.

    Lower bounds must be finite; upper bounds may be +inf. Arrays are locked
    read-only on construction so a program can be shared freely.
    """

    objective: np.ndarray
    lhs: np.ndarray
    relations: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        obj = _lock(np.array(self.objective, dtype=float))
        lhs = _lock(np.atleast_2d(np.array(self.lhs, dtype=float)))
        rhs = _lock(np.array(self.rhs, dtype=float))
        lower = _lock(np.array(self.lower, dtype=float))
        upper = _lock(np.array(self.upper, dtype=float))
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "lhs", lhs)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "relations", tuple(self.relations))
        n = obj.shape[0]
        m = lhs.shape[0] if lhs.size else 0
        if lhs.size and lhs.shape[1] != n:
            raise LpInputError(
                f"constraint matrix has {lhs.shape[1]} columns, objective has {n}"
            )
        if rhs.shape[0] != m or len(self.relations) != m:
            raise LpInputError("rhs/relations length does not match constraint rows")
        for rel in self.relations:
            if rel not in _RELATIONS:
                raise LpInputError(f"unknown relation {rel!r}")
        if lower.shape[0] != n or upper.shape[0] != n:
            raise LpInputError("bound vectors do not match variable count")
        if not np.all(np.isfinite(lower)):
            raise LpInputError("lower bounds must be finite")
        if np.any(upper < lower):
            bad = int(np.argmax(upper < lower))
            raise LpInputError(f"variable {bad}: upper bound below lower bound")
        if self.row_labels is not None:
            object.__setattr__(self, "row_labels", tuple(self.row_labels))
            if len(self.row_labels) != m:
                raise LpInputError("row_labels length does not match constraint rows")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]


@dataclass(frozen=True)
class MixedBinaryProgram:
    """A LinearProgram with an index set of variables restricted to {0, 1}."""

    program: LinearProgram
    binary_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "binary_indices", tuple(int(i) for i in self.binary_indices))
        n = self.program.n_vars
        for j in self.binary_indices:
            if not 0 <= j < n:
                raise LpInputError(f"binary index {j} out of range for {n} variables")
            if self.program.lower[j] < -1e-12 or self.program.upper[j] > 1 + 1e-12:
                raise LpInputError(f"binary variable {j} has bounds outside [0, 1]")


OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    nodes: int = 0
    infeasible_row: int | None = None  # a row left unsatisfied (phase-one witness)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def dump_program(prog: LinearProgram) -> str:
    """Human-readable listing of a program, one constraint per line.

    Troubleshooting aid only; the format is not a compatibility contract.
    """

    def term(c, j, first):
        sign = "-" if c < 0 else ("" if first else "+")
        return f"{sign} {abs(c):g} x{j}" if not first else f"{sign}{abs(c):g} x{j}"

    def linear(coeffs):
        parts, first = [], True
        for j, c in enumerate(coeffs):
            if c == 0.0:
                continue
            parts.append(term(c, j, first))
            first = False
        return " ".join(parts) if parts else "0"

    lines = [f"minimize {linear(prog.objective)}"]
    labels = prog.row_labels or tuple(f"r{i}" for i in range(prog.n_rows))
    for i in range(prog.n_rows):
        lines.append(
            f"  {labels[i]}: {linear(prog.lhs[i])} {prog.relations[i]} {prog.rhs[i]:g}"
        )
    for j in range(prog.n_vars):
        up = "inf" if np.isinf(prog.upper[j]) else f"{prog.upper[j]:g}"
        lines.append(f"  {prog.lower[j]:g} <= x{j} <= {up}")
    return "\n".join(lines)


class _Tableau:
    """Bounded-variable simplex state over the equality form [A | I] x = b.

    Slack bounds encode the row relation: [0, inf) for <=, (-inf, 0] for >=,
    [0, 0] for =. Nonbasic variables rest on a finite bound; `at_upper` tracks
    which one.
    """

    def __init__(self, prog: LinearProgram, config: SolverConfig):
        self.cfg = config
        m, n = prog.n_rows, prog.n_vars
        self.m, self.n_struct = m, n
        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, rel in enumerate(prog.relations):
            if rel == LE:
                slack_lo[i], slack_hi[i] = 0.0, np.inf
            elif rel == GE:
                slack_lo[i], slack_hi[i] = -np.inf, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0
        self.lo = np.concatenate([prog.lower, slack_lo])
        self.hi = np.concatenate([prog.upper, slack_hi])
        self.A = np.hstack([prog.lhs, np.eye(m)]) if m else np.zeros((0, n + m))
        self.b = prog.rhs.copy()
        self.nt = n + m  # columns, before artificials

        # Nonbasic start: lower bound when finite, else upper (every column
        # has at least one finite bound by construction).
        self.at_upper = ~np.isfinite(self.lo)
        self.x = np.where(self.at_upper, self.hi, self.lo)

        # Crash start: a row whose slack is feasible at the nonbasic start
        # keeps its slack basic; only the remaining rows get an artificial
        # column. Rows with a negative residual are negated so every
        # artificial enters with coefficient +1.
        resid = self.b - self.A @ self.x  # slack start value per row
        slack_ok = (resid >= slack_lo - 1e-12) & (resid <= slack_hi + 1e-12)
        art_rows = np.flatnonzero(~slack_ok)
        art_sign = np.ones(m)
        art_sign[art_rows] = np.where(resid[art_rows] >= 0, 1.0, -1.0)
        self.A = art_sign[:, None] * self.A
        self.b = art_sign * self.b
        n_art = art_rows.size
        art_block = np.zeros((m, n_art))
        art_block[art_rows, np.arange(n_art)] = 1.0
        self.T = np.hstack([self.A, art_block]) if m else self.A * 1.0
        self.n_total = self.nt + n_art
        self.n_art = n_art
        self.lo = np.concatenate([self.lo, np.zeros(n_art)])
        self.hi = np.concatenate([self.hi, np.full(n_art, np.inf)])
        self.x = np.concatenate([self.x, np.zeros(n_art)])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(n_art, dtype=bool)])
        self.art_rows = art_rows  # artificial k sits in row art_rows[k]
        # basic column per row: feasible slack, else its artificial
        basis = np.empty(m, dtype=int)
        basis[slack_ok] = n + np.flatnonzero(slack_ok)
        basis[art_rows] = self.nt + np.arange(n_art)
        self.basis = basis
        self.in_basis = np.zeros(self.n_total, dtype=bool)
        self.in_basis[self.basis] = True
        self.beta = np.where(slack_ok, resid, np.abs(resid))  # by row
        self.x[self.basis] = self.beta
        self.fixed_col = self.lo == self.hi
        self.iterations = 0
        self.T0 = self.T.copy()  # pristine columns, for exact cleanup
        self._colbuf = np.empty(m)

    def drop_nonbasic_artificials(self) -> None:
        """Shrink the tableau after phase one: pinned artificial columns only
        cost pivot time. Basic artificials (redundant rows) are kept."""
        kept_art = [j for j in range(self.nt, self.n_total) if self.in_basis[j]]
        new_total = self.nt + len(kept_art)
        if new_total == self.n_total:
            return
        cols = np.concatenate([np.arange(self.nt), np.asarray(kept_art, dtype=int)])
        remap = np.full(self.n_total, -1, dtype=int)
        remap[cols] = np.arange(new_total)
        self.T = np.ascontiguousarray(self.T[:, cols])
        self.T0 = np.ascontiguousarray(self.T0[:, cols])
        for name in ("lo", "hi", "x", "at_upper", "in_basis", "fixed_col"):
            setattr(self, name, getattr(self, name)[cols])
        self.basis = remap[self.basis]
        self.n_total = new_total
        self._gerbuf = np.empty_like(self.T)

    # -- core pivoting ---------------------------------------------------

    def _reduced_costs(self, c: np.ndarray) -> np.ndarray:
        cb = c[self.basis]
        if self.m == 0:
            return c.copy()
        return c - cb @ self.T

    def _entering(self, d: np.ndarray, bland: bool) -> int | None:
        viol = np.where(self.at_upper, d, -d)  # positive where improving
        viol[self.in_basis] = -np.inf
        viol[self.fixed_col] = -np.inf  # pinned columns can never move
        eligible = viol > self.cfg.opt_tol * 1e-2
        if not np.any(eligible):
            return None
        if bland:
            return int(np.argmax(eligible))  # first True
        return int(np.argmax(viol))

    def _ratio_test(self, q: int, sigma: float, bland: bool):
        """Return (step, blocking_row, leaving_to_upper) for entering column q."""
        w = self.T[:, q] * sigma  # movement of basics per unit step is -w
        tol = self.cfg.pivot_tol
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        steps = np.full(self.m, np.inf)
        dec = w > tol  # basic decreases toward its lower bound
        inc = w < -tol  # basic increases toward its upper bound
        with np.errstate(invalid="ignore", divide="ignore"):
            steps[dec] = (self.beta[dec] - lo_b[dec]) / w[dec]
            steps[inc] = (self.beta[inc] - hi_b[inc]) / w[inc]
        steps[~np.isfinite(steps)] = np.inf
        steps = np.maximum(steps, 0.0)
        t_row = steps.min() if self.m else np.inf
        row = None
        if np.isfinite(t_row):
            ties = np.flatnonzero(steps <= t_row + 1e-15)
            if bland:
                row = int(ties[np.argmin(self.basis[ties])])
            else:
                # prefer the largest pivot magnitude for stability
                row = int(ties[np.argmax(np.abs(w[ties]))])
        return t_row, row, w

    def _pivot(self, row: int, q: int):
        piv = self.T[row, q]
        self.T[row, :] /= piv
        col = self._colbuf
        np.copyto(col, self.T[:, q])
        col[row] = 0.0
        # in-place rank-1 elimination; the transposed view is Fortran-ordered,
        # and col[row] == 0 keeps the pivot row itself untouched
        _rank1_update(self.T, col, self.T[row, :])
        leaving = self.basis[row]
        self.in_basis[leaving] = False
        self.in_basis[q] = True
        self.basis[row] = q

    def run_phase(self, c: np.ndarray) -> str:
        """Iterate to optimality of objective c. Returns 'optimal' or 'unbounded'."""
        cfg = self.cfg
        bland = False
        streak = 0
        d = self._reduced_costs(c)
        since_refresh = 0
        while True:
            self.iterations += 1
            if self.iterations > cfg.max_iterations:
                raise LpSolverError(
                    f"pivot limit {cfg.max_iterations} exceeded; numerical breakdown"
                )
            if since_refresh >= 100:
                d = self._reduced_costs(c)
                since_refresh = 0
            q = self._entering(d, bland)
            if q is None:
                # confirm with exact reduced costs; incremental updates drift
                d = self._reduced_costs(c)
                since_refresh = 0
                q = self._entering(d, bland)
                if q is None:
                    return OPTIMAL
            sigma = -1.0 if self.at_upper[q] else 1.0
            t_row, row, w = self._ratio_test(q, sigma, bland)
            t_flip = self.hi[q] - self.lo[q]  # may be inf
            if t_row == np.inf and not np.isfinite(t_flip):
                return UNBOUNDED
            if t_flip <= t_row:
                # bound flip: no basis change
                step = t_flip
                self.beta -= step * w
                self.x[q] = self.hi[q] if sigma > 0 else self.lo[q]
                self.at_upper[q] = ~self.at_upper[q]
            else:
                step = t_row
                self.beta -= step * w
                entering_val = self.x[q] + sigma * step
                leaving = self.basis[row]
                # leaving variable settles on the bound it hit
                w_r = w[row]
                self.x[leaving] = self.lo[leaving] if w_r > 0 else self.hi[leaving]
                self.at_upper[leaving] = w_r <= 0
                self._pivot(row, q)
                self.beta[row] = entering_val
                self.x[q] = entering_val
                # incremental reduced-cost update; d[q] becomes 0
                d = d - d[q] * self.T[row, :]
                d[leaving] = c[leaving] - c[self.basis] @ self.T[:, leaving]
                since_refresh += 1
            if step <= 1e-11:
                streak += 1
                if streak >= cfg.degenerate_streak:
                    bland = True
            else:
                streak = 0
                bland = False

    def basic_values_exact(self) -> None:
        """Re-solve for basic values from original data to remove pivot drift."""
        if self.m == 0:
            return
        nonbasic = ~self.in_basis
        cols = np.flatnonzero(nonbasic)
        rhs = self.b - self.T0[:, cols] @ self.x[cols]
        B = self.T0[:, self.basis]
        try:
            vals = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise LpSolverError("basis became singular during cleanup") from exc
        self.beta = vals
        self.x[self.basis] = vals


def _phase_one(tab: _Tableau) -> LpSolution | None:
    """Run phase one. Returns an infeasible LpSolution, or None when feasible."""
    if tab.n_art == 0:
        return None  # crash start is already feasible
    c1 = np.zeros(tab.n_total)
    c1[tab.nt:] = 1.0
    status = tab.run_phase(c1)
    if status != OPTIMAL:  # phase-one objective is bounded below by zero
        raise LpSolverError("phase one failed to terminate at an optimum")
    art_val = float(np.sum(tab.x[tab.nt:]))
    scale = max(1.0, float(np.max(np.abs(tab.b))) if tab.m else 1.0)
    if art_val > tab.cfg.feas_tol * scale:
        # witness: a row whose artificial stayed away from zero
        art_levels = tab.x[tab.nt:]
        witness = int(tab.art_rows[int(np.argmax(art_levels))])
        return LpSolution(INFEASIBLE, iterations=tab.iterations, infeasible_row=witness)
    # Pin all artificials to zero for phase two; basic ones stay at level 0.
    tab.lo[tab.nt:] = 0.0
    tab.hi[tab.nt:] = 0.0
    tab.at_upper[tab.nt:] = False
    tab.fixed_col[tab.nt:] = True
    return None


def solve_lp(prog: LinearProgram, config: SolverConfig = DEFAULT_CONFIG) -> LpSolution:
    """Solve a linear program with the two-phase bounded-variable simplex.

    Returns an LpSolution with status optimal, infeasible or unbounded.
    Raises LpSolverError on numerical breakdown (distinct from infeasible).
    """
    tab = _Tableau(prog, config)
    infeasible = _phase_one(tab)
    if infeasible is not None:
        return infeasible
    tab.drop_nonbasic_artificials()
    c2 = np.zeros(tab.n_total)
    c2[: prog.n_vars] = prog.objective
    status = tab.run_phase(c2)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=tab.iterations)
    tab.basic_values_exact()
    x = tab.x[: prog.n_vars].copy()
    # snap round-off bound violations
    x = np.minimum(np.maximum(x, prog.lower), prog.upper)
    obj = float(prog.objective @ x)
    _verify(prog, x, config)
    return LpSolution(OPTIMAL, x=_lock(x), objective=obj, iterations=tab.iterations)


def _verify(prog: LinearProgram, x: np.ndarray, config: SolverConfig) -> None:
    if prog.n_rows == 0:
        return
    ax = prog.lhs @ x
    scale = 1.0 + np.abs(prog.rhs)
    for i, rel in enumerate(prog.relations):
        resid = ax[i] - prog.rhs[i]
        ok = (
            resid <= config.feas_tol * scale[i]
            if rel == LE
            else resid >= -config.feas_tol * scale[i]
            if rel == GE
            else abs(resid) <= config.feas_tol * scale[i]
        )
        if not ok:
            raise LpSolverError(
                f"solution violates row {i} by {resid:.3e}; numerical breakdown"
            )


def _fix_binaries(prog: LinearProgram, fixed: dict[int, float]) -> LinearProgram:
    lower = prog.lower.copy()
    upper = prog.upper.copy()
    for j, val in fixed.items():
        lower[j] = upper[j] = val
    return replace(prog, lower=lower, upper=upper)


def solve_milp(
    prog: MixedBinaryProgram, config: SolverConfig = DEFAULT_CONFIG
) -> LpSolution:
    """Branch-and-bound over the binary variables of `prog`.

    Depth-first, branching on the most fractional binary (ties to the lowest
    index), diving toward the rounded value first, pruning on the best bound
    at absolute gap `config.milp_gap`. Returned binaries are exactly 0 or 1.
    """
    binaries = prog.binary_indices
    if len(binaries) > config.max_binaries:
        raise LpCapacityError(
            f"{len(binaries)} binary variables exceeds limit {config.max_binaries}"
        )
    base = prog.program
    int_tol = 1e-7

    best: LpSolution | None = None
    best_obj = np.inf
    nodes = 0
    iterations = 0
    root_status: str | None = None
    root_witness: int | None = None

    stack: list[dict[int, float]] = [{}]
    while stack:
        fixed = stack.pop()
        relax = solve_lp(_fix_binaries(base, fixed), config) if fixed else solve_lp(base, config)
        nodes += 1
        iterations += relax.iterations
        if root_status is None:
            root_status = relax.status
            root_witness = relax.infeasible_row
        if relax.status == UNBOUNDED:
            return LpSolution(UNBOUNDED, iterations=iterations, nodes=nodes)
        if relax.status != OPTIMAL:
            continue
        if best is not None and relax.objective >= best_obj - config.milp_gap:
            continue
        vals = relax.x[list(binaries)] if binaries else np.array([])
        frac = np.abs(vals - np.round(vals))
        if binaries and frac.max() > int_tol:
            j = int(np.argmax(np.where(frac > int_tol, -np.abs(vals - 0.5), -np.inf)))
            var = binaries[j]
            toward = round(float(vals[j]))
            away = 1 - toward
            stack.append({**fixed, var: float(away)})
            stack.append({**fixed, var: float(toward)})  # dive first
            continue
        if binaries and frac.max() > 0.0:
            # integral to tolerance only: re-solve with binaries pinned exactly
            snapped = {var: float(round(float(relax.x[var]))) for var in binaries}
            relax = solve_lp(_fix_binaries(base, snapped), config)
            nodes += 1
            iterations += relax.iterations
            if relax.status != OPTIMAL:
                continue
        if relax.objective < best_obj:
            best_obj = relax.objective
            best = relax
    if best is None:
        status = INFEASIBLE if root_status != UNBOUNDED else UNBOUNDED
        return LpSolution(
            status, iterations=iterations, nodes=nodes, infeasible_row=root_witness
        )
    return LpSolution(
        OPTIMAL, x=best.x, objective=best.objective, iterations=iterations, nodes=nodes
    )

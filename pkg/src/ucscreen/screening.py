"""Network-constraint screening methods and the constraint-generation loop.

Each screener returns the set of line ids whose capacity constraints can
be dropped from the TC-UC problem before solving, together with the CPU
time spent deciding.  Both inequality directions of a line limit are
always removed or kept together.

Method tags, used in reports and serialized removal sets:

    BN   keep everything (benchmark)
    SB   drop everything (single-bus problem)
    PI   keep only the lines binding at the full-network optimum
    NV   drop lines never congested in the history
    CG   no pre-screening; violated lines are added while solving
    ZH   per-period flow-bound LPs at fixed demand (ZH+ adds the other
         lines' capacity constraints to the bounding problems)
    RO   one set of flow-bound LPs over a demand box from historical
         percentiles, reused for the whole horizon
    DD   k-nearest-neighbor vote over historical congestion statuses
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .netmodel import (
    GridError,
    PowerSystem,
    PTDFMatrix,
    Scenario,
    build_ptdf,
    net_demand,
)
from .ucopt import (
    BINDING_RTOL,
    STATUS_OPTIMAL,
    SolveError,
    UCSolution,
    build_tcuc,
    solve_tcuc,
)

# A line is added back during constraint generation when its flow
# magnitude exceeds capacity by more than this relative margin.
CG_VIOLATION_RTOL = 1e-6
CG_MAX_ITER = 50

ZH = "ZH"
ZH_PLUS = "ZH+"


class InfeasibleSubproblemError(SolveError):
    """A flow-bound LP has no feasible point (e.g. capacity < demand)."""


class IterationLimitError(SolveError):
    """Constraint generation hit max_iter; carries the last iterate."""

    def __init__(self, message, last_solution, removed_lines, iterations):
        super().__init__(message)
        self.last_solution = last_solution
        self.removed_lines = removed_lines
        self.iterations = iterations


@dataclass(frozen=True)
class ScreeningResult:
    """Removal decision of one method: which lines to drop and the T1 cost."""

    method: str
    removed_lines: frozenset[int]
    preprocess_seconds: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "removed_lines", frozenset(self.removed_lines))


@dataclass(frozen=True)
class CongestionHistory:
    """Observed operating records: net demand and per-line congestion bits.

    net_demand is (N_T, N_B); line_status is (N_T, N_L) with entry 1
    when the line's flow magnitude reached its capacity in that period.
    """

    net_demand: np.ndarray
    line_status: np.ndarray
    line_ids: tuple[int, ...]
    solve_status: tuple[str, ...] = field(default=())

    def __post_init__(self):
        nd = np.atleast_2d(np.asarray(self.net_demand, dtype=float))
        st = np.atleast_2d(np.asarray(self.line_status, dtype=int))
        object.__setattr__(self, "net_demand", nd)
        object.__setattr__(self, "line_status", st)
        object.__setattr__(self, "line_ids", tuple(self.line_ids))
        object.__setattr__(self, "solve_status", tuple(self.solve_status))
        if nd.shape[0] != st.shape[0]:
            raise GridError("net_demand and line_status record counts differ")
        if st.shape[1] != len(self.line_ids):
            raise GridError("line_status width does not match line_ids")
        if st.size and not np.isin(st, (0, 1)).all():
            raise GridError("line statuses must be binary")

    @property
    def n_records(self) -> int:
        return self.net_demand.shape[0]


def screen_perfect_information(
    solution: UCSolution, system: PowerSystem, binding_rtol: float = BINDING_RTOL
) -> ScreeningResult:
    """Keep exactly the lines binding at a full-network optimum."""
    if solution.status != STATUS_OPTIMAL:
        raise GridError("perfect-information screening needs an optimal solution")
    start = time.process_time()
    caps = system.capacities
    binding = np.abs(np.abs(solution.flows) - caps) <= binding_rtol * caps
    removed = frozenset(
        lid for lid, b in zip(system.line_ids, binding) if not b
    )
    return ScreeningResult("PI", removed, time.process_time() - start)


def screen_naive(history: CongestionHistory) -> ScreeningResult:
    """Drop every line that has no congestion anywhere in the history."""
    if history.n_records == 0:
        raise GridError("naive screening needs a non-empty history")
    start = time.process_time()
    never = ~history.line_status.any(axis=0)
    removed = frozenset(
        lid for lid, flag in zip(history.line_ids, never) if flag
    )
    return ScreeningResult("NV", removed, time.process_time() - start)


def _gen_weights(system: PowerSystem, row: np.ndarray) -> np.ndarray:
    """PTDF entry at each generator's bus."""
    return row[system.generator_buses]


def zhai_flow_bounds(
    system: PowerSystem,
    scenario: Scenario,
    line_id: int,
    include_network: bool = False,
    ptdf: PTDFMatrix | None = None,
) -> tuple[float, float]:
    """Extreme flows of one line with the commitment logic relaxed.

    Dispatch may range over [0, rho*pmax] (no binaries, no minimum
    output), nodal demand is fixed to the scenario and the slacks are
    pinned to zero, so total generation equals total demand.  With
    include_network, the other lines' capacity limits are imposed as
    well, which tightens the bounds.
    """
    if ptdf is None:
        ptdf = build_ptdf(system)
    target = system.line_index(line_id)
    d = scenario.demand
    rho = scenario.capacity_factor
    ng = system.n_generators

    row = ptdf.row(target)
    w = _gen_weights(system, row)
    const = -float(row @ d)

    a_eq = np.ones((1, ng))
    b_eq = np.array([d.sum()])
    bounds = list(zip(np.zeros(ng), rho * system.p_max))

    a_ub = b_ub = None
    if include_network:
        rows, rhs = [], []
        for k, line in enumerate(system.lines):
            if k == target:
                continue
            other = ptdf.row(k)
            wk = _gen_weights(system, other)
            off = -float(other @ d)
            rows.append(wk)
            rhs.append(line.capacity - off)
            rows.append(-wk)
            rhs.append(line.capacity + off)
        if rows:
            a_ub = np.array(rows)
            b_ub = np.array(rhs)

    out = []
    for sign in (1.0, -1.0):
        res = linprog(
            sign * w, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
            bounds=bounds, method="highs",
        )
        if res.status == 2:
            raise InfeasibleSubproblemError(
                f"flow-bound LP infeasible for line {line_id}"
            )
        if res.status != 0:
            raise SolveError(f"flow-bound LP failed for line {line_id}: {res.message}")
        out.append(sign * res.fun + const)
    f_min, f_max = out
    return float(f_min), float(f_max)


def screen_zhai(
    system: PowerSystem,
    scenario: Scenario,
    variant: str = ZH,
    ptdf: PTDFMatrix | None = None,
) -> ScreeningResult:
    """Drop lines whose relaxed flow range stays strictly inside capacity.

    Solves two LPs per line for the given scenario.  A bound that lands
    exactly on the capacity keeps the line.
    """
    if variant not in (ZH, ZH_PLUS):
        raise GridError(f"unknown variant {variant!r}, expected 'ZH' or 'ZH+'")
    if ptdf is None:
        ptdf = build_ptdf(system)
    start = time.process_time()
    include = variant == ZH_PLUS
    removed = set()
    for line in system.lines:
        f_min, f_max = zhai_flow_bounds(
            system, scenario, line.id, include_network=include, ptdf=ptdf
        )
        if abs(f_min) < line.capacity and abs(f_max) < line.capacity:
            removed.add(line.id)
    return ScreeningResult(variant, frozenset(removed), time.process_time() - start)


def roald_flow_bounds(
    system: PowerSystem,
    demand_lo: np.ndarray,
    demand_hi: np.ndarray,
    capfac: np.ndarray,
    line_id: int,
    ptdf: PTDFMatrix | None = None,
) -> tuple[float, float]:
    """Extreme flows of one line with nodal demand free inside a box.

    Like the fixed-demand bounds but demand at each bus becomes a
    decision variable in [demand_lo, demand_hi] and the capacity factors
    are pinned to the supplied vector, so one pair of LPs covers every
    operating point in the box.
    """
    if ptdf is None:
        ptdf = build_ptdf(system)
    lo = np.asarray(demand_lo, dtype=float)
    hi = np.asarray(demand_hi, dtype=float)
    rho = np.asarray(capfac, dtype=float)
    if lo.shape != (system.n_buses,) or hi.shape != (system.n_buses,):
        raise GridError("demand bounds must have one entry per bus")
    if np.any(lo > hi):
        raise GridError("demand_lo must be <= demand_hi componentwise")

    target = system.line_index(line_id)
    row = ptdf.row(target)
    w = _gen_weights(system, row)
    ng, nb = system.n_generators, system.n_buses

    # Variables [p, d]; objective row . q = w.p - row.d
    c0 = np.concatenate([w, -row])
    a_eq = np.concatenate([np.ones(ng), -np.ones(nb)])[None, :]
    b_eq = np.array([0.0])
    bounds = list(zip(np.zeros(ng), rho * system.p_max)) + list(zip(lo, hi))

    out = []
    for sign in (1.0, -1.0):
        res = linprog(
            sign * c0, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs"
        )
        if res.status == 2:
            raise InfeasibleSubproblemError(
                f"demand-box flow LP infeasible for line {line_id}"
            )
        if res.status != 0:
            raise SolveError(
                f"demand-box flow LP failed for line {line_id}: {res.message}"
            )
        out.append(sign * res.fun)
    f_min, f_max = out
    return float(f_min), float(f_max)


def demand_box(
    scenarios, percentile: float = 100
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bus demand box and per-unit capacity factor from history.

    percentile 100 takes the historical min/max; percentile P takes the
    (100-P, P) pair.  Capacity factors use the upper percentile, per
    unit.
    """
    if not 50 < percentile <= 100:
        raise GridError("percentile must lie in (50, 100]")
    demands = np.array([s.demand for s in scenarios], dtype=float)
    capfacs = np.array([s.capacity_factor for s in scenarios], dtype=float)
    if demands.size == 0:
        raise GridError("demand box needs at least one scenario")
    lo = np.percentile(demands, 100 - percentile, axis=0)
    hi = np.percentile(demands, percentile, axis=0)
    rho = np.percentile(capfacs, percentile, axis=0)
    return lo, hi, rho


def screen_roald(
    system: PowerSystem,
    scenarios,
    percentile: float = 100,
    ptdf: PTDFMatrix | None = None,
) -> ScreeningResult:
    """Drop lines that stay strictly inside capacity over a demand box.

    The box comes from per-bus percentiles of the historical demand;
    2 * N_L LPs cover the whole horizon, so the result is reusable for
    every upcoming period the box covers.
    """
    if ptdf is None:
        ptdf = build_ptdf(system)
    start = time.process_time()
    lo, hi, rho = demand_box(scenarios, percentile)
    removed = set()
    for line in system.lines:
        f_min, f_max = roald_flow_bounds(system, lo, hi, rho, line.id, ptdf=ptdf)
        if abs(f_min) < line.capacity and abs(f_max) < line.capacity:
            removed.add(line.id)
    tag = f"RO{int(percentile)}" if float(percentile).is_integer() else f"RO{percentile}"
    return ScreeningResult(tag, frozenset(removed), time.process_time() - start)


def knn_neighbors(
    history: CongestionHistory,
    query_net_demand: np.ndarray,
    k: int,
    weights: np.ndarray | None = None,
    elementwise: bool = False,
) -> np.ndarray:
    """Indices of the k records closest to the query net demand.

    The default distance is |w . (d_t - d_q)| with w the supplied weight
    vector (a PTDF row), collapsing the difference onto the target
    line's flow axis; elementwise=True switches to the weighted
    Euclidean norm ||w * (d_t - d_q)||_2.  weights=None means uniform.
    Ties go to the earlier record.
    """
    if not 1 <= k <= history.n_records:
        raise GridError(
            f"k must lie in [1, {history.n_records}], got {k}"
        )
    query = np.asarray(query_net_demand, dtype=float)
    delta = history.net_demand - query[None, :]
    if weights is None:
        weights = np.ones(query.shape[0])
    w = np.asarray(weights, dtype=float)
    if elementwise:
        dist = np.linalg.norm(delta * w[None, :], axis=1)
    else:
        dist = np.abs(delta @ w)
    order = np.argsort(dist, kind="stable")
    return order[:k]


def screen_knn(
    system: PowerSystem,
    ptdf: PTDFMatrix,
    history: CongestionHistory,
    scenario: Scenario,
    k: int,
    weighted: bool = True,
    elementwise: bool = False,
) -> ScreeningResult:
    """Drop a line when none of its k nearest records saw it congested.

    Each line votes over its own neighbor set, found with that line's
    PTDF row as the distance weights (weighted=False shares one uniform
    neighbor set across lines, useful when a single bus carries all the
    variation).
    """
    if history.line_ids != system.line_ids:
        raise GridError("history line ids do not match the system")
    start = time.process_time()
    query = net_demand(scenario, system)
    removed = set()
    if not weighted:
        idx = knn_neighbors(history, query, k, weights=None, elementwise=elementwise)
        quiet = ~history.line_status[idx].any(axis=0)
        removed = {lid for lid, flag in zip(system.line_ids, quiet) if flag}
    else:
        for pos, lid in enumerate(system.line_ids):
            idx = knn_neighbors(
                history, query, k, weights=ptdf.row(pos), elementwise=elementwise
            )
            if not history.line_status[idx, pos].any():
                removed.add(lid)
    return ScreeningResult(f"DD{k}", frozenset(removed), time.process_time() - start)


def solve_with_constraint_generation(
    system: PowerSystem,
    scenario: Scenario,
    initial_removed,
    slack_penalty: float | None = None,
    mip_gap: float | None = None,
    max_iter: int = CG_MAX_ITER,
    ptdf: PTDFMatrix | None = None,
    add_all_violated: bool = False,
) -> tuple[UCSolution, frozenset[int], int]:
    """Solve TC-UC, re-adding violated line limits until none remain.

    Starts from the complement of initial_removed, checks flows on ALL
    lines after each solve and brings back the worst offender (relative
    violation) until the solution respects every limit, so the final
    answer matches the full problem's optimum whatever the initial set.
    add_all_violated restores every violated line per round instead.

    Returns (solution, final removed set, solve count).
    """
    if max_iter < 1:
        raise GridError("max_iter must be >= 1")
    if ptdf is None:
        ptdf = build_ptdf(system)
    caps = system.capacities
    removed = set(initial_removed)
    unknown = removed - set(system.line_ids)
    if unknown:
        raise GridError(f"initial_removed contains unknown ids {sorted(unknown)}")

    solution = None
    for iteration in range(1, max_iter + 1):
        monitored = frozenset(system.line_ids) - removed
        instance = build_tcuc(
            system, scenario, monitored, slack_penalty=slack_penalty,
            mip_gap=mip_gap,
        )
        solution = solve_tcuc(instance, ptdf=ptdf)
        if solution.status != STATUS_OPTIMAL:
            raise SolveError("constraint generation hit an unsolvable iterate")
        rel_violation = (np.abs(solution.flows) - caps) / caps
        violated = np.flatnonzero(rel_violation > CG_VIOLATION_RTOL)
        violated = [v for v in violated if system.line_ids[v] in removed]
        if not violated:
            return solution, frozenset(removed), iteration
        if add_all_violated:
            for v in violated:
                removed.discard(system.line_ids[v])
        else:
            worst = max(violated, key=lambda v: rel_violation[v])
            removed.discard(system.line_ids[worst])

    raise IterationLimitError(
        f"constraint generation did not converge in {max_iter} iterations",
        last_solution=solution,
        removed_lines=frozenset(removed),
        iterations=max_iter,
    )

"""Single-period transmission-constrained unit commitment (TC-UC).

The MILP commits and dispatches generators to cover nodal demand at
minimum cost, with DC line-flow limits on a configurable subset of
monitored lines and signed nodal slack variables penalized at a large
rate so they stay at zero whenever the system is capacity-adequate.

Besides the MILP solve this module provides the fix-and-resolve LP used
to price a given commitment against the full network, and an exhaustive
commitment enumeration that serves as an independent optimality oracle
for small systems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .netmodel import (
    GridError,
    PowerSystem,
    PTDFMatrix,
    Scenario,
    build_ptdf,
    validate_scenario,
)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"

# Relative tolerance deciding that a monitored flow sits at its capacity.
BINDING_RTOL = 1e-4

# Default mip gaps by system size; exact optima are affordable up to a
# few hundred buses, beyond that a 1% gap keeps solve times reasonable.
GAP_SMALL = 0.0
GAP_LARGE = 0.01
GAP_SIZE_THRESHOLD = 200

BRUTE_FORCE_MAX_GENERATORS = 15


class SolveError(RuntimeError):
    """The MILP/LP solver failed or returned an unusable status."""


def default_slack_penalty(system: PowerSystem) -> float:
    """Penalty rate that dominates any possible dispatch saving."""
    costs = system.costs
    top = float(costs.max()) if costs.size else 1.0
    return 1000.0 * max(top, 1.0)


def default_mip_gap(system: PowerSystem) -> float:
    return GAP_SMALL if system.n_buses <= GAP_SIZE_THRESHOLD else GAP_LARGE


@dataclass(frozen=True)
class UCInstance:
    """One TC-UC problem: system + scenario + the monitored line set.

    monitored_lines holds line ids whose flow limits are kept; the
    complement is the removed set produced by a screening method.
    """

    system: PowerSystem
    scenario: Scenario
    monitored_lines: frozenset[int]
    slack_penalty: float
    mip_gap: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "monitored_lines", frozenset(self.monitored_lines)
        )
        validate_scenario(self.system, self.scenario)
        unknown = self.monitored_lines - set(self.system.line_ids)
        if unknown:
            raise GridError(f"monitored_lines contains unknown ids {sorted(unknown)}")
        costs = self.system.costs
        if costs.size and self.slack_penalty <= costs.max():
            raise GridError("slack_penalty must exceed the largest generator cost")
        if not 0 <= self.mip_gap < 1:
            raise GridError("mip_gap must lie in [0, 1)")

    @property
    def removed_lines(self) -> frozenset[int]:
        return frozenset(self.system.line_ids) - self.monitored_lines

    # Constraint census, matching the algebraic formulation one-to-one.
    @property
    def n_binaries(self) -> int:
        return self.system.n_generators

    @property
    def n_nodal_balance(self) -> int:
        return self.system.n_buses

    @property
    def n_system_balance(self) -> int:
        return 1

    @property
    def n_generator_bounds(self) -> int:
        """Per-generator double bounds linking dispatch to commitment."""
        return self.system.n_generators

    @property
    def n_flow_bounds(self) -> int:
        """Double-sided flow limits, one per monitored line."""
        return len(self.monitored_lines)


def build_tcuc(
    system: PowerSystem,
    scenario: Scenario,
    monitored_lines=None,
    slack_penalty: float | None = None,
    mip_gap: float | None = None,
) -> UCInstance:
    """Assemble a TC-UC instance; None monitors every line."""
    if monitored_lines is None:
        monitored_lines = system.line_ids
    if slack_penalty is None:
        slack_penalty = default_slack_penalty(system)
    if mip_gap is None:
        mip_gap = default_mip_gap(system)
    return UCInstance(
        system=system,
        scenario=scenario,
        monitored_lines=frozenset(monitored_lines),
        slack_penalty=slack_penalty,
        mip_gap=mip_gap,
    )


@dataclass(frozen=True)
class UCSolution:
    """Commitments, dispatches, injections, slacks and full-network flows.

    flows are evaluated over ALL lines regardless of which were
    monitored, so screening mistakes show up here.  cost is the pure
    production cost; objective adds the slack penalty term.
    """

    commitment: np.ndarray
    dispatch: np.ndarray
    injections: np.ndarray
    slack: np.ndarray
    flows: np.ndarray
    cost: float
    objective: float
    status: str

    @property
    def committed_ids(self) -> tuple[int, ...]:
        """Generator positions (0-based) that are on."""
        return tuple(int(i) for i in np.flatnonzero(self.commitment == 1))

    def total_slack(self) -> float:
        return float(np.sum(np.abs(self.slack)))


def _variable_layout(system: PowerSystem):
    ng, nb = system.n_generators, system.n_buses
    p = slice(0, ng)
    u = slice(ng, 2 * ng)
    q = slice(2 * ng, 2 * ng + nb)
    ep = slice(2 * ng + nb, 2 * ng + 2 * nb)
    em = slice(2 * ng + 2 * nb, 2 * ng + 3 * nb)
    return 2 * ng + 3 * nb, p, u, q, ep, em


def _build_matrices(instance: UCInstance, ptdf: PTDFMatrix):
    """Constraint blocks shared by the MILP and the fixed-commitment LP."""
    system = instance.system
    ng, nb = system.n_generators, system.n_buses
    nv, sp, su, sq, sep, sem = _variable_layout(system)
    d = instance.scenario.demand
    rho = instance.scenario.capacity_factor
    gen_bus = system.generator_buses

    rows, cols, vals = [], [], []
    lower, upper = [], []
    r = 0

    # Nodal balance: q_n + ep_n - em_n - sum_{g at n} p_g = -d_n
    for n in range(nb):
        for g in np.flatnonzero(gen_bus == n):
            rows.append(r), cols.append(sp.start + int(g)), vals.append(-1.0)
        rows += [r, r, r]
        cols += [sq.start + n, sep.start + n, sem.start + n]
        vals += [1.0, 1.0, -1.0]
        lower.append(-d[n])
        upper.append(-d[n])
        r += 1

    # System balance: sum_n q_n = 0
    for n in range(nb):
        rows.append(r), cols.append(sq.start + n), vals.append(1.0)
    lower.append(0.0)
    upper.append(0.0)
    r += 1

    # Commitment-linked dispatch limits:
    #   p_g - pmin_g u_g >= 0   and   p_g - rho_g pmax_g u_g <= 0
    for g in range(ng):
        rows += [r, r]
        cols += [sp.start + g, su.start + g]
        vals += [1.0, -system.p_min[g]]
        lower.append(0.0)
        upper.append(np.inf)
        r += 1
        rows += [r, r]
        cols += [sp.start + g, su.start + g]
        vals += [1.0, -rho[g] * system.p_max[g]]
        lower.append(-np.inf)
        upper.append(0.0)
        r += 1

    # Monitored line flows: -cap <= ptdf_row . q <= cap
    for line in system.lines:
        if line.id not in instance.monitored_lines:
            continue
        row = ptdf.row(system.line_index(line.id))
        for n in range(nb):
            if row[n] != 0.0:
                rows.append(r), cols.append(sq.start + n), vals.append(row[n])
        lower.append(-line.capacity)
        upper.append(line.capacity)
        r += 1

    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nv))
    return LinearConstraint(mat, np.array(lower), np.array(upper))


def _objective(instance: UCInstance) -> np.ndarray:
    system = instance.system
    nv, sp, _, _, sep, sem = _variable_layout(system)
    c = np.zeros(nv)
    c[sp] = system.costs
    c[sep] = instance.slack_penalty
    c[sem] = instance.slack_penalty
    return c


def _bounds(instance: UCInstance, fixed_commitment=None) -> Bounds:
    system = instance.system
    nv, sp, su, sq, sep, sem = _variable_layout(system)
    rho = instance.scenario.capacity_factor
    lo = np.full(nv, -np.inf)
    hi = np.full(nv, np.inf)
    lo[sp] = 0.0
    hi[sp] = rho * system.p_max
    if fixed_commitment is None:
        lo[su], hi[su] = 0.0, 1.0
    else:
        u = np.asarray(fixed_commitment, dtype=float)
        lo[su], hi[su] = u, u
    lo[sep] = 0.0
    lo[sem] = 0.0
    return Bounds(lo, hi)


def _extract_solution(
    instance: UCInstance, ptdf: PTDFMatrix, x: np.ndarray
) -> UCSolution:
    system = instance.system
    _, sp, su, sq, sep, sem = _variable_layout(system)
    u = np.rint(x[su]).astype(int)
    p = x[sp]
    q = x[sq]
    eps = x[sep] - x[sem]
    flows = ptdf.entries @ q
    cost = float(system.costs @ p)
    objective = cost + instance.slack_penalty * float(np.sum(np.abs(eps)))
    return UCSolution(
        commitment=u,
        dispatch=p,
        injections=q,
        slack=eps,
        flows=flows,
        cost=cost,
        objective=objective,
        status=STATUS_OPTIMAL,
    )


def verify_solution(instance: UCInstance, solution: UCSolution) -> None:
    """Primal feasibility re-check outside the solver.

    Raises SolveError on any violated invariant: commitment-linked
    dispatch bounds, nodal and system balance, and monitored flow limits
    at 1e-6 relative tolerance.
    """
    system = instance.system
    rho = instance.scenario.capacity_factor
    d = instance.scenario.demand
    p, u = solution.dispatch, solution.commitment
    atol = 1e-5

    lo = u * system.p_min
    hi = u * rho * system.p_max
    if np.any(p < lo - atol) or np.any(p > hi + atol):
        raise SolveError("dispatch violates commitment-linked bounds")
    if abs(np.sum(solution.injections)) > atol:
        raise SolveError("injections do not sum to zero")
    gen_at = np.zeros(system.n_buses)
    np.add.at(gen_at, system.generator_buses, p)
    residual = solution.injections + solution.slack - (gen_at - d)
    if np.max(np.abs(residual)) > atol:
        raise SolveError("nodal balance violated")
    for line in system.lines:
        if line.id not in instance.monitored_lines:
            continue
        f = solution.flows[system.line_index(line.id)]
        if abs(f) > line.capacity * (1 + 1e-6) + atol:
            raise SolveError(f"monitored line {line.id} exceeds its capacity")


def solve_tcuc(instance: UCInstance, ptdf: PTDFMatrix | None = None) -> UCSolution:
    """Solve the TC-UC MILP to within the instance's mip gap."""
    if ptdf is None:
        ptdf = build_ptdf(instance.system)
    system = instance.system
    constraints = _build_matrices(instance, ptdf)
    nv, _, su, *_ = _variable_layout(system)
    integrality = np.zeros(nv)
    integrality[su] = 1
    res = milp(
        _objective(instance),
        constraints=constraints,
        integrality=integrality,
        bounds=_bounds(instance),
        options={"mip_rel_gap": instance.mip_gap},
    )
    if res.status == 2:
        return _infeasible_solution(system)
    if res.status != 0 or res.x is None:
        raise SolveError(f"MILP solver failed: {res.message}")
    solution = _extract_solution(instance, ptdf, res.x)
    verify_solution(instance, solution)
    return solution


def _infeasible_solution(system: PowerSystem) -> UCSolution:
    nan_b = np.full(system.n_buses, np.nan)
    return UCSolution(
        commitment=np.zeros(system.n_generators, dtype=int),
        dispatch=np.full(system.n_generators, np.nan),
        injections=nan_b,
        slack=nan_b,
        flows=np.full(system.n_lines, np.nan),
        cost=np.nan,
        objective=np.nan,
        status=STATUS_INFEASIBLE,
    )


def fix_and_resolve(
    commitment,
    system: PowerSystem,
    scenario: Scenario,
    slack_penalty: float | None = None,
    ptdf: PTDFMatrix | None = None,
) -> UCSolution:
    """Re-dispatch a fixed commitment against the FULL network.

    All line limits are enforced; the slacks keep the LP feasible, and
    their magnitude is the commitment's infeasibility against the real
    network.
    """
    if slack_penalty is None:
        slack_penalty = default_slack_penalty(system)
    if ptdf is None:
        ptdf = build_ptdf(system)
    u = np.rint(np.asarray(commitment, dtype=float)).astype(int)
    if u.shape != (system.n_generators,):
        raise GridError("commitment length does not match the generator count")
    instance = UCInstance(
        system=system,
        scenario=scenario,
        monitored_lines=frozenset(system.line_ids),
        slack_penalty=slack_penalty,
        mip_gap=0.0,
    )
    constraints = _build_matrices(instance, ptdf)
    return _solve_lp(instance, ptdf, constraints, u)


def _solve_lp(instance, ptdf, constraints, u) -> UCSolution:
    # Reuses the milp entry point with zero integrality and commitment
    # pinned through the bounds, which keeps a single matrix builder for
    # the MILP and every fixed-commitment LP.
    nv, *_ = _variable_layout(instance.system)
    res = milp(
        _objective(instance),
        constraints=constraints,
        integrality=np.zeros(nv),
        bounds=_bounds(instance, fixed_commitment=u),
    )
    if res.status == 2:
        return _infeasible_solution(instance.system)
    if res.status != 0 or res.x is None:
        raise SolveError(f"LP solver failed: {res.message}")
    solution = _extract_solution(instance, ptdf, res.x)
    # The extractor reads the commitment off the solution vector, which
    # carries the fixed u exactly.
    verify_solution(instance, solution)
    return solution


def brute_force_solve(
    system: PowerSystem,
    scenario: Scenario,
    monitored_lines=None,
    slack_penalty: float | None = None,
    ptdf: PTDFMatrix | None = None,
) -> UCSolution:
    """Exhaustively enumerate commitments; independent optimality oracle.

    Every commitment vector is priced by the fix-and-resolve LP
    restricted to the monitored lines; ties within 1e-9 relative go to
    the lexicographically smallest commitment vector.  Guarded to at
    most 15 generators.
    """
    ng = system.n_generators
    if ng > BRUTE_FORCE_MAX_GENERATORS:
        raise GridError(
            f"brute force limited to {BRUTE_FORCE_MAX_GENERATORS} generators, got {ng}"
        )
    if slack_penalty is None:
        slack_penalty = default_slack_penalty(system)
    if ptdf is None:
        ptdf = build_ptdf(system)
    if monitored_lines is None:
        monitored_lines = system.line_ids
    instance = UCInstance(
        system=system,
        scenario=scenario,
        monitored_lines=frozenset(monitored_lines),
        slack_penalty=slack_penalty,
        mip_gap=0.0,
    )
    constraints = _build_matrices(instance, ptdf)

    best: UCSolution | None = None
    for u in itertools.product((0, 1), repeat=ng):
        candidate = _solve_lp(instance, ptdf, constraints, np.array(u))
        if candidate.status != STATUS_OPTIMAL:
            continue
        if best is None or candidate.objective < best.objective - 1e-9 * (
            1 + abs(best.objective)
        ):
            best = candidate
    if best is None:
        raise SolveError("no feasible commitment found")
    return best


def write_lp_text(instance: UCInstance, ptdf: PTDFMatrix | None = None) -> str:
    """Human-readable LP-style dump of an instance, for debugging.

    The format is documented in the README and is not bit-stable across
    versions.
    """
    if ptdf is None:
        ptdf = build_ptdf(instance.system)
    system = instance.system
    d = instance.scenario.demand
    rho = instance.scenario.capacity_factor
    out = []
    out.append("minimize")
    terms = [f"{g.cost:g} p{g.id}" for g in system.generators if g.cost]
    terms += [
        f"{instance.slack_penalty:g} (ep{b.id} + em{b.id})" for b in system.buses
    ]
    out.append("  " + " + ".join(terms))
    out.append("subject to")
    for b in system.buses:
        n = system.bus_index(b.id)
        gens = " + ".join(
            f"p{g.id}" for g in system.generators if system.bus_index(g.bus) == n
        )
        gens = gens or "0"
        out.append(f"  balance_b{b.id}: q{b.id} + ep{b.id} - em{b.id} = {gens} - {d[n]:g}")
    out.append("  system: " + " + ".join(f"q{b.id}" for b in system.buses) + " = 0")
    for g, gen in enumerate(system.generators):
        out.append(
            f"  gen_g{gen.id}: {gen.p_min:g} u{gen.id} <= p{gen.id} "
            f"<= {rho[g] * gen.p_max:g} u{gen.id}"
        )
    for line in system.lines:
        if line.id not in instance.monitored_lines:
            continue
        row = ptdf.row(system.line_index(line.id))
        expr = " + ".join(
            f"{row[n]:.6g} q{b.id}"
            for n, b in enumerate(system.buses)
            if abs(row[n]) > 1e-12
        )
        out.append(f"  flow_l{line.id}: -{line.capacity:g} <= {expr} <= {line.capacity:g}")
    out.append("binary " + " ".join(f"u{g.id}" for g in system.generators))
    out.append("ep, em >= 0")
    return "\n".join(out) + "\n"

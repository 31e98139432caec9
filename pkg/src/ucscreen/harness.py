"""End-to-end comparison pipeline: history, screening, metrics.

The protocol, per test period: run the method's screening, solve the
reduced commitment problem, then freeze the commitment and re-dispatch
against the full network.  Aggregated over the horizon this yields, per
method: the share of removed constraints (R), the production-cost error
against the benchmark (dC), the relative infeasibility against total
demand (I), screening and solve CPU times (T1, T2) and the total time
relative to the benchmark solve time (tau).

Times entering tau are process CPU times; wall-clock is recorded
alongside but never used in the metric.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .netmodel import (
    GridError,
    PowerSystem,
    PTDFMatrix,
    Scenario,
    build_ptdf,
    net_demand,
)
from .screening import (
    CongestionHistory,
    ScreeningResult,
    screen_knn,
    screen_naive,
    screen_perfect_information,
    screen_roald,
    screen_zhai,
    solve_with_constraint_generation,
)
from .ucopt import (
    STATUS_OPTIMAL,
    UCSolution,
    build_tcuc,
    default_mip_gap,
    default_slack_penalty,
    fix_and_resolve,
    solve_tcuc,
)

DEFAULT_CONGESTION_RTOL = 1e-4


@dataclass(frozen=True)
class MethodSpec:
    """Parsed method tag: family plus its parameters."""

    tag: str
    kind: str
    k: int | None = None
    percentile: float | None = None
    with_cg: bool = False


_METHOD_RE = re.compile(
    r"^(?:(BN|SB|PI|NV|CG|ZH\+|ZH)|RO(\d{2,3})?|DD(\d+)(\+CG)?)$"
)


def parse_method(tag: str) -> MethodSpec:
    """Parse tags like BN, SB, ZH+, RO95, DD50 or DD50+CG."""
    m = _METHOD_RE.match(tag.strip())
    if not m:
        raise GridError(f"unknown method tag {tag!r}")
    simple, ro_pct, dd_k, dd_cg = m.groups()
    if simple:
        return MethodSpec(tag=simple, kind=simple)
    if dd_k is not None:
        k = int(dd_k)
        if k < 1:
            raise GridError("DD needs k >= 1")
        return MethodSpec(tag=tag.strip(), kind="DD", k=k, with_cg=bool(dd_cg))
    pct = float(ro_pct) if ro_pct else 100.0
    if not 50 < pct <= 100:
        raise GridError("RO percentile must lie in (50, 100]")
    return MethodSpec(tag=f"RO{int(pct)}", kind="RO", percentile=pct)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a comparison run needs beyond the grid itself."""

    methods: tuple[str, ...] = ("BN",)
    train_size: int = 1
    test_size: int = 1
    scenario_count: int | None = None
    seed: int | None = None
    slack_penalty: float | None = None
    mip_gap: float | None = None
    congestion_tol: float = DEFAULT_CONGESTION_RTOL
    cg_max_iter: int = 50
    knn_ptdf_weights: bool = True
    knn_elementwise: bool = False
    ref_bus: int | None = None
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        for tag in self.methods:
            parse_method(tag)
        if self.train_size < 1 or self.test_size < 1:
            raise GridError("train_size and test_size must be >= 1")
        if self.jobs < 1:
            raise GridError("jobs must be >= 1")


@dataclass(frozen=True)
class PeriodResult:
    """Per-period outcome of one method; reports aggregate over these."""

    method: str
    period: int
    removed_lines: tuple[int, ...]
    commitment: tuple[int, ...]
    cost: float
    slack_abs: float
    total_demand: float
    t1_seconds: float
    t2_seconds: float
    iterations: int
    status: str
    objective: float


@dataclass(frozen=True)
class MethodReport:
    """Aggregated comparison metrics for one method over the test set."""

    method: str
    removal_pct: float
    cost_error_pct: float
    infeasibility_pct: float
    t1_seconds: float
    t2_seconds: float
    rel_time_pct: float
    total_cost: float
    wall_seconds: float


@dataclass(frozen=True)
class MethodEvaluation:
    report: MethodReport
    periods: tuple[PeriodResult, ...]
    solutions: tuple[UCSolution, ...]


@dataclass(frozen=True)
class ComparisonReport:
    reports: tuple[MethodReport, ...]
    periods: tuple[PeriodResult, ...]
    failures: dict[str, str]
    t2_baseline_seconds: float
    n_lines: int
    train_size: int
    test_size: int


def generate_scenarios(
    system: PowerSystem, count: int, seed: int | None = None
) -> list[Scenario]:
    """Uniform synthetic operating periods, reproducible per seed.

    Nodal demand is drawn independently per bus and period from
    U(0, 2 * nominal); renewable capacity factors from U(0, 1).
    """
    if count < 1:
        raise GridError("scenario count must be >= 1")
    rng = np.random.default_rng(seed)
    nominal = system.nominal_demand
    renewable = system.renewable_mask
    out = []
    for _ in range(count):
        demand = rng.uniform(0.0, 2.0 * nominal)
        rho = np.ones(system.n_generators)
        if renewable.any():
            rho[renewable] = rng.uniform(0.0, 1.0, size=int(renewable.sum()))
        out.append(Scenario(demand=demand, capacity_factor=rho))
    return out


# ---------------------------------------------------------------------------
# History construction

_CTX: dict = {}


def _init_worker(payload: dict) -> None:
    _CTX.clear()
    _CTX.update(payload)


def _map_indexed(task, payload: dict, count: int, jobs: int) -> list:
    if jobs <= 1:
        _init_worker(payload)
        return [task(i) for i in range(count)]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(payload,)
    ) as ex:
        return list(ex.map(task, range(count)))


def _history_task(idx: int):
    system = _CTX["system"]
    scenario = _CTX["scenarios"][idx]
    instance = build_tcuc(
        system,
        scenario,
        slack_penalty=_CTX["slack_penalty"],
        mip_gap=_CTX["mip_gap"],
    )
    solution = solve_tcuc(instance, ptdf=_CTX["ptdf"])
    caps = system.capacities
    status = (
        np.abs(solution.flows) >= caps * (1.0 - _CTX["congestion_tol"])
    ).astype(int)
    return net_demand(scenario, system), status, solution.status


def build_history(
    system: PowerSystem,
    scenarios,
    slack_penalty: float | None = None,
    mip_gap: float | None = None,
    congestion_tol: float = DEFAULT_CONGESTION_RTOL,
    ptdf: PTDFMatrix | None = None,
    jobs: int = 1,
) -> CongestionHistory:
    """Solve the full problem per period and record congestion statuses.

    A line counts as congested when its flow magnitude reaches
    capacity * (1 - congestion_tol).  Net demand is stored alongside;
    per-period solver statuses are kept on the history.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise GridError("cannot build a history from an empty scenario list")
    if ptdf is None:
        ptdf = build_ptdf(system)
    payload = dict(
        system=system,
        scenarios=scenarios,
        slack_penalty=slack_penalty,
        mip_gap=mip_gap,
        congestion_tol=congestion_tol,
        ptdf=ptdf,
    )
    rows = _map_indexed(_history_task, payload, len(scenarios), jobs)
    return CongestionHistory(
        net_demand=np.array([r[0] for r in rows]),
        line_status=np.array([r[1] for r in rows]),
        line_ids=system.line_ids,
        solve_status=tuple(r[2] for r in rows),
    )


# ---------------------------------------------------------------------------
# Per-method evaluation


def _screen_for_period(spec: MethodSpec, idx: int) -> tuple[frozenset[int], float]:
    """Removal set and screening CPU time for one test period."""
    system: PowerSystem = _CTX["system"]
    if spec.kind == "BN":
        return frozenset(), 0.0
    if spec.kind == "SB":
        return frozenset(system.line_ids), 0.0
    if spec.kind == "NV" or spec.kind == "RO":
        return _CTX["static_removed"], 0.0
    if spec.kind == "PI":
        start = time.process_time()
        result = screen_perfect_information(_CTX["baseline_solutions"][idx], system)
        return result.removed_lines, time.process_time() - start
    scenario: Scenario = _CTX["test_scenarios"][idx]
    if spec.kind in ("ZH", "ZH+"):
        result = screen_zhai(system, scenario, variant=spec.kind, ptdf=_CTX["ptdf"])
        return result.removed_lines, result.preprocess_seconds
    if spec.kind == "DD":
        result = screen_knn(
            system,
            _CTX["ptdf"],
            _CTX["history"],
            scenario,
            spec.k,
            weighted=_CTX["knn_ptdf_weights"],
            elementwise=_CTX["knn_elementwise"],
        )
        return result.removed_lines, result.preprocess_seconds
    if spec.kind == "CG":
        return frozenset(system.line_ids), 0.0
    raise GridError(f"unhandled method kind {spec.kind}")


def _eval_task(idx: int):
    spec: MethodSpec = _CTX["spec"]
    system: PowerSystem = _CTX["system"]
    scenario: Scenario = _CTX["test_scenarios"][idx]
    ptdf: PTDFMatrix = _CTX["ptdf"]

    removed, t1 = _screen_for_period(spec, idx)

    iterations = 1
    if spec.kind == "CG" or (spec.kind == "DD" and spec.with_cg):
        start = time.process_time()
        solution, removed, iterations = solve_with_constraint_generation(
            system,
            scenario,
            removed,
            slack_penalty=_CTX["slack_penalty"],
            mip_gap=_CTX["mip_gap"],
            max_iter=_CTX["cg_max_iter"],
            ptdf=ptdf,
        )
        t2 = time.process_time() - start
    else:
        monitored = frozenset(system.line_ids) - removed
        instance = build_tcuc(
            system,
            scenario,
            monitored,
            slack_penalty=_CTX["slack_penalty"],
            mip_gap=_CTX["mip_gap"],
        )
        start = time.process_time()
        solution = solve_tcuc(instance, ptdf=ptdf)
        t2 = time.process_time() - start

    fixed = fix_and_resolve(
        solution.commitment,
        system,
        scenario,
        slack_penalty=_CTX["slack_penalty"],
        ptdf=ptdf,
    )
    detail = PeriodResult(
        method=spec.tag,
        period=idx,
        removed_lines=tuple(sorted(removed)),
        commitment=tuple(int(u) for u in solution.commitment),
        cost=fixed.cost,
        slack_abs=fixed.total_slack(),
        total_demand=float(scenario.demand.sum()),
        t1_seconds=t1,
        t2_seconds=t2,
        iterations=iterations,
        status=solution.status,
        objective=fixed.objective,
    )
    return detail, fixed


def evaluate_method(
    tag: str,
    system: PowerSystem,
    ptdf: PTDFMatrix,
    history: CongestionHistory,
    train_scenarios,
    test_scenarios,
    config: ExperimentConfig,
    baseline: MethodEvaluation | None = None,
) -> MethodEvaluation:
    """Run one method over the test horizon and aggregate its metrics.

    Every method except BN itself needs the BN baseline (same test set)
    for dC and tau; PI additionally reads the baseline's per-period
    flows.
    """
    spec = parse_method(tag)
    if spec.kind != "BN" and baseline is None:
        raise GridError(f"method {tag} needs the BN baseline evaluation")

    test_scenarios = list(test_scenarios)
    wall_start = time.perf_counter()

    # Horizon-level screening, timed once.
    static_removed: frozenset[int] = frozenset()
    t1_static = 0.0
    if spec.kind == "NV":
        result = screen_naive(history)
        static_removed, t1_static = result.removed_lines, result.preprocess_seconds
    elif spec.kind == "RO":
        result = screen_roald(system, train_scenarios, spec.percentile, ptdf=ptdf)
        static_removed, t1_static = result.removed_lines, result.preprocess_seconds

    payload = dict(
        spec=spec,
        system=system,
        ptdf=ptdf,
        history=history,
        test_scenarios=test_scenarios,
        static_removed=static_removed,
        baseline_solutions=tuple(baseline.solutions) if baseline else (),
        slack_penalty=config.slack_penalty,
        mip_gap=config.mip_gap,
        cg_max_iter=config.cg_max_iter,
        knn_ptdf_weights=config.knn_ptdf_weights,
        knn_elementwise=config.knn_elementwise,
    )
    rows = _map_indexed(_eval_task, payload, len(test_scenarios), config.jobs)
    periods = tuple(r[0] for r in rows)
    solutions = tuple(r[1] for r in rows)

    n_lines = system.n_lines
    removal_pct = float(
        np.mean([100.0 * len(p.removed_lines) / n_lines for p in periods])
    )
    total_cost = float(sum(p.cost for p in periods))
    total_slack = float(sum(p.slack_abs for p in periods))
    total_demand = float(sum(p.total_demand for p in periods))
    t1 = t1_static + float(sum(p.t1_seconds for p in periods))
    t2 = float(sum(p.t2_seconds for p in periods))
    wall = time.perf_counter() - wall_start

    if spec.kind == "BN":
        cost_error = 0.0
        rel_time = 100.0
        t1 = 0.0
    else:
        base_cost = baseline.report.total_cost
        base_t2 = baseline.report.t2_seconds
        cost_error = 100.0 * (total_cost - base_cost) / base_cost if base_cost else 0.0
        rel_time = 100.0 * (t1 + t2) / base_t2 if base_t2 > 0 else float("inf")

    infeasibility = 100.0 * total_slack / total_demand if total_demand else 0.0
    report = MethodReport(
        method=spec.tag,
        removal_pct=removal_pct,
        cost_error_pct=cost_error,
        infeasibility_pct=infeasibility,
        t1_seconds=t1,
        t2_seconds=t2,
        rel_time_pct=rel_time,
        total_cost=total_cost,
        wall_seconds=wall,
    )
    return MethodEvaluation(report=report, periods=periods, solutions=solutions)


def split_scenarios(scenarios, train_size: int, test_size: int):
    """First train_size periods for training, last test_size for testing."""
    scenarios = list(scenarios)
    if train_size + test_size > len(scenarios):
        raise GridError(
            f"train ({train_size}) + test ({test_size}) exceeds the "
            f"{len(scenarios)} available scenarios"
        )
    return scenarios[:train_size], scenarios[len(scenarios) - test_size :]


def compare(
    system: PowerSystem,
    config: ExperimentConfig,
    scenarios=None,
) -> ComparisonReport:
    """Full pipeline: history from the training split, metrics per method.

    Methods are isolated: one failure becomes an entry in
    report.failures without aborting the rest.  The BN baseline always
    runs, whether or not it appears in config.methods.
    """
    if scenarios is None:
        if config.scenario_count is None:
            raise GridError("config needs scenario_count when no scenarios are given")
        scenarios = generate_scenarios(system, config.scenario_count, config.seed)
    train, test = split_scenarios(scenarios, config.train_size, config.test_size)

    ptdf = build_ptdf(system, config.ref_bus)
    history = build_history(
        system,
        train,
        slack_penalty=config.slack_penalty,
        mip_gap=config.mip_gap,
        congestion_tol=config.congestion_tol,
        ptdf=ptdf,
        jobs=config.jobs,
    )

    baseline = evaluate_method(
        "BN", system, ptdf, history, train, test, config, baseline=None
    )

    reports: list[MethodReport] = []
    periods: list[PeriodResult] = []
    failures: dict[str, str] = {}
    for tag in config.methods:
        spec = parse_method(tag)
        if spec.kind == "BN":
            reports.append(baseline.report)
            periods.extend(baseline.periods)
            continue
        try:
            evaluation = evaluate_method(
                tag, system, ptdf, history, train, test, config, baseline=baseline
            )
        except Exception as exc:  # per-method isolation
            failures[tag] = f"{type(exc).__name__}: {exc}"
            continue
        reports.append(evaluation.report)
        periods.extend(evaluation.periods)

    return ComparisonReport(
        reports=tuple(reports),
        periods=tuple(periods),
        failures=failures,
        t2_baseline_seconds=baseline.report.t2_seconds,
        n_lines=system.n_lines,
        train_size=config.train_size,
        test_size=config.test_size,
    )

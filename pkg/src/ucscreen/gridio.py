"""File formats: grid CSV/JSON, scenarios, histories, removal sets, reports.

All JSON is written canonically (sorted keys, two-space indent, native
types) so identical inputs produce byte-identical files.  CSV schemas
use the exact column names documented in the README.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import ComparisonReport, MethodReport, PeriodResult
from .netmodel import Bus, Generator, GridError, Line, PowerSystem, Scenario
from .screening import CongestionHistory, ScreeningResult
from .ucopt import UCSolution

BUS_FIELDS = ["id", "nominal_demand"]
LINE_FIELDS = ["id", "from", "to", "susceptance_pu", "capacity_mw"]
GEN_FIELDS = ["id", "bus", "pmin_mw", "pmax_mw", "cost", "kind"]
SCENARIO_FIELDS = ["period", "bus", "demand_mw", "gen", "capfac"]
REPORT_FIELDS = [
    "method",
    "removal_pct",
    "cost_error_pct",
    "infeasibility_pct",
    "t1_seconds",
    "t2_seconds",
    "rel_time_pct",
]
REPORT_FIELDS_NO_TIMING = [
    "method",
    "removal_pct",
    "cost_error_pct",
    "infeasibility_pct",
]


def _native(obj):
    """Recursively convert numpy scalars/arrays for json.dump."""
    if isinstance(obj, np.ndarray):
        return [_native(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_native(v) for v in obj]
    if isinstance(obj, frozenset):
        return sorted(obj)
    if isinstance(obj, dict):
        return {k: _native(v) for k, v in obj.items()}
    return obj


def dump_json(data, path) -> None:
    text = json.dumps(_native(data), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text)


def load_json(path):
    return json.loads(Path(path).read_text())


def _num(value: str, field: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise GridError(f"bad numeric value {value!r} in column {field}")


# ---------------------------------------------------------------------------
# Grid


def read_system_csv(directory) -> PowerSystem:
    """Read buses.csv, lines.csv and generators.csv from a directory."""
    directory = Path(directory)
    buses = [
        Bus(id=int(row["id"]), nominal_demand=_num(row["nominal_demand"], "nominal_demand"))
        for row in _read_rows(directory / "buses.csv", BUS_FIELDS)
    ]
    lines = [
        Line(
            id=int(row["id"]),
            from_bus=int(row["from"]),
            to_bus=int(row["to"]),
            susceptance=_num(row["susceptance_pu"], "susceptance_pu"),
            capacity=_num(row["capacity_mw"], "capacity_mw"),
        )
        for row in _read_rows(directory / "lines.csv", LINE_FIELDS)
    ]
    gens = [
        Generator(
            id=int(row["id"]),
            bus=int(row["bus"]),
            p_min=_num(row["pmin_mw"], "pmin_mw"),
            p_max=_num(row["pmax_mw"], "pmax_mw"),
            cost=_num(row["cost"], "cost"),
            kind=row["kind"].strip(),
        )
        for row in _read_rows(directory / "generators.csv", GEN_FIELDS)
    ]
    return PowerSystem(buses=tuple(buses), lines=tuple(lines), generators=tuple(gens))


def _read_rows(path: Path, expected: list[str]):
    if not path.exists():
        raise GridError(f"missing input file {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected if c not in header]
        if missing:
            raise GridError(f"{path.name}: missing columns {missing}")
        return list(reader)


def write_system_csv(system: PowerSystem, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "buses.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BUS_FIELDS)
        for b in system.buses:
            w.writerow([b.id, _fmt(b.nominal_demand)])
    with open(directory / "lines.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LINE_FIELDS)
        for l in system.lines:
            w.writerow([l.id, l.from_bus, l.to_bus, _fmt(l.susceptance), _fmt(l.capacity)])
    with open(directory / "generators.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GEN_FIELDS)
        for g in system.generators:
            w.writerow([g.id, g.bus, _fmt(g.p_min), _fmt(g.p_max), _fmt(g.cost), g.kind])


def system_to_dict(system: PowerSystem) -> dict:
    return {
        "buses": [
            {"id": b.id, "nominal_demand": b.nominal_demand} for b in system.buses
        ],
        "lines": [
            {
                "id": l.id,
                "from": l.from_bus,
                "to": l.to_bus,
                "susceptance_pu": l.susceptance,
                "capacity_mw": l.capacity,
            }
            for l in system.lines
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "pmin_mw": g.p_min,
                "pmax_mw": g.p_max,
                "cost": g.cost,
                "kind": g.kind,
            }
            for g in system.generators
        ],
    }


def system_from_dict(data: dict) -> PowerSystem:
    try:
        buses = tuple(
            Bus(id=int(b["id"]), nominal_demand=float(b["nominal_demand"]))
            for b in data["buses"]
        )
        lines = tuple(
            Line(
                id=int(l["id"]),
                from_bus=int(l["from"]),
                to_bus=int(l["to"]),
                susceptance=float(l["susceptance_pu"]),
                capacity=float(l["capacity_mw"]),
            )
            for l in data["lines"]
        )
        gens = tuple(
            Generator(
                id=int(g["id"]),
                bus=int(g["bus"]),
                p_min=float(g["pmin_mw"]),
                p_max=float(g["pmax_mw"]),
                cost=float(g["cost"]),
                kind=str(g["kind"]),
            )
            for g in data["generators"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"malformed system JSON: {exc}") from exc
    return PowerSystem(buses=buses, lines=lines, generators=gens)


def read_system(path) -> PowerSystem:
    """Read a grid from a JSON file or a directory holding the CSV trio."""
    path = Path(path)
    if path.is_dir():
        return read_system_csv(path)
    return system_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# Scenarios


def write_scenarios_csv(system: PowerSystem, scenarios, path) -> None:
    """Long-format CSV: demand rows, then capacity-factor rows per period."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCENARIO_FIELDS)
        for t, sc in enumerate(scenarios):
            for b in system.buses:
                w.writerow([t, b.id, _fmt(sc.demand[system.bus_index(b.id)]), "", ""])
            for g, gen in enumerate(system.generators):
                if gen.kind == "renewable":
                    w.writerow([t, "", "", gen.id, _fmt(sc.capacity_factor[g])])


def read_scenarios_csv(system: PowerSystem, path) -> list[Scenario]:
    rows = _read_rows(Path(path), ["period", "bus", "demand_mw"])
    periods: dict[int, dict] = {}
    gen_pos = {g.id: i for i, g in enumerate(system.generators)}
    for row in rows:
        t = int(row["period"])
        slot = periods.setdefault(
            t,
            {
                "demand": np.zeros(system.n_buses),
                "seen": np.zeros(system.n_buses, dtype=bool),
                "rho": np.ones(system.n_generators),
            },
        )
        if row.get("bus"):
            n = system.bus_index(int(row["bus"]))
            slot["demand"][n] = _num(row["demand_mw"], "demand_mw")
            slot["seen"][n] = True
        elif row.get("gen"):
            g = gen_pos.get(int(row["gen"]))
            if g is None:
                raise GridError(f"scenario row references unknown generator {row['gen']}")
            slot["rho"][g] = _num(row["capfac"], "capfac")
        else:
            raise GridError("scenario row needs either a bus or a gen")
    out = []
    for t in sorted(periods):
        slot = periods[t]
        if not slot["seen"].all():
            raise GridError(f"period {t}: missing demand for some buses")
        out.append(Scenario(demand=slot["demand"], capacity_factor=slot["rho"]))
    return out


def scenarios_to_dict(scenarios) -> dict:
    return {
        "scenarios": [
            {
                "demand": list(s.demand),
                "capacity_factor": list(s.capacity_factor),
            }
            for s in scenarios
        ]
    }


def scenarios_from_dict(data: dict) -> list[Scenario]:
    try:
        return [
            Scenario(
                demand=np.asarray(s["demand"], dtype=float),
                capacity_factor=np.asarray(s["capacity_factor"], dtype=float),
            )
            for s in data["scenarios"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"malformed scenarios JSON: {exc}") from exc


def read_scenarios(system: PowerSystem, path) -> list[Scenario]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_scenarios_csv(system, path)
    return scenarios_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# Histories, removal sets, solutions


def history_to_dict(history: CongestionHistory) -> dict:
    return {
        "line_ids": list(history.line_ids),
        "records": [
            {
                "net_demand": list(history.net_demand[t]),
                "status": [int(s) for s in history.line_status[t]],
            }
            for t in range(history.n_records)
        ],
        "solve_status": list(history.solve_status),
    }


def history_from_dict(data: dict) -> CongestionHistory:
    try:
        records = data["records"]
        return CongestionHistory(
            net_demand=np.array([r["net_demand"] for r in records], dtype=float),
            line_ids=tuple(int(i) for i in data["line_ids"]),
            line_status=np.array([r["status"] for r in records], dtype=int),
            solve_status=tuple(data.get("solve_status", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"malformed history JSON: {exc}") from exc


def removal_to_dict(result: ScreeningResult, include_timing: bool = True) -> dict:
    out = {"method": result.method, "line_ids": sorted(result.removed_lines)}
    if include_timing:
        out["t1_seconds"] = result.preprocess_seconds
    return out


def removal_from_dict(data: dict) -> ScreeningResult:
    try:
        return ScreeningResult(
            method=str(data["method"]),
            removed_lines=frozenset(int(i) for i in data["line_ids"]),
            preprocess_seconds=float(data.get("t1_seconds", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"malformed removal-set JSON: {exc}") from exc


def solution_to_dict(solution: UCSolution) -> dict:
    return {
        "status": solution.status,
        "commitment": [int(u) for u in solution.commitment],
        "dispatch_mw": list(solution.dispatch),
        "injections_mw": list(solution.injections),
        "slack_mw": list(solution.slack),
        "flows_mw": list(solution.flows),
        "cost": solution.cost,
        "objective": solution.objective,
    }


def solution_from_dict(data: dict) -> UCSolution:
    try:
        return UCSolution(
            commitment=np.asarray(data["commitment"], dtype=int),
            dispatch=np.asarray(data["dispatch_mw"], dtype=float),
            injections=np.asarray(data["injections_mw"], dtype=float),
            slack=np.asarray(data["slack_mw"], dtype=float),
            flows=np.asarray(data["flows_mw"], dtype=float),
            cost=float(data["cost"]),
            objective=float(data["objective"]),
            status=str(data["status"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"malformed solution JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Comparison reports


def _report_row(r: MethodReport, include_timing: bool) -> dict:
    row = {
        "method": r.method,
        "removal_pct": r.removal_pct,
        "cost_error_pct": r.cost_error_pct,
        "infeasibility_pct": r.infeasibility_pct,
    }
    if include_timing:
        row.update(
            t1_seconds=r.t1_seconds,
            t2_seconds=r.t2_seconds,
            rel_time_pct=r.rel_time_pct,
        )
    return row


def _period_row(p: PeriodResult, include_timing: bool) -> dict:
    row = {
        "method": p.method,
        "period": p.period,
        "removed_lines": list(p.removed_lines),
        "commitment": list(p.commitment),
        "cost": p.cost,
        "slack_abs_mw": p.slack_abs,
        "total_demand_mw": p.total_demand,
        "iterations": p.iterations,
        "status": p.status,
        "objective": p.objective,
    }
    if include_timing:
        row.update(t1_seconds=p.t1_seconds, t2_seconds=p.t2_seconds)
    return row


def report_to_dict(report: ComparisonReport, include_timing: bool = True) -> dict:
    out = {
        "methods": [_report_row(r, include_timing) for r in report.reports],
        "periods": [_period_row(p, include_timing) for p in report.periods],
        "failures": dict(report.failures),
        "n_lines": report.n_lines,
        "train_size": report.train_size,
        "test_size": report.test_size,
    }
    if include_timing:
        out["t2_baseline_seconds"] = report.t2_baseline_seconds
    return out


def write_report_csv(report: ComparisonReport, path, include_timing: bool = True) -> None:
    """One row per method; columns documented in the README."""
    fields = REPORT_FIELDS if include_timing else REPORT_FIELDS_NO_TIMING
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in report.reports:
            row = _report_row(r, include_timing)
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})


def read_report_csv(path) -> list[dict]:
    return [dict(row) for row in _read_rows(Path(path), ["method", "removal_pct"])]


def _fmt(x: float) -> str:
    """Compact deterministic float formatting for CSV cells."""
    return format(float(x), ".10g")

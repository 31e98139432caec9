"""Grid data model, PTDF construction and DC flow evaluation.

The network is a connected graph of buses and lines with per-unit
susceptances.  Flows are linear in the nodal net injections through a
matrix of power transfer distribution factors (PTDF), built by
factorizing the nodal susceptance matrix with the reference bus removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

THERMAL = "thermal"
RENEWABLE = "renewable"

# Relative tolerance on the power-balance residual accepted by dc_flows.
# Injections must sum to zero; anything beyond this is treated as a bug
# in the caller, not silently redistributed.
BALANCE_RTOL = 1e-6


class GridError(ValueError):
    """Invalid grid data or an operation on an unusable network."""


@dataclass(frozen=True)
class Bus:
    """A network node with a nominal demand in MW."""

    id: int
    nominal_demand: float = 0.0

    def __post_init__(self):
        if self.nominal_demand < 0:
            raise GridError(f"bus {self.id}: nominal_demand must be >= 0")


@dataclass(frozen=True)
class Line:
    """A transmission line between two buses.

    susceptance is in per-unit and must be positive; capacity is the
    thermal flow limit in MW, applied to the flow magnitude.
    """

    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise GridError(f"line {self.id}: from_bus equals to_bus")
        if self.susceptance <= 0:
            raise GridError(f"line {self.id}: susceptance must be > 0")
        if self.capacity <= 0:
            raise GridError(f"line {self.id}: capacity must be > 0")


@dataclass(frozen=True)
class Generator:
    """A generating unit at a bus.

    Thermal units have a positive cost and minimum output; renewable
    units are free, have no minimum and are curtailed through a
    per-scenario capacity factor.
    """

    id: int
    bus: int
    p_min: float
    p_max: float
    cost: float
    kind: str = THERMAL

    def __post_init__(self):
        if self.kind not in (THERMAL, RENEWABLE):
            raise GridError(f"generator {self.id}: unknown kind {self.kind!r}")
        if not 0 <= self.p_min <= self.p_max:
            raise GridError(f"generator {self.id}: need 0 <= p_min <= p_max")
        if self.kind == THERMAL and not (self.cost > 0 and self.p_min > 0):
            raise GridError(
                f"generator {self.id}: thermal units need cost > 0 and p_min > 0"
            )
        if self.kind == RENEWABLE and not (self.cost == 0 and self.p_min == 0):
            raise GridError(
                f"generator {self.id}: renewable units need cost = 0 and p_min = 0"
            )


@dataclass(frozen=True)
class PowerSystem:
    """Static grid: buses, lines and generators.

    Bus ids must be the contiguous range 1..N; line and generator ids
    must be unique.  The line graph must connect all buses (PTDF
    existence), which is checked on construction.
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        ids = [b.id for b in self.buses]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise GridError("bus ids must be unique and contiguous 1..N")
        if len({l.id for l in self.lines}) != len(self.lines):
            raise GridError("line ids must be unique")
        if len({g.id for g in self.generators}) != len(self.generators):
            raise GridError("generator ids must be unique")
        bus_ids = set(ids)
        for line in self.lines:
            if line.from_bus not in bus_ids or line.to_bus not in bus_ids:
                raise GridError(f"line {line.id}: unknown endpoint bus")
        for gen in self.generators:
            if gen.bus not in bus_ids:
                raise GridError(f"generator {gen.id}: unknown bus {gen.bus}")
        if not self._connected():
            raise GridError("network graph is not connected")

    def _connected(self) -> bool:
        n = len(self.buses)
        if n <= 1:
            return True
        adj: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for line in self.lines:
            adj[line.from_bus].append(line.to_bus)
            adj[line.to_bus].append(line.from_bus)
        seen = {self.buses[0].id}
        stack = [self.buses[0].id]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == n

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: int) -> int:
        """0-based position of a bus id (ids are contiguous 1..N)."""
        return bus_id - 1

    def line_index(self, line_id: int) -> int:
        for k, line in enumerate(self.lines):
            if line.id == line_id:
                return k
        raise GridError(f"unknown line id {line_id}")

    @property
    def line_ids(self) -> tuple[int, ...]:
        return tuple(l.id for l in self.lines)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([l.capacity for l in self.lines], dtype=float)

    @property
    def nominal_demand(self) -> np.ndarray:
        d = np.zeros(self.n_buses)
        for b in self.buses:
            d[self.bus_index(b.id)] = b.nominal_demand
        return d

    @property
    def generator_buses(self) -> np.ndarray:
        """0-based bus index of each generator."""
        return np.array([self.bus_index(g.bus) for g in self.generators], dtype=int)

    @property
    def costs(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @property
    def p_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators], dtype=float)

    @property
    def p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators], dtype=float)

    @property
    def renewable_mask(self) -> np.ndarray:
        return np.array([g.kind == RENEWABLE for g in self.generators], dtype=bool)


@dataclass(frozen=True)
class Scenario:
    """One operating period: nodal demand and per-generator capacity factors.

    demand has one entry per bus (bus order); capacity_factor one entry
    per generator (generator order), with thermal units at 1.0.
    """

    demand: np.ndarray
    capacity_factor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "demand", np.asarray(self.demand, dtype=float))
        object.__setattr__(
            self, "capacity_factor", np.asarray(self.capacity_factor, dtype=float)
        )
        if np.any(self.demand < 0):
            raise GridError("scenario demand must be componentwise >= 0")
        if np.any(self.capacity_factor < 0) or np.any(self.capacity_factor > 1):
            raise GridError("capacity factors must lie in [0, 1]")


def validate_scenario(system: PowerSystem, scenario: Scenario) -> None:
    """Check a scenario's dimensions and the thermal capacity-factor rule."""
    if scenario.demand.shape != (system.n_buses,):
        raise GridError(
            f"scenario demand has length {scenario.demand.size}, "
            f"expected {system.n_buses}"
        )
    if scenario.capacity_factor.shape != (system.n_generators,):
        raise GridError(
            f"scenario capacity_factor has length {scenario.capacity_factor.size}, "
            f"expected {system.n_generators}"
        )
    thermal = ~system.renewable_mask
    if not np.allclose(scenario.capacity_factor[thermal], 1.0):
        raise GridError("thermal generators must have capacity factor 1")


@dataclass(frozen=True)
class PTDFMatrix:
    """Line-by-bus sensitivity matrix for DC flows.

    entries[l, n] is the MW flow induced on line l by injecting 1 MW at
    bus n and withdrawing it at the reference bus; the reference column
    is identically zero.  Flows of zero-sum injection vectors do not
    depend on the reference choice.
    """

    entries: np.ndarray
    ref_bus: int
    line_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "line_ids", tuple(self.line_ids))

    @property
    def n_lines(self) -> int:
        return self.entries.shape[0]

    @property
    def n_buses(self) -> int:
        return self.entries.shape[1]

    def row(self, line_index: int) -> np.ndarray:
        return self.entries[line_index]


def build_ptdf(system: PowerSystem, ref_bus: int | None = None) -> PTDFMatrix:
    """Build the PTDF matrix by factorizing the reduced susceptance matrix.

    The nodal susceptance (weighted Laplacian) matrix has the reference
    row and column deleted before the solve; dense factorization is fine
    at the target scale.  Raises GridError("singular susceptance matrix")
    when the graph does not connect all buses.
    """
    if ref_bus is None:
        ref_bus = min(b.id for b in system.buses)
    if ref_bus not in {b.id for b in system.buses}:
        raise GridError(f"unknown reference bus {ref_bus}")
    if not system._connected():
        raise GridError("singular susceptance matrix")

    nb, nl = system.n_buses, system.n_lines
    laplacian = np.zeros((nb, nb))
    branch = np.zeros((nl, nb))
    for k, line in enumerate(system.lines):
        i = system.bus_index(line.from_bus)
        j = system.bus_index(line.to_bus)
        b = line.susceptance
        laplacian[i, i] += b
        laplacian[j, j] += b
        laplacian[i, j] -= b
        laplacian[j, i] -= b
        branch[k, i] = b
        branch[k, j] = -b

    ref = system.bus_index(ref_bus)
    keep = [n for n in range(nb) if n != ref]
    reduced = laplacian[np.ix_(keep, keep)]
    try:
        theta = np.linalg.solve(reduced, branch[:, keep].T).T
    except np.linalg.LinAlgError as exc:
        raise GridError("singular susceptance matrix") from exc

    entries = np.zeros((nl, nb))
    entries[:, keep] = theta
    return PTDFMatrix(entries=entries, ref_bus=ref_bus, line_ids=system.line_ids)


def dc_flows(
    ptdf: PTDFMatrix, injections: np.ndarray, balance_rtol: float = BALANCE_RTOL
) -> np.ndarray:
    """Per-line flows of a zero-sum nodal injection vector, in MW.

    The injection imbalance is checked against balance_rtol times the
    total absolute injection and rejected as an error; a silently
    redistributed imbalance would corrupt every screening decision built
    on these flows.
    """
    q = np.asarray(injections, dtype=float)
    if q.shape != (ptdf.n_buses,):
        raise GridError(
            f"injection vector has length {q.size}, expected {ptdf.n_buses}"
        )
    scale = np.sum(np.abs(q))
    if abs(np.sum(q)) > balance_rtol * max(scale, 1e-12) + 1e-12:
        raise GridError(
            f"injections sum to {np.sum(q):g}, exceeding the balance tolerance"
        )
    return ptdf.entries @ q


def net_demand(scenario: Scenario, system: PowerSystem) -> np.ndarray:
    """Nodal demand minus available renewable output, per bus."""
    validate_scenario(system, scenario)
    d = scenario.demand.copy()
    for g, gen in enumerate(system.generators):
        if gen.kind == RENEWABLE:
            d[system.bus_index(gen.bus)] -= scenario.capacity_factor[g] * gen.p_max
    return d

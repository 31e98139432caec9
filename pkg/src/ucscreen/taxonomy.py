"""Classify inequality constraints of a small MILP by their removal effect.

A constraint is REDUNDANT when dropping it leaves the feasible region
unchanged, ACTIVE when it holds with equality at the optimum, QUASI_ACTIVE
when it is slack at the optimum yet dropping it strictly improves the
objective, and INACTIVE otherwise.  Redundancy is decided over the
integer feasible set, not its LP relaxation, by maximizing the
constraint's violation with the constraint itself removed.

Intended for pedagogy and tests on instances with a handful of integer
variables, not for TC-UC-scale problems.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

MAX_INTEGER_VARS = 10

# Binding / redundancy-margin tolerance, relative to the right-hand side.
BINDING_RTOL = 1e-7
# Minimum objective improvement that counts as "the optimum changed".
IMPROVEMENT_ATOL = 1e-6


class TaxonomyError(ValueError):
    """Malformed MILP description or an unclassifiable instance."""


class ConstraintClass(enum.Enum):
    ACTIVE = "active"
    QUASI_ACTIVE = "quasi_active"
    INACTIVE = "inactive"
    REDUNDANT = "redundant"


@dataclass(frozen=True)
class Inequality:
    """A single row `coeffs . x (<=|>=) rhs`."""

    name: str
    coeffs: np.ndarray
    sense: str
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.sense not in ("<=", ">="):
            raise TaxonomyError(f"constraint {self.name}: sense must be <= or >=")

    def as_leq(self) -> tuple[np.ndarray, float]:
        """Normalize to a.x <= b."""
        if self.sense == "<=":
            return self.coeffs, self.rhs
        return -self.coeffs, -self.rhs


@dataclass(frozen=True)
class SmallMILP:
    """Linear objective, mixed integrality, simple bounds, inequality rows."""

    sense: str
    objective: np.ndarray
    integrality: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple[Inequality, ...]

    def __post_init__(self):
        object.__setattr__(self, "objective", np.asarray(self.objective, dtype=float))
        object.__setattr__(
            self, "integrality", np.asarray(self.integrality, dtype=int)
        )
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = self.objective.size
        for arr, label in (
            (self.integrality, "integrality"),
            (self.lower, "lower"),
            (self.upper, "upper"),
        ):
            if arr.size != n:
                raise TaxonomyError(f"{label} length does not match the objective")
        if self.sense not in ("min", "max"):
            raise TaxonomyError("sense must be 'min' or 'max'")
        if int(self.integrality.sum()) > MAX_INTEGER_VARS:
            raise TaxonomyError(
                f"at most {MAX_INTEGER_VARS} integer variables supported"
            )
        for con in self.constraints:
            if con.coeffs.size != n:
                raise TaxonomyError(
                    f"constraint {con.name}: coefficient length mismatch"
                )
        names = [c.name for c in self.constraints]
        if len(set(names)) != len(names):
            raise TaxonomyError("constraint names must be unique")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def constraint(self, name: str) -> Inequality:
        for con in self.constraints:
            if con.name == name:
                return con
        raise TaxonomyError(f"unknown constraint {name!r}")


_OPTIMAL, _INFEASIBLE = 0, 2
_UNBOUNDED_STATUSES = (3, 4)  # 4 = "infeasible or unbounded" from presolve


def _optimize(milp_def: SmallMILP, objective, sense, skip: str | None = None):
    """Solve min/max of an arbitrary linear objective over the MILP set.

    Returns (status, x, value) with value in the caller's sense.  skip
    drops one named constraint.  Status 4 is resolved to 'unbounded'
    when the instance is known feasible (the caller guarantees it by
    having solved a superset problem already).
    """
    rows = [c for c in milp_def.constraints if c.name != skip]
    sign = 1.0 if sense == "min" else -1.0
    c = sign * np.asarray(objective, dtype=float)
    kwargs = {}
    if rows:
        mat = np.array([r.as_leq()[0] for r in rows])
        ub = np.array([r.as_leq()[1] for r in rows])
        kwargs["constraints"] = LinearConstraint(mat, -np.inf, ub)
    res = milp(
        c,
        integrality=milp_def.integrality,
        bounds=Bounds(milp_def.lower, milp_def.upper),
        **kwargs,
    )
    if res.status == _OPTIMAL:
        return "optimal", res.x, sign * res.fun
    if res.status == _INFEASIBLE:
        return "infeasible", None, None
    if res.status in _UNBOUNDED_STATUSES:
        return "unbounded", None, None
    raise TaxonomyError(f"solver failure: {res.message}")


def solve(milp_def: SmallMILP):
    """Optimal (x, value) of the full instance; errors if unsolvable."""
    status, x, value = _optimize(milp_def, milp_def.objective, milp_def.sense)
    if status != "optimal":
        raise TaxonomyError(f"instance is {status} with all constraints present")
    return x, value


def classify_constraint(milp_def: SmallMILP, name: str) -> ConstraintClass:
    """Classify one inequality of a solvable MILP.

    Order of tests matters: redundancy is decided first so that e.g. a
    duplicated copy of a binding constraint still comes out REDUNDANT
    (removing it changes nothing, the twin keeps enforcing the limit).
    """
    con = milp_def.constraint(name)
    x_opt, z_opt = solve(milp_def)
    a, b = con.as_leq()
    scale = 1.0 + abs(b)

    # Redundant: the worst violation attainable without the constraint
    # is still non-positive, so the feasible region cannot grow.
    status, _, worst = _optimize(milp_def, a, "max", skip=name)
    if status == "optimal" and worst - b <= BINDING_RTOL * scale:
        return ConstraintClass.REDUNDANT
    if status == "infeasible":
        # Region without the row is empty only if it was empty before,
        # which solve() above already ruled out.
        raise TaxonomyError(f"inconsistent feasibility while probing {name!r}")

    # Active: holds with equality at the optimum.
    if abs(float(a @ x_opt) - b) <= BINDING_RTOL * scale:
        return ConstraintClass.ACTIVE

    # Non-binding, non-redundant: does removal move the optimum?
    status, _, z_removed = _optimize(
        milp_def, milp_def.objective, milp_def.sense, skip=name
    )
    if status == "unbounded":
        # Removal blows the problem open even though the constraint was
        # slack at the optimum: it still shields the objective.
        return ConstraintClass.QUASI_ACTIVE
    if status != "optimal":
        raise TaxonomyError(f"removal probe for {name!r} ended {status}")
    improvement = (z_opt - z_removed) if milp_def.sense == "min" else (z_removed - z_opt)
    if improvement > IMPROVEMENT_ATOL:
        return ConstraintClass.QUASI_ACTIVE
    return ConstraintClass.INACTIVE


def classify_all(milp_def: SmallMILP) -> dict[str, ConstraintClass]:
    return {c.name: classify_constraint(milp_def, c.name) for c in milp_def.constraints}


def milp_from_dict(data: dict) -> SmallMILP:
    """Build a SmallMILP from the JSON schema documented in the README.

    Expected keys: sense, objective, variables (list with integer flag
    and optional lower/upper), constraints (list with name, coeffs,
    sense, rhs).
    """
    try:
        variables = data["variables"]
        constraints = data["constraints"]
        n = len(data["objective"])
        lower = np.array(
            [-np.inf if v.get("lower") is None else float(v["lower"]) for v in variables]
        )
        upper = np.array(
            [np.inf if v.get("upper") is None else float(v["upper"]) for v in variables]
        )
        integrality = np.array([1 if v.get("integer") else 0 for v in variables])
        if len(variables) != n:
            raise TaxonomyError("variables and objective lengths differ")
        rows = tuple(
            Inequality(
                name=str(c["name"]),
                coeffs=np.asarray(c["coeffs"], dtype=float),
                sense=str(c["sense"]),
                rhs=float(c["rhs"]),
            )
            for c in constraints
        )
        return SmallMILP(
            sense=str(data["sense"]),
            objective=np.asarray(data["objective"], dtype=float),
            integrality=integrality,
            lower=lower,
            upper=upper,
            constraints=rows,
        )
    except (KeyError, TypeError) as exc:
        raise TaxonomyError(f"malformed MILP description: {exc}") from exc

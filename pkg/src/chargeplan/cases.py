"""Scenario comparison across the four operating cases.

Case 1   identical stations, drivers use the nearest station, no allocation;
Case 2a  grid slots allocated across stations, arrivals fixed (selfish);
Case 2b  slots plus arrival shaping inside per-station boxes (mixed
         population of selfish drivers and coordinated fleets);
Case 3   slots plus free routing of all arrivals within a small area
         (fleets only).

Each case is evaluated at either an explicit slot budget or the minimum
budget meeting the QoS target under that case's routing freedom, mirroring
the published comparison tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .allocation import (
    AllocationError,
    AllocationResult,
    AllocationRow,
    NetworkSpec,
    StationDesign,
    allocate_power,
    allocate_power_and_arrivals,
    allocate_small_area,
    min_power_for_qos,
    min_power_with_shaping,
    partition_station,
    station_blocking,
    _weighted_from_rows,
)
from .chain import (
    ChainState,
    ClassPars,
    SteadyState,
    build_generator,
    build_state_space,
    steady_state,
)
from .economics import CostModel, profit

__all__ = ["CASES", "CaseOutcome", "evaluate_case", "compare_cases",
           "network_profit", "fixed_allocation"]

CASES = ("1", "2a", "2b", "3")


@dataclass(frozen=True)
class CaseOutcome:
    case: str
    allocation: AllocationResult
    total_slots: int
    weighted_blocking: float
    feasible: bool
    net_profit: Optional[float] = None


def fixed_allocation(stations: Sequence[StationDesign], slots: Sequence[int],
                     epsilon: float) -> AllocationResult:
    """Evaluate a given per-station slot vector at the stations' base
    arrivals; each station splits its own slots across classes."""
    if len(slots) != len(stations):
        raise AllocationError("one slot count per station required")
    rows = []
    for st, s in zip(stations, slots):
        comp = partition_station(int(s), st)
        for c, sc in enumerate(comp):
            b = station_blocking(st, c, sc, st.base_arrival_rate)
            rows.append(
                AllocationRow(st.id, c, sc, st.base_arrival_rate * st.mix[c], b,
                              b <= epsilon)
            )
    return AllocationResult(
        rows=tuple(rows),
        objective=float(sum(r.blocking for r in rows)),
        weighted_blocking=_weighted_from_rows(rows),
        feasible=all(r.meets_qos for r in rows),
        diagnostics={"mode": "fixed"},
    )


def _steady_state_or_idle(pars: ClassPars) -> SteadyState:
    """Chain solution, with the no-arrivals case handled analytically (all
    probability on the idle, fully charged state)."""
    space = build_state_space(pars.grid_slots, pars.storage.capacity)
    if pars.arrival_rate == 0:
        pi = np.zeros(space.size)
        pi[space.index[ChainState(0, space.capacity)]] = 1.0
        return SteadyState(space, pi, frozenset(space.blocking_indices()))
    return steady_state(build_generator(pars, space))


def network_profit(stations: Sequence[StationDesign], allocation: AllocationResult,
                   cost: CostModel, penalty_mode: str = "state") -> float:
    """Total net profit over the network at an allocation.

    Station classes map onto the cost model through their position in the
    station's ``class_labels`` (defaulting to class order).
    """
    by_station: dict = {}
    for r in allocation.rows:
        by_station.setdefault(r.station_id, []).append(r)
    total = 0.0
    for st in stations:
        rows = sorted(by_station[st.id], key=lambda r: r.class_index)
        labels = getattr(st, "class_labels", None) or tuple(range(st.class_count))
        class_states = []
        cost_rows = []
        for r, label in zip(rows, labels):
            cls = st.classes[r.class_index]
            pars = ClassPars(r.arrival_rate, cls.service_rate, r.slots, cls.storage)
            class_states.append((pars, _steady_state_or_idle(pars)))
            cost_rows.append(label)
        station_cost = CostModel(
            grid_revenue=tuple(cost.grid_revenue[i] for i in cost_rows),
            storage_revenue=tuple(cost.storage_revenue[i] for i in cost_rows),
            blocking_cost=tuple(cost.blocking_cost[i] for i in cost_rows),
            storage_acquisition_cost=tuple(
                cost.storage_acquisition_cost[i] for i in cost_rows
            ),
            fixed_cost=cost.fixed_cost,
        )
        total += profit(class_states, station_cost, penalty_mode).net
    return total


def evaluate_case(
    stations: Sequence[StationDesign],
    case: str,
    *,
    epsilon: float,
    budget: Optional[int] = None,
    case1_slots: Optional[Sequence[int]] = None,
    arrival_bounds: Optional[Sequence[tuple[float, float]]] = None,
    bounds_factor: float = 0.10,
    total_arrivals: Optional[float] = None,
    lattice_points: int = 21,
    conserve_arrivals: bool = True,
    cost_model: Optional[CostModel] = None,
    penalty_mode: str = "state",
) -> CaseOutcome:
    """Run one case; ``budget=None`` means the minimum power for the target.

    Case 1 ignores the budget and evaluates ``case1_slots`` as given.
    """
    if case not in CASES:
        raise AllocationError(f"unknown case {case!r}; expected one of {CASES}")
    stations = tuple(stations)
    total = (
        sum(st.base_arrival_rate for st in stations)
        if total_arrivals is None
        else total_arrivals
    )
    if case == "1":
        if case1_slots is None:
            raise AllocationError("case 1 needs the fixed per-station slot counts")
        allocation = fixed_allocation(stations, case1_slots, epsilon)
    elif case == "2a":
        if budget is None:
            budget, _ = min_power_for_qos(NetworkSpec(stations, qos_epsilon=epsilon))
        allocation = allocate_power(
            NetworkSpec(stations, slot_budget=budget, qos_epsilon=epsilon)
        )
    else:
        if case == "2b":
            bounds = arrival_bounds or tuple(
                (
                    (1 - bounds_factor) * st.base_arrival_rate,
                    (1 + bounds_factor) * st.base_arrival_rate,
                )
                for st in stations
            )
        else:
            bounds = tuple((0.0, total) for _ in stations)
        spec = NetworkSpec(
            stations,
            qos_epsilon=epsilon,
            arrival_bounds=tuple(bounds),
            total_arrivals=total,
            lattice_points=lattice_points,
            conserve_arrivals=True if case == "3" else conserve_arrivals,
        )
        if budget is None:
            budget, _ = min_power_with_shaping(spec)
        if case == "2b":
            allocation = allocate_power_and_arrivals(spec, budget)
        else:
            allocation = allocate_small_area(spec, budget)
    net = (
        network_profit(stations, allocation, cost_model, penalty_mode)
        if cost_model is not None
        else None
    )
    return CaseOutcome(
        case=case,
        allocation=allocation,
        total_slots=allocation.total_slots,
        weighted_blocking=allocation.weighted_blocking,
        feasible=allocation.feasible,
        net_profit=net,
    )


def compare_cases(
    stations: Sequence[StationDesign],
    cases: Sequence[str],
    *,
    epsilon: float,
    reference_case: Optional[str] = None,
    **kwargs,
) -> list[dict]:
    """Evaluate several cases on one scenario and tabulate them.

    Returns one dict per case with totals, weighted blocking, optional net
    profit and the slot savings relative to ``reference_case`` (the first
    case by default).  Station sets are identical across cases by
    construction.
    """
    outcomes = [evaluate_case(stations, c, epsilon=epsilon, **kwargs) for c in cases]
    ref = reference_case or cases[0]
    ref_slots = next(o.total_slots for o in outcomes if o.case == ref)
    table = []
    for o in outcomes:
        savings = (
            (ref_slots - o.total_slots) / ref_slots if ref_slots > 0 else 0.0
        )
        table.append(
            {
                "case": o.case,
                "total_slots": o.total_slots,
                "weighted_blocking": o.weighted_blocking,
                "net_profit": o.net_profit,
                "feasible": o.feasible,
                "savings_vs_" + ref: savings,
                "outcome": o,
            }
        )
    return table

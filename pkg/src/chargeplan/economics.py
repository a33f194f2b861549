"""Per-station profit evaluation over the steady-state distribution.

Revenue is earned per EV in service, at class-specific rates that differ
between grid-fed and storage-fed states; capital outlay covers the fixed
installation plus storage acquisition proportional to capacity; a penalty is
charged over the blocking states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .chain import ClassPars, StateSpace, SteadyState

__all__ = ["CostModel", "ProfitBreakdown", "classify_states", "profit"]


@dataclass(frozen=True)
class CostModel:
    """Per-class revenues and costs (abstract currency units).

    Sequences are indexed by customer class; ``fixed_cost`` is per station.
    """

    grid_revenue: tuple[float, ...]
    storage_revenue: tuple[float, ...]
    blocking_cost: tuple[float, ...]
    storage_acquisition_cost: tuple[float, ...]
    fixed_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "grid_revenue", tuple(self.grid_revenue))
        object.__setattr__(self, "storage_revenue", tuple(self.storage_revenue))
        object.__setattr__(self, "blocking_cost", tuple(self.blocking_cost))
        object.__setattr__(
            self, "storage_acquisition_cost", tuple(self.storage_acquisition_cost)
        )
        lengths = {
            len(self.grid_revenue),
            len(self.storage_revenue),
            len(self.blocking_cost),
            len(self.storage_acquisition_cost),
        }
        if len(lengths) != 1:
            raise ValueError("cost sequences must have one entry per class")
        for name in ("grid_revenue", "storage_revenue", "blocking_cost",
                     "storage_acquisition_cost"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be >= 0")
        if self.fixed_cost < 0:
            raise ValueError("fixed_cost must be >= 0")

    @property
    def class_count(self) -> int:
        return len(self.grid_revenue)


@dataclass(frozen=True)
class ProfitBreakdown:
    grid_revenue: float
    storage_revenue: float
    capital_cost: float
    blocking_penalty: float

    @property
    def net(self) -> float:
        return (
            self.grid_revenue
            + self.storage_revenue
            - self.capital_cost
            - self.blocking_penalty
        )


def classify_states(space: StateSpace):
    """Split a station state space into grid / storage / blocking regions.

    Grid-charging states have every EV on a grid slot (in_service <= slots);
    storage-charging states have at least one EV drawing on a reserved
    charge; blocking states have all slots busy and no charge left, so the
    grid and storage regions cover the space while blocking overlaps both.
    Each state is reported as ((in_service, stored), ev_count).
    """
    grid, storage, blocking = [], [], []
    for s in space.states:
        entry = ((s.in_service, s.stored), s.in_service)
        if s.in_service <= space.grid_slots:
            grid.append(entry)
        else:
            storage.append(entry)
        if s.in_service >= space.grid_slots and s.stored == 0:
            blocking.append(entry)
    return grid, storage, blocking


def _region_masks(space: StateSpace):
    n = np.array([s.in_service for s in space.states])
    e = np.array([s.stored for s in space.states])
    grid = n <= space.grid_slots
    blocking = (n >= space.grid_slots) & (e == 0)
    return n, grid, ~grid, blocking


PenaltyMode = Literal["state", "flow"]


def profit(
    class_states: Sequence[tuple[ClassPars, SteadyState]],
    cost: CostModel,
    penalty_mode: PenaltyMode = "state",
) -> ProfitBreakdown:
    """Net profit of one station from its per-class stationary distributions.

    The default ``state`` penalty weights each blocking state by its EV count
    times its stationary probability.  The ``flow`` mode instead charges the
    per-unit-time blocked-arrival flow (arrival rate times blocking mass),
    which has customer-per-time units; it is provided for sensitivity
    studies of the penalty term.
    """
    if penalty_mode not in ("state", "flow"):
        raise ValueError(f"unknown penalty_mode {penalty_mode!r}")
    if len(class_states) != cost.class_count:
        raise ValueError(
            f"got steady states for {len(class_states)} classes, "
            f"cost model defines {cost.class_count}"
        )
    grid_rev = storage_rev = penalty = 0.0
    capital = cost.fixed_cost
    for c, (pars, ss) in enumerate(class_states):
        pi = ss.probabilities
        evs, grid, storage, blocking = _region_masks(ss.space)
        grid_rev += cost.grid_revenue[c] * float((evs * pi)[grid].sum())
        storage_rev += cost.storage_revenue[c] * float((evs * pi)[storage].sum())
        capital += pars.storage.capacity * cost.storage_acquisition_cost[c]
        if penalty_mode == "state":
            penalty += cost.blocking_cost[c] * float((evs * pi)[blocking].sum())
        else:
            penalty += cost.blocking_cost[c] * pars.arrival_rate * float(
                pi[blocking].sum()
            )
    return ProfitBreakdown(grid_rev, storage_rev, capital, penalty)

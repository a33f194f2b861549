"""Single-station loss model: a two-dimensional CTMC over (EVs in service,
remaining storage charge) with exact steady-state blocking probabilities.

A station draws constant grid power, discretized into ``grid_slots`` concurrent
charging slots, and owns a local energy storage holding up to ``capacity`` full
EV charges.  Arrivals beyond the grid slots are admitted by reserving one
storage charge; arrivals that find neither a free slot nor a stored charge are
blocked and lost (bufferless system).  Idle grid power recharges the storage
one unit at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DomainError",
    "DegenerateChainError",
    "StoragePars",
    "ClassPars",
    "ChainState",
    "StateSpace",
    "Generator",
    "SteadyState",
    "derived_recharge_rate",
    "build_state_space",
    "build_generator",
    "steady_state",
    "blocking_probability",
    "erlang_b",
]


class DomainError(ValueError):
    """Raised when model parameters violate their domain constraints."""


class DegenerateChainError(RuntimeError):
    """Raised when the chain is reducible and has no unique steady state."""


@dataclass(frozen=True)
class StoragePars:
    """Local energy storage unit, sized in whole EV-charge equivalents.

    ``recharge_rate`` is the rate at which one stored EV charge is gained
    while idle grid power exists.  ``efficiency`` and ``power_rating`` are
    the device metadata the rate is derived from (see
    :func:`derived_recharge_rate`); they do not enter the chain directly.
    """

    capacity: int
    recharge_rate: float
    efficiency: float = 1.0
    power_rating: float = 1.0

    def __post_init__(self):
        if self.capacity < 0:
            raise DomainError(f"storage capacity must be >= 0, got {self.capacity}")
        if self.capacity > 0 and self.recharge_rate <= 0:
            raise DomainError("recharge_rate must be > 0 when storage is present")
        if not 0 < self.efficiency <= 1:
            raise DomainError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.power_rating <= 0:
            raise DomainError(f"power_rating must be > 0, got {self.power_rating}")


@dataclass(frozen=True)
class ClassPars:
    """One customer class at one station: demand, service and storage."""

    arrival_rate: float
    service_rate: float
    grid_slots: int
    storage: StoragePars

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise DomainError(f"arrival_rate must be >= 0, got {self.arrival_rate}")
        if self.service_rate <= 0:
            raise DomainError(f"service_rate must be > 0, got {self.service_rate}")
        if self.grid_slots < 1:
            raise DomainError(f"grid_slots must be >= 1, got {self.grid_slots}")

    @property
    def offered_load(self) -> float:
        return self.arrival_rate / self.service_rate


@dataclass(frozen=True, order=True)
class ChainState:
    """(EVs charging concurrently, storage charge units remaining)."""

    in_service: int
    stored: int


@dataclass(frozen=True)
class StateSpace:
    """Ordered enumeration of the valid chain states for (grid_slots, capacity).

    Ordering is lexicographic by (in_service, stored) so serialized vectors are
    reproducible byte-for-byte.
    """

    grid_slots: int
    capacity: int
    states: tuple[ChainState, ...]
    index: dict[ChainState, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def blocking_indices(self) -> tuple[int, ...]:
        """States where an arrival is lost: all slots busy and storage empty."""
        return tuple(
            i
            for i, s in enumerate(self.states)
            if s.in_service >= self.grid_slots and s.stored == 0
        )


@dataclass(frozen=True)
class Generator:
    """Dense transition-rate matrix over a :class:`StateSpace`."""

    space: StateSpace
    rates: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SteadyState:
    """Stationary distribution with blocking-state bookkeeping."""

    space: StateSpace
    probabilities: np.ndarray = field(repr=False)
    blocking_states: frozenset[int]

    def blocking_mass(self) -> float:
        idx = sorted(self.blocking_states)
        return float(self.probabilities[idx].sum())


def derived_recharge_rate(
    service_rate: float,
    storage: StoragePars,
    reference_efficiency: Optional[float] = None,
) -> float:
    """Recharge rate implied by the storage power rating.

    A device rated at ``power_rating`` times the per-EV charging power stores
    the demand of that many EVs per service time, scaled by how its efficiency
    compares to the reference battery efficiency.  With the default reference
    (the device's own efficiency) the rate is ``service_rate * power_rating``.
    """
    ref = storage.efficiency if reference_efficiency is None else reference_efficiency
    if ref <= 0:
        raise DomainError("reference_efficiency must be > 0")
    return service_rate * storage.power_rating * (storage.efficiency / ref)


def build_state_space(grid_slots: int, capacity: int) -> StateSpace:
    """Enumerate all valid (in_service, stored) pairs.

    For n <= grid_slots any storage level 0..capacity is reachable; above the
    grid slots each extra EV holds one reserved charge, so the storage level is
    capped at capacity - (n - grid_slots).  The count is
    (S+1)(R+1) + R(R+1)/2 for S slots and R storage units.
    """
    if grid_slots < 1:
        raise DomainError(f"grid_slots must be >= 1, got {grid_slots}")
    if capacity < 0:
        raise DomainError(f"capacity must be >= 0, got {capacity}")
    states = []
    for n in range(grid_slots + capacity + 1):
        top = capacity - max(0, n - grid_slots)
        for e in range(top + 1):
            states.append(ChainState(n, e))
    index = {s: i for i, s in enumerate(states)}
    return StateSpace(grid_slots, capacity, tuple(states), index)


# recharge policy hook: maps (idle grid slots, class parameters) -> rate.
RechargePolicy = Callable[[int, ClassPars], float]


def constant_recharge(idle_slots: int, pars: ClassPars) -> float:
    """Default policy: the nominal rate whenever any grid power is idle."""
    return pars.storage.recharge_rate


def idle_power_recharge(idle_slots: int, pars: ClassPars) -> float:
    """Alternative policy: rate limited by available idle power.

    The storage can absorb at most ``power_rating`` slots' worth of power, so
    the rate scales with min(idle slots, power_rating).
    """
    usable = min(float(idle_slots), pars.storage.power_rating)
    return pars.storage.recharge_rate * usable / pars.storage.power_rating


def build_generator(
    pars: ClassPars,
    space: StateSpace,
    recharge_policy: RechargePolicy = constant_recharge,
) -> Generator:
    """Assemble the transition-rate matrix for one customer class.

    Transitions from (n, e):
      * arrival -> (n+1, e)    at rate lambda, while a grid slot is free;
      * arrival -> (n+1, e-1)  at rate lambda, slots full but e > 0 (one
        stored charge is reserved at admission);
      * no arrival transition when slots are full and e = 0 (blocked);
      * departure -> (n-1, e)  at rate n * mu;
      * recharge -> (n, e+1)   while idle grid power exists (n < slots) and
        the storage is not full.
    """
    if space.grid_slots != pars.grid_slots or space.capacity != pars.storage.capacity:
        raise DomainError(
            "state space built for (S=%d, R=%d) does not match parameters (S=%d, R=%d)"
            % (space.grid_slots, space.capacity, pars.grid_slots, pars.storage.capacity)
        )
    S = space.grid_slots
    R = space.capacity
    lam = pars.arrival_rate
    mu = pars.service_rate
    q = np.zeros((space.size, space.size))
    for i, st in enumerate(space.states):
        n, e = st.in_service, st.stored
        if n < S:
            q[i, space.index[ChainState(n + 1, e)]] += lam
        elif e > 0:
            q[i, space.index[ChainState(n + 1, e - 1)]] += lam
        if n > 0:
            q[i, space.index[ChainState(n - 1, e)]] += n * mu
        if n < S and e < R:
            q[i, space.index[ChainState(n, e + 1)]] += recharge_policy(S - n, pars)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return Generator(space, q)


def _gth_stationary(rates: np.ndarray) -> np.ndarray:
    """Stationary vector of a conservative generator by GTH state reduction.

    Grassmann-Taksar-Heyman elimination uses only the nonnegative
    off-diagonal rates and never subtracts like-signed quantities, so it is
    numerically stable for stochastic matrices of any conditioning.
    """
    a = np.array(rates, dtype=float)
    m = a.shape[0]
    if m == 1:
        return np.ones(1)
    for k in range(m - 1):
        scale = a[k, k + 1 :].sum()
        if scale <= 0.0:
            # no path out of {0..k} through later states: chain is reducible
            raise DegenerateChainError(
                f"state {k} has no outgoing rate to uneliminated states; "
                "the chain is reducible (e.g. arrival_rate = 0)"
            )
        a[k + 1 :, k] /= scale
        a[k + 1 :, k + 1 :] += np.outer(a[k + 1 :, k], a[k, k + 1 :])
    x = np.zeros(m)
    x[m - 1] = 1.0
    for k in range(m - 2, -1, -1):
        x[k] = x[k + 1 :] @ a[k + 1 :, k]
    return x / x.sum()


def steady_state(gen: Generator) -> SteadyState:
    """Solve for the stationary distribution of the station chain."""
    pi = _gth_stationary(gen.rates)
    return SteadyState(gen.space, pi, frozenset(gen.space.blocking_indices()))


def blocking_probability(
    pars: ClassPars, recharge_policy: RechargePolicy = constant_recharge
) -> float:
    """Long-run fraction of arrivals lost, exact from the chain.

    Zero arrival rate is defined as zero blocking (the chain would be
    reducible); otherwise Poisson arrivals see time averages, so the blocked
    fraction equals the stationary mass of the blocking states.
    """
    if pars.arrival_rate == 0:
        return 0.0
    space = build_state_space(pars.grid_slots, pars.storage.capacity)
    gen = build_generator(pars, space, recharge_policy)
    return steady_state(gen).blocking_mass()


def erlang_b(servers: int, offered_load: float) -> float:
    """Blocking probability of an M/M/c/c loss system (Erlang-B recursion)."""
    if servers < 1:
        raise DomainError(f"servers must be >= 1, got {servers}")
    if offered_load < 0:
        raise DomainError(f"offered_load must be >= 0, got {offered_load}")
    b = 1.0
    for m in range(1, servers + 1):
        b = offered_load * b / (m + offered_load * b)
    return b

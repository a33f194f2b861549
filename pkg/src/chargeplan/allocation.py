"""Network-level grid-power and customer-routing allocation.

Four decision problems over a set of stations, all driven by the exact chain
blocking function:

* per-station partition of its slots across customer classes;
* minimum total slots meeting a per-class QoS target (blocking <= epsilon);
* slot allocation across stations for fixed arrivals (selfish drivers);
* joint slot + arrival-rate allocation, with arrivals either shapeable
  inside per-station boxes (mixed population) or freely routable within a
  small area (fleets), on a discretized arrival lattice.

Integer problems are solved exactly by dynamic programming over cached
per-station blocking tables; ties break toward the lexicographically
smallest allocation vector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .chain import ClassPars, StoragePars, blocking_probability

__all__ = [
    "AllocationError",
    "InfeasibleAllocationError",
    "ClassDesign",
    "ClassMix",
    "StationDesign",
    "NetworkSpec",
    "AllocationRow",
    "AllocationResult",
    "station_blocking",
    "partition_station",
    "min_power_for_qos",
    "min_power_with_shaping",
    "allocate_power",
    "allocate_power_relax_round",
    "allocate_power_and_arrivals",
    "allocate_small_area",
    "weighted_blocking",
]

_INF = float("inf")
_DEFAULT_SLOT_CAP = 64
_MAX_LATTICE_UNITS = 2000


class AllocationError(ValueError):
    pass


class InfeasibleAllocationError(AllocationError):
    pass


@dataclass(frozen=True)
class ClassMix:
    """Customer-class shares at a station; nonnegative, summing to one."""

    shares: tuple[float, ...]

    def __post_init__(self):
        shares = tuple(float(s) for s in self.shares)
        object.__setattr__(self, "shares", shares)
        if any(s < 0 for s in shares):
            raise AllocationError("mix shares must be >= 0")
        if abs(sum(shares) - 1.0) > 1e-12:
            raise AllocationError(f"mix shares must sum to 1, got {sum(shares)}")

    def __len__(self):
        return len(self.shares)

    def __getitem__(self, i):
        return self.shares[i]


@dataclass(frozen=True)
class ClassDesign:
    """A customer class before slots and arrivals are assigned."""

    service_rate: float
    storage: StoragePars


@dataclass(frozen=True)
class StationDesign:
    """A station's fixed design: classes, their mix and the nominal demand."""

    id: int | str
    classes: tuple[ClassDesign, ...]
    mix: ClassMix
    base_arrival_rate: float
    slot_cap: Optional[int] = None

    def __post_init__(self):
        if len(self.classes) != len(self.mix):
            raise AllocationError(
                f"station {self.id}: {len(self.classes)} classes but "
                f"{len(self.mix)} mix shares"
            )
        if self.base_arrival_rate < 0:
            raise AllocationError(f"station {self.id}: negative arrival rate")
        if self.slot_cap is not None and self.slot_cap < len(self.classes):
            raise AllocationError(
                f"station {self.id}: slot cap below one slot per class"
            )

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def design_key(self):
        return (self.classes, self.mix.shares)


@dataclass(frozen=True)
class NetworkSpec:
    """An allocation problem instance over a set of stations."""

    stations: tuple[StationDesign, ...]
    slot_budget: Optional[int] = None
    qos_epsilon: float = 1.0
    total_arrivals: Optional[float] = None
    arrival_bounds: Optional[tuple[tuple[float, float], ...]] = None
    lattice_points: int = 21
    conserve_arrivals: bool = True

    def __post_init__(self):
        if not self.stations:
            raise AllocationError("need at least one station")
        if self.slot_budget is not None and self.slot_budget < 1:
            raise AllocationError("slot_budget must be positive")
        if not 0 < self.qos_epsilon <= 1:
            raise AllocationError("qos_epsilon must be in (0, 1]")
        if self.lattice_points < 2:
            raise AllocationError("lattice_points must be >= 2")
        if self.arrival_bounds is not None:
            if len(self.arrival_bounds) != len(self.stations):
                raise AllocationError("one arrival bound pair per station required")
            for st, (lo, hi) in zip(self.stations, self.arrival_bounds):
                if lo < 0 or hi < lo:
                    raise AllocationError(
                        f"station {st.id}: inconsistent arrival bounds [{lo}, {hi}]"
                    )

    @property
    def min_budget(self) -> int:
        return sum(st.class_count for st in self.stations)


@dataclass(frozen=True)
class AllocationRow:
    station_id: int | str
    class_index: int
    slots: int
    arrival_rate: float
    blocking: float
    meets_qos: bool


@dataclass(frozen=True)
class AllocationResult:
    rows: tuple[AllocationRow, ...]
    objective: float
    weighted_blocking: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    def slots_by_station(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out[r.station_id] = out.get(r.station_id, 0) + r.slots
        return out

    def arrivals_by_station(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out[r.station_id] = out.get(r.station_id, 0.0) + r.arrival_rate
        return out

    def blocking_by_station(self) -> dict:
        """Customer-average blocking per station (class blocking mixed by
        arrival share)."""
        lam = self.arrivals_by_station()
        out: dict = {}
        for r in self.rows:
            total = lam[r.station_id]
            w = r.arrival_rate / total if total > 0 else 1.0 / self._nclasses(r.station_id)
            out[r.station_id] = out.get(r.station_id, 0.0) + w * r.blocking
        return out

    def _nclasses(self, station_id) -> int:
        return sum(1 for r in self.rows if r.station_id == station_id)

    @property
    def total_slots(self) -> int:
        return sum(r.slots for r in self.rows)


@lru_cache(maxsize=500_000)
def _blocking(slots: int, capacity: int, recharge: float, arrivals: float, mu: float) -> float:
    if arrivals <= 0.0:
        return 0.0
    pars = ClassPars(arrivals, mu, slots, StoragePars(capacity, recharge))
    return blocking_probability(pars)


def station_blocking(design: StationDesign, class_index: int, slots: int,
                     station_arrivals: float) -> float:
    """Exact blocking of one class at a station given its slots and the
    station's total arrival rate (split by the class mix)."""
    cls = design.classes[class_index]
    return _blocking(
        slots,
        cls.storage.capacity,
        cls.storage.recharge_rate,
        station_arrivals * design.mix[class_index],
        cls.service_rate,
    )


def _class_blockings(design: StationDesign, comp: Sequence[int], arrivals: float):
    return tuple(
        station_blocking(design, c, comp[c], arrivals) for c in range(design.class_count)
    )


def partition_station(slots: int, design: StationDesign,
                      arrivals: Optional[float] = None) -> tuple[int, ...]:
    """Best split of a station's slots across its classes.

    Exact search over compositions (each class gets at least one slot)
    minimizing the summed class blocking; ties break toward the
    lexicographically smallest composition.
    """
    C = design.class_count
    if slots < C:
        raise InfeasibleAllocationError(
            f"station {design.id}: {slots} slots cannot cover {C} classes"
        )
    lam = design.base_arrival_rate if arrivals is None else arrivals
    best: tuple[float, tuple[int, ...]] | None = None
    for comp in _compositions(slots, C):
        total = sum(_class_blockings(design, comp, lam))
        if best is None or total < best[0]:
            best = (total, comp)
    assert best is not None
    return best[1]


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    """All splits of ``total`` into ``parts`` positive integers, in
    lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _min_slots_single_class(design: StationDesign, class_index: int,
                            arrivals: float, epsilon: float, cap: int) -> Optional[int]:
    """Smallest slot count putting one class at or under the QoS target.

    Blocking is nonincreasing in slots, so exponential growth plus binary
    search finds the threshold with O(log cap) chain solves.
    """
    def ok(s: int) -> bool:
        return station_blocking(design, class_index, s, arrivals) <= epsilon

    if ok(1):
        return 1
    hi = 2
    while hi <= cap and not ok(hi):
        hi *= 2
    if hi > cap:
        if not ok(cap):
            return None
        hi = cap
    lo = hi // 2  # ok(hi) holds, ok(lo) fails
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _station_min_slots(design: StationDesign, arrivals: float, epsilon: float,
                       cap: int) -> Optional[tuple[int, tuple[int, ...]]]:
    """Minimum total slots meeting the target for every class; classes are
    independent, so the station minimum is the sum of per-class minima."""
    comp = []
    for c in range(design.class_count):
        s = _min_slots_single_class(design, c, arrivals, epsilon, cap)
        if s is None:
            return None
        comp.append(s)
    return sum(comp), tuple(comp)


def min_power_for_qos(spec: NetworkSpec) -> tuple[int, AllocationResult]:
    """Least total grid slots meeting the QoS target at fixed arrivals.

    The objective separates across stations, so each station's minimum is
    globally minimal.  Raises with the offending station named when some
    station cannot reach the target even at its cap.
    """
    rows = []
    total = 0
    for st in spec.stations:
        cap = st.slot_cap or _DEFAULT_SLOT_CAP
        found = _station_min_slots(st, st.base_arrival_rate, spec.qos_epsilon, cap)
        if found is None:
            raise InfeasibleAllocationError(
                f"station {st.id}: blocking target {spec.qos_epsilon} unreachable "
                f"within {cap} slots"
            )
        s_total, comp = found
        total += s_total
        for c, s in enumerate(comp):
            b = station_blocking(st, c, s, st.base_arrival_rate)
            rows.append(AllocationRow(st.id, c, s, st.base_arrival_rate * st.mix[c], b, True))
    result = AllocationResult(
        rows=tuple(rows),
        objective=sum(r.blocking for r in rows),
        weighted_blocking=_weighted_from_rows(rows),
        feasible=True,
        diagnostics={"mode": "min-power", "epsilon": spec.qos_epsilon},
    )
    return total, result


def _weighted_from_rows(rows: Sequence[AllocationRow]) -> float:
    lam = sum(r.arrival_rate for r in rows)
    if lam <= 0:
        return 0.0
    return sum(r.arrival_rate * r.blocking for r in rows) / lam


def weighted_blocking(arrival_rates: Sequence[float], blockings: Sequence[float]) -> float:
    """Network service metric: blocking averaged with arrival-rate weights."""
    if len(arrival_rates) != len(blockings):
        raise AllocationError("arrival_rates and blockings differ in length")
    total = float(sum(arrival_rates))
    if total <= 0:
        raise AllocationError("weights undefined: arrival rates sum to zero")
    return float(sum(l * b for l, b in zip(arrival_rates, blockings)) / total)


# ---------------------------------------------------------------------------
# per-station option tables


@dataclass(frozen=True)
class _Option:
    slots: int
    units: int
    arrivals: float
    value: float            # summed class blocking
    composition: tuple[int, ...]
    blockings: tuple[float, ...]
    meets_qos: bool


def _station_options(design: StationDesign, slot_range: range,
                     lattice: Sequence[tuple[int, float]], epsilon: float):
    """Enumerate (slots, arrival point) choices with their best composition.

    ``lattice`` pairs integer lattice units with arrival-rate values; a fixed
    arrival rate is the single pair (0, rate).
    """
    options: list[_Option] = []
    for s in slot_range:
        for units, lam in lattice:
            best: tuple[float, tuple[int, ...], tuple[float, ...]] | None = None
            for comp in _compositions(s, design.class_count):
                bs = _class_blockings(design, comp, lam)
                tot = sum(bs)
                if best is None or tot < best[0]:
                    best = (tot, comp, bs)
            assert best is not None
            tot, comp, bs = best
            ok = all(b <= epsilon for b in bs)
            if ok or design.class_count == 1:
                options.append(_Option(s, units, lam, tot, comp, bs, ok))
                continue
            # the sum-minimizing split may miss the target even though some
            # feasible split exists; search again among feasible splits
            feas: tuple[float, tuple[int, ...], tuple[float, ...]] | None = None
            for comp in _compositions(s, design.class_count):
                bs = _class_blockings(design, comp, lam)
                if all(b <= epsilon for b in bs):
                    tot2 = sum(bs)
                    if feas is None or tot2 < feas[0]:
                        feas = (tot2, comp, bs)
            if feas is not None:
                options.append(_Option(s, units, lam, feas[0], feas[1], feas[2], True))
            else:
                options.append(_Option(s, units, lam, tot, comp, bs, False))
    return options


def _slot_range(spec: NetworkSpec, idx: int, budget: int) -> range:
    st = spec.stations[idx]
    others_min = sum(s.class_count for j, s in enumerate(spec.stations) if j != idx)
    hi = budget - others_min
    if st.slot_cap is not None:
        hi = min(hi, st.slot_cap)
    return range(st.class_count, hi + 1)


# ---------------------------------------------------------------------------
# Eq. 4: slots only, fixed arrivals


def allocate_power(spec: NetworkSpec, budget: Optional[int] = None) -> AllocationResult:
    """Exact slot allocation minimizing total blocking at fixed arrivals.

    Dynamic program over the integer budget with per-station blocking tables.
    Stations whose blocking can stay at or under the QoS target are held
    there when a fully feasible assignment exists; otherwise the result is
    the unconstrained optimum flagged as best-effort.
    """
    budget = spec.slot_budget if budget is None else budget
    if budget is None:
        raise AllocationError("no slot budget given")
    if budget < spec.min_budget:
        raise InfeasibleAllocationError(
            f"budget {budget} below one slot per station class ({spec.min_budget})"
        )
    per_station = []
    for i, st in enumerate(spec.stations):
        lattice = [(0, st.base_arrival_rate)]
        per_station.append(
            _station_options(st, _slot_range(spec, i, budget), lattice,
                             spec.qos_epsilon)
        )
    chosen, feasible = _solve_two_budget_dp(
        per_station, budget, units_total=0, require_qos=True
    )
    return _result_from_options(spec, chosen, feasible,
                                {"mode": "dp", "budget": budget})


def _solve_two_budget_dp(per_station, budget: int, units_total: int,
                         require_qos: bool):
    """Backward DP over (slot budget, lattice units); returns the chosen
    per-station options and whether the QoS-feasible pass succeeded."""
    if require_qos:
        feas_tables = [[o for o in opts if o.meets_qos] for opts in per_station]
        if all(feas_tables):
            chosen = _dp_pass(feas_tables, budget, units_total)
            if chosen is not None:
                return chosen, True
    chosen = _dp_pass(per_station, budget, units_total)
    if chosen is None:
        raise InfeasibleAllocationError(
            "no allocation matches the slot budget and arrival lattice exactly"
        )
    return chosen, False


def _dp_pass(per_station, budget: int, units_total: int):
    n = len(per_station)
    shape = (budget + 1, units_total + 1)
    after = [None] * (n + 1)
    final = np.full(shape, _INF)
    final[0, 0] = 0.0
    after[n] = final
    for k in range(n - 1, -1, -1):
        cur = np.full(shape, _INF)
        nxt = after[k + 1]
        for o in per_station[k]:
            if o.slots > budget or o.units > units_total:
                continue
            window = nxt[: budget + 1 - o.slots, : units_total + 1 - o.units]
            target = cur[o.slots :, o.units :]
            np.minimum(target, window + o.value, out=target)
        after[k] = cur
    if not np.isfinite(after[0][budget, units_total]):
        return None
    # forward reconstruction, preferring the smallest slot count then the
    # smallest arrival point so ties yield the lexicographically least vector
    chosen = []
    b, u = budget, units_total
    for k in range(n):
        want = after[k][b, u]
        pick = None
        for o in sorted(per_station[k], key=lambda o: (o.slots, o.units)):
            if o.slots > b or o.units > u:
                continue
            if o.value + after[k + 1][b - o.slots, u - o.units] == want:
                pick = o
                break
        if pick is None:  # guard against float drift between passes
            for o in sorted(per_station[k], key=lambda o: (o.slots, o.units)):
                if o.slots > b or o.units > u:
                    continue
                if math.isclose(
                    o.value + after[k + 1][b - o.slots, u - o.units], want,
                    rel_tol=1e-12, abs_tol=1e-15,
                ):
                    pick = o
                    break
        assert pick is not None
        chosen.append(pick)
        b -= pick.slots
        u -= pick.units
    return chosen


def _result_from_options(spec: NetworkSpec, chosen, feasible: bool,
                         diagnostics: dict) -> AllocationResult:
    rows = []
    for st, o in zip(spec.stations, chosen):
        for c in range(st.class_count):
            rows.append(
                AllocationRow(
                    st.id,
                    c,
                    o.composition[c],
                    o.arrivals * st.mix[c],
                    o.blockings[c],
                    o.blockings[c] <= spec.qos_epsilon,
                )
            )
    diagnostics = dict(diagnostics)
    diagnostics["options_expanded"] = sum(1 for _ in rows)
    return AllocationResult(
        rows=tuple(rows),
        objective=float(sum(o.value for o in chosen)),
        weighted_blocking=_weighted_from_rows(rows),
        feasible=feasible,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# arrival lattices (Eq. 5 boxes / Eq. 6 simplex)


@dataclass(frozen=True)
class _Lattice:
    step: float
    per_station: tuple[tuple[tuple[int, float], ...], ...]
    units_total: int


def _build_lattice(spec: NetworkSpec, boxes: Sequence[tuple[float, float]],
                   total: float, max_units: int = _MAX_LATTICE_UNITS) -> _Lattice:
    """Discretize per-station arrival boxes onto one shared quantum.

    The quantum is the narrowest box width divided by (lattice_points - 1),
    floored so the conservation axis stays at or under ``max_units`` units;
    every station's nominal lattice is snapped onto the shared grid, keeping
    the conservation constraint an exact integer equation.
    """
    points = spec.lattice_points
    widths = [hi - lo for lo, hi in boxes]
    positive = [w for w in widths if w > 0]
    if not positive:
        step = max(total, max(hi for _, hi in boxes), 1.0) / (points - 1)
    else:
        step = min(positive) / (points - 1)
    if total > 0:
        step = max(step, total / max_units)
    else:
        step = max(step, max(hi for _, hi in boxes) / max_units)
    per_station = []
    for lo, hi in boxes:
        if hi == lo:
            # point box: keep the exact rate, units only for the conservation sum
            per_station.append(((int(round(lo / step)), lo),))
            continue
        nominal = [lo + j * (hi - lo) / (points - 1) for j in range(points)]
        ks = {int(round(v / step)) for v in nominal}
        lo_k = math.ceil(lo / step - 1e-9)
        hi_k = math.floor(hi / step + 1e-9)
        ks = {min(max(k, lo_k), hi_k) for k in ks}
        per_station.append(tuple(sorted((k, k * step) for k in ks)))
    return _Lattice(step, tuple(per_station), int(round(total / step)))


def allocate_power_and_arrivals(spec: NetworkSpec,
                                budget: Optional[int] = None) -> AllocationResult:
    """Joint slot and arrival-rate allocation with per-station arrival boxes.

    Arrival choices live on a shared lattice (see ``_build_lattice``); when
    ``conserve_arrivals`` is set the lattice units must add up to the total
    arrival budget exactly, which keeps the realized sum within one lattice
    step of the target.  Exact DP over both budgets.
    """
    budget = spec.slot_budget if budget is None else budget
    if budget is None:
        raise AllocationError("no slot budget given")
    if spec.arrival_bounds is None:
        raise AllocationError("arrival_bounds required for arrival shaping")
    if budget < spec.min_budget:
        raise InfeasibleAllocationError(
            f"budget {budget} below one slot per station class ({spec.min_budget})"
        )
    total = spec.total_arrivals
    if total is None:
        total = sum(st.base_arrival_rate for st in spec.stations)
    lattice = _build_lattice(spec, spec.arrival_bounds, total)
    per_station = []
    for i, st in enumerate(spec.stations):
        per_station.append(
            _station_options(st, _slot_range(spec, i, budget),
                             lattice.per_station[i], spec.qos_epsilon)
        )
    if spec.conserve_arrivals:
        chosen, feasible = _solve_two_budget_dp(
            per_station, budget, lattice.units_total, require_qos=True
        )
    else:
        collapsed = [
            [min(group, key=lambda o: (o.value, o.units))
             for _, group in itertools.groupby(
                 sorted(opts, key=lambda o: o.slots), key=lambda o: o.slots)]
            for opts in per_station
        ]
        collapsed = [[replace(o, units=0) for o in opts] for opts in collapsed]
        chosen, feasible = _solve_two_budget_dp(collapsed, budget, 0, require_qos=True)
    diag = {
        "mode": "dp-lattice",
        "budget": budget,
        "lattice_step": lattice.step,
        "conserve_arrivals": spec.conserve_arrivals,
    }
    return _result_from_options(spec, chosen, feasible, diag)


def allocate_small_area(spec: NetworkSpec, budget: Optional[int] = None) -> AllocationResult:
    """Free routing inside a small area: arrivals split across the stations
    subject only to the conservation total.

    For identical station designs with an evenly divisible budget and the
    balanced arrival rate on the lattice, the balanced allocation is returned
    (the published small-area solution); the unconstrained DP optimum is kept
    in the diagnostics.  Mixed designs fall through to the exact DP.
    """
    budget = spec.slot_budget if budget is None else budget
    if budget is None:
        raise AllocationError("no slot budget given")
    total = spec.total_arrivals
    if total is None:
        total = sum(st.base_arrival_rate for st in spec.stations)
    storages = {
        tuple(c.storage.capacity for c in st.classes) for st in spec.stations
    }
    if len(storages) != 1:
        raise AllocationError("small-area routing expects identical storage sizes")
    boxes = tuple((0.0, total) for _ in spec.stations)
    shaped = replace(spec, arrival_bounds=boxes, total_arrivals=total,
                     conserve_arrivals=True)
    dp = allocate_power_and_arrivals(shaped, budget)
    n = len(spec.stations)
    identical = len({st.design_key() for st in spec.stations}) == 1
    lam_each = total / n
    step = dp.diagnostics["lattice_step"]
    on_lattice = abs(lam_each / step - round(lam_each / step)) < 1e-9
    if not (identical and budget % n == 0 and on_lattice):
        return dp
    # balanced rule for identical stations
    s_each = budget // n
    rows = []
    feasible = True
    for st in spec.stations:
        comp = partition_station(s_each, st, lam_each)
        for c, s in enumerate(comp):
            b = station_blocking(st, c, s, lam_each)
            ok = b <= spec.qos_epsilon
            feasible &= ok
            rows.append(AllocationRow(st.id, c, s, lam_each * st.mix[c], b, ok))
    if not feasible and dp.feasible:
        return dp
    return AllocationResult(
        rows=tuple(rows),
        objective=float(sum(r.blocking for r in rows)),
        weighted_blocking=_weighted_from_rows(rows),
        feasible=feasible,
        diagnostics={
            "mode": "balanced",
            "budget": budget,
            "lattice_step": step,
            "dp_objective": dp.objective,
            "conserve_arrivals": True,
        },
    )


def min_power_with_shaping(spec: NetworkSpec) -> tuple[int, dict]:
    """Least total slots meeting the QoS target when arrivals are shapeable.

    1-D DP over the shared arrival lattice: each station contributes the
    minimum slots meeting the target at its chosen arrival point.  Honors
    ``conserve_arrivals``.
    """
    if spec.arrival_bounds is None:
        raise AllocationError("arrival_bounds required for arrival shaping")
    total = spec.total_arrivals
    if total is None:
        total = sum(st.base_arrival_rate for st in spec.stations)
    lattice = _build_lattice(spec, spec.arrival_bounds, total)
    per_station = []
    for st, lat in zip(spec.stations, lattice.per_station):
        cap = st.slot_cap or _DEFAULT_SLOT_CAP
        opts = []
        for k, lam in lat:
            found = _station_min_slots(st, lam, spec.qos_epsilon, cap)
            if found is not None:
                opts.append((k, lam, found[0]))
        if not opts:
            raise InfeasibleAllocationError(
                f"station {st.id}: target unreachable anywhere in its arrival box"
            )
        per_station.append(opts)
    if not spec.conserve_arrivals:
        slots = {st.id: min(o[2] for o in opts)
                 for st, opts in zip(spec.stations, per_station)}
        return sum(slots.values()), {"per_station": slots,
                                     "lattice_step": lattice.step}
    U = lattice.units_total
    big = 10**9
    forward = np.full(U + 1, big, dtype=np.int64)
    forward[0] = 0
    for opts in per_station:
        nxt = np.full(U + 1, big, dtype=np.int64)
        for k, _, s in opts:
            if k > U:
                continue
            np.minimum(nxt[k:], forward[: U + 1 - k] + s, out=nxt[k:])
        forward = nxt
    if forward[U] >= big:
        raise InfeasibleAllocationError(
            "no shapeable arrival split meets the QoS target at the "
            "conservation total"
        )
    return int(forward[U]), {"lattice_step": lattice.step}


# ---------------------------------------------------------------------------
# relax-and-round comparison mode


def allocate_power_relax_round(spec: NetworkSpec, budget: Optional[int] = None,
                               surface=None) -> AllocationResult:
    """Continuous-relaxation + ceiling heuristic, for comparison with the DP.

    Minimizes the response-surface blocking over real slot counts (SLSQP),
    ceils to integers, then re-balances onto the budget by greedily removing
    the slot whose removal raises the exact blocking least.
    """
    from scipy.optimize import minimize

    from .metamodel import BUILTIN_COEFFICIENTS, eval_rsm

    surface = BUILTIN_COEFFICIENTS if surface is None else surface
    budget = spec.slot_budget if budget is None else budget
    if budget is None:
        raise AllocationError("no slot budget given")
    if budget < spec.min_budget:
        raise InfeasibleAllocationError(
            f"budget {budget} below one slot per station class ({spec.min_budget})"
        )
    pairs = []  # (station index, class index, lambda_c, storage, recharge)
    for i, st in enumerate(spec.stations):
        for c, cls in enumerate(st.classes):
            pairs.append((i, c, st.base_arrival_rate * st.mix[c], cls))

    def objective(x):
        return sum(
            eval_rsm(surface, x[j], cls.storage.capacity,
                     cls.storage.recharge_rate, lam)
            for j, (_, _, lam, cls) in enumerate(pairs)
        )

    x0 = np.full(len(pairs), budget / len(pairs))
    res = minimize(
        objective,
        x0,
        method="SLSQP",
        bounds=[(1.0, float(budget))] * len(pairs),
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - budget}],
    )
    slots = [max(1, math.ceil(v - 1e-9)) for v in res.x]

    def exact(j, s):
        i, c, _, _ = pairs[j]
        return station_blocking(spec.stations[i], c, s, spec.stations[i].base_arrival_rate)

    # ceiling overshoots the budget; drop slots where it hurts least
    while sum(slots) > budget:
        best_j, best_rise = None, None
        for j in range(len(pairs)):
            if slots[j] <= 1:
                continue
            rise = exact(j, slots[j] - 1) - exact(j, slots[j])
            if best_rise is None or rise < best_rise:
                best_j, best_rise = j, rise
        if best_j is None:
            raise InfeasibleAllocationError("cannot re-balance onto the budget")
        slots[best_j] -= 1
    while sum(slots) < budget:  # relaxation landed under the budget: add greedily
        drops = [exact(j, slots[j]) - exact(j, slots[j] + 1) for j in range(len(pairs))]
        slots[int(np.argmax(drops))] += 1
    rows = []
    for j, (i, c, lam_c, _) in enumerate(pairs):
        b = exact(j, slots[j])
        rows.append(AllocationRow(spec.stations[i].id, c, slots[j], lam_c, b,
                                  b <= spec.qos_epsilon))
    return AllocationResult(
        rows=tuple(rows),
        objective=float(sum(r.blocking for r in rows)),
        weighted_blocking=_weighted_from_rows(rows),
        feasible=all(r.meets_qos for r in rows),
        diagnostics={"mode": "relax-round", "budget": budget,
                     "continuous_objective": float(res.fun)},
    )

"""Second-order response-surface surrogate for the blocking probability.

Blocking is bounded to [0, 1], so the quadratic model is fitted to the logit
of the exact chain values and mapped back through the inverse logit.  The
surface covers the four station design factors: grid slots, storage capacity,
storage recharge rate and arrival rate (service rate held fixed by the design
grid).
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chain import ClassPars, StoragePars, blocking_probability

__all__ = [
    "CLAMP_EPSILON",
    "SingularDesignError",
    "RsmCoefficients",
    "BUILTIN_COEFFICIENTS",
    "DesignGrid",
    "FitReport",
    "logit",
    "inverse_logit",
    "eval_rsm",
    "fit_rsm",
    "rsm_jacobian",
    "rsm_hessian",
    "solve_design_grid",
]

CLAMP_EPSILON = 1e-9

TERM_NAMES = (
    "intercept",
    "slots",
    "storage",
    "recharge",
    "arrivals",
    "slots_storage",
    "slots_recharge",
    "slots_arrivals",
    "storage_recharge",
    "storage_arrivals",
    "recharge_arrivals",
    "slots_sq",
    "storage_sq",
    "recharge_sq",
    "arrivals_sq",
)


class SingularDesignError(ValueError):
    """Raised when the training design does not identify all 15 terms."""

    def __init__(self, deficient_terms):
        self.deficient_terms = tuple(deficient_terms)
        super().__init__(
            "design matrix is rank deficient; unidentified directions involve: "
            + ", ".join(self.deficient_terms)
        )


@dataclass(frozen=True)
class RsmCoefficients:
    """15 coefficients of the quadratic logit-scale surface, fixed order:
    intercept; linear slots, storage, recharge, arrivals; the six pairwise
    cross terms; the four squares."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 15:
            raise ValueError(f"expected 15 coefficients, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "values", vals)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TERM_NAMES)
            w.writerow([repr(v) for v in self.values])

    @classmethod
    def from_csv(cls, path: str) -> "RsmCoefficients":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if len(rows) < 2 or tuple(rows[0]) != TERM_NAMES:
            raise ValueError(f"{path} is not a coefficient file (bad header)")
        return cls(tuple(float(v) for v in rows[1]))


# Built-in reference surface for the default design space (service rate 2).
BUILTIN_COEFFICIENTS = RsmCoefficients(
    (
        -3.990,   # intercept
        -2.666,   # slots
        -1.6152,  # storage
        -0.1492,  # recharge
        3.840,    # arrivals
        -0.0645,  # slots x storage
        -0.002,   # slots x recharge
        0.209,    # slots x arrivals
        -0.0078,  # storage x recharge
        0.094,    # storage x arrivals
        0.003,    # recharge x arrivals
        -0.0175,  # slots^2
        0.055,    # storage^2
        0.0089,   # recharge^2
        -0.271,   # arrivals^2
    )
)


def logit(p: float, clamp_epsilon: float = CLAMP_EPSILON):
    """log(p / (1-p)); degenerate inputs are clamped to the epsilon band.

    Returns (value, clamped_flag).
    """
    clamped = False
    if p <= clamp_epsilon:
        p, q = clamp_epsilon, 1.0 - clamp_epsilon
        clamped = True
    elif p >= 1.0 - clamp_epsilon:
        p, q = 1.0 - clamp_epsilon, clamp_epsilon
        clamped = True
    else:
        q = 1.0 - p
    return math.log(p / q), clamped


def inverse_logit(y: float) -> float:
    # stable for large |y|; output strictly inside (0, 1) even past underflow
    if y >= 0:
        p = 1.0 / (1.0 + math.exp(-y))
    else:
        z = math.exp(y)
        p = z / (1.0 + z)
    if p <= 0.0:
        return math.nextafter(0.0, 1.0)
    if p >= 1.0:
        return math.nextafter(1.0, 0.0)
    return p


def basis_row(slots, storage, recharge, arrivals) -> np.ndarray:
    s, r, v, a = float(slots), float(storage), float(recharge), float(arrivals)
    return np.array(
        [1.0, s, r, v, a, s * r, s * v, s * a, r * v, r * a, v * a,
         s * s, r * r, v * v, a * a]
    )


def eval_rsm(coeffs: RsmCoefficients, slots, storage, recharge, arrivals) -> float:
    """Surface prediction of the blocking probability, in [0, 1).

    Zero arrival rate is zero blocking by definition; otherwise the quadratic
    form is evaluated on the logit scale and mapped back.
    """
    if arrivals == 0:
        return 0.0
    y = float(basis_row(slots, storage, recharge, arrivals) @ coeffs.as_array())
    return inverse_logit(y)


def rsm_jacobian(coeffs: RsmCoefficients, slots, storage, recharge, arrivals) -> np.ndarray:
    """Gradient of the logit-scale surface w.r.t. (slots, storage, recharge,
    arrivals), derived analytically from the quadratic form."""
    c = coeffs.values
    s, r, v, a = float(slots), float(storage), float(recharge), float(arrivals)
    return np.array(
        [
            c[1] + c[5] * r + c[6] * v + c[7] * a + 2 * c[11] * s,
            c[2] + c[5] * s + c[8] * v + c[9] * a + 2 * c[12] * r,
            c[3] + c[6] * s + c[8] * r + c[10] * a + 2 * c[13] * v,
            c[4] + c[7] * s + c[9] * r + c[10] * v + 2 * c[14] * a,
        ]
    )


def rsm_hessian(coeffs: RsmCoefficients) -> np.ndarray:
    """Constant symmetric Hessian of the logit-scale surface."""
    c = coeffs.values
    return np.array(
        [
            [2 * c[11], c[5], c[6], c[7]],
            [c[5], 2 * c[12], c[8], c[9]],
            [c[6], c[8], 2 * c[13], c[10]],
            [c[7], c[9], c[10], 2 * c[14]],
        ]
    )


@dataclass(frozen=True)
class DesignGrid:
    """Factorial design over the four factors.

    Defaults are the full reference design: slots and storage 1..15 step 1,
    arrivals 0.25..30 step 0.25, recharge 2..10 step 1, service rate fixed
    at 2.  ``strides`` multiplies the step of each factor in design-table
    row order (slots, storage, arrivals, recharge), so the CLI default
    (1, 1, 4, 1) thins the arrivals axis to step 1.0.
    """

    slots_range: tuple[int, int, int] = (1, 15, 1)
    storage_range: tuple[int, int, int] = (1, 15, 1)
    arrivals_range: tuple[float, float, float] = (0.25, 30.0, 0.25)
    recharge_range: tuple[int, int, int] = (2, 10, 1)
    service_rate: float = 2.0
    strides: tuple[int, int, int, int] = (1, 1, 1, 1)

    def axis_values(self):
        def ints(rng, stride):
            lo, hi, step = rng
            return list(range(lo, hi + 1, step * stride))

        lo, hi, step = self.arrivals_range
        stride = self.strides[2]
        count = int(round((hi - lo) / (step * stride))) + 1
        arrivals = [round(lo + i * step * stride, 10) for i in range(count)]
        arrivals = [a for a in arrivals if a <= hi + 1e-9]
        return (
            ints(self.slots_range, self.strides[0]),
            ints(self.storage_range, self.strides[1]),
            ints(self.recharge_range, self.strides[3]),
            arrivals,
        )

    def points(self):
        slots, storage, recharge, arrivals = self.axis_values()
        for s in slots:
            for r in storage:
                for v in recharge:
                    for a in arrivals:
                        yield (s, r, v, a)

    @property
    def size(self) -> int:
        slots, storage, recharge, arrivals = self.axis_values()
        return len(slots) * len(storage) * len(recharge) * len(arrivals)


def _solve_point(args):
    s, r, v, a, mu = args
    pars = ClassPars(a, mu, s, StoragePars(r, float(v)))
    return blocking_probability(pars)


def solve_design_grid(grid: DesignGrid, workers: int | None = None):
    """Exact chain blocking over every grid point.

    Returns (points, values).  Points are solved in parallel processes when
    ``workers`` allows; each solve is independent.
    """
    points = list(grid.points())
    jobs = [(s, r, v, a, grid.service_rate) for (s, r, v, a) in points]
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    if workers > 1 and len(jobs) >= 256:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_solve_point, jobs, chunksize=64))
    else:
        values = [_solve_point(j) for j in jobs]
    return points, np.array(values)


@dataclass(frozen=True)
class FitReport:
    coefficients: RsmCoefficients
    r_square: float                # logit scale
    r_square_probability: float
    rmse: float                    # logit scale
    rmse_probability: float
    n_points: int
    n_clamped: int = 0

    def __post_init__(self):
        if not 0.0 <= self.r_square <= 1.0:
            raise ValueError("r_square out of [0, 1]")
        if self.rmse < 0 or self.rmse_probability < 0:
            raise ValueError("rmse must be >= 0")


def fit_rsm(samples: Sequence[tuple], values: Iterable[float] | None = None) -> FitReport:
    """Ordinary least squares on logit(blocking) against the 15-term basis.

    ``samples`` is either a sequence of ((slots, storage, recharge, arrivals),
    blocking) pairs, or the points alone with ``values`` supplied separately.
    Blocking values at or below the clamp epsilon are clamped before the
    transform and counted in the report.
    """
    if values is None:
        pts = [p for p, _ in samples]
        vals = [v for _, v in samples]
    else:
        pts = list(samples)
        vals = list(values)
    if len(pts) != len(vals):
        raise ValueError("points and values differ in length")
    if len(pts) < 15:
        raise ValueError(f"need at least 15 samples to fit 15 terms, got {len(pts)}")
    for axis in range(4):
        if len({p[axis] for p in pts}) < 2:
            raise SingularDesignError([TERM_NAMES[1 + axis]])
    X = np.vstack([basis_row(*p) for p in pts])
    y = np.empty(len(vals))
    n_clamped = 0
    for i, b in enumerate(vals):
        if not 0.0 <= b < 1.0:
            raise ValueError(f"blocking value out of [0, 1): {b}")
        y[i], clamped = logit(b)
        n_clamped += clamped
    rank = np.linalg.matrix_rank(X)
    if rank < 15:
        _, _, vt = np.linalg.svd(X)
        deficient = set()
        for row in vt[rank:]:
            for j in np.nonzero(np.abs(row) > 0.3)[0]:
                deficient.add(TERM_NAMES[j])
        raise SingularDesignError(sorted(deficient) or list(TERM_NAMES))
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    pred = X @ beta
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    prob = np.array([inverse_logit(v) for v in pred])
    obs = np.array([inverse_logit(v) for v in y])
    ss_res_p = float(((obs - prob) ** 2).sum())
    ss_tot_p = float(((obs - obs.mean()) ** 2).sum())
    r2_p = 1.0 if ss_tot_p == 0 else max(0.0, 1.0 - ss_res_p / ss_tot_p)
    return FitReport(
        coefficients=RsmCoefficients(tuple(beta)),
        r_square=min(1.0, r2),
        r_square_probability=min(1.0, r2_p),
        rmse=math.sqrt(ss_res / len(pts)),
        rmse_probability=math.sqrt(ss_res_p / len(pts)),
        n_points=len(pts),
        n_clamped=n_clamped,
    )

"""Empirical bootstrap confidence intervals over test-set records.

Resample plans are generated with a per-iteration splitmix64-derived seed so
the index table is identical for any evaluation order or worker count, and
can be stored and reused so every algorithm is scored on the same samples.
Rows violating the every-class-positive constraint are discarded and redrawn.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .records import LabelMatrix, PredictionMatrix

PLAN_MAGIC = b"ECGBPLAN"
CONSTRAINTS = ("none", "every-class-positive")

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One output of the splitmix64 stream at state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def iteration_seed(master_seed: int, iteration: int) -> int:
    """Order-independent 64-bit seed for one bootstrap iteration."""
    return _splitmix64((master_seed + iteration * 0x9E3779B97F4A7C15) & _MASK64)


@dataclass(frozen=True)
class BootstrapPlan:
    """A stored resample index table: n_iterations rows of n_records indices."""

    n_records: int
    n_iterations: int
    master_seed: int
    constraint: str
    indices: np.ndarray

    def __post_init__(self):
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        idx = np.asarray(self.indices, dtype=np.uint32)
        if idx.shape != (self.n_iterations, self.n_records):
            raise ValueError(
                f"index table shape {idx.shape} != "
                f"({self.n_iterations}, {self.n_records})"
            )
        if idx.size and idx.max() >= self.n_records:
            raise ValueError("plan indices out of range")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class BootstrapReport:
    """Point estimate with its empirical CI and the compact printed form."""

    point: float
    lower: float
    upper: float
    formatted: str

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("CI lower bound exceeds upper bound")


def make_plan(
    labels: LabelMatrix,
    n_iterations: int = 1000,
    master_seed: int = 0,
    constraint: str = "every-class-positive",
    max_attempts: int = 10_000,
) -> BootstrapPlan:
    """Draw the with-replacement resample table, redrawing constrained rows.

    Under "every-class-positive" each row must contain at least one positive
    record for every class; invalid rows are discarded and redrawn from the
    same per-iteration stream, up to ``max_attempts`` per row.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    n = labels.n_records
    if n < 1:
        raise ValueError("cannot bootstrap an empty label matrix")
    positives = labels.values == 1.0
    if constraint == "every-class-positive":
        per_class = positives.sum(axis=0)
        missing = [c for c, p in zip(labels.class_codes, per_class) if p == 0]
        if missing:
            raise ValueError(
                f"constraint unsatisfiable: classes with zero test positives: {missing}"
            )
    table = np.empty((n_iterations, n), dtype=np.uint32)
    for i in range(n_iterations):
        rng = np.random.Generator(np.random.PCG64(iteration_seed(master_seed, i)))
        for attempt in range(max_attempts):
            row = rng.integers(0, n, size=n, dtype=np.uint32)
            if constraint == "none" or positives[row].any(axis=0).all():
                table[i] = row
                break
        else:
            rarest = labels.class_codes[int(np.argmin(positives.sum(axis=0)))]
            raise ValueError(
                f"redraw budget exceeded at iteration {i}: rarest class {rarest!r} "
                f"was never drawn in {max_attempts} attempts"
            )
    return BootstrapPlan(
        n_records=n,
        n_iterations=n_iterations,
        master_seed=master_seed,
        constraint=constraint,
        indices=table,
    )


def ci(
    metric_fn: Callable[[PredictionMatrix, LabelMatrix], float],
    preds: PredictionMatrix,
    labels: LabelMatrix,
    plan: BootstrapPlan,
    alpha: float = 0.05,
    decimals: int = 3,
) -> BootstrapReport:
    """Point estimate on the full set plus the empirical percentile CI.

    Lower/upper are the alpha/2 and 1-alpha/2 percentiles of the metric over
    the plan's rows (linear interpolation between order statistics).
    """
    if plan.n_records != labels.n_records:
        raise ValueError(
            f"plan covers {plan.n_records} records but labels have {labels.n_records}"
        )
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    point = float(metric_fn(preds, labels))
    values = np.empty(plan.n_iterations)
    for i in range(plan.n_iterations):
        idx = plan.indices[i]
        try:
            values[i] = float(metric_fn(preds.take(idx), labels.take(idx)))
        except ValueError as exc:
            raise ValueError(f"metric undefined on bootstrap iteration {i}: {exc}") from exc
    lower, upper = np.percentile(values, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return BootstrapReport(
        point=point,
        lower=float(lower),
        upper=float(upper),
        formatted=format_pm(point, float(lower), float(upper), decimals=decimals),
    )


def format_pm(point: float, lower: float, upper: float, decimals: int = 3) -> str:
    """Compact point(deviation) string, e.g. 0.743 with CI (0.735, 0.752)
    prints as "0.743(09)".

    The point is rounded half away from zero; the maximal absolute deviation
    to either bound is ceiling-rounded onto the last printed digit scale and
    zero-padded to two digits.
    """
    if decimals < 1:
        raise ValueError("decimals must be >= 1")
    quantum = Decimal(1).scaleb(-decimals)
    point_str = str(Decimal(repr(float(point))).quantize(quantum, rounding=ROUND_HALF_UP))
    dev = max(abs(point - lower), abs(point - upper))
    dev_units = max(0, math.ceil(dev * 10**decimals - 1e-9))
    return f"{point_str}({dev_units:02d})"


def save_plan(path: str | Path, plan: BootstrapPlan) -> None:
    """Serialize a plan: magic, four u64 LE fields, uint32 LE index table."""
    payload = PLAN_MAGIC + struct.pack(
        "<QQQQ",
        plan.n_records,
        plan.n_iterations,
        plan.master_seed,
        CONSTRAINTS.index(plan.constraint),
    )
    payload += plan.indices.astype("<u4").tobytes(order="C")
    Path(path).write_bytes(payload)


def load_plan(path: str | Path) -> BootstrapPlan:
    raw = Path(path).read_bytes()
    if raw[: len(PLAN_MAGIC)] != PLAN_MAGIC:
        raise ValueError(f"{path}: not a bootstrap plan (bad magic)")
    header_end = len(PLAN_MAGIC) + 32
    if len(raw) < header_end:
        raise ValueError(f"{path}: truncated plan header")
    n_records, n_iterations, master_seed, tag = struct.unpack(
        "<QQQQ", raw[len(PLAN_MAGIC) : header_end]
    )
    if tag >= len(CONSTRAINTS):
        raise ValueError(f"{path}: unknown constraint tag {tag}")
    expected = header_end + 4 * n_records * n_iterations
    if len(raw) != expected:
        raise ValueError(f"{path}: file size {len(raw)} != expected {expected}")
    indices = np.frombuffer(raw[header_end:], dtype="<u4").reshape(n_iterations, n_records)
    return BootstrapPlan(
        n_records=int(n_records),
        n_iterations=int(n_iterations),
        master_seed=int(master_seed),
        constraint=CONSTRAINTS[tag],
        indices=indices.copy(),
    )

"""Cross-validation fold construction.

Iterative stratification (rarest label first) over patients or records, the
clean-tail variant that reserves the last two folds for human-validated
records, train/val/test role assignment, and label-stratified training-set
subsampling for transfer-curve experiments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .records import Record


@dataclass(frozen=True)
class FoldAssignment:
    """A partition of records into folds 1..K."""

    record_ids: tuple[str, ...]
    folds: np.ndarray
    k: int

    def __post_init__(self):
        folds = np.asarray(self.folds, dtype=np.intp)
        if folds.shape != (len(self.record_ids),):
            raise ValueError("one fold per record required")
        if folds.size and (folds.min() < 1 or folds.max() > self.k):
            raise ValueError(f"folds must lie in [1, {self.k}]")
        if len(set(self.record_ids)) != len(self.record_ids):
            raise ValueError("duplicate record ids in fold assignment")
        object.__setattr__(self, "folds", folds)

    def fold_of(self) -> dict[str, int]:
        return {rid: int(f) for rid, f in zip(self.record_ids, self.folds)}

    def ids_in(self, folds: Sequence[int]) -> tuple[str, ...]:
        wanted = set(folds)
        return tuple(
            rid for rid, f in zip(self.record_ids, self.folds) if int(f) in wanted
        )

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record_id", "fold"])
            for rid, fold in zip(self.record_ids, self.folds):
                writer.writerow([rid, int(fold)])

    @classmethod
    def load(cls, path: str | Path) -> "FoldAssignment":
        ids: list[str] = []
        folds: list[int] = []
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["record_id", "fold"]:
                raise ValueError(f"{path}: expected header record_id,fold")
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                folds.append(int(row[1]))
        return cls(record_ids=tuple(ids), folds=np.array(folds), k=max(folds))


def _base_capacities(total: int, k: int) -> list[int]:
    base = total // k
    caps = [base] * k
    for i in range(total % k):
        caps[i] += 1
    return caps


def _stratify_pool(
    carriers: list[str],
    label_sets: dict[str, frozenset[str]],
    weights: dict[str, int],
    capacities: list[float],
    rng: np.random.Generator,
) -> dict[str, int]:
    """Greedy iterative stratification of one carrier pool onto folds.

    Repeatedly takes the label with the fewest unassigned carriers and sends
    each of its carriers to the fold with the largest remaining demand for
    that label; ties break on remaining capacity, then on a seeded draw.
    Folds with zero initial capacity never receive carriers.
    """
    n_folds = len(capacities)
    total_cap = float(sum(capacities))
    if total_cap <= 0:
        raise ValueError("no fold capacity available")
    label_counts: dict[str, int] = {}
    for c in carriers:
        for lab in label_sets[c]:
            label_counts[lab] = label_counts.get(lab, 0) + 1
    # desired carrier count per fold per label, proportional to capacity
    desired = {
        lab: [count * cap / total_cap for cap in capacities]
        for lab, count in label_counts.items()
    }
    remaining = [float(c) for c in capacities]
    eligible = [i for i in range(n_folds) if capacities[i] > 0]
    assignment: dict[str, int] = {}

    order = list(carriers)
    rng.shuffle(order)
    unassigned = set(order)
    live_counts = dict(label_counts)  # among unassigned carriers

    def place(carrier: str, fold: int) -> None:
        assignment[carrier] = fold
        unassigned.discard(carrier)
        remaining[fold] -= weights[carrier]
        for lab in label_sets[carrier]:
            desired[lab][fold] -= 1.0
            live_counts[lab] -= 1

    def pick_fold(folds: list[int], key_fn) -> int:
        best = max(key_fn(f) for f in folds)
        tied = [f for f in folds if key_fn(f) == best]
        if len(tied) > 1:
            by_cap = max(remaining[f] for f in tied)
            tied = [f for f in tied if remaining[f] == by_cap]
        if len(tied) > 1:
            return tied[int(rng.integers(len(tied)))]
        return tied[0]

    def open_folds() -> list[int]:
        folds = [f for f in eligible if remaining[f] > 0]
        return folds or eligible

    while True:
        active = {lab: n for lab, n in live_counts.items() if n > 0}
        if not active:
            break
        rare = min(active, key=lambda lab: (active[lab], lab))
        for carrier in [c for c in order if c in unassigned and rare in label_sets[c]]:
            place(carrier, pick_fold(open_folds(), lambda f: desired[rare][f]))
    for carrier in [c for c in order if c in unassigned]:
        place(carrier, pick_fold(open_folds(), lambda f: remaining[f]))
    return assignment


def _proportional_share(amount: int, caps: Sequence[int]) -> list[int]:
    """Split ``amount`` across folds proportional to caps (largest remainder)."""
    total = sum(caps)
    if total == 0:
        return [0] * len(caps)
    exact = [amount * c / total for c in caps]
    floors = [int(np.floor(e)) for e in exact]
    short = amount - sum(floors)
    order = sorted(range(len(caps)), key=lambda i: exact[i] - floors[i], reverse=True)
    for i in order[:short]:
        floors[i] += 1
    return floors


def stratified_folds(
    records: Sequence[Record],
    k: int = 10,
    mode: str = "patient",
    seed: int = 0,
    clean_tail: bool = False,
) -> FoldAssignment:
    """Assign records to K folds by iterative stratification.

    In patient mode all of a patient's records share a fold and the patient's
    label set is the union over its records. With ``clean_tail`` the last two
    folds are filled exclusively with human-validated records (patient mode:
    patients whose every record is validated).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if mode not in ("patient", "record"):
        raise ValueError(f"mode must be 'patient' or 'record', got {mode!r}")
    if not records:
        raise ValueError("no records to assign")
    rng = np.random.Generator(np.random.PCG64(seed))

    if mode == "patient":
        members: dict[str, list[Record]] = {}
        for rec in records:
            members.setdefault(rec.patient_id, []).append(rec)
        carriers = list(members)
        label_sets = {
            pid: frozenset(c for rec in recs for c in rec.statement_codes)
            for pid, recs in members.items()
        }
        weights = {pid: len(recs) for pid, recs in members.items()}
        validated = {
            pid: all(rec.validated_by_human for rec in recs)
            for pid, recs in members.items()
        }
    else:
        members = {rec.record_id: [rec] for rec in records}
        if len(members) != len(records):
            raise ValueError("duplicate record ids")
        carriers = list(members)
        label_sets = {rec.record_id: frozenset(rec.statement_codes) for rec in records}
        weights = {rid: 1 for rid in carriers}
        validated = {rec.record_id: rec.validated_by_human for rec in records}

    caps = _base_capacities(len(records), k)
    if not clean_tail:
        assignment = _stratify_pool(carriers, label_sets, weights, [float(c) for c in caps], rng)
    else:
        if k < 3:
            raise ValueError("clean_tail needs k >= 3")
        clean = [c for c in carriers if validated[c]]
        rest = [c for c in carriers if not validated[c]]
        tail_cap = caps[k - 2] + caps[k - 1]
        clean_weight = sum(weights[c] for c in clean)
        if clean_weight < tail_cap:
            raise ValueError(
                f"insufficient validated records for two clean folds: "
                f"have {clean_weight}, need {tail_cap}"
            )
        head_share = _proportional_share(clean_weight - tail_cap, caps[: k - 2])
        clean_caps = [float(c) for c in head_share] + [float(caps[k - 2]), float(caps[k - 1])]
        assignment = _stratify_pool(clean, label_sets, weights, clean_caps, rng)
        used = [0.0] * k
        for carrier, fold in assignment.items():
            used[fold] += weights[carrier]
        rest_caps = [max(0.0, caps[i] - used[i]) for i in range(k - 2)] + [0.0, 0.0]
        assignment.update(_stratify_pool(rest, label_sets, weights, rest_caps, rng))

    record_ids = []
    folds = []
    carrier_of = (
        (lambda rec: rec.patient_id) if mode == "patient" else (lambda rec: rec.record_id)
    )
    for rec in records:
        record_ids.append(rec.record_id)
        folds.append(assignment[carrier_of(rec)] + 1)
    return FoldAssignment(record_ids=tuple(record_ids), folds=np.array(folds), k=k)


def split_roles(
    assignment: FoldAssignment, k: Optional[int] = None
) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """(train, val, test) ids: folds 1..K-2, K-1 and K respectively."""
    k = assignment.k if k is None else k
    if k < 3:
        raise ValueError("need k >= 3 for train/val/test roles")
    train = assignment.ids_in(range(1, k - 1))
    val = assignment.ids_in([k - 1])
    test = assignment.ids_in([k])
    return train, val, test


TRAIN_FRACTIONS = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def subsample_train(
    train_records: Sequence[Record], fraction: float, seed: int = 0
) -> list[Record]:
    """Label-stratified subset of the training set sized ``fraction`` folds
    (the full training set being 8 folds)."""
    if fraction <= 0:
        raise ValueError("fraction must be positive")
    n = len(train_records)
    target = int(round(n * fraction / 8.0))
    if fraction >= 8.0:
        return list(train_records)
    if target < 1:
        raise ValueError(f"fraction {fraction} of {n} records yields an empty subset")
    rng = np.random.Generator(np.random.PCG64(seed))
    carriers = [rec.record_id for rec in train_records]
    label_sets = {rec.record_id: frozenset(rec.statement_codes) for rec in train_records}
    weights = {rid: 1 for rid in carriers}
    assignment = _stratify_pool(
        carriers, label_sets, weights, [float(target), float(n - target)], rng
    )
    return [rec for rec in train_records if assignment[rec.record_id] == 0]

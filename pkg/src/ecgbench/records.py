"""Core domain types and task construction.

Turns parsed dataset metadata into aligned label/prediction matrices for a
named label selection (all / diag / sub-diag / super-diag / form / rhythm /
quality / gender), plus the helpers shared by every downstream module.

All types are immutable after construction and all operations are pure, so
they are safe to read from multiple workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

QUALITY_FLAGS = ("static_noise", "burst_noise", "baseline_drift", "electrode_problem")

SUPERCLASSES = ("NORM", "CD", "MI", "HYP", "STTC")

TASK_NAMES = (
    "all",
    "diag",
    "sub-diag",
    "super-diag",
    "form",
    "rhythm",
    "quality",
    "age",
    "gender",
)


class TaskError(ValueError):
    """Raised when a task cannot be built from the given records/ontology."""


@dataclass(frozen=True)
class Record:
    """One ECG record: identifiers, demographics, annotations, optional signal.

    ``statements`` is a tuple of ``(statement_code, likelihood)`` pairs with
    likelihood in [0, 100]; a likelihood of 0.0 still counts as a present
    label. ``signal``, when loaded, is a leads x samples float array in mV.
    """

    record_id: str
    patient_id: str
    fold: int
    statements: tuple[tuple[str, float], ...] = ()
    age: Optional[float] = None
    sex: str = "unknown"
    validated_by_human: bool = False
    sampling_rate: int = 100
    quality_flags: frozenset[str] = frozenset()
    signal: Optional[np.ndarray] = field(default=None, compare=False)
    signal_path: Optional[str] = None

    def __post_init__(self):
        if self.fold < 1:
            raise ValueError(f"record {self.record_id}: fold must be >= 1, got {self.fold}")
        codes = [c for c, _ in self.statements]
        if len(codes) != len(set(codes)):
            raise ValueError(f"record {self.record_id}: duplicate statement codes")
        for code, lik in self.statements:
            if not 0.0 <= lik <= 100.0:
                raise ValueError(
                    f"record {self.record_id}: likelihood {lik} for {code} outside [0, 100]"
                )
        if self.sex not in ("male", "female", "unknown"):
            raise ValueError(f"record {self.record_id}: bad sex value {self.sex!r}")
        unknown = set(self.quality_flags) - set(QUALITY_FLAGS)
        if unknown:
            raise ValueError(f"record {self.record_id}: unknown quality flags {sorted(unknown)}")

    @property
    def statement_codes(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.statements)

    def likelihood(self, code: str) -> float:
        for c, lik in self.statements:
            if c == code:
                return lik
        return 0.0


@dataclass(frozen=True)
class Ontology:
    """Statement ontology: category flags plus the diagnostic class hierarchy.

    ``superclass`` and ``subclass`` map diagnostic statement codes upward;
    every diagnostic code must carry a superclass and the subclass ->
    superclass relation must be a function.
    """

    codes: tuple[str, ...]
    diagnostic: frozenset[str]
    form: frozenset[str]
    rhythm: frozenset[str]
    superclass: dict[str, str]
    subclass: dict[str, str]

    def __post_init__(self):
        if len(self.codes) != len(set(self.codes)):
            raise ValueError("ontology: duplicate statement codes")
        known = set(self.codes)
        for group_name, group in (
            ("diagnostic", self.diagnostic),
            ("form", self.form),
            ("rhythm", self.rhythm),
        ):
            stray = set(group) - known
            if stray:
                raise ValueError(f"ontology: {group_name} flags on unknown codes {sorted(stray)}")
        for code in self.diagnostic:
            if code not in self.superclass:
                raise ValueError(f"ontology: diagnostic code {code} lacks a superclass")
        bad = set(self.superclass.values()) - set(SUPERCLASSES)
        if bad:
            raise ValueError(f"ontology: unknown superclass codes {sorted(bad)}")
        # subclass -> superclass must be a function
        seen: dict[str, str] = {}
        for code, sub in self.subclass.items():
            sup = self.superclass.get(code)
            if sup is None:
                continue
            if sub in seen and seen[sub] != sup:
                raise ValueError(
                    f"ontology: subclass {sub} maps to both {seen[sub]} and {sup}"
                )
            seen[sub] = sup

    @cached_property
    def known(self) -> frozenset[str]:
        return frozenset(self.codes)

    @property
    def diagnostic_codes(self) -> tuple[str, ...]:
        return tuple(c for c in self.codes if c in self.diagnostic)

    @property
    def form_codes(self) -> tuple[str, ...]:
        return tuple(c for c in self.codes if c in self.form)

    @property
    def rhythm_codes(self) -> tuple[str, ...]:
        return tuple(c for c in self.codes if c in self.rhythm)

    @property
    def subclass_codes(self) -> tuple[str, ...]:
        return tuple(sorted({self.subclass[c] for c in self.diagnostic if c in self.subclass}))

    @property
    def superclass_codes(self) -> tuple[str, ...]:
        present = {self.superclass[c] for c in self.diagnostic}
        return tuple(sorted(present))

    def subclass_to_superclass(self) -> dict[str, str]:
        """The induced (functional) subclass -> superclass map."""
        out: dict[str, str] = {}
        for code in self.diagnostic:
            if code in self.subclass:
                out[self.subclass[code]] = self.superclass[code]
        return out


@dataclass(frozen=True)
class TaskSpec:
    """A named label selection plus its record filter rule."""

    name: str
    class_list: tuple[str, ...]
    filter_rule: str  # "any-label" | "known-sex" | "known-age" | "none"

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise TaskError(f"unknown task name {self.name!r}; expected one of {TASK_NAMES}")
        if len(self.class_list) != len(set(self.class_list)):
            raise ValueError(f"task {self.name}: duplicate class codes")


def _validate_binary(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"label values must be 2-D, got shape {values.shape}")
    if not np.isin(values, (0.0, 1.0)).all():
        raise ValueError("label values must be 0 or 1")
    return values


@dataclass(frozen=True)
class LabelMatrix:
    """Aligned record x class binary targets, with optional raw likelihoods."""

    record_ids: tuple[str, ...]
    class_codes: tuple[str, ...]
    values: np.ndarray
    likelihoods: Optional[np.ndarray] = None

    def __post_init__(self):
        values = _validate_binary(self.values)
        object.__setattr__(self, "values", values)
        n, c = values.shape
        if len(self.record_ids) != n or len(self.class_codes) != c:
            raise ValueError(
                f"label matrix shape {values.shape} does not match "
                f"{len(self.record_ids)} ids x {len(self.class_codes)} classes"
            )
        if self.likelihoods is not None:
            lik = np.asarray(self.likelihoods, dtype=np.float64)
            if lik.shape != values.shape:
                raise ValueError("likelihood matrix shape mismatch")
            if np.any((values == 0.0) & (lik != 0.0)):
                raise ValueError("likelihoods must be zero where the label is absent")
            object.__setattr__(self, "likelihoods", lik)

    @property
    def n_records(self) -> int:
        return len(self.record_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_codes)

    def positives_per_class(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def labels_per_record(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def take(self, indices: Sequence[int]) -> "LabelMatrix":
        """Row subset/resample (duplicates allowed, e.g. bootstrap rows)."""
        idx = np.asarray(indices, dtype=np.intp)
        return LabelMatrix(
            record_ids=tuple(self.record_ids[i] for i in idx),
            class_codes=self.class_codes,
            values=self.values[idx],
            likelihoods=None if self.likelihoods is None else self.likelihoods[idx],
        )


@dataclass(frozen=True)
class PredictionMatrix:
    """Aligned record x class real-valued scores in [0, 1]."""

    record_ids: tuple[str, ...]
    class_codes: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValueError(f"scores must be 2-D, got shape {scores.shape}")
        n, c = scores.shape
        if len(self.record_ids) != n or len(self.class_codes) != c:
            raise ValueError(
                f"prediction shape {scores.shape} does not match "
                f"{len(self.record_ids)} ids x {len(self.class_codes)} classes"
            )
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)

    @property
    def n_records(self) -> int:
        return len(self.record_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_codes)

    def take(self, indices: Sequence[int]) -> "PredictionMatrix":
        idx = np.asarray(indices, dtype=np.intp)
        return PredictionMatrix(
            record_ids=tuple(self.record_ids[i] for i in idx),
            class_codes=self.class_codes,
            scores=self.scores[idx],
        )


def _reorder(
    preds: PredictionMatrix, record_ids: tuple[str, ...], class_codes: tuple[str, ...]
) -> PredictionMatrix:
    if preds.record_ids == record_ids and preds.class_codes == class_codes:
        return preds
    if set(preds.class_codes) != set(class_codes):
        raise ValueError("mismatched class sets")
    if set(preds.record_ids) != set(record_ids):
        raise ValueError("mismatched record id sets")
    row = {rid: i for i, rid in enumerate(preds.record_ids)}
    col = {c: j for j, c in enumerate(preds.class_codes)}
    rows = [row[rid] for rid in record_ids]
    cols = [col[c] for c in class_codes]
    return PredictionMatrix(
        record_ids=record_ids, class_codes=class_codes, scores=preds.scores[np.ix_(rows, cols)]
    )


def align(preds: PredictionMatrix, labels: LabelMatrix) -> PredictionMatrix:
    """Reorder ``preds`` rows/columns to match ``labels``; error on set mismatch."""
    return _reorder(preds, labels.record_ids, labels.class_codes)


def make_task(name: str, ontology: Optional[Ontology] = None) -> TaskSpec:
    """Build the TaskSpec for a named label selection.

    Statement selections need the ontology for their class lists; quality,
    age and gender do not.
    """
    if name in ("all", "diag", "sub-diag", "super-diag", "form", "rhythm"):
        if ontology is None:
            raise TaskError(f"task {name!r} needs an ontology")
        class_list = {
            "all": ontology.codes,
            "diag": ontology.diagnostic_codes,
            "sub-diag": ontology.subclass_codes,
            "super-diag": ontology.superclass_codes,
            "form": ontology.form_codes,
            "rhythm": ontology.rhythm_codes,
        }[name]
        return TaskSpec(name=name, class_list=tuple(class_list), filter_rule="any-label")
    if name == "quality":
        return TaskSpec(name="quality", class_list=("artifact",), filter_rule="none")
    if name == "gender":
        return TaskSpec(name="gender", class_list=("female",), filter_rule="known-sex")
    if name == "age":
        return TaskSpec(name="age", class_list=("age",), filter_rule="known-age")
    raise TaskError(f"unknown task name {name!r}; expected one of {TASK_NAMES}")


def map_statement(code: str, ontology: Ontology, task_name: str) -> Optional[str]:
    """Map one statement code to its label at the task's granularity.

    Returns None when the statement does not participate in the selection
    (e.g. a rhythm code under the diag task). Unknown codes are an error.
    """
    if code not in ontology.known:
        raise TaskError(f"statement code {code!r} not in ontology")
    if task_name == "all":
        return code
    if task_name == "diag":
        return code if code in ontology.diagnostic else None
    if task_name == "sub-diag":
        if code in ontology.diagnostic:
            return ontology.subclass.get(code)
        return None
    if task_name == "super-diag":
        return ontology.superclass[code] if code in ontology.diagnostic else None
    if task_name == "form":
        return code if code in ontology.form else None
    if task_name == "rhythm":
        return code if code in ontology.rhythm else None
    raise TaskError(f"no label set at granularity {task_name!r}")


def record_label_set(record: Record, ontology: Ontology, task_name: str) -> set[str]:
    """The record's deduplicated label set at the task's granularity."""
    labels: set[str] = set()
    for code, _ in record.statements:
        mapped = map_statement(code, ontology, task_name)
        if mapped is not None:
            labels.add(mapped)
    return labels


def statement_count_histogram(
    records: Sequence[Record], ontology: Ontology, task_name: str
) -> dict[str, int]:
    """Histogram of per-record label counts at a granularity, before filtering.

    Keys "0".."3" and "4+", matching the dataset summary convention.
    """
    hist = {"0": 0, "1": 0, "2": 0, "3": 0, "4+": 0}
    for rec in records:
        n = len(record_label_set(rec, ontology, task_name))
        hist[str(n) if n < 4 else "4+"] += 1
    return hist


def build_task(
    records: Sequence[Record], ontology: Optional[Ontology], task: TaskSpec
) -> tuple[LabelMatrix, tuple[str, ...]]:
    """Build the aligned label matrix for a task and return the kept ids.

    Classification selections keep records with at least one label in the
    class list; gender keeps records with known sex; quality keeps all.
    The output is deterministic and order-stable (input record order).
    """
    if task.name == "age":
        raise TaskError("the age task has real-valued targets; use build_age_target()")
    if task.name == "quality":
        labels = build_quality_target(records)
        return labels, labels.record_ids
    if task.name == "gender":
        kept = [r for r in records if r.sex in ("male", "female")]
        if not kept:
            raise TaskError("gender task: no records with known sex")
        values = np.array([[1.0 if r.sex == "female" else 0.0] for r in kept])
        labels = LabelMatrix(
            record_ids=tuple(r.record_id for r in kept),
            class_codes=task.class_list,
            values=values,
        )
        return labels, labels.record_ids

    if ontology is None:
        raise TaskError(f"task {task.name!r} needs an ontology")
    col = {c: j for j, c in enumerate(task.class_list)}
    kept_ids: list[str] = []
    rows: list[np.ndarray] = []
    lik_rows: list[np.ndarray] = []
    for rec in records:
        row = np.zeros(len(task.class_list))
        lik = np.zeros(len(task.class_list))
        any_label = False
        for code, likelihood in rec.statements:
            mapped = map_statement(code, ontology, task.name)
            if mapped is None:
                continue
            j = col[mapped]
            row[j] = 1.0
            # mapped parents keep the strongest child likelihood
            lik[j] = max(lik[j], likelihood)
            any_label = True
        if not any_label:
            continue
        kept_ids.append(rec.record_id)
        rows.append(row)
        lik_rows.append(lik)
    if not kept_ids:
        raise TaskError(f"task {task.name!r}: empty result set after filtering")
    labels = LabelMatrix(
        record_ids=tuple(kept_ids),
        class_codes=task.class_list,
        values=np.stack(rows),
        likelihoods=np.stack(lik_rows),
    )
    return labels, labels.record_ids


def build_quality_target(records: Sequence[Record]) -> LabelMatrix:
    """Binary signal-quality target: 1 iff any noise/drift flag is present."""
    values = np.array([[1.0 if rec.quality_flags else 0.0] for rec in records])
    return LabelMatrix(
        record_ids=tuple(r.record_id for r in records),
        class_codes=("artifact",),
        values=values,
    )


def build_age_target(records: Sequence[Record]) -> tuple[tuple[str, ...], np.ndarray]:
    """Age regression targets; drops records with missing age."""
    kept = [r for r in records if r.age is not None and np.isfinite(r.age)]
    if not kept:
        raise TaskError("age task: no records with a recorded age")
    ids = tuple(r.record_id for r in kept)
    return ids, np.array([float(r.age) for r in kept])


def subpopulation_mask(
    records: Sequence[Record], ontology: Ontology, which: str = "all"
) -> np.ndarray:
    """Boolean mask: healthy = diagnostic label set exactly {NORM}; non-healthy
    is the complement; all = full mask."""
    if which not in ("all", "healthy", "non-healthy"):
        raise ValueError(f"unknown subpopulation {which!r}")
    if which == "all":
        return np.ones(len(records), dtype=bool)
    healthy = np.array(
        [record_label_set(r, ontology, "diag") == {"NORM"} for r in records], dtype=bool
    )
    return healthy if which == "healthy" else ~healthy


def ensemble_average(preds: Sequence[PredictionMatrix]) -> PredictionMatrix:
    """Elementwise mean of aligned prediction matrices (re-aligned by id)."""
    if not preds:
        raise ValueError("ensemble_average: need at least one prediction matrix")
    first = preds[0]
    aligned = [_reorder(p, first.record_ids, first.class_codes) for p in preds]
    mean = np.mean([p.scores for p in aligned], axis=0)
    return PredictionMatrix(
        record_ids=first.record_ids, class_codes=first.class_codes, scores=mean
    )

import math

import numpy as np
import pytest

from ecgbench.records import Record
from ecgbench.splits import (
    FoldAssignment,
    split_roles,
    stratified_folds,
    subsample_train,
)


def single_label_records(n, classes, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        code = classes[i % len(classes)]
        out.append(Record(f"r{i}", f"p{i}", fold=1, statements=((code, 100.0),)))
    return out


def icbeb_like_records(n=6877, seed=0):
    """Nine classes, up to three labels per record, skewed prevalences."""
    rng = np.random.default_rng(seed)
    classes = [f"C{j}" for j in range(9)]
    weights = np.array([0.30, 0.20, 0.12, 0.10, 0.08, 0.02, 0.08, 0.06, 0.04])
    out = []
    for i in range(n):
        n_labels = 1 + int(rng.random() < 0.2) + int(rng.random() < 0.05)
        chosen = rng.choice(9, size=n_labels, replace=False, p=weights)
        statements = tuple((classes[j], 100.0) for j in sorted(chosen))
        out.append(
            Record(
                f"r{i}",
                f"p{i}",
                fold=1,
                statements=statements,
                validated_by_human=bool(rng.random() < 0.4),
            )
        )
    return out


class TestStratifiedFolds:
    def test_balanced_two_class_instance(self):
        records = single_label_records(100, ["A", "B"])
        assignment = stratified_folds(records, k=10, mode="record", seed=0)
        fold_of = assignment.fold_of()
        for fold in range(1, 11):
            ids = [r for r in records if fold_of[r.record_id] == fold]
            count_a = sum(1 for r in ids if r.statement_codes == ("A",))
            count_b = len(ids) - count_a
            assert abs(count_a - 5) <= 1 and abs(count_b - 5) <= 1
            assert len(ids) == 10

    def test_partition(self):
        records = icbeb_like_records(500)
        assignment = stratified_folds(records, k=10, mode="record", seed=1)
        assert sorted(assignment.record_ids) == sorted(r.record_id for r in records)
        assert len(assignment.record_ids) == 500

    def test_patient_mode_never_splits_patients(self):
        rng = np.random.default_rng(2)
        records = []
        for p in range(120):
            n_recs = 1 + int(rng.random() < 0.3) + 2 * int(rng.random() < 0.1)
            for j in range(n_recs):
                code = "A" if p % 2 else "B"
                records.append(
                    Record(f"r{p}_{j}", f"p{p}", fold=1, statements=((code, 100.0),))
                )
        assignment = stratified_folds(records, k=10, mode="patient", seed=3)
        fold_of = assignment.fold_of()
        for p in range(120):
            folds = {fold_of[r.record_id] for r in records if r.patient_id == f"p{p}"}
            assert len(folds) == 1

    def test_stratification_quality_bound(self):
        records = icbeb_like_records(6877)
        k = 10
        assignment = stratified_folds(records, k=k, mode="record", seed=4)
        fold_of = assignment.fold_of()
        by_fold = {f: [r for r in records if fold_of[r.record_id] == f] for f in range(1, k + 1)}
        classes = [f"C{j}" for j in range(9)]
        for code in classes:
            carriers = sum(1 for r in records if code in r.statement_codes)
            global_freq = carriers / len(records)
            bound_unit = math.ceil(carriers / k)
            for fold, members in by_fold.items():
                fold_count = sum(1 for r in members if code in r.statement_codes)
                deviation = abs(fold_count / len(members) - global_freq)
                assert deviation <= bound_unit / len(members), (code, fold)

    def test_clean_tail(self):
        records = icbeb_like_records(800, seed=5)
        assignment = stratified_folds(records, k=10, mode="record", seed=5, clean_tail=True)
        fold_of = assignment.fold_of()
        validated = {r.record_id: r.validated_by_human for r in records}
        for rid, fold in fold_of.items():
            if fold >= 9:
                assert validated[rid]
        sizes = [sum(1 for f in fold_of.values() if f == fold) for fold in range(1, 11)]
        assert sum(sizes) == 800
        assert max(sizes) - min(sizes) <= 2

    def test_clean_tail_insufficient_validated(self):
        records = [
            Record(f"r{i}", f"p{i}", fold=1, statements=(("A", 100.0),),
                   validated_by_human=(i < 3))
            for i in range(50)
        ]
        with pytest.raises(ValueError, match="insufficient validated"):
            stratified_folds(records, k=10, mode="record", seed=0, clean_tail=True)

    def test_deterministic_under_seed(self):
        records = icbeb_like_records(400, seed=6)
        a = stratified_folds(records, k=5, mode="record", seed=7)
        b = stratified_folds(records, k=5, mode="record", seed=7)
        c = stratified_folds(records, k=5, mode="record", seed=8)
        assert np.array_equal(a.folds, b.folds)
        assert not np.array_equal(a.folds, c.folds)


class TestSplitRoles:
    def test_k10_roles(self):
        ids = tuple(f"r{i}" for i in range(20))
        folds = np.array([(i % 10) + 1 for i in range(20)])
        assignment = FoldAssignment(record_ids=ids, folds=folds, k=10)
        train, val, test = split_roles(assignment)
        assert set(train) == {ids[i] for i in range(20) if (i % 10) + 1 <= 8}
        assert set(val) == {"r8", "r18"}
        assert set(test) == {"r9", "r19"}
        assert set(train) | set(val) | set(test) == set(ids)
        assert not (set(train) & set(val)) and not (set(val) & set(test))

    def test_k3_minimal(self):
        assignment = FoldAssignment(("a", "b", "c"), np.array([1, 2, 3]), k=3)
        train, val, test = split_roles(assignment)
        assert train == ("a",) and val == ("b",) and test == ("c",)

    def test_k_too_small(self):
        assignment = FoldAssignment(("a", "b"), np.array([1, 2]), k=2)
        with pytest.raises(ValueError, match="k >= 3"):
            split_roles(assignment)


class TestSubsample:
    def test_full_eight_folds_identity(self):
        records = single_label_records(80, ["A", "B"])
        assert subsample_train(records, 8.0) == list(records)

    def test_eighth_fold_size(self):
        records = icbeb_like_records(6877, seed=9)
        train = [r for i, r in enumerate(records) if i < 5502]  # 8 of 10 folds
        subset = subsample_train(train, 0.125, seed=0)
        assert abs(len(subset) - 86) <= 2  # 5502/64

    def test_deterministic(self):
        records = single_label_records(200, ["A", "B", "C"])
        a = subsample_train(records, 0.5, seed=3)
        b = subsample_train(records, 0.5, seed=3)
        assert [r.record_id for r in a] == [r.record_id for r in b]

    def test_stratified(self):
        records = single_label_records(640, ["A", "B"])
        subset = subsample_train(records, 1.0, seed=1)
        assert len(subset) == 80
        count_a = sum(1 for r in subset if r.statement_codes == ("A",))
        assert abs(count_a - 40) <= 1

    def test_too_small(self):
        records = single_label_records(10, ["A"])
        with pytest.raises(ValueError, match="empty subset"):
            subsample_train(records, 0.125, seed=0)


class TestFoldAssignmentIo:
    def test_round_trip(self, tmp_path):
        assignment = FoldAssignment(("a", "b", "c"), np.array([1, 3, 2]), k=3)
        path = tmp_path / "folds.csv"
        assignment.save(path)
        loaded = FoldAssignment.load(path)
        assert loaded.record_ids == assignment.record_ids
        assert np.array_equal(loaded.folds, assignment.folds)
        assert loaded.k == 3

    def test_invariants(self):
        with pytest.raises(ValueError, match="folds must lie"):
            FoldAssignment(("a",), np.array([5]), k=3)
        with pytest.raises(ValueError, match="duplicate"):
            FoldAssignment(("a", "a"), np.array([1, 2]), k=3)

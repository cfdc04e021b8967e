import struct
from pathlib import Path

import numpy as np
import pytest

from ecgbench.records import Ontology, Record


@pytest.fixture
def ontology():
    """Small PTB-XL-shaped ontology: 10 codes, one diagnostic+form dual."""
    return Ontology(
        codes=("NORM", "IMI", "AMI", "LVH", "IRBBB", "IVCD", "NDT", "ABQRS", "PVC", "SR"),
        diagnostic=frozenset({"NORM", "IMI", "AMI", "LVH", "IRBBB", "IVCD", "NDT"}),
        form=frozenset({"NDT", "ABQRS", "PVC"}),
        rhythm=frozenset({"SR"}),
        superclass={
            "NORM": "NORM",
            "IMI": "MI",
            "AMI": "MI",
            "LVH": "HYP",
            "IRBBB": "CD",
            "IVCD": "CD",
            "NDT": "STTC",
        },
        subclass={
            "NORM": "NORM",
            "IMI": "IMI",
            "AMI": "AMI",
            "LVH": "LVH",
            "IRBBB": "IRBBB",
            "IVCD": "IVCD",
            "NDT": "STTC",
        },
    )


@pytest.fixture
def records():
    return [
        Record("r1", "p1", fold=1, statements=(("NORM", 100.0), ("SR", 0.0)),
               age=56.0, sex="male", validated_by_human=True),
        Record("r2", "p2", fold=2, statements=(("IMI", 80.0), ("AMI", 35.0)),
               age=71.0, sex="female", validated_by_human=True,
               quality_flags=frozenset({"static_noise"})),
        Record("r3", "p3", fold=3, statements=(("LVH", 100.0), ("NDT", 50.0), ("SR", 0.0)),
               age=62.0, sex="female"),
        Record("r4", "p3", fold=3, statements=(("IRBBB", 100.0),), sex="male"),
        Record("r5", "p4", fold=9, statements=(("IVCD", 15.0), ("NORM", 100.0)),
               age=44.0, sex="female", validated_by_human=True),
        Record("r6", "p5", fold=10, statements=(("ABQRS", 100.0), ("SR", 80.0)),
               age=29.0, sex="male", validated_by_human=True,
               quality_flags=frozenset({"baseline_drift", "burst_noise"})),
        Record("r7", "p6", fold=10, statements=(), sex="unknown"),
        Record("r8", "p7", fold=10, statements=(("NORM", 100.0),), age=35.0, sex="female",
               validated_by_human=True),
    ]


def write_wfdb(directory: Path, name: str, signal: np.ndarray, fs: int = 100,
               gain: float = 1000.0, baseline: int = 0) -> Path:
    """Write a header + format-16 dat pair; signal is leads x samples in mV."""
    directory.mkdir(parents=True, exist_ok=True)
    n_leads, n_samples = signal.shape
    header_lines = [f"{name} {n_leads} {fs} {n_samples}"]
    for lead in range(n_leads):
        header_lines.append(f"{name}.dat 16 {gain}({baseline})/mV 16 0 0 0 0 lead{lead}")
    (directory / f"{name}.hea").write_text("\n".join(header_lines) + "\n")
    digital = np.rint(signal * gain + baseline).astype("<i2")
    (directory / f"{name}.dat").write_bytes(digital.T.tobytes(order="C"))
    return directory / f"{name}.hea"


def synth_metadata_lines(records):
    lines = [
        "ecg_id,patient_id,age,sex,scp_codes,validated_by_human,"
        "static_noise,burst_noise,baseline_drift,electrodes_problems,strat_fold,filename_lr"
    ]
    sex_code = {"male": "0", "female": "1", "unknown": ""}
    for rec in records:
        stmts = "{" + ", ".join(f"'{c}': {l}" for c, l in rec.statements) + "}"
        flags = {
            "static_noise": "",
            "burst_noise": "",
            "baseline_drift": "",
            "electrodes_problems": "",
        }
        for flag in rec.quality_flags:
            column = "electrodes_problems" if flag == "electrode_problem" else flag
            flags[column] = "yes"
        lines.append(
            f'{rec.record_id},{rec.patient_id},'
            f'{"" if rec.age is None else rec.age},{sex_code[rec.sex]},"{stmts}",'
            f'{rec.validated_by_human},{flags["static_noise"]},{flags["burst_noise"]},'
            f'{flags["baseline_drift"]},{flags["electrodes_problems"]},'
            f'{rec.fold},signals/{rec.record_id}'
        )
    return lines


ONTOLOGY_CSV_ROWS = [
    ("NORM", 1, "", "", "NORM", "NORM"),
    ("IMI", 1, "", "", "MI", "IMI"),
    ("AMI", 1, "", "", "MI", "AMI"),
    ("LVH", 1, "", "", "HYP", "LVH"),
    ("IRBBB", 1, "", "", "CD", "IRBBB"),
    ("IVCD", 1, "", "", "CD", "IVCD"),
    ("NDT", 1, 1, "", "STTC", "STTC"),
    ("ABQRS", "", 1, "", "", ""),
    ("PVC", "", 1, "", "", ""),
    ("SR", "", "", 1, "", ""),
]


def write_ontology_csv(path: Path) -> None:
    lines = ["code,description,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass"]
    for code, diag, form, rhythm, sup, sub in ONTOLOGY_CSV_ROWS:
        lines.append(f"{code},desc,{diag},{form},{rhythm},{sup},{sub}")
    path.write_text("\n".join(lines) + "\n")


def make_big_records(n=150, k=10, seed=0):
    """Synthetic dataset: every statement code positive and negative within
    each fold, likelihoods on the dataset's discrete scale."""
    rng = np.random.default_rng(seed)
    codes = [row[0] for row in ONTOLOGY_CSV_ROWS]
    likelihood_values = (0.0, 15.0, 35.0, 50.0, 80.0, 100.0)
    records = []
    for i in range(n):
        fold = (i % k) + 1
        within = i // k
        chosen = {codes[within % len(codes)], codes[(within + fold) % len(codes)]}
        if rng.random() < 0.4:
            chosen.add(codes[int(rng.integers(len(codes)))])
        statements = tuple(
            (c, float(likelihood_values[int(rng.integers(1, len(likelihood_values)))]))
            for c in sorted(chosen)
        )
        patient = f"p{i - 1 if (i % 17 == 0 and i) else i}"  # a few two-record patients
        flags = frozenset({"static_noise"}) if rng.random() < 0.2 else frozenset()
        records.append(
            Record(
                record_id=f"e{i:04d}",
                patient_id=patient,
                fold=fold,
                statements=statements,
                age=float(rng.integers(20, 90)) if rng.random() > 0.05 else None,
                sex="male" if rng.random() < 0.5 else "female",
                validated_by_human=bool(fold >= 9 or rng.random() < 0.4),
                quality_flags=flags,
            )
        )
    return records


@pytest.fixture(scope="session")
def big_data_dir(tmp_path_factory):
    """Large synthetic dataset directory for end-to-end CLI flows."""
    root = tmp_path_factory.mktemp("bigdata")
    records = make_big_records()
    (root / "metadata.csv").write_text("\n".join(synth_metadata_lines(records)) + "\n")
    write_ontology_csv(root / "ontology.csv")
    rng = np.random.default_rng(99)
    for rec in records:
        fast = 0.8 if any(c == "NORM" for c, _ in rec.statements) else 0.0
        ticks = np.arange(128)
        signal = rng.normal(scale=0.1, size=(4, 128))
        signal += fast * np.sin(ticks * np.pi * 0.9)
        write_wfdb(root / "signals", rec.record_id, signal.round(3))
    return root


@pytest.fixture
def data_dir(tmp_path, records):
    """Small synthetic dataset directory in the normalized metadata layout."""
    (tmp_path / "metadata.csv").write_text("\n".join(synth_metadata_lines(records)) + "\n")
    write_ontology_csv(tmp_path / "ontology.csv")
    rng = np.random.default_rng(7)
    signals_dir = tmp_path / "signals"
    for rec in records:
        signal = rng.normal(scale=0.5, size=(12, 100)).round(3)
        write_wfdb(signals_dir, rec.record_id, signal)
    return tmp_path

"""Published summary statistics of the supported datasets, used as
ingestion self-checks (``ingest validate --expect-ptbxl``)."""

from __future__ import annotations

PTBXL_N_RECORDS = 21837
PTBXL_N_PATIENTS = 18885
PTBXL_N_STATEMENTS = 71
PTBXL_N_DIAGNOSTIC = 44
PTBXL_N_FORM = 19
PTBXL_N_RHYTHM = 12
PTBXL_SUPERCLASSES = ("CD", "HYP", "MI", "NORM", "STTC")

# per-record statement counts {0, 1, 2, 3, >=4} per label selection
PTBXL_STATEMENT_HISTOGRAMS = {
    "diag": {"0": 407, "1": 15019, "2": 4242, "3": 1515, "4+": 654},
    "sub-diag": {"0": 407, "1": 16272, "2": 4079, "3": 920, "4+": 159},
    "super-diag": {"0": 407, "1": 15239, "2": 4171, "3": 1439, "4+": 581},
    "form": {"0": 12849, "1": 6693, "2": 1672, "3": 524, "4+": 99},
    "rhythm": {"0": 771, "1": 20923, "2": 142, "3": 1, "4+": 0},
    "all": {"0": 0, "1": 705, "2": 11247, "3": 5114, "4+": 4771},
}

PTBXL_CLASS_COUNTS = {
    "all": 71,
    "diag": 44,
    "sub-diag": 24,
    "super-diag": 5,
    "form": 19,
    "rhythm": 12,
}

# fraction of records with any noise/drift annotation
PTBXL_ARTIFACT_FRACTION = 0.22

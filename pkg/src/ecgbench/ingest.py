"""Parsers: dataset metadata, statement ontology, waveform files, prediction
matrices.

The metadata reader is tolerant of the published CSV quirks (statement maps
serialized as Python-style dict literals with single-quoted keys, sex coded
as 0/1, free-text quality columns). Waveform support covers the standard
header + 16-bit little-endian interleaved sample layout only.
"""

from __future__ import annotations

import ast
import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .records import Ontology, PredictionMatrix, Record, SUPERCLASSES

PRED_MAGIC = b"ECGBNCH1"

# column aliases accepted in metadata files, first match wins
_ID_COLUMNS = ("ecg_id", "record_id")
_PATIENT_COLUMNS = ("patient_id",)
_FOLD_COLUMNS = ("strat_fold", "fold")
_STATEMENT_COLUMNS = ("scp_codes", "statements")

# metadata column -> canonical quality flag
_QUALITY_COLUMNS = {
    "static_noise": "static_noise",
    "burst_noise": "burst_noise",
    "baseline_drift": "baseline_drift",
    "electrodes_problems": "electrode_problem",
    "electrode_problem": "electrode_problem",
}


class ParseError(ValueError):
    """Malformed input file."""


def parse_statement_map(text: str) -> tuple[tuple[str, float], ...]:
    """Parse a serialized statement map like ``{'NORM': 100.0, 'SR': 0}``.

    Accepts single or double quotes and integer or real likelihoods.
    """
    text = text.strip()
    if not text:
        return ()
    try:
        parsed = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise ParseError(f"unparseable statement map {text!r}: {exc}") from exc
    if not isinstance(parsed, dict):
        raise ParseError(f"statement map is not a map literal: {text!r}")
    out = []
    for key, value in parsed.items():
        if not isinstance(key, str) or not isinstance(value, (int, float)):
            raise ParseError(f"statement map entry {key!r}: {value!r} is not code->number")
        out.append((key, float(value)))
    return tuple(out)


def _pick_column(header: Sequence[str], candidates: Sequence[str], what: str) -> str:
    for name in candidates:
        if name in header:
            return name
    raise ParseError(f"missing required column for {what}: expected one of {candidates}")


def _parse_sex(raw: str) -> str:
    value = raw.strip().lower()
    if value in ("", "nan"):
        return "unknown"
    # dataset convention file: 0 = male, 1 = female
    mapping = {
        "0": "male",
        "0.0": "male",
        "1": "female",
        "1.0": "female",
        "male": "male",
        "m": "male",
        "female": "female",
        "f": "female",
    }
    if value not in mapping:
        raise ParseError(f"unrecognized sex value {raw!r}")
    return mapping[value]


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in ("true", "1", "1.0", "yes")


def parse_metadata(path: str | Path) -> list[Record]:
    """Read a delimited metadata file into Records, one per row, in row order."""
    path = Path(path)
    records: list[Record] = []
    seen: set[str] = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty metadata file")
        header = reader.fieldnames
        id_col = _pick_column(header, _ID_COLUMNS, "record id")
        patient_col = _pick_column(header, _PATIENT_COLUMNS, "patient id")
        fold_col = _pick_column(header, _FOLD_COLUMNS, "fold")
        stmt_col = _pick_column(header, _STATEMENT_COLUMNS, "statement map")
        quality_cols = [c for c in header if c in _QUALITY_COLUMNS]
        for line_no, row in enumerate(reader, start=2):
            try:
                record_id = row[id_col].strip()
                if not record_id:
                    raise ParseError("empty record id")
                if record_id in seen:
                    raise ParseError(f"duplicate record id {record_id!r}")
                seen.add(record_id)
                statements = parse_statement_map(row[stmt_col])
                flags = frozenset(
                    _QUALITY_COLUMNS[c] for c in quality_cols if row[c] and row[c].strip()
                )
                age_raw = (row.get("age") or "").strip()
                age = float(age_raw) if age_raw and age_raw.lower() != "nan" else None
                rate_raw = (row.get("sampling_rate") or "").strip()
                signal_path = (row.get("filename_lr") or row.get("filename") or "").strip()
                records.append(
                    Record(
                        record_id=record_id,
                        patient_id=str(row[patient_col]).strip(),
                        fold=int(float(row[fold_col])),
                        statements=statements,
                        age=age,
                        sex=_parse_sex(row.get("sex") or ""),
                        validated_by_human=_parse_bool(row.get("validated_by_human") or ""),
                        sampling_rate=int(float(rate_raw)) if rate_raw else 100,
                        quality_flags=flags,
                        signal_path=signal_path or None,
                    )
                )
            except (ParseError, ValueError, KeyError) as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from exc
    return records


def parse_ontology(path: str | Path) -> Ontology:
    """Read the statement ontology file (code, category flags, hierarchy)."""
    path = Path(path)
    codes: list[str] = []
    diagnostic: set[str] = set()
    form: set[str] = set()
    rhythm: set[str] = set()
    superclass: dict[str, str] = {}
    subclass: dict[str, str] = {}

    def flag_set(raw: Optional[str]) -> bool:
        if raw is None:
            return False
        raw = raw.strip()
        return bool(raw) and raw not in ("0", "0.0")

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not reader.fieldnames:
            raise ParseError(f"{path}: empty ontology file")
        code_col = reader.fieldnames[0]
        for line_no, row in enumerate(reader, start=2):
            code = row[code_col].strip()
            if not code:
                raise ParseError(f"{path}:{line_no}: empty statement code")
            codes.append(code)
            if flag_set(row.get("diagnostic")):
                diagnostic.add(code)
                sup = (row.get("diagnostic_class") or "").strip()
                if not sup:
                    raise ParseError(
                        f"{path}:{line_no}: diagnostic code {code!r} lacks a superclass"
                    )
                if sup not in SUPERCLASSES:
                    raise ParseError(
                        f"{path}:{line_no}: unknown superclass {sup!r} for {code!r}"
                    )
                superclass[code] = sup
                sub = (row.get("diagnostic_subclass") or "").strip()
                if sub:
                    subclass[code] = sub
            if flag_set(row.get("form")):
                form.add(code)
            if flag_set(row.get("rhythm")):
                rhythm.add(code)
    if not codes:
        raise ParseError(f"{path}: ontology file has no statement rows")
    return Ontology(
        codes=tuple(codes),
        diagnostic=frozenset(diagnostic),
        form=frozenset(form),
        rhythm=frozenset(rhythm),
        superclass=superclass,
        subclass=subclass,
    )


@dataclass(frozen=True)
class SignalHeader:
    """Parsed waveform header for one record."""

    record_name: str
    n_leads: int
    sampling_rate: float
    n_samples: int
    dat_file: str
    fmt: str
    gains: tuple[float, ...]
    baselines: tuple[int, ...]

    def __post_init__(self):
        if self.n_leads < 1:
            raise ParseError("lead count must be >= 1")
        if any(g <= 0 for g in self.gains):
            raise ParseError("per-lead gain must be positive")


def parse_signal_header(header_path: str | Path) -> SignalHeader:
    """Parse the standard waveform header text format (single segment)."""
    path = Path(header_path)
    lines = [
        ln.strip()
        for ln in path.read_text().splitlines()
        if ln.strip() and not ln.startswith("#")
    ]
    if not lines:
        raise ParseError(f"{path}: empty header")
    head = lines[0].split()
    if len(head) < 4:
        raise ParseError(f"{path}: header line needs name, leads, rate, samples")
    record_name = head[0].split("/")[0]
    n_leads = int(head[1])
    sampling_rate = float(head[2].split("/")[0])
    n_samples = int(head[3])
    signal_lines = lines[1 : 1 + n_leads]
    if len(signal_lines) < n_leads:
        raise ParseError(f"{path}: expected {n_leads} signal spec lines")
    dat_file = None
    fmt = None
    gains: list[float] = []
    baselines: list[int] = []
    for ln in signal_lines:
        fields = ln.split()
        if len(fields) < 2:
            raise ParseError(f"{path}: malformed signal line {ln!r}")
        if dat_file is None:
            dat_file = fields[0]
        elif fields[0] != dat_file:
            raise ParseError(f"{path}: multi-file records are not supported")
        if fmt is None:
            fmt = fields[1]
        elif fields[1] != fmt:
            raise ParseError(f"{path}: mixed storage formats are not supported")
        gain = 200.0  # waveform-standard default ADC gain
        baseline: Optional[int] = None
        if len(fields) >= 3:
            gain_field = fields[2].split("/")[0]
            if "(" in gain_field:
                gain_txt, baseline_txt = gain_field.rstrip(")").split("(")
                gain = float(gain_txt)
                baseline = int(baseline_txt)
            elif gain_field:
                gain = float(gain_field)
        if gain == 0:
            raise ParseError(f"{path}: gain must be nonzero")
        if baseline is None:
            # ADC zero (field 5) is the fallback baseline
            baseline = int(fields[4]) if len(fields) >= 5 else 0
        gains.append(gain)
        baselines.append(baseline)
    return SignalHeader(
        record_name=record_name,
        n_leads=n_leads,
        sampling_rate=sampling_rate,
        n_samples=n_samples,
        dat_file=dat_file or "",
        fmt=fmt or "",
        gains=tuple(gains),
        baselines=tuple(baselines),
    )


def read_signal(header_path: str | Path) -> np.ndarray:
    """Read one record's waveform into a leads x samples array in physical
    units, ``(raw - baseline) / gain``.

    Only storage format 16 (interleaved 16-bit little-endian two's
    complement) is supported.
    """
    header_path = Path(header_path)
    header = parse_signal_header(header_path)
    if header.fmt != "16":
        raise ParseError(
            f"{header_path}: unsupported storage format {header.fmt!r} (only 16)"
        )
    dat_path = header_path.parent / header.dat_file
    raw = dat_path.read_bytes()
    expected = header.n_leads * header.n_samples * 2
    if len(raw) != expected:
        raise ParseError(
            f"{dat_path}: payload is {len(raw)} bytes, expected {expected} "
            f"({header.n_leads} leads x {header.n_samples} samples x 2)"
        )
    digital = np.frombuffer(raw, dtype="<i2").reshape(header.n_samples, header.n_leads)
    baselines = np.array(header.baselines, dtype=np.float64)
    gains = np.array(header.gains, dtype=np.float64)
    physical = (digital.astype(np.float64) - baselines) / gains
    return np.ascontiguousarray(physical.T)


def sidecar_path(path: str | Path) -> Path:
    """Location of the id/class sidecar for a binary prediction file."""
    return Path(str(path) + ".ids")


def write_predictions(
    path: str | Path, preds: PredictionMatrix, binary: Optional[bool] = None
) -> None:
    """Write a prediction matrix; binary container for ``.bin`` paths (exact
    round trip), delimited text otherwise (1e-6 round trip).

    The binary sidecar (``<path>.ids``) holds the class codes on its first
    line (comma-joined) and one record id per line after that.
    """
    path = Path(path)
    if preds.n_records == 0 or preds.n_classes == 0:
        raise ValueError("refusing to write an empty matrix")
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        payload = PRED_MAGIC + struct.pack("<QQ", preds.n_records, preds.n_classes)
        payload += preds.scores.astype("<f4").tobytes(order="C")
        path.write_bytes(payload)
        with sidecar_path(path).open("w") as fh:
            fh.write(",".join(preds.class_codes) + "\n")
            for rid in preds.record_ids:
                fh.write(rid + "\n")
    else:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record_id", *preds.class_codes])
            for rid, row in zip(preds.record_ids, preds.scores):
                writer.writerow([rid, *(f"{v:.8f}" for v in row)])


def read_predictions(path: str | Path) -> PredictionMatrix:
    """Read a prediction matrix written by :func:`write_predictions`."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(PRED_MAGIC))
    if magic == PRED_MAGIC:
        return _read_predictions_binary(path)
    return _read_predictions_text(path)


def _read_predictions_binary(path: Path) -> PredictionMatrix:
    raw = path.read_bytes()
    header_end = len(PRED_MAGIC) + 16
    if len(raw) < header_end:
        raise ParseError(f"{path}: truncated header")
    n, c = struct.unpack("<QQ", raw[len(PRED_MAGIC) : header_end])
    if n == 0 or c == 0:
        raise ParseError(f"{path}: empty matrix")
    expected = header_end + 4 * n * c
    if len(raw) != expected:
        raise ParseError(f"{path}: file size {len(raw)} != expected {expected}")
    scores = np.frombuffer(raw[header_end:], dtype="<f4").reshape(n, c).astype(np.float64)
    if np.isnan(scores).any():
        raise ParseError(f"{path}: NaN score in matrix")
    side = sidecar_path(path)
    if not side.exists():
        raise ParseError(f"{path}: missing sidecar file {side}")
    lines = side.read_text().splitlines()
    if not lines:
        raise ParseError(f"{side}: empty sidecar")
    class_codes = tuple(lines[0].split(","))
    record_ids = tuple(ln.strip() for ln in lines[1:] if ln.strip())
    if len(class_codes) != c or len(record_ids) != n:
        raise ParseError(
            f"{side}: sidecar lists {len(record_ids)} ids x {len(class_codes)} classes, "
            f"matrix is {n} x {c}"
        )
    return PredictionMatrix(record_ids=record_ids, class_codes=class_codes, scores=scores)


def _read_predictions_text(path: Path) -> PredictionMatrix:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty matrix") from None
        if not header or header[0] != "record_id":
            raise ParseError(f"{path}: first header column must be 'record_id'")
        class_codes = tuple(header[1:])
        if not class_codes:
            raise ParseError(f"{path}: empty matrix (no class columns)")
        record_ids: list[str] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(class_codes) + 1:
                raise ParseError(f"{path}:{line_no}: expected {len(class_codes) + 1} fields")
            record_ids.append(row[0])
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from exc
            if any(np.isnan(values)):
                raise ParseError(f"{path}:{line_no}: NaN score")
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: empty matrix")
    return PredictionMatrix(
        record_ids=tuple(record_ids), class_codes=class_codes, scores=np.array(rows)
    )

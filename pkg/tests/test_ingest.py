import struct

import numpy as np
import pytest

from conftest import write_wfdb
from ecgbench.ingest import (
    ParseError,
    parse_metadata,
    parse_ontology,
    parse_signal_header,
    parse_statement_map,
    read_predictions,
    read_signal,
    sidecar_path,
    write_predictions,
)
from ecgbench.records import PredictionMatrix


class TestStatementMap:
    def test_single_entry(self):
        assert parse_statement_map("{'AFIB': 100.0}") == (("AFIB", 100.0),)

    def test_empty_map(self):
        assert parse_statement_map("{}") == ()

    def test_double_quotes_and_ints(self):
        assert parse_statement_map('{"NORM": 100, "SR": 0}') == (("NORM", 100.0), ("SR", 0.0))

    def test_whitespace_insensitive(self):
        assert parse_statement_map(" { 'A' : 5.0 ,'B':1 } ") == (("A", 5.0), ("B", 1.0))

    def test_garbage_rejected(self):
        with pytest.raises(ParseError, match="unparseable"):
            parse_statement_map("{'A': }")
        with pytest.raises(ParseError, match="map literal"):
            parse_statement_map("[1, 2]")


class TestMetadata:
    def test_parse_synthetic_dir(self, data_dir, records):
        parsed = parse_metadata(data_dir / "metadata.csv")
        assert [r.record_id for r in parsed] == [r.record_id for r in records]
        by_id = {r.record_id: r for r in parsed}
        assert by_id["r1"].sex == "male" and by_id["r2"].sex == "female"
        assert by_id["r7"].sex == "unknown"
        assert by_id["r4"].age is None
        assert by_id["r2"].quality_flags == frozenset({"static_noise"})
        assert by_id["r6"].quality_flags == frozenset({"baseline_drift", "burst_noise"})
        assert by_id["r5"].fold == 9
        assert by_id["r1"].statements == (("NORM", 100.0), ("SR", 0.0))
        assert by_id["r1"].signal_path == "signals/r1"

    def test_reparse_idempotent(self, data_dir):
        first = parse_metadata(data_dir / "metadata.csv")
        second = parse_metadata(data_dir / "metadata.csv")
        assert first == second

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("ecg_id,age\n1,50\n")
        with pytest.raises(ParseError, match="patient id"):
            parse_metadata(path)

    def test_duplicate_record_id(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            "ecg_id,patient_id,strat_fold,scp_codes\n1,p,1,{}\n1,q,2,{}\n"
        )
        with pytest.raises(ParseError, match="duplicate record id"):
            parse_metadata(path)

    def test_bad_map_reports_row(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            'ecg_id,patient_id,strat_fold,scp_codes\n1,p,1,"{\'A\': 1.0}"\n2,q,1,"{broken"\n'
        )
        with pytest.raises(ParseError, match=r"meta.csv:3"):
            parse_metadata(path)

    def test_electrode_column_mapped(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            "ecg_id,patient_id,strat_fold,scp_codes,electrodes_problems\n"
            '1,p,1,{},"V1 loose"\n'
        )
        parsed = parse_metadata(path)
        assert parsed[0].quality_flags == frozenset({"electrode_problem"})


class TestOntology:
    def test_parse_synthetic(self, data_dir):
        onto = parse_ontology(data_dir / "ontology.csv")
        assert len(onto.codes) == 10
        assert len(onto.diagnostic) == 7
        assert onto.superclass["IMI"] == "MI"
        # the dual-flag code shows up in both category lists
        assert "NDT" in onto.diagnostic and "NDT" in onto.form

    def test_diag_without_superclass(self, tmp_path):
        path = tmp_path / "onto.csv"
        path.write_text(
            "code,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass\nX,1,,,,\n"
        )
        with pytest.raises(ParseError, match="lacks a superclass"):
            parse_ontology(path)

    def test_unknown_superclass(self, tmp_path):
        path = tmp_path / "onto.csv"
        path.write_text(
            "code,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass\nX,1,,,WTF,X\n"
        )
        with pytest.raises(ParseError, match="unknown superclass"):
            parse_ontology(path)

    def test_empty_file_error(self, tmp_path):
        path = tmp_path / "onto.csv"
        path.write_text("")
        with pytest.raises(ParseError, match="empty"):
            parse_ontology(path)
        path.write_text("code,diagnostic\n")
        with pytest.raises(ParseError, match="no statement rows"):
            parse_ontology(path)


class TestSignals:
    def test_hand_decoded_bytes(self, tmp_path):
        # 2 leads x 4 samples, gain 1000/mV, baseline 0; interleaved samples
        (tmp_path / "t.hea").write_text(
            "t 2 100 4\nt.dat 16 1000(0)/mV 16 0 0 0 0 a\nt.dat 16 1000(0)/mV 16 0 0 0 0 b\n"
        )
        digital = [1000, -1000, 500, -500, 250, -250, 0, 32767]
        (tmp_path / "t.dat").write_bytes(struct.pack("<8h", *digital))
        signal = read_signal(tmp_path / "t.hea")
        assert signal.shape == (2, 4)
        assert signal[0].tolist() == [1.0, 0.5, 0.25, 0.0]
        assert signal[1].tolist() == [-1.0, -0.5, -0.25, 32.767]

    def test_baseline_offset(self, tmp_path):
        (tmp_path / "t.hea").write_text("t 1 100 2\nt.dat 16 200(100)/mV 16 0 0 0 0 a\n")
        (tmp_path / "t.dat").write_bytes(struct.pack("<2h", 300, 100))
        signal = read_signal(tmp_path / "t.hea")
        assert signal[0].tolist() == [1.0, 0.0]

    def test_all_zero_payload(self, tmp_path):
        (tmp_path / "z.hea").write_text("z 3 100 5\n" + "z.dat 16 1000(0)/mV 16 0 0 0 0 x\n" * 3)
        (tmp_path / "z.dat").write_bytes(b"\0" * 30)
        assert not read_signal(tmp_path / "z.hea").any()

    def test_round_trip_via_helper(self, tmp_path):
        rng = np.random.default_rng(0)
        signal = rng.normal(scale=1.0, size=(12, 1000)).round(3)
        header = write_wfdb(tmp_path, "rec", signal)
        loaded = read_signal(header)
        assert loaded.shape == (12, 1000)
        assert np.allclose(loaded, signal, atol=5e-4)  # int16 quantization

    def test_payload_size_checks_formula(self, tmp_path):
        signal = np.zeros((2, 10))
        header = write_wfdb(tmp_path, "s", signal)
        payload = (tmp_path / "s.dat").read_bytes()
        assert len(payload) == 2 * 10 * 2

    def test_size_mismatch(self, tmp_path):
        (tmp_path / "t.hea").write_text("t 1 100 4\nt.dat 16 1000(0)/mV 16 0 0 0 0 a\n")
        (tmp_path / "t.dat").write_bytes(b"\0" * 6)
        with pytest.raises(ParseError, match="expected 8"):
            read_signal(tmp_path / "t.hea")

    def test_unsupported_format(self, tmp_path):
        (tmp_path / "t.hea").write_text("t 1 100 2\nt.dat 212 1000(0)/mV 16 0 0 0 0 a\n")
        (tmp_path / "t.dat").write_bytes(b"\0\0\0")
        with pytest.raises(ParseError, match="unsupported storage format"):
            read_signal(tmp_path / "t.hea")

    def test_zero_gain(self, tmp_path):
        (tmp_path / "t.hea").write_text("t 1 100 2\nt.dat 16 0(0)/mV 16 0 0 0 0 a\n")
        with pytest.raises(ParseError, match="gain"):
            parse_signal_header(tmp_path / "t.hea")

    def test_baseline_falls_back_to_adc_zero(self, tmp_path):
        (tmp_path / "t.hea").write_text("t 1 100 1\nt.dat 16 100/mV 16 50 0 0 0 a\n")
        header = parse_signal_header(tmp_path / "t.hea")
        assert header.baselines == (50,)
        assert header.gains == (100.0,)


class TestPredictions:
    def matrix(self):
        rng = np.random.default_rng(5)
        return PredictionMatrix(
            ("a", "b", "c"),
            ("X", "Y"),
            rng.random((3, 2)).astype(np.float32).astype(float),
        )

    def test_binary_round_trip_exact(self, tmp_path):
        preds = self.matrix()
        path = tmp_path / "p.bin"
        write_predictions(path, preds)
        loaded = read_predictions(path)
        assert loaded.record_ids == preds.record_ids
        assert loaded.class_codes == preds.class_codes
        assert np.array_equal(loaded.scores, preds.scores)

    def test_text_round_trip_tolerance(self, tmp_path):
        preds = self.matrix()
        path = tmp_path / "p.csv"
        write_predictions(path, preds)
        loaded = read_predictions(path)
        assert np.allclose(loaded.scores, preds.scores, atol=1e-6)

    def test_text_direct_parse(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("record_id,X,Y\nr1,0.5,0.25\n")
        loaded = read_predictions(path)
        assert loaded.scores.tolist() == [[0.5, 0.25]]

    def test_empty_matrix_errors(self, tmp_path):
        preds = self.matrix()
        with pytest.raises(ValueError, match="empty"):
            write_predictions(tmp_path / "e.bin",
                              PredictionMatrix((), ("X",), np.zeros((0, 1))))
        path = tmp_path / "z.bin"
        payload = b"ECGBNCH1" + struct.pack("<QQ", 0, 2)
        path.write_bytes(payload)
        with pytest.raises(ParseError, match="empty matrix"):
            read_predictions(path)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "n.bin"
        payload = b"ECGBNCH1" + struct.pack("<QQ", 1, 1) + struct.pack("<f", float("nan"))
        path.write_bytes(payload)
        sidecar_path(path).write_text("X\nr1\n")
        with pytest.raises(ParseError, match="NaN"):
            read_predictions(path)

    def test_dim_mismatch(self, tmp_path):
        path = tmp_path / "m.bin"
        payload = b"ECGBNCH1" + struct.pack("<QQ", 2, 2) + b"\0" * 12
        path.write_bytes(payload)
        with pytest.raises(ParseError, match="size"):
            read_predictions(path)

    def test_missing_sidecar(self, tmp_path):
        preds = self.matrix()
        path = tmp_path / "p.bin"
        write_predictions(path, preds)
        sidecar_path(path).unlink()
        with pytest.raises(ParseError, match="sidecar"):
            read_predictions(path)

import csv

import numpy as np
import pytest

from tialignUtils.Alignment import TimeMap
from tialignUtils.Errors import InputError
from tialignUtils.Evaluation import (REPORT_CSV_FIELDS, ReferencePoints, SpliceLog, alignment_errors, combine_reports,
                                     evaluate, evaluate_errors, format_report_table, random_transposition_splice,
                                     read_reference_csv, write_combined_csv, write_reference_csv, write_reports_csv,
                                     write_splice_log)
from tialignUtils.SignalFrontend import Spectrogram


def identity_map(seconds=100.0):
    return TimeMap(anchors=np.array([[0.0, 0.0], [seconds, seconds]]))


# Error statistics

def test_quartiles_of_four_errors():
    report = evaluate_errors([0.010, 0.020, 0.030, 0.040])
    assert report.median_ms == pytest.approx(25.0)
    assert report.q1_ms == pytest.approx(17.5)
    assert report.q3_ms == pytest.approx(32.5)
    assert report.frac_le_50ms == 1.0
    assert report.frac_le_250ms == 1.0
    assert report.n_points == 4


def test_fractions_use_absolute_errors():
    report = evaluate_errors([-0.040, 0.100, -0.300, 0.045])
    assert report.frac_le_50ms == 0.5
    assert report.frac_le_250ms == 0.75


def test_report_ordering_holds_for_random_errors():
    rng = np.random.default_rng(4)
    for _ in range(100):
        report = evaluate_errors(rng.normal(scale=0.2, size=int(rng.integers(1, 60))))
        assert report.q1_ms <= report.median_ms <= report.q3_ms
        assert report.frac_le_50ms <= report.frac_le_250ms


def test_perfect_map_has_zero_error():
    refs = ReferencePoints.from_pairs([(1.0, 1.0), (2.5, 2.5), (7.0, 7.0)])
    report = evaluate(identity_map(), refs)
    assert report.median_ms == 0.0
    assert report.frac_le_50ms == 1.0


def test_errors_follow_the_map():
    tm = TimeMap(anchors=np.array([[0.0, 0.0], [10.0, 20.0]]))
    refs = ReferencePoints.from_pairs([(1.0, 2.1), (5.0, 9.0)])
    assert np.allclose(alignment_errors(tm, refs), [0.1, 1.0])


def test_empty_references():
    with pytest.raises(InputError, match="empty reference points"):
        evaluate(identity_map(), ReferencePoints(()))
    with pytest.raises(InputError):
        evaluate_errors([])


def test_references_must_increase():
    with pytest.raises(InputError):
        ReferencePoints(((1.0, 1.0), (1.0, 2.0)))
    refs = ReferencePoints.from_pairs([(3.0, 3.5), (1.0, 1.5)])
    assert refs.score_times().tolist() == [1.0, 3.0]
    assert refs.performance_times().tolist() == [1.5, 3.5]


# Random transposition splicing

def ramp_spectrogram(frames=190, hop=0.5):
    return Spectrogram(frames=np.tile(np.arange(120, dtype=np.float64), (frames, 1)), hop_seconds=hop)


def test_splice_block_layout():
    spec, log = random_transposition_splice(ramp_spectrogram(), period_seconds=30.0, seed=3)
    assert len(log.blocks) == 4
    assert [b.start_seconds for b in log.blocks] == [0.0, 30.0, 60.0, 90.0]
    assert [b.end_seconds for b in log.blocks] == [30.0, 60.0, 90.0, 95.0]
    assert all(b.semitones in (-3, -2, -1, 1, 2, 3) for b in log.blocks)
    assert spec.num_frames == 190


def test_splice_shifts_each_block_by_its_semitones():
    source = ramp_spectrogram()
    spec, log = random_transposition_splice(source, period_seconds=30.0, seed=11)
    times = source.frame_times()
    for block in log.blocks:
        rows = np.nonzero((times >= block.start_seconds) & (times < block.end_seconds))[0]
        for t in rows:
            assert np.array_equal(spec.frames[t], np.roll(source.frames[t], -2 * block.semitones))


def test_splice_with_zero_only_is_identity():
    source = ramp_spectrogram()
    spec, log = random_transposition_splice(source, semitone_set=[0], seed=5)
    assert np.array_equal(spec.frames, source.frames)
    assert all(b.semitones == 0 for b in log.blocks)


def test_splice_is_seeded():
    a, log_a = random_transposition_splice(ramp_spectrogram(), seed=9)
    b, log_b = random_transposition_splice(ramp_spectrogram(), seed=9)
    assert log_a == log_b
    assert np.array_equal(a.frames, b.frames)


def test_short_input_is_one_block():
    _, log = random_transposition_splice(ramp_spectrogram(frames=20), period_seconds=30.0, seed=0)
    assert len(log.blocks) == 1
    assert log.blocks[0].end_seconds == 10.0


@pytest.mark.parametrize("period", [0.0, -30.0])
def test_splice_rejects_non_positive_period(period):
    with pytest.raises(InputError, match="splice period"):
        random_transposition_splice(ramp_spectrogram(), period_seconds=period, seed=0)


def test_splice_rejects_empty_semitone_set():
    with pytest.raises(InputError, match="empty semitone set"):
        random_transposition_splice(ramp_spectrogram(), semitone_set=[], seed=0)


def test_splice_log_csv(tmp_path):
    _, log = random_transposition_splice(ramp_spectrogram(), seed=2)
    path = tmp_path / "splices.csv"
    write_splice_log(path, [("piece000", log), ("piece001", SpliceLog(seed=1, period_seconds=30.0))])
    with open(path, newline="") as fp:
        rows = list(csv.DictReader(fp))
    assert len(rows) == 4
    assert rows[0]["piece"] == "piece000"
    assert int(rows[3]["block"]) == 3


# CSV and tables

def test_reference_csv_round_trip(tmp_path):
    refs = ReferencePoints.from_pairs([(0.5, 0.6), (1.0, 1.25)])
    path = tmp_path / "refs.csv"
    write_reference_csv(path, refs)
    assert read_reference_csv(path) == refs


def test_reference_csv_bad_row(tmp_path):
    path = tmp_path / "refs.csv"
    path.write_text("score_seconds,performance_seconds\n0.5,0.6\n1.0\n")
    with pytest.raises(InputError) as info:
        read_reference_csv(path)
    assert info.value.line == 3


def test_reports_csv(tmp_path):
    path = tmp_path / "reports.csv"
    write_reports_csv(path, [("0", evaluate_errors([0.01, 0.02]))])
    with open(path, newline="") as fp:
        rows = list(csv.DictReader(fp))
    assert list(rows[0].keys()) == REPORT_CSV_FIELDS
    assert rows[0]["condition"] == "0"
    assert float(rows[0]["median_ms"]) == pytest.approx(15.0)


def test_combined_table():
    reports = [("Chroma", evaluate_errors([0.01, 0.02, 0.03, 0.04])),
               ("8G", evaluate_errors([0.1, 0.3]))]
    table = combine_reports(reports)
    assert table[0] == ["Measure", "Chroma", "8G"]
    assert [row[0] for row in table[1:]] == ["1st Quartile", "Median", "3rd Quartile",
                                             "Error ≤ 50 ms", "Error ≤ 250 ms"]
    assert table[2][1] == "25 ms"
    assert table[4][1] == "100%"
    assert table[5][2] == "50%"

    text = format_report_table(reports)
    assert text.splitlines()[0].startswith("Measure")
    assert "Median" in text


def test_combined_csv(tmp_path):
    path = tmp_path / "table.csv"
    write_combined_csv(path, [("0", evaluate_errors([0.01]))])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "measure,0"
    assert len(lines) == 6

# MIT License
#
# Copyright (c) 2025 Hammerspace, Inc
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.
# -----------------------------------------------------------------------------
# Evaluation.py
#
# Alignment error statistics at reference points, the random transposition
# splicer, and the CSV / table formats for both.
#
# Quartiles use linear interpolation between order statistics (numpy's
# default "linear" percentile method). Fractions count errors <= threshold.

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from tialignUtils.Alignment import TimeMap, lookup, read_pair_csv
from tialignUtils.Errors import InputError
from tialignUtils.SignalFrontend import Spectrogram

# Define the name of the Program, Description, and Version

progname = "Evaluation"
progdesc = "Alignment error statistics"
progvers = "1.0.0"

REPORT_ROWS = [
    ("1st Quartile", "q1_ms"),
    ("Median", "median_ms"),
    ("3rd Quartile", "q3_ms"),
    ("Error ≤ 50 ms", "frac_le_50ms"),
    ("Error ≤ 250 ms", "frac_le_250ms"),
]

REPORT_CSV_FIELDS = ["condition", "q1_ms", "median_ms", "q3_ms", "frac_le_50ms", "frac_le_250ms", "n_points"]


@dataclass(frozen=True)
class ReferencePoints:
    '''
    (score_seconds, true_performance_seconds) pairs, strictly increasing in
    score time.
    '''
    pairs: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        scores = [s for s, _ in self.pairs]
        if any(b <= a for a, b in zip(scores, scores[1:])):
            raise InputError("reference points must be strictly increasing in score time")

    @classmethod
    def from_pairs(cls, pairs) -> "ReferencePoints":
        '''
        Build from unordered pairs; sorted by score time.
        '''
        return cls(tuple(sorted((float(s), float(p)) for s, p in pairs)))

    def __len__(self):
        return len(self.pairs)

    def score_times(self) -> np.ndarray:
        return np.array([s for s, _ in self.pairs], dtype=np.float64)

    def performance_times(self) -> np.ndarray:
        return np.array([p for _, p in self.pairs], dtype=np.float64)


@dataclass(frozen=True)
class EvalReport:
    q1_ms: float
    median_ms: float
    q3_ms: float
    frac_le_50ms: float
    frac_le_250ms: float
    n_points: int

    def as_row(self, condition: str = "") -> Dict[str, object]:
        return {"condition": condition,
                "q1_ms": f"{self.q1_ms:.3f}",
                "median_ms": f"{self.median_ms:.3f}",
                "q3_ms": f"{self.q3_ms:.3f}",
                "frac_le_50ms": f"{self.frac_le_50ms:.6f}",
                "frac_le_250ms": f"{self.frac_le_250ms:.6f}",
                "n_points": self.n_points}


def evaluate_errors(errors_seconds: Sequence[float]) -> EvalReport:

    errors = np.abs(np.asarray(errors_seconds, dtype=np.float64)) * 1000.0
    if errors.size == 0:
        raise InputError("empty reference points")

    q1, median, q3 = np.percentile(errors, [25.0, 50.0, 75.0])

    return EvalReport(q1_ms=float(q1),
                      median_ms=float(median),
                      q3_ms=float(q3),
                      frac_le_50ms=float(np.mean(errors <= 50.0)),
                      frac_le_250ms=float(np.mean(errors <= 250.0)),
                      n_points=int(errors.size))


def alignment_errors(time_map: TimeMap, refs: ReferencePoints) -> np.ndarray:

    predicted = np.array([lookup(time_map, s) for s in refs.score_times()])
    return np.abs(predicted - refs.performance_times())


def evaluate(time_map: TimeMap, refs: ReferencePoints) -> EvalReport:

    if len(refs) == 0:
        raise InputError("empty reference points")

    return evaluate_errors(alignment_errors(time_map, refs))


# ----------------------------------------------------------------------------
# Random transposition splicing

@dataclass(frozen=True)
class SpliceBlock:
    start_seconds: float
    end_seconds: float
    semitones: int


@dataclass(frozen=True)
class SpliceLog:
    seed: int
    period_seconds: float
    blocks: Tuple[SpliceBlock, ...] = field(default_factory=tuple)

    def rows(self) -> List[Dict[str, object]]:
        return [{"block": i,
                 "start_seconds": f"{b.start_seconds:.6f}",
                 "end_seconds": f"{b.end_seconds:.6f}",
                 "semitones": b.semitones} for i, b in enumerate(self.blocks)]


DEFAULT_SPLICE_SEMITONES = (-3, -2, -1, 1, 2, 3)


def random_transposition_splice(spec: Spectrogram,
                                period_seconds: float = 30.0,
                                semitone_set: Sequence[int] = DEFAULT_SPLICE_SEMITONES,
                                seed: int = 0,
                                bins_per_semitone: int = 2) -> Tuple[Spectrogram, SpliceLog]:
    '''
    Cut the spectrogram into consecutive period_seconds blocks and shift each
    by its own randomly drawn transposition (2 bins per semitone at 24 bins
    per octave). The final block keeps whatever is left over.
    '''

    if not period_seconds > 0.0:
        raise InputError(f"splice period must be > 0, got {period_seconds}")

    rng = np.random.default_rng(seed)
    choices = np.asarray(list(semitone_set), dtype=np.int64)
    if choices.size == 0:
        raise InputError("empty semitone set")
    duration = spec.duration

    frames = np.array(spec.frames, copy=True)
    times = spec.frame_times()
    num_blocks = max(1, int(np.ceil(duration / period_seconds - 1e-9)))

    blocks = []
    for b in range(num_blocks):
        start = b * period_seconds
        end = min((b + 1) * period_seconds, duration)
        semitones = int(rng.choice(choices))
        rows = (times >= start) & (times < end) if b < num_blocks - 1 else (times >= start)
        frames[rows] = np.roll(spec.frames[rows], -semitones * bins_per_semitone, axis=1)
        blocks.append(SpliceBlock(start_seconds=start, end_seconds=end, semitones=semitones))

    return replace(spec, frames=frames), SpliceLog(seed=seed, period_seconds=period_seconds,
                                                   blocks=tuple(blocks))


def write_splice_log(path: Union[str, Path], logs: Sequence[Tuple[str, SpliceLog]]):

    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=["piece", "seed", "block", "start_seconds",
                                                "end_seconds", "semitones"])
        writer.writeheader()
        for piece, log in logs:
            for row in log.rows():
                writer.writerow({"piece": piece, "seed": log.seed, **row})


# ----------------------------------------------------------------------------
# CSV and tables

def read_reference_csv(path: Union[str, Path]) -> ReferencePoints:
    return ReferencePoints.from_pairs(read_pair_csv(path, ("score_seconds", "performance_seconds")))


def write_reference_csv(path: Union[str, Path], refs: ReferencePoints):

    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["score_seconds", "performance_seconds"])
        for s, p in refs.pairs:
            writer.writerow([f"{s:.6f}", f"{p:.6f}"])


def write_reports_csv(path: Union[str, Path], reports: Sequence[Tuple[str, EvalReport]]):

    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=REPORT_CSV_FIELDS)
        writer.writeheader()
        for condition, report in reports:
            writer.writerow(report.as_row(condition))


def _cell(report: EvalReport, attr: str) -> str:
    value = getattr(report, attr)
    if attr.startswith("frac"):
        return f"{100.0 * value:.0f}%"
    return f"{value:.0f} ms"


def combine_reports(reports: Sequence[Tuple[str, EvalReport]]) -> List[List[str]]:
    '''
    Rows are the five measures, columns are the conditions.
    '''

    table = [["Measure"] + [condition for condition, _ in reports]]
    for label, attr in REPORT_ROWS:
        table.append([label] + [_cell(report, attr) for _, report in reports])

    return table


def write_combined_csv(path: Union[str, Path], reports: Sequence[Tuple[str, EvalReport]]):

    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["measure"] + [condition for condition, _ in reports])
        for label, attr in REPORT_ROWS:
            writer.writerow([label] + [f"{getattr(report, attr):.6f}" for _, report in reports])


def format_report_table(reports: Sequence[Tuple[str, EvalReport]]) -> str:

    table = combine_reports(reports)
    widths = [max(len(row[c]) for row in table) for c in range(len(table[0]))]

    lines = []
    for i, row in enumerate(table):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))

    return "\n".join(lines)

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
# Alignment.py
#
# Dynamic time warping between two feature sequences.
#
# Both the exact and the multiscale (FastDTW) variant run the same dynamic
# program over a "corridor": for every row i of the cost matrix the allowed
# columns are the contiguous range lo[i]..hi[i]. Exact DTW is the corridor
# that spans every column. Steps are (1,1), (1,0) and (0,1), all with weight
# one, so a path's cost is the plain sum of its cell distances.
#
# Backtracking ties are broken diagonal first, then i-advance, then j-advance.

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numba
import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from tialignUtils.Errors import AlignmentTooLarge, InputError, ShapeMismatch
from tialignUtils.Features import FeatureSequence, pairwise_distances

# Define the name of the Program, Description, and Version

progname = "Alignment"
progdesc = "Exact and multiscale dynamic time warping"
progvers = "1.0.0"

MAX_EXACT_CELLS = 25_000_000
DEFAULT_RADIUS = 50


@dataclass(frozen=True)
class AlignmentPath:
    pairs: np.ndarray           # K x 2 int64, (score frame, performance frame)
    total_cost: float

    def __len__(self):
        return len(self.pairs)

    def transposed(self) -> "AlignmentPath":
        return AlignmentPath(pairs=self.pairs[:, ::-1].copy(), total_cost=self.total_cost)


@dataclass(frozen=True)
class TimeMap:
    anchors: np.ndarray         # K x 2 float, (score seconds, performance seconds)

    def __len__(self):
        return len(self.anchors)


# ----------------------------------------------------------------------------
# Corridor dynamic program

@numba.njit(cache=True)
def _accumulate(cost, offsets, lo, hi):

    n = lo.shape[0]
    acc = np.full(cost.shape[0], np.inf)

    for i in range(n):
        for j in range(lo[i], hi[i] + 1):
            c = cost[offsets[i] + j - lo[i]]
            if i == 0 and j == 0:
                acc[offsets[i]] = c
                continue

            best = np.inf
            if i > 0:
                if lo[i - 1] <= j - 1 and j - 1 <= hi[i - 1]:
                    v = acc[offsets[i - 1] + j - 1 - lo[i - 1]]
                    if v < best:
                        best = v
                if lo[i - 1] <= j and j <= hi[i - 1]:
                    v = acc[offsets[i - 1] + j - lo[i - 1]]
                    if v < best:
                        best = v
            if j - 1 >= lo[i]:
                v = acc[offsets[i] + j - 1 - lo[i]]
                if v < best:
                    best = v

            acc[offsets[i] + j - lo[i]] = c + best

    return acc


@numba.njit(cache=True)
def _backtrack(acc, offsets, lo, hi, m):

    n = lo.shape[0]
    i = n - 1
    j = m - 1
    steps = np.empty((n + m, 2), dtype=np.int64)
    k = 0
    steps[k, 0] = i
    steps[k, 1] = j
    k += 1

    while i > 0 or j > 0:
        diag = np.inf
        up = np.inf
        left = np.inf
        if i > 0 and j > 0 and lo[i - 1] <= j - 1 and j - 1 <= hi[i - 1]:
            diag = acc[offsets[i - 1] + j - 1 - lo[i - 1]]
        if i > 0 and lo[i - 1] <= j and j <= hi[i - 1]:
            up = acc[offsets[i - 1] + j - lo[i - 1]]
        if j > 0 and j - 1 >= lo[i]:
            left = acc[offsets[i] + j - 1 - lo[i]]

        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1

        steps[k, 0] = i
        steps[k, 1] = j
        k += 1

    path = np.empty((k, 2), dtype=np.int64)
    for t in range(k):
        path[t, 0] = steps[k - 1 - t, 0]
        path[t, 1] = steps[k - 1 - t, 1]

    return path


def _as_matrix(x) -> np.ndarray:

    if isinstance(x, FeatureSequence):
        x = x.vectors
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, np.newaxis]

    return x


def _check_inputs(a: np.ndarray, b: np.ndarray):

    if len(a) == 0 or len(b) == 0:
        raise InputError("empty input")
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"dim mismatch: {a.shape[1]} vs {b.shape[1]}")


def _dtw_corridor(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray, metric: str) -> AlignmentPath:

    widths = hi - lo + 1
    offsets = np.zeros(len(lo), dtype=np.int64)
    offsets[1:] = np.cumsum(widths)[:-1]
    cost = np.empty(int(widths.sum()), dtype=np.float64)

    if np.all(lo == 0) and np.all(hi == len(b) - 1):
        cost[:] = pairwise_distances(a, b, metric).reshape(-1)
    else:
        for i in range(len(a)):
            cost[offsets[i]:offsets[i] + widths[i]] = pairwise_distances(a[i:i + 1], b[lo[i]:hi[i] + 1], metric)[0]

    acc = _accumulate(cost, offsets, lo, hi)
    pairs = _backtrack(acc, offsets, lo, hi, len(b))
    last = len(a) - 1

    return AlignmentPath(pairs=pairs, total_cost=float(acc[offsets[last] + len(b) - 1 - lo[last]]))


def dtw_exact(a, b, metric: str = "euclidean") -> AlignmentPath:
    '''
    Globally optimal path over the full cost matrix.
    '''

    a = _as_matrix(a)
    b = _as_matrix(b)
    _check_inputs(a, b)

    if len(a) * len(b) > MAX_EXACT_CELLS:
        raise AlignmentTooLarge(f"exact DTW over {len(a)} x {len(b)} cells exceeds"
                                f" {MAX_EXACT_CELLS}; use fast_dtw")

    lo = np.zeros(len(a), dtype=np.int64)
    hi = np.full(len(a), len(b) - 1, dtype=np.int64)

    return _dtw_corridor(a, b, lo, hi, metric)


# ----------------------------------------------------------------------------
# FastDTW

def coarsen(x: np.ndarray) -> np.ndarray:
    '''
    Average adjacent frame pairs; an odd last frame is carried unaveraged.
    '''

    half = len(x) // 2
    out = 0.5 * (x[0:2 * half:2] + x[1:2 * half:2])
    if len(x) % 2:
        out = np.vstack([out, x[-1:]])

    return out


def expand_window(coarse_pairs: np.ndarray, n: int, m: int, radius: int) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Project a coarse path onto the fine grid (each coarse cell covers a 2x2
    block) and widen it by radius cells in every direction.
    '''

    lo = np.full(n, m, dtype=np.int64)
    hi = np.full(n, -1, dtype=np.int64)

    for ci, cj in np.asarray(coarse_pairs).tolist():
        for r in (2 * ci, 2 * ci + 1):
            if r < n:
                lo[r] = min(lo[r], 2 * cj)
                hi[r] = max(hi[r], min(2 * cj + 1, m - 1))

    size = 2 * radius + 1
    lo = np.maximum(minimum_filter1d(lo, size=size, mode="nearest") - radius, 0)
    hi = np.minimum(maximum_filter1d(hi, size=size, mode="nearest") + radius, m - 1)

    return lo.astype(np.int64), hi.astype(np.int64)


def _fast_dtw(a: np.ndarray, b: np.ndarray, metric: str, radius: int, depth: int, logger) -> AlignmentPath:

    if min(len(a), len(b)) <= 2 * radius + 2:
        return dtw_exact(a, b, metric)

    coarse = _fast_dtw(coarsen(a), coarsen(b), metric, radius, depth + 1, logger)
    lo, hi = expand_window(coarse.pairs, len(a), len(b), radius)

    if logger is not None:
        logger.debug(f"fast_dtw level {depth}: {len(a)} x {len(b)},"
                     f" corridor {int((hi - lo + 1).sum())} cells")

    return _dtw_corridor(a, b, lo, hi, metric)


def fast_dtw(a, b, metric: str = "euclidean", radius: int = DEFAULT_RADIUS, logger=None) -> AlignmentPath:
    '''
    Multiscale DTW: coarsen both sequences by two, align recursively, then
    refine inside the projected path widened by radius. Inputs whose shorter
    side is at most 2 * radius + 2 frames are solved exactly.
    '''

    a = _as_matrix(a)
    b = _as_matrix(b)
    _check_inputs(a, b)
    if radius < 0:
        raise InputError(f"radius must be >= 0, got {radius}")

    return _fast_dtw(a, b, metric, int(radius), 0, logger)


def validate_path(path: AlignmentPath, len_a: int, len_b: int) -> Optional[str]:
    '''
    None for a valid path, otherwise the first violated constraint.
    '''

    pairs = np.asarray(path.pairs)
    if len(pairs) == 0:
        return "empty path"
    if tuple(pairs[0]) != (0, 0):
        return f"path starts at {tuple(pairs[0])}"
    if tuple(pairs[-1]) != (len_a - 1, len_b - 1):
        return f"path ends at {tuple(pairs[-1])}"

    steps = np.diff(pairs, axis=0)
    if len(steps) and (np.any(steps < 0) or np.any(steps > 1) or np.any(steps.sum(axis=1) == 0)):
        return "path takes an invalid step"

    return None


# ----------------------------------------------------------------------------
# Time maps

def path_to_timemap(path: AlignmentPath,
                    hop_a: float,
                    offset_a: int,
                    hop_b: float,
                    offset_b: int) -> TimeMap:
    '''
    Frame pairs to (score seconds, performance seconds). A vertical run (one
    score frame, several performance frames) becomes one anchor at the run's
    midpoint; horizontal runs are collapsed the same way, so the anchors are
    strictly increasing in both coordinates.
    '''

    pairs = np.asarray(path.pairs, dtype=np.int64)

    rows = []
    for i in np.unique(pairs[:, 0]):
        js = pairs[pairs[:, 0] == i, 1]
        rows.append((float(i), 0.5 * (js.min() + js.max())))

    anchors = []
    start = 0
    while start < len(rows):
        stop = start
        while stop + 1 < len(rows) and rows[stop + 1][1] == rows[start][1]:
            stop += 1
        i_mid = 0.5 * (rows[start][0] + rows[stop][0])
        anchors.append(((i_mid + offset_a) * hop_a, (rows[start][1] + offset_b) * hop_b))
        start = stop + 1

    return TimeMap(anchors=np.array(anchors, dtype=np.float64))


def lookup(time_map: TimeMap, score_time: float) -> float:
    '''
    Piecewise-linear through the anchors, clamped outside them.
    '''

    if len(time_map) == 0:
        raise InputError("empty time map")

    return float(np.interp(score_time, time_map.anchors[:, 0], time_map.anchors[:, 1]))


def align_sequences(a: FeatureSequence,
                    b: FeatureSequence,
                    metric: str = "euclidean",
                    radius: int = DEFAULT_RADIUS,
                    exact: bool = False,
                    logger=None) -> Tuple[AlignmentPath, TimeMap]:

    if exact:
        path = dtw_exact(a, b, metric)
    else:
        path = fast_dtw(a, b, metric, radius, logger=logger)

    time_map = path_to_timemap(path, a.hop_seconds, a.t0_offset_frames, b.hop_seconds, b.t0_offset_frames)

    if logger is not None:
        logger.debug(f"Aligned {len(a)} x {len(b)} frames: {len(path)} steps, cost {path.total_cost:.4f}")

    return path, time_map


# ----------------------------------------------------------------------------
# CSV

def write_timemap_csv(path: Union[str, Path], time_map: TimeMap):

    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["score_seconds", "performance_seconds"])
        for s, p in time_map.anchors:
            writer.writerow([f"{s:.6f}", f"{p:.6f}"])


def read_timemap_csv(path: Union[str, Path]) -> TimeMap:

    pairs = read_pair_csv(path, ("score_seconds", "performance_seconds"))
    if not pairs:
        raise InputError("empty time map", path=str(path))

    return TimeMap(anchors=np.array(pairs, dtype=np.float64))


def write_path_csv(path: Union[str, Path], alignment: AlignmentPath):

    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["i", "j"])
        writer.writerows(alignment.pairs.tolist())


def read_pair_csv(path: Union[str, Path], header: Tuple[str, str]) -> List[Tuple[float, float]]:
    '''
    Two-column numeric CSV with a required header row. A malformed row
    raises InputError carrying its line number.
    '''

    try:
        fp = open(path, newline="")
    except OSError as e:
        raise InputError(f"cannot open csv: {e}", path=str(path)) from e

    pairs = []
    with fp:
        reader = csv.reader(fp)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise InputError(f"expected header {','.join(header)}", path=str(path), line=1)

        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 2:
                    raise ValueError(row)
                a, b = float(row[0]), float(row[1])
            except ValueError:
                raise InputError("malformed csv row", path=str(path), line=line) from None
            if not (np.isfinite(a) and np.isfinite(b)):
                raise InputError("malformed csv row", path=str(path), line=line)
            pairs.append((a, b))

    return pairs

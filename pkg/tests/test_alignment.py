import numpy as np
import pytest

from tialignUtils.Alignment import (AlignmentPath, TimeMap, align_sequences, coarsen, dtw_exact, expand_window,
                                    fast_dtw, lookup, path_to_timemap, read_pair_csv, read_timemap_csv,
                                    validate_path, write_path_csv, write_timemap_csv)
from tialignUtils.Errors import AlignmentTooLarge, InputError, ShapeMismatch
from tialignUtils.Features import FeatureSequence, pairwise_distances


def brute_force_cost(a, b):
    '''
    Minimum over every monotone path from (0, 0) to the end, by exhaustive search.
    '''

    cost = pairwise_distances(a, b)
    n, m = cost.shape
    best = [np.inf]

    def walk(i, j, total):
        total += cost[i, j]
        if (i, j) == (n - 1, m - 1):
            best[0] = min(best[0], total)
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total)
        if i + 1 < n:
            walk(i + 1, j, total)
        if j + 1 < m:
            walk(i, j + 1, total)

    walk(0, 0, 0.0)
    return best[0]


def path_cost(path, a, b):
    cost = pairwise_distances(a, b)
    return float(sum(cost[i, j] for i, j in path.pairs))


def test_exact_matches_brute_force():
    for seed in range(200):
        _exact_matches_brute_force(np.random.default_rng(seed))


def _exact_matches_brute_force(rng):
    a = rng.normal(size=(int(rng.integers(1, 7)), 3))
    b = rng.normal(size=(int(rng.integers(1, 7)), 3))
    path = dtw_exact(a, b)
    assert validate_path(path, len(a), len(b)) is None
    assert path.total_cost == pytest.approx(brute_force_cost(a, b))
    assert path.total_cost == pytest.approx(path_cost(path, a, b))


def test_single_frames():
    path = dtw_exact(np.array([[1.0]]), np.array([[4.0]]))
    assert path.pairs.tolist() == [[0, 0]]
    assert path.total_cost == pytest.approx(3.0)


def test_one_frame_against_three():
    path = dtw_exact(np.array([[0.0]]), np.array([[0.0], [1.0], [2.0]]))
    assert path.pairs.tolist() == [[0, 0], [0, 1], [0, 2]]
    assert path.total_cost == pytest.approx(3.0)


def test_exact_cost_is_symmetric():
    rng = np.random.default_rng(31)
    for _ in range(20):
        a = rng.normal(size=(int(rng.integers(1, 30)), 3))
        b = rng.normal(size=(int(rng.integers(1, 30)), 3))
        assert dtw_exact(a, b).total_cost == pytest.approx(dtw_exact(b, a).total_cost)


def test_self_alignment_is_diagonal(rng):
    a = rng.normal(size=(40, 4))
    path = dtw_exact(a, a)
    assert path.total_cost == 0.0
    assert path.pairs.tolist() == [[i, i] for i in range(40)]


def test_exact_rejects_bad_inputs():
    with pytest.raises(InputError, match="empty input"):
        dtw_exact(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeMismatch, match="dim mismatch"):
        dtw_exact(np.zeros((3, 2)), np.zeros((3, 4)))


def test_exact_refuses_huge_matrices(monkeypatch):
    import tialignUtils.Alignment as Alignment
    monkeypatch.setattr(Alignment, "MAX_EXACT_CELLS", 100)
    with pytest.raises(AlignmentTooLarge):
        dtw_exact(np.zeros((11, 1)), np.zeros((10, 1)))


# FastDTW

def test_coarsen_carries_odd_frame():
    x = np.arange(5, dtype=np.float64)[:, np.newaxis]
    assert coarsen(x)[:, 0].tolist() == [0.5, 2.5, 4.0]


def test_expand_window_covers_projection():
    lo, hi = expand_window(np.array([[0, 0], [1, 1], [2, 2]]), 6, 6, radius=0)
    assert lo.tolist() == [0, 0, 2, 2, 4, 4]
    assert hi.tolist() == [1, 1, 3, 3, 5, 5]


def test_fast_equals_exact_on_small_inputs(rng):
    a = rng.normal(size=(30, 3))
    b = rng.normal(size=(25, 3))
    fast = fast_dtw(a, b, radius=20)
    exact = dtw_exact(a, b)
    assert np.array_equal(fast.pairs, exact.pairs)
    assert fast.total_cost == exact.total_cost


@pytest.mark.parametrize("seed", range(10))
def test_fast_is_valid_and_never_beats_exact(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(int(rng.integers(40, 120)), 2))
    b = rng.normal(size=(int(rng.integers(40, 120)), 2))
    radius = int(rng.integers(0, 4))
    fast = fast_dtw(a, b, radius=radius)
    assert validate_path(fast, len(a), len(b)) is None
    assert fast.total_cost >= dtw_exact(a, b).total_cost - 1e-9
    assert fast.total_cost == pytest.approx(path_cost(fast, a, b))


@pytest.mark.slow
def test_fast_stays_close_to_exact():
    rng = np.random.default_rng(200)
    for _ in range(50):
        a = rng.normal(size=(200, 3))
        b = rng.normal(size=(200, 3))
        assert fast_dtw(a, b, radius=50).total_cost <= 1.05 * dtw_exact(a, b).total_cost


def test_fast_paths_are_always_valid():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(1, 40))
        radius = int(rng.integers(0, 5))
        a = rng.normal(size=(n, 2))
        b = rng.normal(size=(m, 2))
        assert validate_path(fast_dtw(a, b, radius=radius), n, m) is None


def test_fast_self_alignment_is_diagonal(rng):
    a = rng.normal(size=(300, 2))
    fast = fast_dtw(a, a, radius=3)
    assert fast.total_cost == 0.0
    assert np.array_equal(fast.pairs[:, 0], fast.pairs[:, 1])


def test_fast_rejects_negative_radius(rng):
    with pytest.raises(InputError):
        fast_dtw(rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), radius=-1)


# Path checks

@pytest.mark.parametrize("pairs, problem", [
    ([], "empty"),
    ([[0, 1], [1, 1]], "starts"),
    ([[0, 0], [1, 1]], "ends"),
    ([[0, 0], [2, 2]], "invalid step"),
    ([[0, 0], [0, 0], [2, 2]], "invalid step"),
])
def test_validate_path_finds_problems(pairs, problem):
    path = AlignmentPath(pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2), total_cost=0.0)
    assert problem in validate_path(path, 3, 3)


# Time maps

def test_identity_path_gives_identity_map():
    path = AlignmentPath(pairs=np.array([[i, i] for i in range(5)]), total_cost=0.0)
    tm = path_to_timemap(path, 0.1, 0, 0.1, 0)
    assert np.allclose(tm.anchors, [[0.1 * i, 0.1 * i] for i in range(5)])


def test_runs_collapse_to_midpoints():
    path = AlignmentPath(pairs=np.array([[0, 0], [0, 1], [0, 2], [1, 3], [2, 3], [3, 4]]), total_cost=0.0)
    tm = path_to_timemap(path, 1.0, 0, 1.0, 0)
    assert tm.anchors.tolist() == [[0.0, 1.0], [1.5, 3.0], [3.0, 4.0]]
    assert np.all(np.diff(tm.anchors, axis=0) > 0.0)


def test_offsets_shift_the_map():
    path = AlignmentPath(pairs=np.array([[0, 0], [1, 1]]), total_cost=0.0)
    tm = path_to_timemap(path, 0.5, 8, 0.25, 0)
    assert tm.anchors.tolist() == [[4.0, 0.0], [4.5, 0.25]]


def test_lookup_interpolates_and_clamps():
    tm = TimeMap(anchors=np.array([[0.0, 0.0], [10.0, 12.0], [20.0, 28.0]]))
    assert lookup(tm, 15.0) == pytest.approx(20.0)
    assert lookup(tm, -5.0) == 0.0
    assert lookup(tm, 30.0) == 28.0
    with pytest.raises(InputError):
        lookup(TimeMap(anchors=np.zeros((0, 2))), 1.0)


def test_align_sequences_uses_feature_offsets(rng):
    vectors = rng.normal(size=(20, 3))
    a = FeatureSequence(vectors=vectors, hop_seconds=0.02, t0_offset_frames=8)
    path, tm = align_sequences(a, a, exact=True)
    assert path.total_cost == 0.0
    assert tm.anchors[0].tolist() == pytest.approx([0.16, 0.16])
    assert np.allclose(tm.anchors[:, 0], tm.anchors[:, 1])


# CSV

def test_timemap_csv_round_trip(tmp_path):
    tm = TimeMap(anchors=np.array([[0.0, 0.0], [1.25, 1.5]]))
    path = tmp_path / "map.csv"
    write_timemap_csv(path, tm)
    assert path.read_text().splitlines()[0] == "score_seconds,performance_seconds"
    assert np.allclose(read_timemap_csv(path).anchors, tm.anchors)


def test_path_csv(tmp_path):
    path = tmp_path / "path.csv"
    write_path_csv(path, AlignmentPath(pairs=np.array([[0, 0], [1, 1]]), total_cost=0.0))
    assert path.read_text().splitlines() == ["i,j", "0,0", "1,1"]


def test_pair_csv_reports_line_numbers(tmp_path):
    path = tmp_path / "refs.csv"
    path.write_text("a,b\n1.0,2.0\n\n3.0,oops\n")
    with pytest.raises(InputError) as info:
        read_pair_csv(path, ("a", "b"))
    assert info.value.line == 4
    assert "line 4" in str(info.value)


def test_pair_csv_requires_header(tmp_path):
    path = tmp_path / "refs.csv"
    path.write_text("1.0,2.0\n")
    with pytest.raises(InputError) as info:
        read_pair_csv(path, ("a", "b"))
    assert info.value.line == 1

import numpy as np
import pytest

from tialignUtils.Errors import IncompatibleModel, InputError, ShapeMismatch
from tialignUtils.Features import (FeatureSequence, chroma_fold_matrix, distance, extract_chroma, extract_gae,
                                   fold_chroma, load_features, pairwise_distances, save_features)
from tialignUtils.GatedAutoencoder import init_params
from tialignUtils.SignalFrontend import Spectrogram, normalize_spectrogram, shift_spectrogram


def raw_spectrogram(rng, frames=30, bins=120):
    return Spectrogram(frames=rng.uniform(0.0, 1.0, size=(frames, bins)), hop_seconds=448 / 22050)


# GAE mapping codes

def test_extract_gae_shape_and_offset(small_model, rng):
    features = extract_gae(small_model, raw_spectrogram(rng))
    assert len(features) == 30 - 8
    assert features.dim == 8
    assert features.t0_offset_frames == 8
    assert features.times()[0] == pytest.approx(8 * 448 / 22050)
    assert np.all(np.abs(features.vectors) <= 1.0)


def test_extract_gae_normalizes_raw_input(small_model, rng):
    spec = raw_spectrogram(rng)
    a = extract_gae(small_model, spec)
    b = extract_gae(small_model, normalize_spectrogram(spec))
    assert np.allclose(a.vectors, b.vectors)


def test_extract_gae_batching_does_not_change_codes(small_model, rng):
    spec = raw_spectrogram(rng, frames=40)
    assert np.allclose(extract_gae(small_model, spec, batch=5).vectors,
                       extract_gae(small_model, spec).vectors)


def test_extract_gae_rejects_bin_mismatch(rng):
    params = init_params(n=2, M=6, F=4, H1=3, H2=2, seed=0)
    with pytest.raises(IncompatibleModel, match="incompatible model"):
        extract_gae(params, raw_spectrogram(rng, bins=120))


def test_extract_gae_rejects_short_spectrogram(small_model, rng):
    with pytest.raises(InputError):
        extract_gae(small_model, raw_spectrogram(rng, frames=8))


# Chroma

def test_fold_matrix_sums_semitone_pairs():
    fold = chroma_fold_matrix(120, 24)
    assert fold.shape == (120, 12)
    assert np.all(fold.sum(axis=1) == 1.0)
    assert np.all(fold.sum(axis=0) == 10.0)
    assert fold[0, 0] == 1.0 and fold[1, 0] == 1.0 and fold[2, 1] == 1.0


def test_folding_keeps_frame_energy(rng):
    frames = rng.uniform(size=(30, 120))
    assert np.allclose(fold_chroma(frames).sum(axis=1), frames.sum(axis=1))


def test_chroma_of_a_single_bin():
    frames = np.zeros((3, 120))
    frames[:, 66] = 2.0
    chroma = extract_chroma(Spectrogram(frames=frames, hop_seconds=0.02))
    assert chroma.dim == 12
    assert np.all(chroma.vectors[:, 9] == 1.0)
    assert np.all(np.delete(chroma.vectors, 9, axis=1) == 0.0)


def test_chroma_peak_normalized_and_silence_is_zero(rng):
    frames = rng.uniform(size=(5, 120))
    frames[2] = 0.0
    chroma = extract_chroma(Spectrogram(frames=frames, hop_seconds=0.02)).vectors
    assert np.allclose(np.delete(chroma, 2, axis=0).max(axis=1), 1.0)
    assert np.all(chroma[2] == 0.0)


def test_chroma_rotates_with_a_semitone_shift(rng):
    spec = raw_spectrogram(rng)
    base = extract_chroma(spec).vectors
    moved = extract_chroma(shift_spectrogram(spec, 2)).vectors
    assert np.allclose(moved, np.roll(base, -1, axis=1))


def test_chroma_ignores_an_octave_shift(rng):
    spec = raw_spectrogram(rng)
    assert np.allclose(extract_chroma(shift_spectrogram(spec, 24)).vectors, extract_chroma(spec).vectors)


def test_chroma_rejects_normalized(rng):
    with pytest.raises(InputError):
        extract_chroma(normalize_spectrogram(raw_spectrogram(rng)))


# Distances

def test_euclidean_and_cityblock():
    assert distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    assert distance([0.0, 0.0], [3.0, 4.0], "cityblock") == pytest.approx(7.0)


def test_cosine():
    assert distance([1.0, 0.0], [0.0, 2.0], "cosine") == pytest.approx(1.0)
    assert distance([1.0, 1.0], [2.0, 2.0], "cosine") == pytest.approx(0.0, abs=1e-12)
    assert distance([0.0, 0.0], [1.0, 2.0], "cosine") == 1.0


@pytest.mark.parametrize("metric", ["euclidean", "cosine", "cityblock"])
def test_pairwise_matches_single(rng, metric):
    A = rng.normal(size=(4, 5))
    B = rng.normal(size=(3, 5))
    D = pairwise_distances(A, B, metric)
    assert D.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert D[i, j] == pytest.approx(distance(A[i], B[j], metric))
    assert np.all(D >= 0.0)


def test_distance_errors():
    with pytest.raises(ShapeMismatch, match="dim mismatch"):
        distance([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pairwise_distances(np.zeros((1, 2)), np.zeros((1, 2)), "chebyshev")


# FEAT container

def test_feature_file_round_trip(tmp_path, rng):
    features = FeatureSequence(vectors=rng.normal(size=(9, 4)), hop_seconds=0.02, t0_offset_frames=8)
    path = tmp_path / "codes.feat"
    save_features(path, features)
    back = load_features(path)
    assert back.t0_offset_frames == 8
    assert back.hop_seconds == 0.02
    assert np.array_equal(back.vectors, features.vectors.astype(np.float32).astype(np.float64))


def test_bad_feature_file(tmp_path):
    path = tmp_path / "codes.feat"
    path.write_bytes(b"FEAT")
    with pytest.raises(InputError, match="truncated"):
        load_features(path)

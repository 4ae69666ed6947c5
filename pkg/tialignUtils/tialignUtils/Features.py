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
# Features.py
#
# Spectrogram -> feature sequence, and the frame distances used to align them.
#
# Two feature types:
#
#   gae      64-d mapping codes of the gated autoencoder, one per n-gram
#            window; vector i belongs to frame i + n
#   chroma   12-d pitch class energy folded from the raw CQT (2 bins per
#            semitone, bin 0 = C), each frame scaled to unit maximum

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from tialignUtils.Errors import IncompatibleModel, InputError, ShapeMismatch
from tialignUtils.GatedAutoencoder import GaeParams, infer_mapping_batch
from tialignUtils.SignalFrontend import Spectrogram, ngram_windows, normalize_spectrogram

# Define the name of the Program, Description, and Version

progname = "Features"
progdesc = "Mapping code and chroma features"
progvers = "1.0.0"

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1
FEAT_HEADER = struct.Struct("<4sIIIdI")

METRICS = ("euclidean", "cosine", "cityblock")

# Broadcast blocks are capped at about this many float64 elements

_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class FeatureSequence:
    vectors: np.ndarray
    hop_seconds: float
    t0_offset_frames: int = 0

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def times(self) -> np.ndarray:
        return (np.arange(len(self)) + self.t0_offset_frames) * self.hop_seconds


def extract_gae(params: GaeParams, spec: Spectrogram, batch: int = 2048, logger=None) -> FeatureSequence:
    '''
    Mapping codes for every window of the spectrogram (T - n vectors). Raw
    spectrograms are contrast-normalized first.
    '''

    if spec.num_bins != params.M:
        raise IncompatibleModel(f"incompatible model: model expects {params.M} bins,"
                                f" spectrogram has {spec.num_bins}")
    if spec.num_frames <= params.n:
        raise InputError(f"spectrogram shorter than context: {spec.num_frames} frames, n={params.n}")

    if not spec.normalized:
        if logger is not None:
            logger.debug("Contrast-normalizing spectrogram before mapping inference")
        spec = normalize_spectrogram(spec)

    contexts, targets = ngram_windows(spec, params.n)
    codes = np.empty((len(targets), params.H2), dtype=np.float64)
    for start in range(0, len(targets), batch):
        stop = start + batch
        codes[start:stop] = infer_mapping_batch(params, contexts[start:stop], targets[start:stop])

    if logger is not None:
        logger.debug(f"extract_gae: {spec.num_frames} frames -> {len(codes)} codes")

    return FeatureSequence(vectors=codes, hop_seconds=spec.hop_seconds, t0_offset_frames=params.n)


def chroma_fold_matrix(num_bins: int, bins_per_octave: int = 24) -> np.ndarray:

    bins_per_semitone = max(1, bins_per_octave // 12)
    classes = (np.arange(num_bins) // bins_per_semitone) % 12
    fold = np.zeros((num_bins, 12), dtype=np.float64)
    fold[np.arange(num_bins), classes] = 1.0

    return fold


def fold_chroma(frames: np.ndarray, bins_per_octave: int = 24) -> np.ndarray:
    return np.asarray(frames, dtype=np.float64) @ chroma_fold_matrix(frames.shape[1], bins_per_octave)


def extract_chroma(spec: Spectrogram) -> FeatureSequence:

    if spec.normalized:
        raise InputError("chroma needs raw CQT magnitudes, got a normalized spectrogram")

    chroma = fold_chroma(spec.frames, spec.bins_per_octave)
    peak = chroma.max(axis=1, keepdims=True)
    chroma = np.divide(chroma, peak, out=np.zeros_like(chroma), where=peak > 0.0)

    return FeatureSequence(vectors=chroma, hop_seconds=spec.hop_seconds, t0_offset_frames=0)


# ----------------------------------------------------------------------------
# Distances

def distance(a, b, metric: str = "euclidean") -> float:

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"dim mismatch: {a.shape} vs {b.shape}")

    return float(pairwise_distances(a[np.newaxis], b[np.newaxis], metric)[0, 0])


def pairwise_distances(A: np.ndarray, B: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    '''
    (len A) x (len B) distance matrix. Cosine distance against a zero vector
    is 1.
    '''

    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"dim mismatch: {A.shape} vs {B.shape}")

    if metric == "cosine":
        na = np.sqrt(np.sum(A * A, axis=1))
        nb = np.sqrt(np.sum(B * B, axis=1))
        denom = np.outer(na, nb)
        sim = np.divide(A @ B.T, denom, out=np.zeros((len(A), len(B))), where=denom > 0.0)
        return np.maximum(1.0 - sim, 0.0)

    if metric not in METRICS:
        raise ValueError(f"unknown metric '{metric}', expected one of {METRICS}")

    out = np.empty((len(A), len(B)), dtype=np.float64)
    rows = max(1, _BLOCK_ELEMENTS // max(1, len(B) * A.shape[1]))
    for start in range(0, len(A), rows):
        diff = A[start:start + rows, np.newaxis, :] - B[np.newaxis, :, :]
        if metric == "euclidean":
            out[start:start + rows] = np.sqrt(np.sum(diff * diff, axis=2))
        else:
            out[start:start + rows] = np.sum(np.abs(diff), axis=2)

    return out


# ----------------------------------------------------------------------------
# "FEAT" container

def save_features(path: Union[str, Path], features: FeatureSequence):

    header = FEAT_HEADER.pack(FEAT_MAGIC, FEAT_VERSION, features.dim, len(features),
                              float(features.hop_seconds), int(features.t0_offset_frames))
    with open(path, "wb") as fp:
        fp.write(header)
        fp.write(np.ascontiguousarray(features.vectors, dtype="<f4").tobytes())


def load_features(path: Union[str, Path]) -> FeatureSequence:

    with open(path, "rb") as fp:
        raw = fp.read()

    if len(raw) < FEAT_HEADER.size:
        raise InputError("truncated feature file", path=str(path))

    magic, version, dim, count, hop_seconds, offset = FEAT_HEADER.unpack_from(raw)
    if magic != FEAT_MAGIC or version != FEAT_VERSION:
        raise InputError("not a FEAT feature file", path=str(path))
    if len(raw) != FEAT_HEADER.size + 4 * dim * count:
        raise InputError("truncated feature file", path=str(path))

    vectors = np.frombuffer(raw, dtype="<f4", offset=FEAT_HEADER.size).reshape(count, dim)

    return FeatureSequence(vectors=vectors.astype(np.float64), hop_seconds=hop_seconds,
                           t0_offset_frames=offset)

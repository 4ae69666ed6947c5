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
# SignalFrontend.py
#
# Audio in, constant-Q spectrogram out.
#
#   read_wav -> resample (22.05 kHz) -> cqt -> contrast_normalize
#
# plus the circular bin shift used both for transposing spectrograms and for
# the transposed training objective.
#
# CQT details
#
#   center frequency   f_k = fmin * 2^(k / bins_per_octave)
#   quality factor     Q   = q_factor / (2^(1 / bins_per_octave) - 1)
#   window length      N_k = ceil(Q * sr / f_k)      (Hann, symmetric)
#
# The transform uses the spectral-kernel method: each bin's windowed complex
# exponential is moved to the FFT domain once, thresholded, stored sparse, and
# every frame costs one rfft plus a sparse product. Frame t is centered on
# sample t * hop; the signal is zero padded by n_fft / 2 on both sides, so a
# signal of L samples gives 1 + L // hop frames.

import struct
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import scipy.io.wavfile as wavfile
from scipy import signal
from scipy.sparse import csr_matrix

from tialignUtils.Errors import InputError, ShapeMismatch

# Define the name of the Program, Description, and Version

progname = "SignalFrontend"
progdesc = "Audio decoding, resampling and constant-Q spectrograms"
progvers = "1.0.0"

CQTS_MAGIC = b"CQTS"
CQTS_VERSION = 1
CQTS_HEADER = struct.Struct("<4sIIIddI")

# Frames whose variance is below this are treated as constant (silence)

VARIANCE_EPS = 1e-8


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 22050
    fmin: float = 65.4
    bins_per_octave: int = 24
    num_bins: int = 120
    hop: int = 448
    q_factor: float = 1.0
    kernel_threshold: float = 0.0054
    block_frames: int = 256

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate

    @property
    def quality(self) -> float:
        return self.q_factor / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def center_frequencies(self) -> np.ndarray:
        return self.fmin * 2.0 ** (np.arange(self.num_bins) / self.bins_per_octave)

    def window_lengths(self) -> np.ndarray:
        return np.ceil(self.quality * self.sample_rate / self.center_frequencies()).astype(np.int64)

    def longest_window(self) -> int:
        return int(self.window_lengths()[0])


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    '''
    frames is a (T, M) float array. normalized tells whether the frames went
    through contrast_normalize; chroma needs the raw magnitudes.
    '''
    frames: np.ndarray
    hop_seconds: float
    bins_per_octave: int = 24
    fmin: float = 65.4
    normalized: bool = False

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.num_frames * self.hop_seconds

    def frame_times(self) -> np.ndarray:
        return np.arange(self.num_frames) * self.hop_seconds


@dataclass(frozen=True)
class NGramWindow:
    context: np.ndarray
    target: np.ndarray

    @property
    def n(self) -> int:
        return self.context.shape[0]

    def linear_context(self) -> np.ndarray:
        return self.context.reshape(-1)


# ----------------------------------------------------------------------------
# WAV input/output

def _to_float(data: np.ndarray) -> np.ndarray:

    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0

    # scipy hands 24-bit PCM back left-justified in int32

    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)

    raise InputError(f"unsupported sample format {data.dtype}")


def read_wav(path: Union[str, Path], logger=None) -> AudioBuffer:
    '''
    Read a RIFF/WAVE file into a mono AudioBuffer. Stereo is averaged.
    '''

    try:
        sample_rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as e:
        raise InputError(f"cannot read wav: {e}", path=str(path)) from e

    samples = _to_float(data)
    if samples.ndim == 2:
        if logger is not None:
            logger.debug(f"Downmixing {samples.shape[1]} channels from {path}")
        samples = samples.mean(axis=1)

    if logger is not None:
        logger.debug(f"Read {len(samples)} samples at {sample_rate} Hz from {path}")

    return AudioBuffer(samples=samples, sample_rate=int(sample_rate))


def write_wav(path: Union[str, Path], audio: AudioBuffer):
    wavfile.write(str(path), audio.sample_rate, audio.samples.astype(np.float32))


def resample(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    '''
    Band-limited rate conversion with scipy's polyphase filter (Kaiser
    windowed FIR, beta 5). Equal rates return an exact copy.
    '''

    if len(audio.samples) == 0:
        raise InputError("empty audio")
    if not np.all(np.isfinite(audio.samples)):
        raise InputError("invalid samples")
    if target_rate <= 0 or audio.sample_rate <= 0:
        raise InputError(f"invalid sample rate {audio.sample_rate} -> {target_rate}")

    if target_rate == audio.sample_rate:
        return AudioBuffer(samples=np.array(audio.samples, dtype=np.float64, copy=True),
                           sample_rate=audio.sample_rate)

    ratio = Fraction(int(target_rate), int(audio.sample_rate))
    out = signal.resample_poly(audio.samples, ratio.numerator, ratio.denominator)

    return AudioBuffer(samples=np.asarray(out, dtype=np.float64), sample_rate=int(target_rate))


def load_audio(path: Union[str, Path], config: FrontendConfig = FrontendConfig(), logger=None) -> AudioBuffer:
    return resample(read_wav(path, logger=logger), config.sample_rate)


# ----------------------------------------------------------------------------
# Constant-Q transform

@dataclass(frozen=True)
class CqtKernel:
    n_fft: int
    lengths: np.ndarray
    frequencies: np.ndarray
    matrix: csr_matrix = field(repr=False)


@lru_cache(maxsize=8)
def cqt_kernel(config: FrontendConfig) -> CqtKernel:

    frequencies = config.center_frequencies()
    lengths = config.window_lengths()

    if frequencies[-1] >= config.sample_rate / 2:
        raise InputError(f"top bin {frequencies[-1]:.1f} Hz is above Nyquist")

    n_fft = 1 << int(np.ceil(np.log2(lengths[0])))
    n_freq = n_fft // 2 + 1

    kernel = np.zeros((config.num_bins, n_freq), dtype=np.complex128)
    for k in range(config.num_bins):
        length = int(lengths[k])
        start = n_fft // 2 - length // 2
        n = np.arange(length) - length // 2
        atom = np.zeros(n_fft, dtype=np.complex128)
        atom[start:start + length] = (signal.get_window("hann", length, fftbins=False) / length
                                      * np.exp(2j * np.pi * frequencies[k] * n / config.sample_rate))
        spectrum = np.fft.fft(atom)[:n_freq]
        spectrum[np.abs(spectrum) <= config.kernel_threshold] = 0.0
        kernel[k] = spectrum

    matrix = csr_matrix(np.conj(kernel) / n_fft)

    return CqtKernel(n_fft=n_fft, lengths=lengths, frequencies=frequencies, matrix=matrix)


def num_cqt_frames(num_samples: int, hop: int) -> int:
    return 1 + num_samples // hop


def cqt(audio: AudioBuffer, config: FrontendConfig = FrontendConfig(), logger=None) -> Spectrogram:
    '''
    Raw (unnormalized) CQT magnitudes, one row per frame.
    '''

    if audio.sample_rate != config.sample_rate:
        raise InputError(f"cqt expects {config.sample_rate} Hz audio, got {audio.sample_rate} Hz")
    if not np.all(np.isfinite(audio.samples)):
        raise InputError("invalid samples")

    kernel = cqt_kernel(config)
    longest = int(kernel.lengths[0])
    if len(audio.samples) < longest:
        raise InputError(f"audio too short: {len(audio.samples)} samples, need {longest}")

    half = kernel.n_fft // 2
    padded = np.pad(np.asarray(audio.samples, dtype=np.float64), (half, half))
    num_frames = num_cqt_frames(len(audio.samples), config.hop)

    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel.n_fft)[::config.hop][:num_frames]

    frames = np.empty((num_frames, config.num_bins), dtype=np.float64)
    for start in range(0, num_frames, config.block_frames):
        block = np.fft.rfft(windows[start:start + config.block_frames], axis=1)
        frames[start:start + len(block)] = np.abs((kernel.matrix @ block.T).T)

    if logger is not None:
        logger.debug(f"cqt: {len(audio.samples)} samples -> {num_frames} frames"
                     f" (n_fft {kernel.n_fft}, longest window {longest})")

    return Spectrogram(frames=frames,
                       hop_seconds=config.hop_seconds,
                       bins_per_octave=config.bins_per_octave,
                       fmin=config.fmin,
                       normalized=False)


def contrast_normalize(frame: np.ndarray) -> np.ndarray:
    '''
    Zero mean, unit variance. Constant frames become all zeros.
    '''

    frame = np.asarray(frame, dtype=np.float64)
    mean = frame.mean()
    var = frame.var()
    if var < VARIANCE_EPS:
        return np.zeros_like(frame)

    return (frame - mean) / np.sqrt(var)


def normalize_spectrogram(spec: Spectrogram) -> Spectrogram:

    frames = np.asarray(spec.frames, dtype=np.float64)
    mean = frames.mean(axis=1, keepdims=True)
    var = frames.var(axis=1, keepdims=True)
    degenerate = var < VARIANCE_EPS
    out = (frames - mean) / np.sqrt(np.where(degenerate, 1.0, var))
    out[degenerate[:, 0]] = 0.0

    return replace(spec, frames=out, normalized=True)


# ----------------------------------------------------------------------------
# Circular shift: output index i holds input index (i + delta) mod M

def shift(x, delta: int):

    if isinstance(x, NGramWindow):
        return NGramWindow(context=shift(x.context, delta), target=shift(x.target, delta))
    if isinstance(x, Spectrogram):
        return shift_spectrogram(x, delta)

    return np.roll(np.asarray(x), -int(delta), axis=-1)


def shift_spectrogram(spec: Spectrogram, delta: int) -> Spectrogram:
    return replace(spec, frames=np.roll(spec.frames, -int(delta), axis=1))


# ----------------------------------------------------------------------------
# n-gram windows

def ngram_windows(spec: Spectrogram, n: int) -> Tuple[np.ndarray, np.ndarray]:
    '''
    All contiguous (n + 1)-frame windows of a spectrogram as stacked arrays:
    contexts (W, n, M) and targets (W, M), W = T - n. Views, not copies.
    '''

    frames = spec.frames
    if frames.shape[0] <= n:
        return (np.zeros((0, n, frames.shape[1])), np.zeros((0, frames.shape[1])))

    contexts = np.lib.stride_tricks.sliding_window_view(frames[:-1], n, axis=0)
    contexts = np.moveaxis(contexts, -1, 1)

    return contexts, frames[n:]


def window_at(spec: Spectrogram, t: int, n: int) -> NGramWindow:
    '''
    The window whose target is frame t.
    '''

    if t < n or t >= spec.num_frames:
        raise ShapeMismatch(f"shape mismatch: no {n}-frame context for frame {t}")

    return NGramWindow(context=spec.frames[t - n:t].copy(), target=spec.frames[t].copy())


# ----------------------------------------------------------------------------
# "CQTS" container

def save_spectrogram(path: Union[str, Path], spec: Spectrogram):

    header = CQTS_HEADER.pack(CQTS_MAGIC, CQTS_VERSION, spec.num_bins, spec.num_frames,
                              float(spec.hop_seconds), float(spec.fmin), int(spec.bins_per_octave))
    with open(path, "wb") as fp:
        fp.write(header)
        fp.write(np.ascontiguousarray(spec.frames, dtype="<f4").tobytes())


def load_spectrogram(path: Union[str, Path], normalized: bool = False) -> Spectrogram:

    with open(path, "rb") as fp:
        raw = fp.read()

    if len(raw) < CQTS_HEADER.size:
        raise InputError("truncated spectrogram file", path=str(path))

    magic, version, num_bins, num_frames, hop_seconds, fmin, bpo = CQTS_HEADER.unpack_from(raw)
    if magic != CQTS_MAGIC or version != CQTS_VERSION:
        raise InputError("not a CQTS spectrogram file", path=str(path))

    expected = CQTS_HEADER.size + 4 * num_bins * num_frames
    if len(raw) != expected:
        raise InputError("truncated spectrogram file", path=str(path))

    frames = np.frombuffer(raw, dtype="<f4", offset=CQTS_HEADER.size).reshape(num_frames, num_bins)

    return Spectrogram(frames=frames.astype(np.float64), hop_seconds=hop_seconds,
                       bins_per_octave=bpo, fmin=fmin, normalized=normalized)

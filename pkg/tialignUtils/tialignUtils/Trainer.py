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
# Trainer.py
#
# Plain SGD training of the gated autoencoder with a random transposition
# per batch.
#
# Every epoch shuffles all windows (across pieces) with the run's generator,
# cuts them into batches (the last partial batch is kept), and for each batch
# draws one delta and one dropout mask per window. The step uses the gradient
# summed over the batch, not its mean. The learning rate falls linearly from
# lr0 to zero. After every step the columns of U and V are clipped to max_norm.
#
# A batch gradient is the sum of fixed-size chunk gradients added in chunk
# order. Chunks may be computed on several threads; the result does not
# depend on how many.

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import humanize
import numpy as np

from tialignUtils.Errors import ConfigError, InputError, TrainingDivergence
from tialignUtils.GatedAutoencoder import (OUTPUT_NONLINEARITIES, GaeParams, LossBreakdown, Regularizers,
                                           init_params, load_checkpoint, loss_and_gradients,
                                           make_dropout_masks, project_norms, save_checkpoint)
from tialignUtils.SignalFrontend import (FrontendConfig, NGramWindow, Spectrogram, cqt, load_audio,
                                         normalize_spectrogram)
from tialignUtils.Synth import SynthConfig, generate_corpus, load_notes, synthesize

# Define the name of the Program, Description, and Version

progname = "Trainer"
progdesc = "SGD training of the gated autoencoder"
progvers = "1.0.0"

__all__ = ["TrainingConfig", "EpochRecord", "TrainingLog", "WindowDataset", "build_dataset",
           "lr_schedule", "sgd_step", "train", "save_checkpoint", "load_checkpoint",
           "input_spectrograms", "corpus_spectrograms"]

TRAINING_LOG_FIELDS = ["epoch", "loss_total", "loss_mse", "lr", "seconds"]

AUDIO_SUFFIXES = (".wav", ".wave")
NOTE_SUFFIXES = (".csv", ".mid", ".midi")


@dataclass(frozen=True)
class TrainingConfig:
    n: int = 8
    epochs: int = 300
    lr0: float = 1e-3
    batch_size: int = 128
    delta_range: Tuple[int, int] = (-60, 60)
    seed: int = 0
    regularizers: Regularizers = field(default_factory=Regularizers)
    dropout_rate: float = 0.5
    num_bins: int = 120
    factors: Optional[int] = None
    hidden1: int = 128
    hidden2: int = 64
    output_nonlinearity: str = "identity"
    chunk_size: int = 32
    threads: int = 1

    def __post_init__(self):
        lo, hi = self.delta_range
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.lr0 >= 0.0:
            raise ConfigError(f"lr0 must be >= 0, got {self.lr0}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.chunk_size < 1 or self.threads < 1:
            raise ConfigError("batch_size, chunk_size and threads must be >= 1")
        if lo > hi or lo < -self.num_bins or hi > self.num_bins:
            raise ConfigError(f"delta range [{lo}, {hi}] must lie within"
                              f" [-{self.num_bins}, {self.num_bins}]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.output_nonlinearity not in OUTPUT_NONLINEARITIES:
            raise ConfigError(f"output_nonlinearity must be one of {OUTPUT_NONLINEARITIES}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_total: float
    loss_mse: float
    lr: float
    seconds: float


@dataclass
class TrainingLog:
    entries: List[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def append(self, record: EpochRecord):
        self.entries.append(record)

    def to_csv(self, path: Union[str, Path]):

        with open(path, "w", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(TRAINING_LOG_FIELDS)
            for e in self.entries:
                writer.writerow([e.epoch, f"{e.loss_total:.8f}", f"{e.loss_mse:.8f}",
                                 f"{e.lr:.8e}", f"{e.seconds:.3f}"])


class WindowDataset:
    '''
    All (n + 1)-frame windows of a set of normalized spectrograms. Frames
    are stored once; a window is its start row in the concatenated frames.
    Indexing yields NGramWindow objects.
    '''

    def __init__(self, frames: np.ndarray, starts: np.ndarray, n: int):
        self.frames = frames
        self.starts = starts
        self.n = n

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return len(self.starts)

    def __getitem__(self, k: int) -> NGramWindow:
        s = int(self.starts[k])
        return NGramWindow(context=self.frames[s:s + self.n].copy(), target=self.frames[s + self.n].copy())

    def batch(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:

        starts = self.starts[indices]
        contexts = self.frames[starts[:, np.newaxis] + np.arange(self.n)[np.newaxis, :]]

        return contexts, self.frames[starts + self.n]


def build_dataset(spectrograms: Sequence[Spectrogram], n: int, logger=None) -> WindowDataset:
    '''
    One window per target frame t >= n of every spectrogram, Σ (T_i - n) in
    total. Spectrograms with T <= n are skipped with a warning. Raw
    spectrograms are contrast-normalized.
    '''

    blocks = []
    starts = []
    offset = 0
    num_bins = None

    for k, spec in enumerate(spectrograms):
        if num_bins is not None and spec.num_bins != num_bins:
            raise InputError(f"spectrogram {k} has {spec.num_bins} bins, expected {num_bins}")
        num_bins = spec.num_bins

        if spec.num_frames <= n:
            if logger is not None:
                logger.warning(f"Skipping spectrogram {k}: {spec.num_frames} frames is too short"
                               f" for n={n}")
            continue

        if not spec.normalized:
            spec = normalize_spectrogram(spec)

        blocks.append(np.asarray(spec.frames, dtype=np.float64))
        starts.append(offset + np.arange(spec.num_frames - n))
        offset += spec.num_frames

    if not blocks:
        frames = np.zeros((0, num_bins or 0))
        starts = [np.zeros(0, dtype=np.int64)]
    else:
        frames = np.concatenate(blocks, axis=0)

    dataset = WindowDataset(frames, np.concatenate(starts).astype(np.int64), n)

    if logger is not None:
        logger.debug(f"Dataset: {humanize.intcomma(len(dataset))} windows from"
                     f" {len(blocks)} spectrograms")

    return dataset


def lr_schedule(epoch: int, config: TrainingConfig) -> float:
    return config.lr0 * (1.0 - epoch / config.epochs)


def sgd_step(params: GaeParams, grads: GaeParams, lr: float) -> GaeParams:
    return params + grads.scaled(-lr)


def _chunk_gradients(params: GaeParams,
                     contexts: np.ndarray,
                     targets: np.ndarray,
                     delta: int,
                     masks: np.ndarray,
                     config: TrainingConfig,
                     executor: Optional[ThreadPoolExecutor]) -> Tuple[LossBreakdown, GaeParams]:

    bounds = [(s, s + config.chunk_size) for s in range(0, len(targets), config.chunk_size)]

    def work(bound):
        s, e = bound
        return loss_and_gradients(params, contexts[s:e], targets[s:e], delta, masks=masks[s:e],
                                  reg=config.regularizers, nonlinearity=config.output_nonlinearity)

    parts = list(executor.map(work, bounds)) if executor is not None else [work(b) for b in bounds]

    loss, grads = parts[0]
    for part_loss, part_grads in parts[1:]:
        loss = loss + part_loss
        grads = grads + part_grads

    return loss, grads


def train(config: TrainingConfig,
          dataset: WindowDataset,
          logger=None,
          progress: Optional[Callable[[EpochRecord], None]] = None) -> Tuple[GaeParams, TrainingLog]:
    '''
    Train from the seeded initialisation and return float32 parameters (the
    checkpoint precision) together with the per-epoch log.
    '''

    if len(dataset) == 0:
        raise InputError("empty dataset")
    if dataset.num_bins != config.num_bins:
        raise ConfigError(f"dataset has {dataset.num_bins} bins, config expects {config.num_bins}")

    params = init_params(config.n, M=config.num_bins, F=config.factors, H1=config.hidden1,
                         H2=config.hidden2, seed=config.seed)
    rng = np.random.default_rng([config.seed, 1])
    lo, hi = config.delta_range
    size = config.n * config.num_bins

    if logger is not None:
        logger.info(f"Training n={config.n} F={params.F} on {humanize.intcomma(len(dataset))} windows,"
                    f" {config.epochs} epochs, batch {config.batch_size}")

    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    log = TrainingLog()

    try:
        for epoch in range(config.epochs):
            start = time.perf_counter()
            lr = lr_schedule(epoch, config)
            order = rng.permutation(len(dataset))
            totals = LossBreakdown()

            for b, first in enumerate(range(0, len(order), config.batch_size)):
                indices = order[first:first + config.batch_size]
                delta = int(rng.integers(lo, hi + 1))
                masks = make_dropout_masks(rng, len(indices), size, config.dropout_rate)
                contexts, targets = dataset.batch(indices)

                loss, grads = _chunk_gradients(params, contexts, targets, delta, masks, config, executor)
                if not np.isfinite(loss.total) or not grads.is_finite():
                    raise TrainingDivergence(epoch, b)

                params = project_norms(sgd_step(params, grads, lr), config.regularizers.max_norm)
                totals = totals + loss

            mean = totals.mean()
            record = EpochRecord(epoch=epoch, loss_total=mean.total, loss_mse=mean.mse, lr=lr,
                                 seconds=time.perf_counter() - start)
            log.append(record)

            if logger is not None:
                logger.progress(epoch, config.epochs, record.loss_total, record.loss_mse, lr, record.seconds)
            if progress is not None:
                progress(record)
    finally:
        if executor is not None:
            executor.shutdown()

    return params.astype(np.float32), log


# ----------------------------------------------------------------------------
# Training inputs

def input_spectrograms(paths: Sequence[Union[str, Path]],
                       frontend: FrontendConfig = FrontendConfig(),
                       synth: SynthConfig = SynthConfig(),
                       logger=None) -> List[Spectrogram]:
    '''
    Raw spectrograms of audio files, or of note lists (CSV or MIDI) rendered
    by the synthesizer.
    '''

    spectrograms = []
    for path in paths:
        suffix = Path(path).suffix.lower()
        if suffix in AUDIO_SUFFIXES:
            audio = load_audio(path, frontend, logger=logger)
        elif suffix in NOTE_SUFFIXES:
            audio = synthesize(load_notes(path, logger=logger), replace(synth, sample_rate=frontend.sample_rate))
        else:
            raise InputError(f"unsupported input type '{suffix}'", path=str(path))

        spectrograms.append(cqt(audio, frontend, logger=logger))

    return spectrograms


def corpus_spectrograms(num_pieces: int,
                        seconds: float,
                        seed: int = 0,
                        frontend: FrontendConfig = FrontendConfig(),
                        synth: SynthConfig = SynthConfig(),
                        logger=None) -> List[Spectrogram]:

    rendered = replace(synth, sample_rate=frontend.sample_rate)

    spectrograms = [cqt(synthesize(notes, rendered), frontend, logger=logger)
                    for notes in generate_corpus(num_pieces, seconds, seed)]

    if logger is not None:
        logger.info(f"Rendered {humanize.apnumber(num_pieces)} synthetic training pieces")

    return spectrograms

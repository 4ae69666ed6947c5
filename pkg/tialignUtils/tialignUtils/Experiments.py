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
# Experiments.py
#
# Experiment harnesses on synthetic score / performance pairs:
#
#   transposition          score spectrogram shifted by a fixed number of semitones
#   random-transposition   score re-transposed every period_seconds
#   tempo                  score rendered at scaled tempo, performance unchanged
#   features               chroma against one or more GAE models
#   metrics                euclidean / cosine / cityblock frame distance
#
# Every condition pools the errors of all pieces into one report. Conditions
# are independent and run through ConditionRunner; reports come back in
# condition order.

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import humanize
import numpy as np

from tialignUtils.Alignment import DEFAULT_RADIUS, align_sequences
from tialignUtils.ConditionRunner import ConditionRunner
from tialignUtils.Config import derive_seed
from tialignUtils.Errors import InputError
from tialignUtils.Evaluation import (DEFAULT_SPLICE_SEMITONES, EvalReport, ReferencePoints, SpliceLog,
                                     alignment_errors, evaluate, evaluate_errors,
                                     random_transposition_splice)
from tialignUtils.Features import METRICS, FeatureSequence, extract_chroma, extract_gae
from tialignUtils.GatedAutoencoder import GaeParams
from tialignUtils.SignalFrontend import FrontendConfig, Spectrogram, cqt, shift_spectrogram
from tialignUtils.Synth import (NoteEvent, SynthConfig, TempoCurve, apply_performance, generate_corpus,
                                random_tempo_curve, synthesize)

# Define the name of the Program, Description, and Version

progname = "Experiments"
progdesc = "Transposition, tempo and feature experiments"
progvers = "1.0.0"

EXPERIMENTS = ("transposition", "random-transposition", "tempo", "features", "metrics")

DEFAULT_SEMITONES = (-3, -2, -1, 0, 1, 2, 3)
DEFAULT_TEMPO_FACTORS = (2.0 / 3.0, 1.0, 4.0 / 3.0)

# Per-purpose seed streams

CORPUS_STREAM = 1
TEMPO_STREAM = 2
SPLICE_STREAM = 3


@dataclass(frozen=True)
class FeatureChoice:
    label: str
    kind: str = "chroma"
    params: Optional[GaeParams] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("gae", "chroma"):
            raise InputError(f"unknown feature '{self.kind}', expected gae or chroma")
        if self.kind == "gae" and self.params is None:
            raise InputError("gae features need a trained model")


@dataclass(frozen=True)
class Piece:
    name: str
    score_notes: Tuple[NoteEvent, ...]
    refs: ReferencePoints
    score_spec: Spectrogram
    perf_spec: Spectrogram


@dataclass(frozen=True)
class Condition:
    feature: FeatureChoice
    metric: str = "euclidean"
    semitones: int = 0
    tempo_factor: float = 1.0
    splice_seeds: Tuple[int, ...] = ()
    splice_semitones: Tuple[int, ...] = DEFAULT_SPLICE_SEMITONES
    period_seconds: float = 30.0


@dataclass
class ConditionOutcome:
    errors: np.ndarray
    splice_logs: List[Tuple[str, SpliceLog]] = field(default_factory=list)


@dataclass
class ExperimentResult:
    reports: List[Tuple[str, EvalReport]]
    errors: Dict[str, np.ndarray] = field(default_factory=dict)
    splice_logs: List[Tuple[str, SpliceLog]] = field(default_factory=list)


# ----------------------------------------------------------------------------
# Tempo scaling

def tempo_scale(x: Union[Sequence[NoteEvent], ReferencePoints], factor: float):
    '''
    factor is a tempo multiplier: onsets and durations are divided by it. For
    ReferencePoints the score column is rescaled and performance times stay.
    '''

    if not factor > 0.0:
        raise InputError(f"tempo factor must be > 0, got {factor}")

    if isinstance(x, ReferencePoints):
        return ReferencePoints(tuple((s / factor, p) for s, p in x.pairs))

    return [replace(n, onset=n.onset / factor, duration=n.duration / factor) for n in x]


def tempo_label(factor: float) -> str:

    if factor == 1.0:
        return "Base Tempo"
    ratio = Fraction(factor).limit_denominator(12)

    return f"{ratio.numerator}/{ratio.denominator} Tempo" if ratio.denominator != 1 \
        else f"{ratio.numerator}x Tempo"


def semitone_label(semitones: int) -> str:
    return f"{semitones:+d}" if semitones else "0"


# ----------------------------------------------------------------------------
# Building blocks

def render_spectrogram(notes: Sequence[NoteEvent],
                       frontend: FrontendConfig = FrontendConfig(),
                       synth: SynthConfig = SynthConfig(),
                       logger=None) -> Spectrogram:
    '''
    Raw CQT of the synthesized notes.
    '''

    audio = synthesize(notes, replace(synth, sample_rate=frontend.sample_rate), logger=logger)

    return cqt(audio, frontend, logger=logger)


def compute_features(spec: Spectrogram, feature: FeatureChoice, logger=None) -> FeatureSequence:

    if feature.kind == "chroma":
        return extract_chroma(spec)

    return extract_gae(feature.params, spec, logger=logger)


def bins_per_semitone(spec: Spectrogram) -> int:
    return max(1, spec.bins_per_octave // 12)


def make_piece(name: str,
               score_notes: Sequence[NoteEvent],
               curve: TempoCurve,
               frontend: FrontendConfig = FrontendConfig(),
               synth: SynthConfig = SynthConfig(),
               logger=None) -> Piece:

    perf_notes, refs = apply_performance(score_notes, curve)

    return Piece(name=name,
                 score_notes=tuple(score_notes),
                 refs=refs,
                 score_spec=render_spectrogram(score_notes, frontend, synth, logger),
                 perf_spec=render_spectrogram(perf_notes, frontend, synth, logger))


def synthetic_pieces(num_pieces: int,
                     seconds: float,
                     seed: int = 0,
                     jitter: float = 0.1,
                     frontend: FrontendConfig = FrontendConfig(),
                     synth: SynthConfig = SynthConfig(),
                     logger=None) -> List[Piece]:
    '''
    Seeded corpus pieces, each paired with a performance played along its
    own random tempo curve.
    '''

    corpus = generate_corpus(num_pieces, seconds, derive_seed(seed, CORPUS_STREAM))

    pieces = []
    for k, notes in enumerate(corpus):
        curve = random_tempo_curve(max(n.end for n in notes), seed=derive_seed(seed, TEMPO_STREAM, k),
                                   jitter=jitter)
        pieces.append(make_piece(f"piece{k:03d}", notes, curve, frontend, synth, logger))

    if logger is not None:
        logger.info(f"Prepared {humanize.apnumber(len(pieces))} synthetic pieces"
                    f" of {humanize.naturaldelta(seconds)}")

    return pieces


def align_errors(score_spec: Spectrogram,
                 perf_spec: Spectrogram,
                 refs: ReferencePoints,
                 feature: FeatureChoice,
                 metric: str = "euclidean",
                 radius: int = DEFAULT_RADIUS,
                 logger=None) -> np.ndarray:

    _, time_map = align_sequences(compute_features(score_spec, feature, logger),
                                  compute_features(perf_spec, feature, logger),
                                  metric=metric, radius=radius, logger=logger)

    return alignment_errors(time_map, refs)


def transpose_spectrogram_experiment(score_spec: Spectrogram,
                                     perf_spec: Spectrogram,
                                     refs: ReferencePoints,
                                     semitones: Sequence[int],
                                     feature: FeatureChoice,
                                     metric: str = "euclidean",
                                     radius: int = DEFAULT_RADIUS,
                                     logger=None) -> List[Tuple[int, EvalReport]]:
    '''
    Align the performance to the score shifted by 2 bins per semitone, once
    per transposition.
    '''

    reports = []
    perf = compute_features(perf_spec, feature, logger)
    for s in semitones:
        shifted = shift_spectrogram(score_spec, bins_per_semitone(score_spec) * int(s))
        _, time_map = align_sequences(compute_features(shifted, feature, logger), perf,
                                      metric=metric, radius=radius, logger=logger)
        reports.append((int(s), evaluate(time_map, refs)))

    return reports


# ----------------------------------------------------------------------------
# Condition processor (runs in the worker processes)

def run_condition(condition: str,
                  payload: Condition,
                  logger,
                  pieces: Sequence[Piece] = (),
                  radius: int = DEFAULT_RADIUS,
                  frontend: FrontendConfig = FrontendConfig(),
                  synth: SynthConfig = SynthConfig()) -> ConditionOutcome:

    errors = []
    splice_logs = []

    for piece in pieces:
        score_spec = piece.score_spec
        refs = piece.refs

        if payload.tempo_factor != 1.0:
            score_spec = render_spectrogram(tempo_scale(piece.score_notes, payload.tempo_factor),
                                            frontend, synth, logger)
            refs = tempo_scale(refs, payload.tempo_factor)

        if payload.semitones:
            score_spec = shift_spectrogram(score_spec, bins_per_semitone(score_spec) * payload.semitones)

        if payload.splice_seeds:
            variants = []
            for seed in payload.splice_seeds:
                spliced, log = random_transposition_splice(score_spec,
                                                           period_seconds=payload.period_seconds,
                                                           semitone_set=payload.splice_semitones,
                                                           seed=seed,
                                                           bins_per_semitone=bins_per_semitone(score_spec))
                variants.append(spliced)
                splice_logs.append((piece.name, log))
        else:
            variants = [score_spec]

        for variant in variants:
            errors.append(align_errors(variant, piece.perf_spec, refs, payload.feature,
                                       payload.metric, radius, logger))

        if logger is not None:
            logger.debug(f"{condition}: {piece.name} done")

    return ConditionOutcome(errors=np.concatenate(errors) if errors else np.zeros(0),
                            splice_logs=splice_logs)


def run_conditions(conditions: Sequence[Tuple[str, Condition]],
                   pieces: Sequence[Piece],
                   radius: int = DEFAULT_RADIUS,
                   frontend: FrontendConfig = FrontendConfig(),
                   synth: SynthConfig = SynthConfig(),
                   workers: int = 1,
                   logger=None) -> ExperimentResult:

    if not pieces:
        raise InputError("experiment needs at least one piece")

    runner = ConditionRunner(run_condition,
                             max_processes=workers,
                             logger=logger,
                             pieces=list(pieces),
                             radius=radius,
                             frontend=frontend,
                             synth=synth)
    processor = runner.run(conditions)

    result = ExperimentResult(reports=[])
    for item in processor.ordered():
        outcome = item.result
        result.reports.append((item.condition, evaluate_errors(outcome.errors)))
        result.errors[item.condition] = outcome.errors
        result.splice_logs.extend(outcome.splice_logs)

    if logger is not None:
        logger.debug(f"{len(result.reports)} conditions over {len(pieces)} pieces")

    return result


# ----------------------------------------------------------------------------
# Experiments

def transposition_experiment(pieces: Sequence[Piece],
                             feature: FeatureChoice,
                             semitones: Sequence[int] = DEFAULT_SEMITONES,
                             metric: str = "euclidean",
                             radius: int = DEFAULT_RADIUS,
                             workers: int = 1,
                             logger=None) -> ExperimentResult:

    conditions = [(semitone_label(int(s)), Condition(feature=feature, metric=metric, semitones=int(s)))
                  for s in semitones]

    return run_conditions(conditions, pieces, radius, workers=workers, logger=logger)


def random_transposition_experiment(pieces: Sequence[Piece],
                                    feature: FeatureChoice,
                                    seed: int = 0,
                                    period_seconds: float = 30.0,
                                    semitone_set: Sequence[int] = DEFAULT_SPLICE_SEMITONES,
                                    repeats: int = 5,
                                    metric: str = "euclidean",
                                    radius: int = DEFAULT_RADIUS,
                                    workers: int = 1,
                                    logger=None) -> ExperimentResult:
    '''
    Untransposed baseline next to scores that change transposition every
    period_seconds, repeats spliced versions per piece.
    '''

    if repeats < 1:
        raise InputError(f"splice repeats must be >= 1, got {repeats}")

    seeds = tuple(derive_seed(seed, SPLICE_STREAM, r) for r in range(repeats))
    conditions = [("0", Condition(feature=feature, metric=metric)),
                  ("Random", Condition(feature=feature, metric=metric, splice_seeds=seeds,
                                       splice_semitones=tuple(int(s) for s in semitone_set),
                                       period_seconds=float(period_seconds)))]

    return run_conditions(conditions, pieces, radius, workers=workers, logger=logger)


def tempo_experiment(pieces: Sequence[Piece],
                     features: Sequence[FeatureChoice],
                     factors: Sequence[float] = DEFAULT_TEMPO_FACTORS,
                     metric: str = "euclidean",
                     radius: int = DEFAULT_RADIUS,
                     frontend: FrontendConfig = FrontendConfig(),
                     synth: SynthConfig = SynthConfig(),
                     workers: int = 1,
                     logger=None) -> ExperimentResult:

    conditions = [(f"{feature.label} {tempo_label(float(f))}",
                   Condition(feature=feature, metric=metric, tempo_factor=float(f)))
                  for feature in features for f in factors]

    return run_conditions(conditions, pieces, radius, frontend, synth, workers, logger)


def feature_comparison_experiment(pieces: Sequence[Piece],
                                  features: Sequence[FeatureChoice],
                                  metric: str = "euclidean",
                                  radius: int = DEFAULT_RADIUS,
                                  workers: int = 1,
                                  logger=None) -> ExperimentResult:

    labels = [f.label for f in features]
    if len(set(labels)) != len(labels):
        raise InputError(f"feature labels must be unique, got {labels}")

    conditions = [(f.label, Condition(feature=f, metric=metric)) for f in features]

    return run_conditions(conditions, pieces, radius, workers=workers, logger=logger)


def metric_comparison_experiment(pieces: Sequence[Piece],
                                 feature: FeatureChoice,
                                 metrics: Sequence[str] = METRICS,
                                 radius: int = DEFAULT_RADIUS,
                                 workers: int = 1,
                                 logger=None) -> ExperimentResult:

    conditions = [(m, Condition(feature=feature, metric=m)) for m in metrics]

    return run_conditions(conditions, pieces, radius, workers=workers, logger=logger)

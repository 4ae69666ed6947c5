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
# Config.py
#
# Run configuration files. Flat INI with these sections:
#
#   [run]         seed, threads, output_dir
#   [frontend]    sample_rate, fmin, bins_per_octave, num_bins, hop, q_factor
#   [model]       n, factors, hidden1, hidden2, output_nonlinearity, checkpoint
#   [training]    epochs, lr0, batch_size, delta_min, delta_max, dropout_rate,
#                 l2, sparsity, norm_deviation, max_norm, log_csv, inputs,
#                 corpus_pieces, corpus_seconds
#   [alignment]   feature, metric, radius
#   [experiment]  pieces, piece_seconds, semitones, tempo_factors,
#                 period_seconds, splice_repeats, splice_semitones, models,
#                 tempo_jitter
#
# Every key is optional. Unknown sections and keys are errors. Relative paths
# are taken relative to the config file. TIA_THREADS in the environment
# overrides [run] threads.

import configparser
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from tialignUtils.Errors import ConfigError, TialignError
from tialignUtils.Features import METRICS
from tialignUtils.GatedAutoencoder import Regularizers
from tialignUtils.SignalFrontend import FrontendConfig
from tialignUtils.Trainer import TrainingConfig

# Define the name of the Program, Description, and Version

progname = "Config"
progdesc = "Run configuration files"
progvers = "1.0.0"

THREADS_ENV = "TIA_THREADS"

FEATURES = ("gae", "chroma")


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _fraction_list(text: str) -> Tuple[float, ...]:
    return tuple(float(Fraction(v.strip())) for v in text.split(",") if v.strip())


def _path_list(text: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


# section -> key -> parser

SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "run": {"seed": int, "threads": int, "output_dir": str},
    "frontend": {"sample_rate": int, "fmin": float, "bins_per_octave": int,
                 "num_bins": int, "hop": int, "q_factor": float},
    "model": {"n": int, "factors": _optional_int, "hidden1": int, "hidden2": int,
              "output_nonlinearity": str, "checkpoint": str},
    "training": {"epochs": int, "lr0": float, "batch_size": int, "delta_min": int,
                 "delta_max": int, "dropout_rate": float, "l2": float, "sparsity": float,
                 "norm_deviation": float, "max_norm": float, "log_csv": str,
                 "inputs": _path_list, "corpus_pieces": int, "corpus_seconds": float},
    "alignment": {"feature": str, "metric": str, "radius": int},
    "experiment": {"pieces": int, "piece_seconds": float, "semitones": _int_list,
                   "tempo_factors": _fraction_list, "period_seconds": float,
                   "splice_repeats": int, "splice_semitones": _int_list, "models": _path_list,
                   "tempo_jitter": float},
}


@dataclass(frozen=True)
class ExperimentSettings:
    pieces: int = 4
    piece_seconds: float = 40.0
    semitones: Tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
    tempo_factors: Tuple[float, ...] = (2.0 / 3.0, 1.0, 4.0 / 3.0)
    period_seconds: float = 30.0
    splice_repeats: int = 5
    splice_semitones: Tuple[int, ...] = (-3, -2, -1, 1, 2, 3)
    models: Tuple[str, ...] = ()
    tempo_jitter: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 1
    output_dir: str = "."
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    checkpoint: Optional[str] = None
    log_csv: Optional[str] = None
    inputs: Tuple[str, ...] = ()
    corpus_pieces: int = 20
    corpus_seconds: float = 30.0
    feature: str = "chroma"
    metric: str = "euclidean"
    radius: int = 50
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise ConfigError(f"feature must be one of {FEATURES}, got '{self.feature}'")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got '{self.metric}'")
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.corpus_pieces < 1 or self.corpus_seconds <= 0.0:
            raise ConfigError("corpus_pieces and corpus_seconds must be positive")
        if self.training.num_bins != self.frontend.num_bins:
            raise ConfigError("model and frontend disagree on the number of bins")
        if self.experiment.pieces < 1 or self.experiment.piece_seconds <= 0.0:
            raise ConfigError("experiment pieces and piece_seconds must be positive")
        if any(f <= 0.0 for f in self.experiment.tempo_factors):
            raise ConfigError("tempo factors must be > 0")
        if not self.experiment.period_seconds > 0.0:
            raise ConfigError(f"period_seconds must be > 0, got {self.experiment.period_seconds}")
        if self.experiment.splice_repeats < 1:
            raise ConfigError(f"splice_repeats must be >= 1, got {self.experiment.splice_repeats}")
        if not self.experiment.splice_semitones:
            raise ConfigError("splice_semitones must not be empty")

    @property
    def n(self) -> int:
        return self.training.n


def derive_seed(seed: int, *keys: int) -> int:
    '''
    Independent 32-bit seed for one purpose (corpus, tempo curves, splices,
    ...) of a run seeded with seed.
    '''

    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def resolve_threads(configured: int = 1) -> int:

    value = os.environ.get(THREADS_ENV)
    if value is None or not value.strip():
        return configured

    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got '{value}'") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {threads}")

    return threads


def _resolve(base: Path, path: str) -> str:
    p = Path(path).expanduser()
    return str(p if p.is_absolute() else base / p)


def _read_values(parser: configparser.ConfigParser, source: str) -> Dict[str, Dict[str, object]]:

    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except (ValueError, ZeroDivisionError) as e:
                raise ConfigError(f"{source}: bad value for {section}.{key}: '{raw}' ({e})") from None

    return values


def parse_config(text: str, base_dir: Union[str, Path] = ".", source: str = "<config>") -> RunConfig:

    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None

    v = _read_values(parser, source)
    base = Path(base_dir)
    run, fe, model, tr, al, ex = (v.get(s, {}) for s in ("run", "frontend", "model", "training",
                                                          "alignment", "experiment"))

    try:
        frontend = replace(FrontendConfig(), **fe)

        defaults = Regularizers()
        training = TrainingConfig(
            n=model.get("n", 8),
            epochs=tr.get("epochs", 300),
            lr0=tr.get("lr0", 1e-3),
            batch_size=tr.get("batch_size", 128),
            delta_range=(tr.get("delta_min", -60), tr.get("delta_max", 60)),
            seed=run.get("seed", 0),
            regularizers=Regularizers(l2=tr.get("l2", defaults.l2),
                                      sparsity=tr.get("sparsity", defaults.sparsity),
                                      norm_deviation=tr.get("norm_deviation", defaults.norm_deviation),
                                      max_norm=tr.get("max_norm", defaults.max_norm)),
            dropout_rate=tr.get("dropout_rate", 0.5),
            num_bins=frontend.num_bins,
            factors=model.get("factors"),
            hidden1=model.get("hidden1", 128),
            hidden2=model.get("hidden2", 64),
            output_nonlinearity=model.get("output_nonlinearity", "identity"),
            threads=resolve_threads(run.get("threads", 1)))

        experiment = replace(ExperimentSettings(), **ex)
        experiment = replace(experiment, models=tuple(_resolve(base, m) for m in experiment.models))

        config = RunConfig(
            seed=run.get("seed", 0),
            threads=resolve_threads(run.get("threads", 1)),
            output_dir=_resolve(base, run.get("output_dir", ".")),
            frontend=frontend,
            training=training,
            checkpoint=_resolve(base, model["checkpoint"]) if "checkpoint" in model else None,
            log_csv=_resolve(base, tr["log_csv"]) if "log_csv" in tr else None,
            inputs=tuple(_resolve(base, p) for p in tr.get("inputs", ())),
            corpus_pieces=tr.get("corpus_pieces", 20),
            corpus_seconds=tr.get("corpus_seconds", 30.0),
            feature=al.get("feature", "chroma"),
            metric=al.get("metric", "euclidean"),
            radius=al.get("radius", 50),
            experiment=experiment)
    except ConfigError:
        raise
    except TialignError as e:
        raise ConfigError(f"{source}: {e}") from None

    if config.frontend.fmin <= 0.0 or config.frontend.hop < 1 or config.frontend.bins_per_octave < 12:
        raise ConfigError(f"{source}: invalid frontend parameters")

    return config


def load_config(path: Union[str, Path], logger=None) -> RunConfig:

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None

    config = parse_config(text, base_dir=path.parent, source=str(path))

    if logger is not None:
        logger.debug(f"Loaded config {path}: seed={config.seed} threads={config.threads}"
                     f" n={config.n} feature={config.feature}")

    return config


def check_paths(config: RunConfig):
    '''
    Every referenced input file must exist.
    '''

    for p in config.inputs + config.experiment.models:
        if not Path(p).is_file():
            raise ConfigError(f"missing input path: {p}")

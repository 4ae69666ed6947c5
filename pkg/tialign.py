#!/usr/bin/env python3

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
# tialign.py
#
# Transposition-invariant audio-to-score alignment.
#
#   train       train a gated autoencoder from a config file
#   extract     write the feature sequence of an audio file or note list
#   align       align a score (audio or note list) to a performance recording
#   evaluate    score a time map against reference points
#   experiment  run one of the synthetic experiments
#   synth       render a note list, or write a synthetic corpus
#
# Exit codes: 0 success, 2 usage / config / input errors, 3 numeric failure
# (training divergence), 1 interrupted or unexpected failure.

# Import Libraries

import argparse
import csv
import sys
from pathlib import Path

import humanize

from tialignUtils import __version__
from tialignUtils.Alignment import (align_sequences, read_timemap_csv, validate_path, write_path_csv,
                                    write_timemap_csv)
from tialignUtils.Config import RunConfig, check_paths, derive_seed, load_config
from tialignUtils.Errors import ConfigError, TialignError
from tialignUtils.Evaluation import (evaluate, format_report_table, read_reference_csv, write_combined_csv,
                                     write_reference_csv, write_reports_csv, write_splice_log)
from tialignUtils.Experiments import (EXPERIMENTS, FeatureChoice, compute_features,
                                      feature_comparison_experiment, metric_comparison_experiment,
                                      random_transposition_experiment, synthetic_pieces, tempo_experiment,
                                      tempo_scale, transposition_experiment)
from tialignUtils.Features import METRICS, save_features
from tialignUtils.GatedAutoencoder import load_checkpoint, save_checkpoint
from tialignUtils.Logger import Logger
from tialignUtils.SignalFrontend import save_spectrogram, write_wav
from tialignUtils.Synth import (SynthConfig, apply_performance, generate_corpus, load_notes, random_tempo_curve,
                                synthesize, transpose_notes, write_notes_csv)
from tialignUtils.Trainer import build_dataset, corpus_spectrograms, input_spectrograms, train

# Define the name of the Program, Description, and Version.

progname = "tialign"
progdesc = "Transposition-invariant audio-to-score alignment"
progvers = __version__

# Seed streams used by the CLI

TRAIN_CORPUS_STREAM = 10
SYNTH_CORPUS_STREAM = 11
SYNTH_TEMPO_STREAM = 12

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


# tialign Class
#
# One instance per invocation; run() dispatches on the subcommand.

class tialign(object):

    def __init__(self, args, logger):

        self.args = args
        self.logger = logger
        self.config = RunConfig()

    def setup(self):

        # A config file is required for train / experiment and optional elsewhere

        config_path = getattr(self.args, "config", None)
        if config_path is not None:
            self.config = load_config(config_path, logger=self.logger)
        elif self.args.command in ("train", "experiment"):
            raise ConfigError(f"{self.args.command} needs --config")

        check_paths(self.config)

    def run(self) -> int:

        handler = getattr(self, f"cmd_{self.args.command}")
        return handler()

    def teardown(self):
        pass

    # Helpers

    def _synth_config(self) -> SynthConfig:
        return SynthConfig(sample_rate=self.config.frontend.sample_rate)

    def _spectrogram(self, path):
        return input_spectrograms([path], self.config.frontend, self._synth_config(), logger=self.logger)[0]

    def _model_path(self):
        model = getattr(self.args, "model", None)
        return model if model is not None else self.config.checkpoint

    def _feature(self, kind: str) -> FeatureChoice:

        if kind == "chroma":
            return FeatureChoice(label="Chroma", kind="chroma")

        path = self._model_path()
        if path is None:
            raise ConfigError("gae features need a trained model (--model or [model] checkpoint)")
        params = load_checkpoint(path, M=self.config.frontend.num_bins)

        return FeatureChoice(label=f"{params.n}G", kind="gae", params=params)

    def _selected_feature(self) -> FeatureChoice:

        kind = self.args.feature or self.config.feature
        if kind == "chroma" and getattr(self.args, "model", None) is not None:
            raise ConfigError("--model only applies to gae features, not chroma")

        return self._feature(kind)

    def _out_dir(self) -> Path:
        out = Path(getattr(self.args, "out_dir", None) or self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out

    # train

    def cmd_train(self) -> int:

        cfg = self.config
        if cfg.inputs:
            self.logger.info(f"Loading {humanize.apnumber(len(cfg.inputs))} training inputs")
            spectrograms = input_spectrograms(cfg.inputs, cfg.frontend, self._synth_config(), logger=self.logger)
        else:
            spectrograms = corpus_spectrograms(cfg.corpus_pieces, cfg.corpus_seconds,
                                               derive_seed(cfg.seed, TRAIN_CORPUS_STREAM),
                                               cfg.frontend, self._synth_config(), logger=self.logger)

        dataset = build_dataset(spectrograms, cfg.n, logger=self.logger)
        params, log = train(cfg.training, dataset, logger=self.logger)

        checkpoint = Path(self.args.checkpoint or cfg.checkpoint or Path(cfg.output_dir) / "model.gaem")
        checkpoint.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint, params, logger=self.logger)

        log_csv = self.args.log_csv or cfg.log_csv or checkpoint.with_suffix(".log.csv")
        log.to_csv(log_csv)

        self.logger.info(f"Wrote {checkpoint} ({humanize.naturalsize(checkpoint.stat().st_size)})"
                         f" and {log_csv}")

        return EXIT_OK

    # extract

    def cmd_extract(self) -> int:

        feature = self._selected_feature()
        spec = self._spectrogram(self.args.input)

        if self.args.spectrogram is not None:
            save_spectrogram(self.args.spectrogram, spec)

        features = compute_features(spec, feature, logger=self.logger)
        save_features(self.args.out, features)

        self.logger.info(f"Wrote {len(features)} x {features.dim} {feature.label} features to {self.args.out}")

        return EXIT_OK

    # align

    def cmd_align(self) -> int:

        feature = self._selected_feature()
        metric = self.args.metric or self.config.metric
        radius = self.args.radius if self.args.radius is not None else self.config.radius

        score = compute_features(self._spectrogram(self.args.score), feature, logger=self.logger)
        perf = compute_features(self._spectrogram(self.args.performance), feature, logger=self.logger)

        path, time_map = align_sequences(score, perf, metric=metric, radius=radius,
                                         exact=self.args.exact, logger=self.logger)

        problem = validate_path(path, len(score), len(perf))
        if problem is not None:
            raise TialignError(f"invalid alignment path: {problem}")

        write_timemap_csv(self.args.out, time_map)
        if self.args.dump is not None:
            write_path_csv(self.args.dump, path)

        print(f"length {len(path)} cost {path.total_cost:.6f}")

        return EXIT_OK

    # evaluate

    def cmd_evaluate(self) -> int:

        report = evaluate(read_timemap_csv(self.args.timemap), read_reference_csv(self.args.refs))
        reports = [(self.args.label, report)]

        print(format_report_table(reports))
        if self.args.out is not None:
            write_reports_csv(self.args.out, reports)

        return EXIT_OK

    # experiment

    def _experiment_features(self, name: str):

        if name in ("tempo", "features"):
            features = [self._feature("chroma")]
            paths = list(self.config.experiment.models)
            if self._model_path() is not None:
                paths.insert(0, self._model_path())
            for path in paths:
                params = load_checkpoint(path, M=self.config.frontend.num_bins)
                label = f"{params.n}G"
                if any(f.label == label for f in features):
                    label = f"{label} {Path(path).stem}"
                features.append(FeatureChoice(label=label, kind="gae", params=params))
            return features

        return [self._selected_feature()]

    def cmd_experiment(self) -> int:

        name = self.args.name
        cfg = self.config
        ex = cfg.experiment
        features = self._experiment_features(name)

        pieces = synthetic_pieces(ex.pieces, ex.piece_seconds, seed=cfg.seed, jitter=ex.tempo_jitter,
                                  frontend=cfg.frontend, synth=self._synth_config(), logger=self.logger)
        common = dict(radius=cfg.radius, workers=cfg.threads, logger=self.logger)

        if name == "transposition":
            result = transposition_experiment(pieces, features[0], ex.semitones, cfg.metric, **common)
        elif name == "random-transposition":
            result = random_transposition_experiment(pieces, features[0], seed=cfg.seed,
                                                     period_seconds=ex.period_seconds,
                                                     semitone_set=ex.splice_semitones,
                                                     repeats=ex.splice_repeats, metric=cfg.metric, **common)
        elif name == "tempo":
            result = tempo_experiment(pieces, features, ex.tempo_factors, cfg.metric,
                                      frontend=cfg.frontend, synth=self._synth_config(), **common)
        elif name == "features":
            result = feature_comparison_experiment(pieces, features, cfg.metric, **common)
        else:
            result = metric_comparison_experiment(pieces, features[0], METRICS, **common)

        out = self._out_dir()
        write_reports_csv(out / f"{name}_reports.csv", result.reports)
        write_combined_csv(out / f"{name}_table.csv", result.reports)
        if result.splice_logs:
            write_splice_log(out / f"{name}_splices.csv", result.splice_logs)

        if self.args.dump:
            with open(out / f"{name}_errors.csv", "w", newline="", encoding="utf-8") as fp:
                writer = csv.writer(fp)
                writer.writerow(["condition", "error_seconds"])
                for condition, errors in result.errors.items():
                    writer.writerows([condition, f"{e:.6f}"] for e in errors)

        print(format_report_table(result.reports))
        self.logger.info(f"Reports written to {out}")

        return EXIT_OK

    # synth

    def cmd_synth(self) -> int:

        synth = self._synth_config()

        if self.args.corpus is not None:
            out = self._out_dir()
            seed = self.args.seed if self.args.seed is not None else self.config.seed
            corpus = generate_corpus(self.args.corpus, self.args.seconds, derive_seed(seed, SYNTH_CORPUS_STREAM))

            for k, notes in enumerate(corpus):
                curve = random_tempo_curve(max(n.end for n in notes), derive_seed(seed, SYNTH_TEMPO_STREAM, k),
                                           jitter=self.args.jitter)
                perf_notes, refs = apply_performance(notes, curve)
                stem = out / f"piece{k:03d}"
                write_notes_csv(f"{stem}_score.csv", notes)
                write_wav(f"{stem}_score.wav", synthesize(notes, synth))
                write_wav(f"{stem}_perf.wav", synthesize(perf_notes, synth))
                write_reference_csv(f"{stem}_refs.csv", refs)

            self.logger.info(f"Wrote {humanize.apnumber(len(corpus))} pieces to {out}")
            return EXIT_OK

        if self.args.input is None or self.args.out is None:
            raise ConfigError("synth needs INPUT and --out, or --corpus")

        notes = load_notes(self.args.input, logger=self.logger)
        if self.args.transpose:
            notes = transpose_notes(notes, self.args.transpose)
        if self.args.tempo != 1.0:
            notes = tempo_scale(notes, self.args.tempo)

        audio = synthesize(notes, synth, logger=self.logger)
        write_wav(self.args.out, audio)
        self.logger.info(f"Wrote {humanize.naturaldelta(audio.duration)} of audio to {self.args.out}")

        return EXIT_OK


# Command line arguments

def commandargs(progdesc, progname, progvers, argv=None):

    parser = argparse.ArgumentParser(prog=progname, description=progdesc)
    parser.add_argument("--version",
                        action="version",
                        version=f"{progname} - Version {progvers}")
    parser.add_argument('--log',
                        default='INFO',
                        required=False,
                        dest='loglevel',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Set the logging level')

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a gated autoencoder")
    p.add_argument('--config', required=True, help="Run configuration file")
    p.add_argument('--checkpoint', default=None, help="Checkpoint to write (overrides [model] checkpoint)")
    p.add_argument('--log-csv', dest='log_csv', default=None, help="Per-epoch training log CSV")

    p = sub.add_parser("extract", help="Write the features of an audio file or note list")
    p.add_argument('input', help="WAV file, note list CSV or MIDI file")
    p.add_argument('--out', required=True, help="FEAT feature file to write")
    p.add_argument('--config', default=None, help="Run configuration file")
    p.add_argument('--feature', choices=['gae', 'chroma'], default=None)
    p.add_argument('--model', default=None, help="GAE checkpoint")
    p.add_argument('--spectrogram', default=None, help="Also write the CQTS spectrogram here")

    p = sub.add_parser("align", help="Align a score to a performance")
    p.add_argument('score', help="Score as WAV file, note list CSV or MIDI file")
    p.add_argument('performance', help="Performance WAV file")
    p.add_argument('--out', required=True, help="Time map CSV to write")
    p.add_argument('--config', default=None, help="Run configuration file")
    p.add_argument('--feature', choices=['gae', 'chroma'], default=None)
    p.add_argument('--metric', choices=list(METRICS), default=None)
    p.add_argument('--radius', type=int, default=None, help="FastDTW radius (default 50)")
    p.add_argument('--model', default=None, help="GAE checkpoint (required for --feature gae)")
    p.add_argument('--exact', action='store_true', default=False, help="Full DTW instead of FastDTW")
    p.add_argument('--dump', default=None, help="Also write the raw alignment path (i,j) CSV")

    p = sub.add_parser("evaluate", help="Evaluate a time map against reference points")
    p.add_argument('timemap', help="Time map CSV")
    p.add_argument('refs', help="Reference points CSV")
    p.add_argument('--out', default=None, help="Report CSV to write")
    p.add_argument('--label', default="result", help="Column label in the report")

    p = sub.add_parser("experiment", help="Run a synthetic experiment")
    p.add_argument('name', choices=list(EXPERIMENTS))
    p.add_argument('--config', required=True, help="Run configuration file")
    p.add_argument('--model', default=None, help="GAE checkpoint")
    p.add_argument('--feature', choices=['gae', 'chroma'], default=None)
    p.add_argument('--out-dir', dest='out_dir', default=None, help="Directory for the report CSVs")
    p.add_argument('--dump', action='store_true', default=False,
                   help="Also write every per-point error as CSV")

    p = sub.add_parser("synth", help="Render a note list or write a synthetic corpus")
    p.add_argument('input', nargs='?', default=None, help="Note list CSV or MIDI file")
    p.add_argument('--out', default=None, help="WAV file to write")
    p.add_argument('--config', default=None, help="Run configuration file")
    p.add_argument('--transpose', type=int, default=0, help="Semitones")
    p.add_argument('--tempo', type=float, default=1.0, help="Tempo multiplier")
    p.add_argument('--corpus', type=int, default=None, help="Write this many synthetic pieces")
    p.add_argument('--seconds', type=float, default=30.0, help="Length of each corpus piece")
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--jitter', type=float, default=0.1, help="Performance tempo jitter")
    p.add_argument('--out-dir', dest='out_dir', default=None, help="Directory for corpus pieces")

    return parser.parse_args(argv)


# Main routine...
#
# Here is where we get the arguments and then instantiate the tialign class
# to do the work. Errors are mapped onto the exit codes.

def main(argv=None):

    args = commandargs(progdesc, progname, progvers, argv)

    logger = Logger(name=progname,
                    version=progvers,
                    description=progdesc,
                    level=args.loglevel)

    app = tialign(args, logger)

    try:
        app.setup()
        code = app.run()
    except KeyboardInterrupt:
        logger.info("Caught keyboard interrupt, exiting")
        sys.exit(EXIT_FAILURE)
    except ArithmeticError as e:
        logger.error(f"{e}")
        sys.exit(EXIT_NUMERIC)
    except (TialignError, ValueError, OSError) as e:
        logger.error(f"{e}")
        sys.exit(EXIT_USAGE)
    except Exception as e:
        logger.error(f"Error during {args.command}: {e}")
        sys.exit(EXIT_FAILURE)

    app.teardown()

    return code


if __name__ == '__main__':
    sys.exit(main())

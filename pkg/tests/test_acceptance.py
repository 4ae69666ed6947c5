'''
End-to-end checks on the synthetic corpus with a model trained from scratch.
These take tens of minutes and only run with ./runtest.sh all.
'''

import numpy as np
import pytest

from tialignUtils.Experiments import (FeatureChoice, random_transposition_experiment, synthetic_pieces,
                                      tempo_experiment, transposition_experiment)
from tialignUtils.Features import extract_gae
from tialignUtils.SignalFrontend import shift_spectrogram
from tialignUtils.Trainer import TrainingConfig, build_dataset, corpus_spectrograms, train

pytestmark = pytest.mark.slow

CHROMA = FeatureChoice(label="Chroma", kind="chroma")


@pytest.fixture(scope="module")
def trained_model():
    config = TrainingConfig(n=8, epochs=100, seed=11, threads=4)
    dataset = build_dataset(corpus_spectrograms(20, 30.0, seed=11), config.n)
    params, _ = train(config, dataset)
    return FeatureChoice(label="8G", kind="gae", params=params)


@pytest.fixture(scope="module")
def pieces():
    return synthetic_pieces(4, 30.0, seed=5)


def relative_change(value, base):
    return abs(value - base) / base


def by_label(result):
    return dict(result.reports)


@pytest.mark.timeout(3600)
def test_gae_results_survive_transposition(trained_model, pieces):
    reports = by_label(transposition_experiment(pieces, trained_model, workers=4))
    base = reports["0"]
    for label, report in reports.items():
        assert relative_change(report.median_ms, base.median_ms) <= 0.2, label
        assert relative_change(report.frac_le_250ms, base.frac_le_250ms) <= 0.2, label

    spliced = by_label(random_transposition_experiment(pieces, trained_model, seed=5, repeats=2,
                                                       period_seconds=10.0, workers=4))
    assert relative_change(spliced["Random"].median_ms, spliced["0"].median_ms) <= 0.2
    assert relative_change(spliced["Random"].frac_le_250ms, spliced["0"].frac_le_250ms) <= 0.2


@pytest.mark.timeout(3600)
def test_codes_survive_an_octave_shift(trained_model):
    spec = corpus_spectrograms(1, 20.0, seed=99)[0]
    a = extract_gae(trained_model.params, spec).vectors
    b = extract_gae(trained_model.params, shift_spectrogram(spec, 12)).vectors
    cosine = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    assert np.mean(1.0 - cosine) < 0.1


def test_chroma_suffers_under_transposition(pieces):
    reports = by_label(transposition_experiment(pieces, CHROMA, workers=4))
    base = reports["0"].frac_le_250ms
    assert max(base - r.frac_le_250ms for r in reports.values()) > 0.2 * base


@pytest.mark.timeout(3600)
def test_gae_is_more_tempo_sensitive_than_chroma(trained_model, pieces):
    reports = by_label(tempo_experiment(pieces, [trained_model, CHROMA], factors=(2 / 3, 1.0, 4 / 3), workers=4))

    def degradation(label):
        base = reports[f"{label} Base Tempo"].frac_le_50ms
        worst = min(reports[f"{label} {t} Tempo"].frac_le_50ms for t in ("2/3", "4/3"))
        return (base - worst) / base

    assert degradation("8G") > 0.0
    assert degradation("8G") > degradation("Chroma")

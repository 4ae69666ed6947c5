import numpy as np
import pytest

from tialignUtils.Experiments import make_piece
from tialignUtils.GatedAutoencoder import init_params
from tialignUtils.Logger import Logger
from tialignUtils.SignalFrontend import NGramWindow
from tialignUtils.Synth import NoteEvent, TempoCurve, generate_piece


@pytest.fixture
def rng():
    """Seeded generator for test data"""
    return np.random.default_rng(1234)


@pytest.fixture
def logger():
    return Logger(name="tialign-tests", version="0", description=None, level="WARNING", announce=False)


@pytest.fixture
def tiny_params():
    """Smallest useful model: M=6, n=2, F=4, H1=3, H2=2"""
    return init_params(n=2, M=6, F=4, H1=3, H2=2, seed=7)


@pytest.fixture
def tiny_windows(rng):
    contexts = rng.normal(size=(5, 2, 6))
    targets = rng.normal(size=(5, 6))
    return contexts, targets


@pytest.fixture
def tiny_window(tiny_windows):
    contexts, targets = tiny_windows
    return NGramWindow(context=contexts[0], target=targets[0])


@pytest.fixture
def small_model():
    """Untrained full-width model (M=120, n=8) with narrow layers"""
    return init_params(n=8, M=120, F=32, H1=16, H2=8, seed=3)


@pytest.fixture
def a4_note():
    return [NoteEvent(onset=0.0, duration=1.0, midi_pitch=69, velocity=0.8)]


@pytest.fixture
def melody():
    """A short scale with one chord"""
    notes = [NoteEvent(0.25 * k, 0.24, p, 0.7) for k, p in enumerate([60, 62, 64, 65, 67, 69, 71, 72])]
    notes += [NoteEvent(2.0, 0.8, p, 0.6) for p in (60, 64, 67)]
    return notes


@pytest.fixture(scope="session")
def short_piece():
    """Eight seconds of corpus music, played back with a 10% slower tempo"""
    notes = generate_piece(np.random.default_rng(42), 8.0)
    return make_piece("short", notes, TempoCurve.uniform(1.1))

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
# Synth.py
#
# Deterministic additive synthesizer and the symbolic side of the test data:
# note lists, tempo curves that turn a score into a "performance" with exact
# ground truth, a seeded corpus generator, and note list / MIDI ingest.

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import mido
import numpy as np

from tialignUtils.Errors import InputError
from tialignUtils.Evaluation import ReferencePoints
from tialignUtils.SignalFrontend import AudioBuffer

# Define the name of the Program, Description, and Version

progname = "Synth"
progdesc = "Additive synthesis of note lists"
progvers = "1.0.0"

MIN_PITCH = 21
MAX_PITCH = 108

NOTE_CSV_FIELDS = ["onset_seconds", "duration_seconds", "midi_pitch", "velocity"]

# Pitch range and scale used by the corpus generator

CORPUS_LOW = 45
CORPUS_HIGH = 84
MAJOR_STEPS = (0, 2, 4, 5, 7, 9, 11)
MINOR_STEPS = (0, 2, 3, 5, 7, 8, 10)


@dataclass(frozen=True)
class NoteEvent:
    onset: float
    duration: float
    midi_pitch: int
    velocity: float = 0.8

    def __post_init__(self):
        if not MIN_PITCH <= self.midi_pitch <= MAX_PITCH:
            raise InputError(f"out-of-range pitch {self.midi_pitch}, expected {MIN_PITCH}..{MAX_PITCH}")
        if not self.duration > 0.0:
            raise InputError(f"note duration must be > 0, got {self.duration}")
        if not self.onset >= 0.0:
            raise InputError(f"note onset must be >= 0, got {self.onset}")
        if not 0.0 <= self.velocity <= 1.0:
            raise InputError(f"velocity must be in 0..1, got {self.velocity}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class SynthConfig:
    harmonics: int = 6
    decay_tau: float = 0.5
    attack: float = 0.01
    release: float = 0.03
    peak: float = 0.9
    sample_rate: int = 22050


@dataclass(frozen=True)
class TempoCurve:
    '''
    Piecewise-linear score seconds -> performance seconds. Beyond the outer
    anchors the nearest segment's slope is continued.
    '''
    anchors: Tuple[Tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] != 2:
            raise InputError("tempo curve needs at least two (score, performance) anchors")
        if np.any(np.diff(a[:, 0]) <= 0.0) or np.any(np.diff(a[:, 1]) <= 0.0):
            raise InputError("tempo curve must be strictly increasing")

    @classmethod
    def uniform(cls, factor: float) -> "TempoCurve":
        '''
        Every score second lasts factor performance seconds.
        '''
        if factor <= 0.0:
            raise InputError(f"tempo factor must be > 0, got {factor}")
        return cls(((0.0, 0.0), (1.0, float(factor))))

    def warp(self, score_times) -> np.ndarray:

        a = np.asarray(self.anchors, dtype=np.float64)
        s = np.asarray(score_times, dtype=np.float64)
        out = np.interp(s, a[:, 0], a[:, 1])

        first = (a[1, 1] - a[0, 1]) / (a[1, 0] - a[0, 0])
        last = (a[-1, 1] - a[-2, 1]) / (a[-1, 0] - a[-2, 0])
        out = np.where(s < a[0, 0], a[0, 1] + (s - a[0, 0]) * first, out)
        out = np.where(s > a[-1, 0], a[-1, 1] + (s - a[-1, 0]) * last, out)

        return out


@dataclass(frozen=True)
class PerformanceScript:
    notes: Tuple[NoteEvent, ...] = field(default_factory=tuple)
    tempo_curve: TempoCurve = field(default_factory=TempoCurve)


def midi_to_hz(pitch) -> np.ndarray:
    return 440.0 * 2.0 ** ((np.asarray(pitch, dtype=np.float64) - 69.0) / 12.0)


def _render_note(note: NoteEvent, config: SynthConfig) -> np.ndarray:

    sr = config.sample_rate
    length = int(np.ceil((note.duration + config.release) * sr))
    t = np.arange(length) / sr
    f0 = float(midi_to_hz(note.midi_pitch))

    tone = np.zeros(length)
    for h in range(1, config.harmonics + 1):
        if h * f0 >= sr / 2:
            break
        tone += np.sin(2.0 * np.pi * h * f0 * t) / (h * h)

    envelope = np.exp(-t / config.decay_tau)
    if config.attack > 0.0:
        envelope *= np.minimum(t / config.attack, 1.0)
    if config.release > 0.0:
        envelope *= np.clip(1.0 - (t - note.duration) / config.release, 0.0, 1.0)
    else:
        envelope *= t < note.duration

    return note.velocity * tone * envelope


def synthesize(notes: Sequence[NoteEvent], config: SynthConfig = SynthConfig(), logger=None) -> AudioBuffer:
    '''
    Sum of harmonic tones (amplitude 1/h^2, exponential decay, linear attack
    and release ramps), peak-normalized. Notes are mixed in list order.
    '''

    sr = config.sample_rate
    if len(notes) == 0:
        return AudioBuffer(samples=np.zeros(0, dtype=np.float64), sample_rate=sr)

    total = int(np.ceil(max(n.end for n in notes) * sr + config.release * sr)) + 1
    out = np.zeros(total, dtype=np.float64)

    for note in notes:
        start = int(round(note.onset * sr))
        tone = _render_note(note, config)
        stop = min(start + len(tone), total)
        out[start:stop] += tone[:stop - start]

    peak = np.max(np.abs(out))
    if peak > 0.0:
        out *= config.peak / peak

    if logger is not None:
        logger.debug(f"Synthesized {len(notes)} notes into {total} samples")

    return AudioBuffer(samples=out, sample_rate=sr)


# ----------------------------------------------------------------------------
# Score -> performance

def reference_points(notes: Sequence[NoteEvent], curve: TempoCurve) -> ReferencePoints:
    '''
    One point per distinct score onset (chord notes share one).
    '''

    onsets = np.unique(np.array([n.onset for n in notes], dtype=np.float64))

    return ReferencePoints.from_pairs(zip(onsets.tolist(), curve.warp(onsets).tolist()))


def apply_performance(notes: Sequence[NoteEvent],
                      script: Union[PerformanceScript, TempoCurve]) -> Tuple[List[NoteEvent], ReferencePoints]:
    '''
    Warp onsets and note ends through the tempo curve. Returns the warped
    notes (same count and order) and the ground-truth reference points.
    '''

    curve = script.tempo_curve if isinstance(script, PerformanceScript) else script

    onsets = curve.warp([n.onset for n in notes])
    ends = curve.warp([n.end for n in notes])
    warped = [replace(n, onset=float(max(o, 0.0)), duration=float(e - o))
              for n, o, e in zip(notes, onsets, ends)]

    return warped, reference_points(notes, curve)


def transpose_notes(notes: Sequence[NoteEvent], semitones: int) -> List[NoteEvent]:

    out = []
    for note in notes:
        pitch = note.midi_pitch + int(semitones)
        if not MIN_PITCH <= pitch <= MAX_PITCH:
            raise InputError(f"out-of-range pitch {pitch} after transposing {note.midi_pitch}"
                             f" by {semitones}")
        out.append(replace(note, midi_pitch=pitch))

    return out


def random_tempo_curve(duration: float,
                       seed: int = 0,
                       jitter: float = 0.2,
                       segment_seconds: float = 5.0) -> TempoCurve:
    '''
    Piecewise-constant local tempo: every segment_seconds of score plays at a
    rate drawn uniformly from [1 - jitter, 1 + jitter].
    '''

    if not 0.0 <= jitter < 1.0:
        raise InputError(f"tempo jitter must be in [0, 1), got {jitter}")

    rng = np.random.default_rng(seed)
    count = max(1, int(np.ceil(duration / segment_seconds)))
    rates = rng.uniform(1.0 - jitter, 1.0 + jitter, size=count)

    score = np.arange(count + 1) * segment_seconds
    perf = np.concatenate([[0.0], np.cumsum(rates * segment_seconds)])

    return TempoCurve(tuple(zip(score.tolist(), perf.tolist())))


# ----------------------------------------------------------------------------
# Synthetic corpus

def _scale(rng: np.random.Generator, root: int) -> List[int]:

    steps = MAJOR_STEPS if rng.random() < 0.5 else MINOR_STEPS
    pitches = [root + 12 * octave + s for octave in (-2, -1, 0, 1, 2) for s in steps]

    return [p for p in pitches if CORPUS_LOW <= p <= CORPUS_HIGH]


def _bass(rng: np.random.Generator, root: int, t: float, length: float, voices: int) -> List[NoteEvent]:

    notes = []
    pitch = root - 12
    while pitch > CORPUS_LOW + 12:
        pitch -= 12
    for v in range(voices - 2):
        if CORPUS_LOW <= pitch + 7 * v <= CORPUS_HIGH:
            notes.append(NoteEvent(t, length, pitch + 7 * v, float(rng.uniform(0.4, 0.6))))

    return notes


def _scale_fragment(rng, scale, t, voices) -> Tuple[List[NoteEvent], float]:

    count = int(rng.integers(4, 9))
    step = float(rng.uniform(0.15, 0.3))
    start = int(rng.integers(0, max(1, len(scale) - count)))
    run = scale[start:start + count]
    if rng.random() < 0.5:
        run = run[::-1]

    notes = [NoteEvent(t + k * step, step * 0.95, p, float(rng.uniform(0.6, 0.9)))
             for k, p in enumerate(run)]
    length = len(run) * step
    notes += _bass(rng, run[0], t, length, voices + 1)

    return notes, length


def _chord(rng, scale, t, voices) -> Tuple[List[NoteEvent], float]:

    length = float(rng.uniform(0.5, 1.0))
    base = int(rng.integers(0, max(1, len(scale) - 5)))
    pitches = [scale[min(base + 2 * k, len(scale) - 1)] for k in range(voices)]

    notes = [NoteEvent(t, length, p, float(rng.uniform(0.5, 0.8))) for p in sorted(set(pitches))]

    return notes, length


def _arpeggio(rng, scale, t, voices) -> Tuple[List[NoteEvent], float]:

    step = float(rng.uniform(0.15, 0.25))
    base = int(rng.integers(0, max(1, len(scale) - 7)))
    pitches = [scale[min(base + 2 * k, len(scale) - 1)] for k in range(voices + 1)]
    if rng.random() < 0.5:
        pitches = pitches[::-1]

    length = len(pitches) * step
    notes = [NoteEvent(t + k * step, length - k * step, p, float(rng.uniform(0.5, 0.8)))
             for k, p in enumerate(pitches)]

    return notes, length


_TEXTURES = (_scale_fragment, _chord, _arpeggio)


def generate_piece(rng: np.random.Generator, seconds: float) -> List[NoteEvent]:
    '''
    Concatenate random textures (scale runs, block chords, arpeggios) in
    2 to 4 voices, each on a freshly drawn key, until seconds is filled.
    '''

    notes = []
    t = 0.0
    while t < seconds:
        root = int(rng.integers(55, 72))
        voices = int(rng.integers(2, 5))
        texture = _TEXTURES[int(rng.integers(0, len(_TEXTURES)))]
        segment, length = texture(rng, _scale(rng, root), t, voices)
        notes += segment
        t += length + float(rng.uniform(0.0, 0.2))

    return sorted(notes, key=lambda n: (n.onset, n.midi_pitch))


def generate_corpus(num_pieces: int, seconds: float, seed: int = 0) -> List[List[NoteEvent]]:

    if num_pieces < 1 or seconds <= 0.0:
        raise InputError(f"corpus needs >= 1 piece of positive length, got {num_pieces} x {seconds}")

    streams = np.random.SeedSequence(seed).spawn(num_pieces)

    return [generate_piece(np.random.default_rng(s), seconds) for s in streams]


# ----------------------------------------------------------------------------
# Note list CSV and MIDI

def read_notes_csv(path: Union[str, Path]) -> List[NoteEvent]:

    try:
        fp = open(path, newline="")
    except OSError as e:
        raise InputError(f"cannot open csv: {e}", path=str(path)) from e

    notes = []
    with fp:
        reader = csv.reader(fp)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != NOTE_CSV_FIELDS:
            raise InputError(f"expected header {','.join(NOTE_CSV_FIELDS)}", path=str(path), line=1)

        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != len(NOTE_CSV_FIELDS):
                    raise ValueError(f"expected {len(NOTE_CSV_FIELDS)} columns, got {len(row)}")
                notes.append(NoteEvent(onset=float(row[0]), duration=float(row[1]),
                                       midi_pitch=int(row[2]), velocity=float(row[3])))
            except ValueError as e:
                raise InputError(f"malformed note row: {e}", path=str(path), line=reader.line_num) from e

    return notes


def write_notes_csv(path: Union[str, Path], notes: Sequence[NoteEvent]):

    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(NOTE_CSV_FIELDS)
        for n in notes:
            writer.writerow([f"{n.onset:.6f}", f"{n.duration:.6f}", n.midi_pitch, f"{n.velocity:.4f}"])


def read_midi(path: Union[str, Path], logger=None) -> List[NoteEvent]:
    '''
    Notes of a format 0/1 standard MIDI file in seconds (mido applies the
    tempo map while merging the tracks). A note-on with velocity 0 ends a
    note. Notes still sounding at the end of the file are closed there.
    '''

    try:
        mid = mido.MidiFile(str(path))
    except (OSError, EOFError, ValueError) as e:
        raise InputError(f"cannot read midi: {e}", path=str(path)) from e

    notes = []
    active = {}
    now = 0.0
    skipped = 0

    def close(key, end):
        nonlocal skipped
        onset, velocity = active.pop(key)
        if end > onset and MIN_PITCH <= key[1] <= MAX_PITCH:
            notes.append(NoteEvent(onset, end - onset, key[1], velocity / 127.0))
        else:
            skipped += 1

    for msg in mid:
        now += msg.time
        if msg.type not in ("note_on", "note_off"):
            continue

        key = (msg.channel, msg.note)
        if msg.type == "note_on" and msg.velocity > 0:
            if key in active:
                close(key, now)
            active[key] = (now, msg.velocity)
        elif key in active:
            close(key, now)

    for key in list(active):
        close(key, now)

    if logger is not None:
        logger.debug(f"Read {len(notes)} notes from {path}, skipped {skipped}")

    return sorted(notes, key=lambda n: (n.onset, n.midi_pitch))


def load_notes(path: Union[str, Path], logger=None) -> List[NoteEvent]:

    suffix = Path(path).suffix.lower()
    if suffix in (".mid", ".midi"):
        return read_midi(path, logger=logger)

    return read_notes_csv(path)

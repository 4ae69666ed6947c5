import csv

import numpy as np
import pytest

from tialign import main
from tialignUtils.Alignment import read_timemap_csv
from tialignUtils.Features import load_features
from tialignUtils.GatedAutoencoder import load_checkpoint
from tialignUtils.Synth import write_notes_csv

TINY_MODEL = """
[run]
seed = 3

[model]
n = 2
factors = 8
hidden1 = 4
hidden2 = 2

[training]
epochs = 2
batch_size = 64
lr0 = {lr0}
corpus_pieces = 1
corpus_seconds = 3
"""


def exit_code(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


@pytest.fixture
def melody_csv(tmp_path, melody):
    path = tmp_path / "melody.csv"
    write_notes_csv(path, melody)
    return path


def test_version():
    assert exit_code(["--version"]) == 0


def test_usage_errors():
    assert exit_code([]) == 2
    assert exit_code(["train"]) == 2
    assert exit_code(["align", "only-one.wav"]) == 2


def test_synth_then_self_align(tmp_path, melody_csv, capsys):
    wav = tmp_path / "melody.wav"
    assert main(["synth", str(melody_csv), "--out", str(wav)]) == 0
    assert wav.is_file()

    out = tmp_path / "map.csv"
    dump = tmp_path / "path.csv"
    assert main(["align", str(melody_csv), str(wav), "--out", str(out), "--dump", str(dump)]) == 0
    assert capsys.readouterr().out.startswith("length ")

    anchors = read_timemap_csv(out).anchors
    assert np.allclose(anchors[:, 0], anchors[:, 1], atol=0.05)
    assert dump.read_text().splitlines()[0] == "i,j"


def test_evaluate(tmp_path, capsys):
    timemap = tmp_path / "map.csv"
    timemap.write_text("score_seconds,performance_seconds\n0,0\n10,20\n")
    refs = tmp_path / "refs.csv"
    refs.write_text("score_seconds,performance_seconds\n1,2.01\n5,10\n")
    report = tmp_path / "report.csv"

    assert main(["evaluate", str(timemap), str(refs), "--out", str(report), "--label", "mine"]) == 0
    assert "Median" in capsys.readouterr().out
    with open(report, newline="") as fp:
        rows = list(csv.DictReader(fp))
    assert rows[0]["condition"] == "mine"
    assert float(rows[0]["median_ms"]) == pytest.approx(5.0)


def test_note_list_matches_rendered_audio(tmp_path, melody_csv):
    wav = tmp_path / "melody.wav"
    assert main(["synth", str(melody_csv), "--out", str(wav)]) == 0

    from_notes = tmp_path / "notes.feat"
    from_audio = tmp_path / "audio.feat"
    assert main(["extract", str(melody_csv), "--out", str(from_notes), "--feature", "chroma"]) == 0
    assert main(["extract", str(wav), "--out", str(from_audio), "--feature", "chroma"]) == 0

    a = load_features(from_notes).vectors
    b = load_features(from_audio).vectors
    assert a.shape == b.shape
    assert np.allclose(a, b, atol=1e-4)


def test_model_with_chroma_exit_2(tmp_path, melody_csv):
    model = tmp_path / "unused.gaem"
    model.write_bytes(b"")
    assert exit_code(["align", str(melody_csv), str(melody_csv), "--out", str(tmp_path / "map.csv"),
                      "--feature", "chroma", "--model", str(model)]) == 2
    assert exit_code(["extract", str(melody_csv), "--out", str(tmp_path / "f.feat"),
                      "--feature", "chroma", "--model", str(model)]) == 2


def test_malformed_references_exit_2(tmp_path):
    timemap = tmp_path / "map.csv"
    timemap.write_text("score_seconds,performance_seconds\n0,0\n10,20\n")
    refs = tmp_path / "refs.csv"
    refs.write_text("score_seconds,performance_seconds\n1,abc\n")
    assert exit_code(["evaluate", str(timemap), str(refs)]) == 2


def test_missing_input_exit_2(tmp_path):
    assert exit_code(["synth", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.wav")]) == 2


def test_gae_without_model_exit_2(tmp_path, melody_csv):
    assert exit_code(["extract", str(melody_csv), "--out", str(tmp_path / "f.feat"), "--feature", "gae"]) == 2


def test_config_with_missing_input_exit_2(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text("[training]\ninputs = gone.wav\n")
    assert exit_code(["train", "--config", str(config)]) == 2


def test_train_then_extract(tmp_path, melody_csv):
    config = tmp_path / "run.ini"
    config.write_text(TINY_MODEL.format(lr0=1e-4))
    checkpoint = tmp_path / "tiny.gaem"
    log_csv = tmp_path / "tiny.csv"

    assert main(["train", "--config", str(config), "--checkpoint", str(checkpoint), "--log-csv", str(log_csv)]) == 0
    params = load_checkpoint(checkpoint, n=2, M=120)
    assert (params.F, params.H1, params.H2) == (8, 4, 2)
    assert len(log_csv.read_text().splitlines()) == 3

    features = tmp_path / "melody.feat"
    assert main(["extract", str(melody_csv), "--out", str(features), "--feature", "gae",
                 "--model", str(checkpoint)]) == 0
    codes = load_features(features)
    assert codes.dim == 2
    assert codes.t0_offset_frames == 2


def test_thread_count_does_not_change_the_checkpoint(tmp_path, monkeypatch):
    config = tmp_path / "run.ini"
    config.write_text(TINY_MODEL.format(lr0=1e-4))
    written = []
    for threads in ("1", "4"):
        monkeypatch.setenv("TIA_THREADS", threads)
        checkpoint = tmp_path / f"threads{threads}.gaem"
        assert main(["train", "--config", str(config), "--checkpoint", str(checkpoint)]) == 0
        written.append(checkpoint.read_bytes())
    assert written[0] == written[1]


def test_divergence_exit_3(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text(TINY_MODEL.format(lr0="1e200") + "max_norm = inf\n")
    assert exit_code(["train", "--config", str(config), "--checkpoint", str(tmp_path / "x.gaem")]) == 3


def test_synth_corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--corpus", "2", "--seconds", "3", "--seed", "5", "--out-dir", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["piece000_perf.wav", "piece000_refs.csv", "piece000_score.csv", "piece000_score.wav",
                     "piece001_perf.wav", "piece001_refs.csv", "piece001_score.csv", "piece001_score.wav"]


@pytest.mark.slow
def test_metrics_experiment(tmp_path, capsys):
    config = tmp_path / "run.ini"
    config.write_text("[experiment]\npieces = 1\npiece_seconds = 6\n")
    out = tmp_path / "reports"
    assert main(["experiment", "metrics", "--config", str(config), "--out-dir", str(out), "--dump"]) == 0
    assert (out / "metrics_reports.csv").is_file()
    assert (out / "metrics_table.csv").is_file()
    assert (out / "metrics_errors.csv").is_file()
    assert "cityblock" in capsys.readouterr().out

import logging

from tialignUtils.Logger import Logger


def test_levels_and_debug_flag():
    logger = Logger(name="t", version="0", level="warning", announce=False)
    assert logger.level == logging.WARNING
    assert not logger.is_debug()
    logger.setLevel("DEBUG")
    assert logger.is_debug()
    assert all(h.level == logging.DEBUG for h in logger.handlers)


def test_file_log_and_progress_line(tmp_path):
    path = tmp_path / "run.log"
    logger = Logger(name="t", version="0.1", description="desc", level="INFO", pathname=str(path))
    logger.progress(0, 10, 1.5, 1.25, 1e-3, 2.0)
    for h in logger.handlers:
        h.flush()

    lines = path.read_text().splitlines()
    assert lines[0] == "t - 0.1 - desc"
    assert lines[1].startswith("epoch 1/10  loss=1.500000  mse=1.250000  lr=1.000e-03")


def test_warning_format(tmp_path):
    path = tmp_path / "run.log"
    logger = Logger(name="t", level="INFO", pathname=str(path), announce=False)
    logger.warning("careful")
    for h in logger.handlers:
        h.flush()
    assert path.read_text().splitlines() == ["WARNING: careful"]

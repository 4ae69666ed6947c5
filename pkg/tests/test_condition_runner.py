import pytest

from tialignUtils.ConditionRunner import ConditionResult, ConditionRunner, OrderedResultProcessor, ResultProcessor
from tialignUtils.Errors import TialignError


class CollectingProcessor(ResultProcessor):
    def __init__(self):
        self.seen = []

    def process_condition_result(self, result: ConditionResult) -> None:
        self.seen.append((result.index, result.condition, result.result))


def double(condition, payload, logger, offset=0):
    return 2 * payload + offset


def fail_on_three(condition, payload, logger):
    if payload == 3:
        raise ValueError("three is not allowed")
    return payload


def test_in_process_run_keeps_order():
    """One worker runs every condition here, in order"""
    processor = CollectingProcessor()
    ConditionRunner(double, result_processor=processor, offset=1).run([("a", 1), ("b", 2), ("c", 3)])
    assert processor.seen == [(0, "a", 3), (1, "b", 5), (2, "c", 7)]


def test_in_process_errors_propagate():
    with pytest.raises(ValueError, match="three"):
        ConditionRunner(fail_on_three).run([("x", 1), ("y", 3)])


def test_ordered_processor(logger):
    runner = ConditionRunner(double, logger=logger)
    processor = runner.run([(str(k), k) for k in range(4)])
    assert isinstance(processor, OrderedResultProcessor)
    assert [r.result for r in processor.ordered()] == [0, 2, 4, 6]
    assert all(r.status == "success" for r in processor.ordered())
    assert processor.failures() == []


def test_worker_processes_merge_in_condition_order():
    """Results come back out of order but are merged by index"""
    processor = ConditionRunner(double, max_processes=3, offset=10).run([(str(k), k) for k in range(7)])
    assert [r.index for r in processor.ordered()] == list(range(7))
    assert [r.result for r in processor.ordered()] == [10 + 2 * k for k in range(7)]


def test_worker_failure_becomes_tialign_error():
    with pytest.raises(TialignError, match="condition 'bad' failed: ValueError"):
        ConditionRunner(fail_on_three, max_processes=2).run([("good", 1), ("bad", 3), ("fine", 4)])


def test_no_conditions():
    processor = ConditionRunner(double, max_processes=4).run([])
    assert processor.ordered() == []

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
# ConditionRunner.py
#
# Runs the independent conditions of an experiment in a pool of worker
# processes. Each condition is handed to a processor function; results come
# back on a queue and are merged in condition order, so the outcome does not
# depend on how many workers ran or which one finished first.

import logging
import multiprocessing as mp
import os
import queue
import signal
import time
import traceback
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import dill
import humanize

from tialignUtils.Errors import TialignError
from tialignUtils.Logger import Logger

# Define the name of the Program, Description, and Version

progname = "ConditionRunner"
progdesc = "Run experiment conditions in parallel"
progvers = "1.0.0"


@dataclass
class ConditionResult:
    index: int
    condition: str
    status: str
    result: Any = None
    error: Optional[str] = None
    seconds: float = 0.0


class ResultProcessor(ABC):
    @abstractmethod
    def process_condition_result(self, result: ConditionResult) -> None:
        pass


class OrderedResultProcessor(ResultProcessor):
    '''
    Keeps every result and hands them back sorted by condition index.
    '''

    def __init__(self, logger: Logger = None):
        self.results: Dict[int, ConditionResult] = {}
        self.logger = logger

    def process_condition_result(self, result: ConditionResult) -> None:
        self.results[result.index] = result

        if self.logger is not None:
            if result.status == "success":
                self.logger.debug(f"Condition '{result.condition}' finished in"
                                  f" {humanize.naturaldelta(result.seconds)}")
            else:
                self.logger.error(f"Condition '{result.condition}' failed: {result.error}")

    def ordered(self) -> List[ConditionResult]:
        return [self.results[k] for k in sorted(self.results)]

    def failures(self) -> List[ConditionResult]:
        return [r for r in self.ordered() if r.status != "success"]


def _run_one(processor_func, index: int, condition: str, payload, logger, kwargs) -> ConditionResult:

    start = time.perf_counter()
    value = processor_func(condition, payload, logger, **kwargs)

    return ConditionResult(index=index, condition=condition, status="success",
                           result=value, seconds=time.perf_counter() - start)


# Worker process that handles conditions from the queue

def _worker_function(task_queue,
                     result_queue,
                     processor_func_serialized: bytes,
                     need_logger: bool,
                     **kwargs):

    # Setup a logger so that we can track any errors

    if need_logger:
        logger = Logger(name=progname,
                        version=progvers,
                        description=progdesc,
                        level=logging.DEBUG,
                        pathname=f"{progname}-{os.getpid()}.log")
    else:
        logger = None

    # Handle a SIGTERM... We will only get this if we are too busy to take
    # our poison pill

    def handle_sigterm(signum, frame):
        if logger is not None:
            logger.error("Worker received SIGTERM. Shutting down immediately!")
        raise SystemExit(1)

    signal.signal(signal.SIGTERM, handle_sigterm)

    processor_func = dill.loads(processor_func_serialized)

    while True:
        try:
            task = task_queue.get(timeout=1)
            if task is None:  # Poison pill
                if logger is not None:
                    logger.debug("Poison pill received")
                break

            index, condition, payload = task
            if logger is not None:
                logger.debug(f"queue: condition {index} '{condition}'")

            try:
                result = _run_one(processor_func, index, condition, payload, logger, kwargs)
            except Exception as e:
                if logger is not None:
                    logger.debug(traceback.format_exc())
                result = ConditionResult(index=index, condition=condition, status="error",
                                         error=f"{type(e).__name__}: {e}")

            result_queue.put(result)
        except queue.Empty:
            continue


class ConditionRunner:
    '''
    processor_func(condition, payload, logger, **kwargs) is called once per
    condition. kwargs are shared by every condition and handed to the
    workers when they start.
    '''

    def __init__(self,
                 processor_func: Callable[..., Any],
                 max_processes: int = 1,
                 logger: Logger = None,
                 result_processor: Optional[ResultProcessor] = None,
                 **kwargs):

        self.processor_func = processor_func
        self.max_processes = max(1, int(max_processes))
        self.logger = logger
        self.result_processor = result_processor if result_processor is not None \
            else OrderedResultProcessor(logger=logger)
        self.kwargs = kwargs
        self.workers = []

    def _log(self, level: int, message: str):
        if self.logger is not None:
            self.logger.log(level, message)

    def _results_handler(self, result_queue, expected: int):
        """Handles results from worker processes"""

        received = 0
        while received < expected:
            try:
                result = result_queue.get(timeout=1)
                received += 1
                self.result_processor.process_condition_result(result)
            except queue.Empty:
                if not any(p.is_alive() for p in self.workers):
                    self._log(logging.DEBUG, "Results queue is empty and workers dead")
                    break

        return received

    def _run_in_process(self, tasks: Sequence[Tuple[int, str, Any]]):

        for index, condition, payload in tasks:
            self._log(logging.DEBUG, f"Running condition {index} '{condition}' in process")
            self.result_processor.process_condition_result(
                _run_one(self.processor_func, index, condition, payload, self.logger, self.kwargs))

    def run(self, conditions: Sequence[Tuple[str, Any]]) -> ResultProcessor:
        '''
        Run every (condition, payload) pair. With one worker the conditions
        run in this process and exceptions propagate unchanged; with more,
        a failed condition raises TialignError once all workers are done.
        '''

        tasks = [(i, condition, payload) for i, (condition, payload) in enumerate(conditions)]
        workers = min(self.max_processes, len(tasks))

        if workers <= 1:
            self._run_in_process(tasks)
            return self.result_processor

        need_logger = self.logger is not None and self.logger.level == logging.DEBUG

        manager = mp.Manager()
        task_queue = manager.Queue()
        result_queue = manager.Queue()

        self._log(logging.DEBUG, f"Starting {workers} processes for {len(tasks)} conditions")
        self.workers = [
            mp.Process(target=_worker_function,
                       args=(task_queue,
                             result_queue,
                             dill.dumps(self.processor_func),
                             need_logger),
                       kwargs=self.kwargs)
            for _ in range(workers)
        ]
        for w in self.workers:
            w.start()

        with ThreadPoolExecutor(max_workers=1) as executor:
            results_future = executor.submit(self._results_handler, result_queue, len(tasks))

            try:
                for task in tasks:
                    task_queue.put(task)

                # Signal workers to exit when done

                for _ in self.workers:
                    task_queue.put(None)

                for w in self.workers:
                    w.join()
                received = results_future.result()

            # Keyboard interrupt caught. Terminate gracefully

            except KeyboardInterrupt:
                self._log(logging.INFO, "\nCtrl-C detected! Shutting down workers...")

                for _ in self.workers:
                    task_queue.put(None)

                time.sleep(2)

                for w in self.workers:
                    if w.is_alive():
                        w.terminate()

                results_future.cancel()
                raise

            finally:
                manager.shutdown()

        if received < len(tasks):
            raise TialignError(f"only {received} of {len(tasks)} conditions returned a result")

        failures = self.result_processor.failures() \
            if isinstance(self.result_processor, OrderedResultProcessor) else []
        if failures:
            raise TialignError(f"condition '{failures[0].condition}' failed: {failures[0].error}")

        return self.result_processor

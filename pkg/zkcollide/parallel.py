"""Worker threads/processes for independent computations (suites, sweeps, seeds)."""

from __future__ import annotations

import contextlib
import enum
import logging
import multiprocessing as mp
import queue
import threading as td
import traceback
from collections.abc import Callable, Mapping
from typing import Any, NamedTuple

from faster_fifo import Queue
from more_itertools import chunked

logger = logging.getLogger(__name__)

# results of one worker can be a full interaction table or a field snapshot
_RESULT_QUEUE_BYTES = 1000 * 1000 * 200
_POLL_INTERVAL = 0.01

Failure = tuple[Exception, str]


class WorkerKind(enum.StrEnum):
    """Execution vehicle for fan_out."""

    INLINE = "inline"
    THREAD = "thread"
    PROCESS = "process"


class SafeWorkerMixin:
    """Runs one task; the value goes to ``result_queue``, a raised exception to a pipe.

    The concrete class supplies ``is_alive`` and ``_base_join`` from Thread or Process.
    """

    name: str
    result_queue: Queue | queue.SimpleQueue[Any]

    def _setup(self, task: Callable[[], Any], result_queue: Queue | queue.SimpleQueue[Any]) -> None:
        if not callable(task):
            msg = "task must be a callable object"
            raise TypeError(msg)
        self._task = task
        self.result_queue = result_queue
        self._finished = mp.Event()
        self._failure_recv, self._failure_send = mp.Pipe(duplex=False)
        self._failure: Failure | None = None

    def is_alive(self) -> bool:
        raise NotImplementedError

    def _base_join(self, timeout: float | None) -> None:
        raise NotImplementedError

    def run(self) -> None:
        try:
            self.result_queue.put(self._task())
        except Exception as e:
            logger.exception(f"{self.name}: task raised.")
            self._failure_send.send((e, traceback.format_exc()))
        finally:
            self._finished.set()
            logger.debug(f"{self.name}: done.")

    @property
    def failure(self) -> Failure | None:
        """Exception raised by the task with its formatted traceback, or None."""
        with contextlib.suppress(OSError, EOFError):
            if self._failure is None and self._failure_recv.poll():
                self._failure = self._failure_recv.recv()
        return self._failure

    def join(self, timeout: float | None = None) -> None:
        """Wait for the task, pick up a pending failure and release the pipe."""
        if not self._finished.wait(timeout=timeout):
            msg = f"Worker {self.name} is still running."
            raise TimeoutError(msg)
        self._base_join(timeout)
        self.failure  # noqa: B018
        self._failure_send.close()
        self._failure_recv.close()

    def wait_result(self) -> tuple[Any] | None:
        """The task's value wrapped in a 1-tuple, or None if it failed or vanished."""
        while True:
            with contextlib.suppress(queue.Empty):
                return (self.result_queue.get(timeout=_POLL_INTERVAL),)
            if self.failure is not None:
                return None
            if not self.is_alive() and self._finished.is_set() and self.result_queue.empty():
                return None


class SafeProcess(SafeWorkerMixin, mp.Process):
    """Process worker; results travel through a faster_fifo queue."""

    def __init__(self, task: Callable[[], Any], name: str, result_queue: Queue | None = None) -> None:
        """Init."""
        mp.Process.__init__(self, name=name, daemon=True)
        self._setup(task, result_queue if result_queue is not None else Queue(max_size_bytes=_RESULT_QUEUE_BYTES))

    def run(self) -> None:
        SafeWorkerMixin.run(self)

    def is_alive(self) -> bool:
        return mp.Process.is_alive(self)

    def join(self, timeout: float | None = None) -> None:
        SafeWorkerMixin.join(self, timeout)

    def _base_join(self, timeout: float | None) -> None:
        mp.Process.join(self, timeout=timeout)


class SafeThread(SafeWorkerMixin, td.Thread):
    """Thread worker; results travel through a SimpleQueue."""

    def __init__(
        self, task: Callable[[], Any], name: str, result_queue: queue.SimpleQueue[Any] | None = None
    ) -> None:
        """Init."""
        td.Thread.__init__(self, name=name, daemon=True)
        self._setup(task, result_queue if result_queue is not None else queue.SimpleQueue())

    def run(self) -> None:
        SafeWorkerMixin.run(self)

    def is_alive(self) -> bool:
        return td.Thread.is_alive(self)

    def join(self, timeout: float | None = None) -> None:
        SafeWorkerMixin.join(self, timeout)

    def _base_join(self, timeout: float | None) -> None:
        td.Thread.join(self, timeout=timeout)


class TaskOutcome(NamedTuple):
    """Result of one named task: either a value or an exception with its traceback."""

    name: str
    value: Any
    error: Exception | None
    traceback: str | None

    @property
    def ok(self) -> bool:
        return self.error is None


def _inline(name: str, task: Callable[[], Any]) -> TaskOutcome:
    try:
        return TaskOutcome(name, task(), None, None)
    except Exception as e:
        logger.exception(f"{name}: task raised.")
        return TaskOutcome(name, None, e, traceback.format_exc())


def _collect(worker: SafeWorkerMixin) -> TaskOutcome:
    value = worker.wait_result()
    worker.join()
    failure = worker.failure
    if failure is not None:
        return TaskOutcome(worker.name, None, *failure)
    if value is None:
        err = RuntimeError(f"{worker.name} ended without a result")
        return TaskOutcome(worker.name, None, err, None)
    return TaskOutcome(worker.name, value[0], None, None)


def fan_out(
    tasks: Mapping[str, Callable[[], Any]],
    kind: WorkerKind = WorkerKind.INLINE,
    max_workers: int = 4,
) -> dict[str, TaskOutcome]:
    """Run independent tasks, at most ``max_workers`` at a time.

    Outcomes come back keyed and ordered by task name, so callers see the same order
    whatever the scheduling was.
    """
    if max_workers < 1:
        msg = "max_workers must be at least 1"
        raise ValueError(msg)
    outcomes: dict[str, TaskOutcome] = {}
    if kind is WorkerKind.INLINE:
        for name, task in tasks.items():
            outcomes[name] = _inline(name, task)
        return dict(sorted(outcomes.items()))

    worker_class: type[SafeProcess] | type[SafeThread] = SafeProcess if kind is WorkerKind.PROCESS else SafeThread
    for batch in chunked(tasks.items(), max_workers):
        workers = [worker_class(task, name) for name, task in batch]
        for worker in workers:
            worker.start()
        for worker in workers:
            outcome = _collect(worker)
            outcomes[outcome.name] = outcome
            logger.info(f"{outcome.name}: {'ok' if outcome.ok else 'failed'}")
    return dict(sorted(outcomes.items()))

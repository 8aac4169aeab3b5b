import logging
import multiprocessing
import threading
from logging.handlers import QueueHandler
from typing import Any, MutableMapping, Union

"""Logging from sweep worker processes.

Workers in a `multiprocessing.Pool` do not share the parent's handlers, and several processes appending to one log file
collide. So every worker sends its records through a queue, and a single `LoggerThread` in the parent hands them to
the parent's handlers.

Each worker process installs exactly one `QueueHandler` on its root logger. Installing one per call duplicates every
line, so installation happens under a process-shared lock and only when the root logger has no handler yet.

Usage, in the parent:
```
    with multiprocessing.Manager() as manager:
        logging_queue = manager.Queue()
        logging_thread = simulation_logging.LoggerThread(logging_queue)
        logging_thread.start()

        pool.imap_unordered(functools.partial(work, logging_queue=logging_queue), points)

        logging_thread.stop()
        logging_thread.join()
```

and in the worker:
```
def work(point, logging_queue, log_level=None):
    logger = simulation_logging.get_logger(point_id, logging_queue, log_level)
    logger.info('Simulating')       # [INFO] [point:3] Simulating
```

Note: `multiprocessing.get_logger()` is the process-management logger of multiprocessing itself, not a logger for
worker code.
"""

# Serializes QueueHandler installation across worker processes.
logger_lock = multiprocessing.RLock()


class LoggerThread(threading.Thread):
    """Runs in the parent process: reads records from the queue and logs them through the parent's handlers."""
    STOP_SIGNAL = None

    def __init__(self, logging_queue: multiprocessing.Queue):
        super().__init__()
        self.logging_queue = logging_queue

    def run(self):
        handled = 0
        for record in iter(self.logging_queue.get, self.STOP_SIGNAL):
            logging.getLogger(record.name).handle(record)
            handled += 1
        logging.debug(f'Logging thread exiting after {handled} records')

    def stop(self):
        self.logging_queue.put(self.STOP_SIGNAL)


class _PointAdapter(logging.LoggerAdapter):
    """Prefixes every line with the sweep point: `[INFO] [point:1] 8x8_32KB_s0.4: 2768098 cycles`."""
    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> tuple[Any, MutableMapping[str, Any]]:
        return f'[point:{self.extra["point_id"]}] {msg}', kwargs


def get_logger(
        point_id: int,
        logging_queue: multiprocessing.Queue = None,
        log_level: Union[int, str] = None) -> logging.LoggerAdapter:
    """A logger for one sweep point, safe to use from a pool worker.

    :param point_id: Grid position of the point being simulated.
    :param logging_queue: Queue drained by a LoggerThread. Without one, logs go straight to this process's root logger.
    :param log_level: Level for the worker's root logger, set when the QueueHandler is installed.
    :return: An adapter tagging every line with the point id.
    """
    logger = logging.getLogger()
    if logging_queue:
        with logger_lock:
            if not logger.hasHandlers():
                logger.addHandler(QueueHandler(logging_queue))
                if log_level:
                    logger.setLevel(log_level)
    return _PointAdapter(logger, {'point_id': point_id})

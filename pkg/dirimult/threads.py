import logging
from queue import Queue
from threading import Thread

logger = logging.getLogger(__name__)


def _work(func, index, item, results):
    try:
        results.put((index, func(item), None))
    except Exception as e:  # re-raised in the calling thread
        results.put((index, None, e))


def map_in_threads(func, items, workers=1):
    """Apply ``func`` to every item, keeping the input order.

    With ``workers <= 1`` the items are processed in the calling thread.
    Otherwise at most ``workers`` daemon threads run at a time and push
    ``(index, result)`` pairs on a queue; the results are put back in
    input order, so the output never depends on scheduling.

    :param workers: Number of concurrent threads.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    results = Queue()
    for start in range(0, len(items), workers):
        threads = []
        for index in range(start, min(start + workers, len(items))):
            thread = Thread(
                target=_work,
                kwargs={
                    "func": func,
                    "index": index,
                    "item": items[index],
                    "results": results,
                },
            )
            thread.daemon = True
            thread.start()
            threads.append(thread)

        for thread in threads:
            thread.join()

    ordered = [None] * len(items)
    while not results.empty():
        index, result, error = results.get()
        if error is not None:
            raise error
        ordered[index] = result
        results.task_done()
    logger.debug(f"Processed {len(items)} items with {workers} threads.")

    return ordered

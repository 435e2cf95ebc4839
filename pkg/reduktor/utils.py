import concurrent.futures
import csv
import logging
from contextlib import contextmanager

logger = logging.getLogger(__name__)


def map_in_order(func, items, workers=1):
    """Apply func to every item on a thread pool; results come back in input order."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    results = [None] * len(items)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(func, item): i for i, item in enumerate(items)}
        for future in concurrent.futures.as_completed(future_to_index):
            idx = future_to_index[future]
            try:
                results[idx] = future.result()
            except Exception as e:
                logger.error(f"Worker task {idx} failed: {e}")
                raise
    return results


def chunk_ranges(total, parts):
    """Split range(total) into at most `parts` contiguous ranges."""
    parts = max(1, min(parts, total)) if total else 1
    size, extra = divmod(total, parts)
    ranges = []
    start = 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        ranges.append(range(start, stop))
        start = stop
    return ranges


def fmt(value):
    """Full double precision, 17 significant digits."""
    return format(float(value), '.17g')


def csv_writer(handle):
    return csv.writer(handle, lineterminator='\n')


@contextmanager
def open_output(path):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        yield handle

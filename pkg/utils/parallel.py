import os
from concurrent.futures import ThreadPoolExecutor

# Fixed so that results never depend on the worker count.
CHUNK_SIZE = 64


def default_threads():
    """Worker count from GRADSIGN_THREADS, else 1"""
    value = os.environ.get("GRADSIGN_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def chunk_slices(count, chunk_size=CHUNK_SIZE):
    return [slice(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]


def ordered_map(fn, items, threads=1):
    """Map fn over items, returning results in input order.

    Each item is processed independently, so the output is identical for
    any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))

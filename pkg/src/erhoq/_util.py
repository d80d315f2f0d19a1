import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


def thread_count(requested=None):
    """Worker count: explicit request, else ``ERHOQ_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get("ERHOQ_THREADS", "").strip()
        requested = int(env) if env else 1
    return max(1, int(requested))


def parallel_map(fn, items, threads=None):
    """Ordered map; results do not depend on the worker count."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def is_whole_multiple(total, step, tol=1e-9):
    ratio = total / step
    return abs(ratio - round(ratio)) <= tol * max(1.0, abs(ratio))

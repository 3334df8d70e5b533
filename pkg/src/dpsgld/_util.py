import hashlib
import json
import math
import typing as t
from concurrent.futures import ThreadPoolExecutor

import numpy as np

T = t.TypeVar("T")

#: printf-style format that makes every emitted float re-parse to the same double.
FLOAT_FORMAT = "%.17g"


def format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def canonical_json(payload: t.Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(payload: t.Any) -> str:
    """SHA-256 of the canonical JSON dump of *payload*."""

    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def map_seeds(func: t.Callable[[int], T], seeds: t.Sequence[int], workers: t.Optional[int] = None) -> t.List[T]:
    """
    Call *func* once per seed on a thread pool. Results come back in the order of *seeds*, so aggregation does
    not depend on scheduling. With `workers=1` the calls run inline.
    """

    if workers == 1 or len(seeds) <= 1:
        return [func(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="dpsgld-seed") as executor:
        return list(executor.map(func, seeds))


def mean_stderr(values: t.Sequence[float]) -> t.Tuple[float, float]:
    """Sample mean and standard error of the mean (0 for fewer than two values)."""

    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        return math.nan, math.nan
    if array.size == 1:
        return float(array[0]), 0.0
    return float(array.mean()), float(array.std(ddof=1) / math.sqrt(array.size))

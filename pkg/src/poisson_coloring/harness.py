"""Replicate scheduling.

Replicate ``r`` of a base config runs with ``stream=r`` (see
:meth:`ProcessConfig.rng_streams`), so results never depend on which worker
ran them.  Results are always returned ordered by replicate index.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .errors import ReplicateFailed


def replicate_config(config, r):
    return replace(config, stream=config.stream + int(r))


def _call(job):
    fn, r, args = job
    try:
        return r, fn(r, *args), None
    except Exception as exc:  # noqa: BLE001 - re-raised with the replicate id
        return r, None, exc


def map_replicates(fn, replicates, args=(), workers=1):
    """Evaluate ``fn(r, *args)`` for r in range(replicates).

    ``fn`` must be a module-level function when ``workers > 1``.  The first
    failing replicate aborts the whole batch with :class:`ReplicateFailed`.
    """
    jobs = [(fn, r, tuple(args)) for r in range(int(replicates))]
    if workers is None or workers <= 1 or len(jobs) <= 1:
        out = []
        for job in jobs:
            r, value, exc = _call(job)
            if exc is not None:
                raise ReplicateFailed(r, exc) from exc
            out.append(value)
        return out
    results = {}
    with ProcessPoolExecutor(max_workers=int(workers)) as pool:
        for r, value, exc in pool.map(_call, jobs):
            if exc is not None:
                raise ReplicateFailed(r, exc) from exc
            results[r] = value
    return [results[r] for r in range(len(jobs))]

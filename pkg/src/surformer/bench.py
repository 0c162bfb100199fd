"""Batch inference latency measurement."""

import contextlib
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import InsufficientDataError, ParameterError


@dataclass
class LatencyReport:
    model: str
    batch_size: int
    warmup_batches: int
    repeats: int
    median_ms: float    # per sample
    mean_ms: float
    p95_ms: float
    parameters: int = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def benchmark_inference(predict_fn, inputs, batch_size=100, warmup=10, repeats=50,
                        model="", parameters=None, single_thread=True):
    """Time ``predict_fn`` on one batch of ``batch_size`` samples.

    ``inputs`` is a tuple of arrays sharing their first axis; the first
    ``batch_size`` rows form the batch.  ``warmup`` untimed calls precede
    ``repeats`` timed ones.  Reported figures are milliseconds per sample
    (batch wall time / batch size).  BLAS is pinned to one thread unless
    ``single_thread`` is False.
    """
    if batch_size < 1 or repeats < 1 or warmup < 0:
        raise ParameterError("batch_size and repeats must be >= 1, warmup >= 0")
    n = len(inputs[0])
    if n < batch_size:
        raise InsufficientDataError(f"{n} inputs is fewer than batch size {batch_size}")
    batch = tuple(np.ascontiguousarray(x[:batch_size]) for x in inputs)
    times = np.empty(repeats)
    with threadpool_limits(1) if single_thread else contextlib.nullcontext():
        for _ in range(warmup):
            predict_fn(*batch)
        for r in range(repeats):
            t0 = time.perf_counter()
            predict_fn(*batch)
            times[r] = time.perf_counter() - t0
    per_sample = times * 1000.0 / batch_size
    return LatencyReport(
        model=model,
        batch_size=batch_size,
        warmup_batches=warmup,
        repeats=repeats,
        median_ms=float(np.median(per_sample)),
        mean_ms=float(per_sample.mean()),
        p95_ms=float(np.percentile(per_sample, 95)),
        parameters=parameters,
    )

import time

import numpy as np
import pytest

from surformer.bench import LatencyReport, benchmark_inference
from surformer.errors import InsufficientDataError, ParameterError
from surformer.models import TactileTransformer


class SlowFirstCall:
    def __init__(self, first=0.2, rest=0.002):
        self.calls = 0
        self.first, self.rest = first, rest

    def __call__(self, x):
        self.calls += 1
        time.sleep(self.first if self.calls == 1 else self.rest)
        return x


def test_warmup_is_excluded():
    x = (np.zeros((100, 3)),)
    stub = SlowFirstCall()
    rep = benchmark_inference(stub, x, warmup=1, repeats=9)
    assert stub.calls == 10
    assert rep.mean_ms < 0.1 and rep.median_ms < 0.1
    # Negative control: without warmup the slow call lands in the timings.
    cold = benchmark_inference(SlowFirstCall(), x, warmup=0, repeats=9)
    assert cold.mean_ms > 0.2
    assert cold.median_ms < 0.1


def test_report_fields_and_ordering():
    model = TactileTransformer(seed=0)
    model.eval()
    x = np.random.default_rng(0).normal(size=(100, 7))
    rep = benchmark_inference(model.predict_proba, (x,), warmup=2, repeats=10, model="tt",
                              parameters=model.count_parameters())
    assert rep.median_ms > 0 and rep.p95_ms >= rep.median_ms
    assert (rep.batch_size, rep.warmup_batches, rep.repeats, rep.parameters) == (100, 2, 10, 70_085)
    assert LatencyReport.from_dict(rep.to_dict()) == rep


def test_doubling_batch_keeps_per_sample_cost():
    model = TactileTransformer(seed=0)
    model.eval()
    x = np.random.default_rng(0).normal(size=(200, 7))
    a = benchmark_inference(model.predict_proba, (x,), batch_size=100, warmup=5, repeats=30)
    b = benchmark_inference(model.predict_proba, (x,), batch_size=200, warmup=5, repeats=30)
    assert abs(b.median_ms - a.median_ms) / a.median_ms < 0.5


def test_errors():
    with pytest.raises(InsufficientDataError):
        benchmark_inference(lambda x: x, (np.zeros((99, 2)),))
    with pytest.raises(ParameterError):
        benchmark_inference(lambda x: x, (np.zeros((10, 2)),), batch_size=5, repeats=0)

"""Wall-clock comparison of skeletonization methods."""

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from iterskel.classic import boolean_thin, morph_skel
from iterskel.errors import UsageError
from iterskel.metrics import Report, evaluate, summarize

METHODS = ("boolean", "morph", "skelite")


@dataclass
class BenchResult:
    method: str
    dims: tuple
    median_ms: list  # per input, median over the timed repetitions
    raw_ms: list  # per input, every timed repetition
    speedup: float = None  # boolean median / this median, over all inputs
    metrics: dict = field(default_factory=dict)

    @property
    def overall_ms(self):
        return float(statistics.median(self.median_ms))

    def to_dict(self):
        return {
            "method": self.method,
            "dims": list(self.dims),
            "median_ms": self.median_ms,
            "overall_median_ms": self.overall_ms,
            "speedup_vs_boolean": self.speedup,
            "raw_ms": self.raw_ms,
            "metrics": self.metrics,
        }


def skeletonizer(method, weights=None, iters=None):
    """Return a one-argument skeletonization callable for ``method``."""
    if method == "boolean":
        return boolean_thin
    if method == "morph":
        return morph_skel
    if method == "skelite":
        if weights is None:
            raise UsageError("method skelite needs --weights")
        from iterskel.engine import run

        return lambda g: run(weights, g, N=iters)
    raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def time_call(fn, x, repeats=5, warmup=2):
    for _ in range(warmup):
        fn(x)
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(x)
        out.append((time.perf_counter() - t0) * 1e3)
    return out


def bench(methods, inputs, repeats=5, warmup=2, weights=None, targets=None):
    """Time each method on every input; only the skeletonization call is timed.

    ``targets`` (labels, one per input) add the mean metric row per method.
    """
    if repeats < 5 or warmup < 2:
        raise UsageError("benchmark needs repeats >= 5 and warmup >= 2")
    if not len(inputs):
        raise UsageError("no benchmark inputs")
    results = []
    for m in methods:
        fn = skeletonizer(m, weights)
        raw = [time_call(fn, x, repeats, warmup) for x in inputs]
        res = BenchResult(m, tuple(inputs[0].shape), [float(statistics.median(r)) for r in raw], raw)
        if targets is not None:
            reports = [
                evaluate(fn(x), t, str(i), ms, with_cldice=False)
                for i, (x, t, ms) in enumerate(zip(inputs, targets, res.median_ms))
            ]
            res.metrics = summarize(reports)
        results.append(res)
    base = next((r for r in results if r.method == "boolean"), None)
    for r in results:
        if base is not None:
            r.speedup = base.overall_ms / r.overall_ms
    return results


def table(results):
    """Plain-text summary with the metric columns followed by run time."""
    cols = [c for c in Report.COLUMNS[1:] if c not in ("cldice", "runtime_ms")]
    head = f"{'method':<10}" + "".join(f"{c:>16}" for c in cols) + f"{'run time [ms]':>16}{'speedup':>10}"
    lines = [head, "-" * len(head)]
    for r in results:
        vals = "".join(f"{r.metrics.get(c, float('nan')):>16.3f}" for c in cols)
        sp = f"{r.speedup:>10.1f}" if r.speedup is not None else f"{'-':>10}"
        lines.append(f"{r.method:<10}{vals}{r.overall_ms:>16.2f}{sp}")
    return "\n".join(lines)


def stable(raw, tol=0.2):
    """True when every timed repetition lies within ``tol`` of its median."""
    med = np.median(raw)
    return bool(np.all(np.abs(np.asarray(raw) - med) <= tol * med))

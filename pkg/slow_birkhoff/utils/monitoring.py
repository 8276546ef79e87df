"""
Run metrics for long computations.
Counts, failures and timings per operation, summarized in the log at the end of a command.
"""
import functools
import logging
import time
from collections import defaultdict, deque
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class RunMetrics:
    """Track per-operation call metrics."""

    def __init__(self, max_samples: int = 1000):
        self.max_samples = max_samples
        self.durations = defaultdict(deque)
        self.operation_stats = defaultdict(lambda: {
            "count": 0,
            "errors": 0,
            "total_time": 0.0
        })
        self.started = time.time()

    def record(self, operation: str, duration: float, error: Optional[str] = None):
        """Record one call of an operation."""
        stats = self.operation_stats[operation]
        stats["count"] += 1
        stats["total_time"] += duration
        if error:
            stats["errors"] += 1
            logger.debug(f"{operation} failed after {duration:.3f}s: {error}")

        samples = self.durations[operation]
        samples.append(duration)
        while len(samples) > self.max_samples:
            samples.popleft()

    def reset(self):
        self.durations.clear()
        self.operation_stats.clear()
        self.started = time.time()

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics."""

        def percentile(sorted_times, p):
            if not sorted_times:
                return 0
            k = (len(sorted_times) - 1) * p
            f = int(k)
            c = f + 1
            if c >= len(sorted_times):
                return sorted_times[f]
            return sorted_times[f] * (c - k) + sorted_times[c] * (k - f)

        operations = {}
        for name, stats in self.operation_stats.items():
            sorted_times = sorted(self.durations[name])
            operations[name] = {
                **stats,
                "p50": percentile(sorted_times, 0.50),
                "p95": percentile(sorted_times, 0.95),
                "mean": stats["total_time"] / stats["count"] if stats["count"] else 0,
            }

        return {
            "elapsed": time.time() - self.started,
            "total_calls": sum(s["count"] for s in self.operation_stats.values()),
            "total_errors": sum(s["errors"] for s in self.operation_stats.values()),
            "operations": operations,
        }


# Global instance
run_metrics = RunMetrics()


def track_operation(name: str):
    """Decorator to record call count, failures and duration of an operation."""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            error = None
            try:
                return func(*args, **kwargs)
            except Exception as e:
                error = str(e) or type(e).__name__
                raise
            finally:
                run_metrics.record(name, time.perf_counter() - start_time, error)

        return wrapper
    return decorator


def log_run_metrics():
    """Log a summary of the run metrics."""
    metrics = run_metrics.get_metrics()
    logger.info(
        f"Run finished in {metrics['elapsed']:.2f}s: "
        f"{metrics['total_calls']} tracked calls, {metrics['total_errors']} failed"
    )
    for name, stats in sorted(metrics["operations"].items()):
        logger.info(
            f"  {name}: count={stats['count']} errors={stats['errors']} "
            f"mean={stats['mean']:.3f}s p95={stats['p95']:.3f}s"
        )

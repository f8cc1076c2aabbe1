from .harness import Experiment, RunRecord, emit, load_records, run_experiment, summarize
from .ic import InterferenceCanceller
from .maxmin import AlternatingOptimizer

__all__ = [
    "AlternatingOptimizer",
    "InterferenceCanceller",
    "Experiment",
    "RunRecord",
    "run_experiment",
    "summarize",
    "emit",
    "load_records",
]

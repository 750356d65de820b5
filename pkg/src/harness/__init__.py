from src.harness.experiment import ExperimentResult, ablate, run_experiment
from src.harness.metrics import (
    aggregate_curves,
    convergence_step,
    peak_return,
    stderr,
    success_rate,
)

__all__ = [
    "ExperimentResult",
    "ablate",
    "aggregate_curves",
    "convergence_step",
    "peak_return",
    "run_experiment",
    "stderr",
    "success_rate",
]

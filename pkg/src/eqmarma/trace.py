from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

TERMINATIONS = ("param_converged", "loglik_converged", "max_iters", "no_missing")


@dataclass
class EstimationTrace:
    """Per-iterate record of an iterative estimator.

    ``params[0]`` is the initialiser; ``wall_time[k]`` is seconds elapsed
    since the start of the run when iterate ``k`` became available.
    """

    params: list[Any] = field(default_factory=list)
    observed_loglik: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    termination: str = "max_iters"
    clamp_count: int = 0
    # projected[k]: the refit producing iterate k was moved into the region
    projected: list[bool] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.params) - 1

    @property
    def final_loglik(self) -> float:
        return self.observed_loglik[-1]

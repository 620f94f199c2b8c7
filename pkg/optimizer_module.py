"""optimizer_module.py

COBYLA driver for the variational loop: scipy's linear-approximation trust
region with an evaluation budget, a full evaluation trace and best-seen
bookkeeping (the last COBYLA point is not necessarily the best one when the
cost is stochastic).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize as scipy_minimize

logger = logging.getLogger(__name__)


class CostEvaluationError(RuntimeError):
    """The cost returned a non-finite value; ``trace`` holds the evaluations so far."""

    def __init__(self, message: str, trace: List["TraceEntry"]):
        super().__init__(message)
        self.trace = trace


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 200
    rho_begin: float = 0.5
    rho_end: float = 1e-4
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if int(self.max_iterations) < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (self.rho_begin > self.rho_end > 0):
            raise ValueError(f"need rho_begin > rho_end > 0, got {self.rho_begin}, {self.rho_end}")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    theta: tuple
    cost: float


@dataclass
class OptimizationResult:
    theta: np.ndarray
    cost: float
    trace: List[TraceEntry] = field(default_factory=list)
    n_evaluations: int = 0
    converged: bool = False
    message: str = ""

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate([e.cost for e in self.trace]) if self.trace else np.array([])


def minimize(
    cost: Callable[[np.ndarray], float],
    theta0: Sequence[float],
    config: OptimizerConfig = OptimizerConfig(),
    callback: Optional[Callable[[TraceEntry], None]] = None,
) -> OptimizationResult:
    """Minimise ``cost`` from ``theta0``; one trace entry per cost evaluation.

    ``callback`` sees every entry as it is recorded and may raise to abort.
    The iteration budget counts cost evaluations.
    """
    x0 = np.asarray(theta0, dtype=float).reshape(-1)
    if x0.size < 1:
        raise ValueError("theta0 must hold at least one parameter")
    budget = int(config.max_iterations)
    trace: List[TraceEntry] = []
    best = {"theta": x0.copy(), "cost": np.inf}

    def wrapped(theta: np.ndarray) -> float:
        if len(trace) >= budget:
            raise _BudgetExhausted()
        value = float(cost(np.array(theta, dtype=float)))
        entry = TraceEntry(len(trace), tuple(float(t) for t in theta), value)
        trace.append(entry)
        if not np.isfinite(value):
            raise CostEvaluationError(f"cost returned {value} at iteration {entry.iteration}", list(trace))
        if value < best["cost"]:
            best["theta"], best["cost"] = np.array(theta, dtype=float), value
        if callback is not None:
            callback(entry)
        return value

    logger.info("COBYLA start: %d parameters, budget %d, rho %g -> %g", x0.size, budget, config.rho_begin, config.rho_end)
    converged, message = False, ""
    try:
        res = scipy_minimize(
            wrapped,
            x0,
            method="COBYLA",
            tol=config.rho_end,
            options={"rhobeg": config.rho_begin, "maxiter": budget},
        )
        converged = bool(res.success)
        message = str(res.message)
    except _BudgetExhausted:
        message = f"evaluation budget of {budget} exhausted"
        logger.warning("COBYLA stopped: %s", message)

    logger.info("COBYLA done: %d evaluations, best cost %.6g (%s)", len(trace), best["cost"], message)
    return OptimizationResult(
        theta=best["theta"],
        cost=float(best["cost"]),
        trace=trace,
        n_evaluations=len(trace),
        converged=converged,
        message=message,
    )

"""
Levenberg-Marquardt solver
Damped Gauss-Newton with a forward-difference Jacobian and Marquardt
diagonal scaling. Used by the distortion, calibration and PnP stages.
"""

import logging
from typing import Callable, List

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, model_validator

logger = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]

LAMBDA_CEILING = 1e16


class LMConfig(BaseModel):
    """Levenberg-Marquardt hyperparameters"""

    model_config = ConfigDict(frozen=True)

    lambda_init: PositiveFloat = 1e-3
    lambda_up: PositiveFloat = 10.0
    lambda_down: PositiveFloat = 0.1
    max_iters: PositiveInt = 200
    gradient_tol: PositiveFloat = 1e-10
    step_tol: PositiveFloat = 1e-8
    residual_tol: PositiveFloat = 1e-10
    jacobian_step: PositiveFloat = 1e-6
    jacobian_floor: PositiveFloat = 1e-8

    @model_validator(mode="after")
    def _damping_schedule(self):
        if not (self.lambda_up > 1.0 > self.lambda_down > 0.0):
            raise ValueError("need lambda_up > 1 > lambda_down > 0")
        return self


class LMResult(BaseModel):
    """Optimizer output and diagnostics"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    cost: float
    initial_cost: float
    iterations: int
    final_lambda: float
    converged: bool
    reason: str
    last_step_norm: float = 0.0
    cost_history: List[float] = []

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "cost": self.cost,
            "initial_cost": self.initial_cost,
            "final_lambda": self.final_lambda,
            "converged": self.converged,
            "reason": self.reason,
            "last_step_norm": self.last_step_norm,
        }


def numeric_jacobian(
    residual_fn: ResidualFn, x: np.ndarray, r0: np.ndarray, config: LMConfig
) -> np.ndarray:
    """Forward differences with step max(jacobian_step*|x_j|, jacobian_floor)"""
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = max(config.jacobian_step * abs(x[j]), config.jacobian_floor)
        xp = x.copy()
        xp[j] += h
        J[:, j] = (residual_fn(xp) - r0) / (xp[j] - x[j])
    return J


def _cost(r: np.ndarray) -> float:
    return float(r @ r) if np.all(np.isfinite(r)) else float("inf")


def levenberg_marquardt(
    residual_fn: ResidualFn, theta0, config: LMConfig = None
) -> LMResult:
    """
    Minimise sum(residual_fn(theta)**2)

    Args:
        residual_fn: maps a parameter vector to a residual vector
        theta0: starting parameters
        config: hyperparameters (defaults when None)

    Returns:
        LMResult with the best parameters found. Hitting max_iters is reported
        through converged=False, never raised.
    """
    config = config or LMConfig()
    x = np.array(theta0, dtype=float)
    r = np.asarray(residual_fn(x), dtype=float)
    cost = _cost(r)
    if not np.isfinite(cost):
        raise ValueError("residuals are not finite at the starting point")

    initial_cost = cost
    lam = config.lambda_init
    history = [cost]
    step_norm = 0.0

    def result(iterations: int, converged: bool, reason: str) -> LMResult:
        logger.debug(
            "LM stop after %d iterations: %s (cost %.3e -> %.3e, lambda %.1e)",
            iterations, reason, initial_cost, cost, lam,
        )
        return LMResult(
            x=x,
            cost=cost,
            initial_cost=initial_cost,
            iterations=iterations,
            final_lambda=lam,
            converged=converged,
            reason=reason,
            last_step_norm=step_norm,
            cost_history=history,
        )

    if cost < config.residual_tol:
        return result(0, True, "residual")

    for iteration in range(1, config.max_iters + 1):
        J = numeric_jacobian(residual_fn, x, r, config)
        g = J.T @ r
        if np.max(np.abs(g)) < config.gradient_tol:
            return result(iteration - 1, True, "gradient")

        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))

        while True:
            try:
                delta = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                x_new = x + delta
                r_new = np.asarray(residual_fn(x_new), dtype=float)
                cost_new = _cost(r_new)
                if cost_new < cost:
                    break
            lam *= config.lambda_up
            if lam > LAMBDA_CEILING:
                # no descent direction left at numerical precision
                return result(iteration - 1, True, "stalled")

        x, r = x_new, r_new
        cost = cost_new
        history.append(cost)
        step_norm = float(np.linalg.norm(delta))
        lam = max(lam * config.lambda_down, 1e-300)
        logger.debug("LM iter %d: cost %.6e, lambda %.1e, |step| %.3e", iteration, cost, lam, step_norm)

        if cost < config.residual_tol:
            return result(iteration, True, "residual")
        if step_norm <= config.step_tol * (np.linalg.norm(x) + config.step_tol):
            return result(iteration, True, "step")

    logger.warning("LM reached max_iters=%d with cost %.3e", config.max_iters, cost)
    return result(config.max_iters, False, "max_iters")

"""Warranty cost per part and its cost-optimal warranty period.

The cost of a warranty period ``w`` (in cycles) is the replacement cost of
failures inside the warranty plus a penalty for failures after it::

    C(w) = R F(w) + R b exp(-c w) (1 - F(w))

The penalty decays with ``w``: a customer tolerates a late failure better the
longer the warranty was.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bayesnet import WeibullParams
from .forecast import weibull_cdf

DEFAULT_PENALTY_BASE = math.e
DEFAULT_PENALTY_DECAY = 1e-5
GRID_STEPS = 10_000


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WarrantyCostModel:
    replacement_cost: float = 1.0
    penalty_base: float = DEFAULT_PENALTY_BASE
    penalty_decay: float = DEFAULT_PENALTY_DECAY

    def __post_init__(self):
        for name in ("replacement_cost", "penalty_base", "penalty_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class GdConfig:
    """Descent settings; ``None`` picks a default scaled to the problem.

    The start defaults to the Weibull scale, the first step to a tenth of
    it, and the tolerance to ``1e-9 R c`` on the gradient magnitude.
    """

    initial_w: Optional[float] = None
    learning_rate: Optional[float] = None
    tolerance: Optional[float] = None
    max_iterations: int = 10_000

    def __post_init__(self):
        for name in ("initial_w", "learning_rate", "tolerance"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class WarrantyResult:
    w: float
    cost: float
    method: str = "gd"
    converged: bool = True
    iterations: int = 0

    def __iter__(self):
        return iter((self.w, self.cost))


def weibull_pdf(params: WeibullParams, t):
    t = np.asarray(t, dtype=float)
    a, b = params.alpha, params.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        z = t / b
        out = (a / b) * z ** (a - 1.0) * np.exp(-(z**a))
    return float(out) if out.ndim == 0 else out


def warranty_cost(w, params: WeibullParams, model: WarrantyCostModel):
    F = weibull_cdf(params, w)
    R, b, c = model.replacement_cost, model.penalty_base, model.penalty_decay
    return R * F + R * b * np.exp(-c * np.asarray(w, dtype=float)) * (1.0 - F)


def cost_gradient(w, params: WeibullParams, model: WarrantyCostModel):
    R, b, c = model.replacement_cost, model.penalty_base, model.penalty_decay
    F = weibull_cdf(params, w)
    f = weibull_pdf(params, w)
    decay = np.exp(-c * np.asarray(w, dtype=float))
    return R * (f - b * c * decay * (1.0 - F) - b * decay * f)


def grid_search_warranty(params: WeibullParams, model: WarrantyCostModel,
                         w_max: Optional[float] = None, steps: int = GRID_STEPS) -> WarrantyResult:
    """Cheapest point of a uniform grid on ``[0, w_max]`` (default ``5 beta``)."""
    if steps < 2:
        raise ValueError("steps must be at least 2")
    w_max = 5.0 * params.beta if w_max is None else w_max
    grid = np.linspace(0.0, w_max, steps)
    cost = warranty_cost(grid, params, model)
    k = int(np.argmin(cost))
    return WarrantyResult(float(grid[k]), float(cost[k]), "grid", True, 0)


def _descend(params, model, w, eta, tol, max_iter):
    cost = float(warranty_cost(w, params, model))
    for it in range(1, max_iter + 1):
        g = float(cost_gradient(w, params, model))
        if abs(g) < tol or (w == 0.0 and g > 0):
            return w, cost, True, it
        # halve the step until the projected move lowers the cost
        while True:
            w_new = max(0.0, w - eta * g)
            c_new = float(warranty_cost(w_new, params, model))
            if c_new < cost:
                break
            eta *= 0.5
            if eta * abs(g) < 1e-12 * max(w, 1.0):
                # no representable step improves the cost: a stationary point
                return w, cost, True, it
        w, cost = w_new, c_new
        eta *= 2.0
    return w, cost, False, max_iter


def optimize_warranty(params: WeibullParams, model: WarrantyCostModel,
                      cfg: GdConfig = GdConfig()) -> WarrantyResult:
    """Projected gradient descent on ``w >= 0`` with a grid safety net.

    If the descent ends more than 1% above the best point of a
    ``GRID_STEPS`` grid, it restarts from that grid point.
    """
    R, c = model.replacement_cost, model.penalty_decay
    tol = 1e-9 * R * c if cfg.tolerance is None else cfg.tolerance
    w0 = params.beta if cfg.initial_w is None else cfg.initial_w

    def step_for(w):
        if cfg.learning_rate is not None:
            return cfg.learning_rate
        g = abs(float(cost_gradient(w, params, model)))
        return 0.1 * params.beta / g if g > 0 else 1.0

    w, cost, converged, its = _descend(params, model, w0, step_for(w0), tol, cfg.max_iterations)
    method = "gd"
    grid = grid_search_warranty(params, model)
    if cost > 1.01 * grid.cost:
        method = "grid-seeded"
        start = grid.w if grid.w > 0 else 0.0
        w, cost, converged, more = _descend(params, model, start, step_for(max(start, 1.0)), tol,
                                            cfg.max_iterations)
        its += more
        if cost > grid.cost:
            w, cost = grid.w, grid.cost
    if not converged:
        warnings.warn(f"gradient descent stopped after {its} iterations without converging",
                      ConvergenceWarning, stacklevel=2)
    return WarrantyResult(float(w), float(cost), method, converged, its)

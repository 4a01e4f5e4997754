"""Backtracking line searches for exact-gradient ascent.

Both searches try ``eta_max * b**k`` for ``k = 0, 1, ...`` and return the
first (largest) step that passes the acceptance test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], float]


class LineSearchError(RuntimeError):
    """No grid step passed the test within ``max_backtracks`` halvings."""

    def __init__(self, message: str, last_eta: float):
        super().__init__(message)
        self.last_eta = last_eta


class AlreadyOptimal(Exception):
    """Raised by the log-loss search when ``f* - f`` is below the floor."""


@dataclass(frozen=True)
class LineSearchConfig:
    h: float = 0.5
    eta_max: float = 1e4
    backtrack: float = 0.5
    max_backtracks: int = 60
    floor: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"h must lie in (0, 1), got {self.h}")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError(f"backtrack factor must lie in (0, 1), got {self.backtrack}")
        if not self.eta_max > 0:
            raise ValueError("eta_max must be positive")

    @classmethod
    def from_eps(cls, eps: float, C: float = 1.0, **kw) -> "LineSearchConfig":
        """``eta_max = C / eps``."""
        return cls(eta_max=C / eps, **kw)


def armijo_condition(f: Objective, theta, grad, eta: float, h: float, f_theta: float | None = None) -> bool:
    f0 = f(theta) if f_theta is None else f_theta
    sq = float(np.sum(np.square(grad)))
    return f(theta + eta * grad) >= f0 + h * eta * sq


def log_armijo_condition(
    f: Objective, f_star: float, theta, grad, eta: float, h: float, f_theta: float | None = None
) -> bool:
    f0 = f(theta) if f_theta is None else f_theta
    gap0 = f_star - f0
    gap1 = f_star - f(theta + eta * grad)
    if gap1 <= 0.0:
        return True
    sq = float(np.sum(np.square(grad)))
    return math.log(gap1) <= math.log(gap0) - h * eta * sq / gap0


def _search(accept, cfg: LineSearchConfig) -> float:
    eta = cfg.eta_max
    for _ in range(cfg.max_backtracks + 1):
        if accept(eta):
            return eta
        eta *= cfg.backtrack
    raise LineSearchError(f"no acceptable step after {cfg.max_backtracks} backtracks", eta / cfg.backtrack)


def armijo_search(f: Objective, theta, grad, cfg: LineSearchConfig, f_theta: float | None = None) -> float:
    """Largest grid step with ``f(theta + eta g) >= f(theta) + h eta ||g||^2``."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient must be finite")
    f0 = f(theta) if f_theta is None else f_theta
    sq = float(np.sum(np.square(grad)))
    if sq == 0.0:
        return cfg.eta_max
    return _search(lambda eta: f(theta + eta * grad) >= f0 + cfg.h * eta * sq, cfg)


def log_armijo_search(
    f: Objective, f_star: float, theta, grad, cfg: LineSearchConfig, f_theta: float | None = None
) -> float:
    """Largest grid step passing the log-suboptimality test.

    ``ln(f* - f(theta + eta g)) <= ln(f* - f(theta)) - h eta ||g||^2 / (f* - f(theta))``.
    Raises :class:`AlreadyOptimal` when ``f* - f(theta) <= cfg.floor``.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    f0 = f(theta) if f_theta is None else f_theta
    gap0 = f_star - f0
    if gap0 <= cfg.floor:
        raise AlreadyOptimal(gap0)
    sq = float(np.sum(np.square(grad)))
    if sq == 0.0:
        return cfg.eta_max
    log_gap0 = math.log(gap0)

    def accept(eta):
        gap1 = f_star - f(theta + eta * grad)
        return gap1 <= 0.0 or math.log(gap1) <= log_gap0 - cfg.h * eta * sq / gap0

    return _search(accept, cfg)


def growing_eta_max(C: float, eps: float, gap: float) -> float:
    """Optional per-iteration cap ``C / max(eps, gap)``."""
    return C / max(eps, gap)

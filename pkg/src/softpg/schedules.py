"""Step-size schedules and multi-stage horizon formulas.

Schedules are indexed the way the analysis indexes iterations: the ``t``-th
update (``t >= 1``) uses ``eta_0 * alpha**t``. Loop code running 0-based
iteration ``k`` asks for ``t = k + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConstantSchedule:
    eta: float

    def step(self, t: int) -> float:
        return self.eta

    def steps(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), self.eta, dtype=float)


@dataclass(frozen=True)
class ExpSchedule:
    """``eta_t = eta0 * alpha**t`` with ``alpha = (beta / T)**(1 / T)``."""

    eta0: float
    beta: float
    T: int

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.T < 1 or self.beta < 1:
            raise ValueError("need T >= 1 and beta >= 1")
        if self.beta > self.T:
            raise ValueError(f"beta={self.beta} exceeds the horizon T={self.T}; steps would grow")

    @property
    def log_alpha(self) -> float:
        return math.log(self.beta / self.T) / self.T

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def step(self, t: int) -> float:
        return self.eta0 * math.exp(t * self.log_alpha)

    def steps(self, t: np.ndarray) -> np.ndarray:
        return self.eta0 * np.exp(np.asarray(t, dtype=float) * self.log_alpha)


def exp_step(sched: ExpSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return sched.step(t)


@dataclass(frozen=True)
class DoublingSchedule:
    """Exponential schedule restarted on epochs of length ``T0 * 2**k``.

    Unlike the other schedules this one is addressed by the 0-based global
    iteration counter; inside epoch ``k`` the local update ``j`` (0-based)
    gets ``eta0 * alpha_k**(j + 1)``.
    """

    eta0: float
    beta: float
    T0: int

    def epoch(self, t: int) -> int:
        return ((t // self.T0) + 1).bit_length() - 1

    def epoch_start(self, k: int) -> int:
        return self.T0 * ((1 << k) - 1)

    def epoch_schedule(self, k: int) -> ExpSchedule:
        return ExpSchedule(self.eta0, self.beta, self.T0 << k)

    def step(self, t: int) -> float:
        k = self.epoch(t)
        return self.epoch_schedule(k).step(t - self.epoch_start(k) + 1)

    def steps(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        k = (np.frexp((t // self.T0 + 1).astype(float))[1] - 1).astype(np.int64)
        horizon = (self.T0 << k).astype(float)
        local = t - self.T0 * ((1 << k) - 1) + 1
        return self.eta0 * np.exp(local * np.log(self.beta / horizon) / horizon)

    def boundaries(self, T: int) -> list[int]:
        """Epoch start iterations below ``T`` (excluding 0)."""
        out, k = [], 1
        while self.epoch_start(k) < T:
            out.append(self.epoch_start(k))
            k += 1
        return out


def doubling_step(sched: DoublingSchedule, t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return sched.step(t)


# ---------------------------------------------------------------- stage lengths


def stage_lengths_exact(tau_prev: float, tau_i: float, eta_i: float, mu_i: float, B4: float) -> int:
    """``ceil(2 / (eta_i mu_i) * log((tau_prev / tau_i) (1 + B4)))``."""
    if min(tau_prev, tau_i, eta_i, mu_i) <= 0 or B4 < 0:
        raise ValueError("stage-length arguments must be positive")
    return math.ceil(2.0 / (eta_i * mu_i) * math.log(tau_prev / tau_i * (1.0 + B4)))


@dataclass(frozen=True)
class StochasticStage:
    A1: float
    A2: float
    A3: float
    T_prime: float
    T_dprime: float
    T: int


def stochastic_stage(
    tau_prev: float,
    tau_i: float,
    L_min: float,
    L_max: float,
    mu_i: float,
    B1: float,
    B4: float,
    sigma2: float,
    beta: float = 1.0,
) -> StochasticStage:
    """Stage horizon of the stochastic multi-stage method with all intermediates.

    The ``T``-dependent factors are replaced by horizon-free constants
    ``A1 = exp(B1 beta / L_min)``, ``A2 = 0.69 / L_max`` and
    ``A3 = 5 L_max A1 / e^2``.
    """
    A1 = math.exp(B1 * beta / L_min)
    A2 = 0.69 / L_max
    A3 = 5.0 * L_max * A1 / math.e**2
    Tp = 2.0 / (A2 * mu_i) * math.log(2.0 * A1 * tau_prev * (1.0 + B4) / tau_i)
    Tpp = 2.0 * A3 * sigma2 / (tau_i * mu_i**2)
    cands = [5583.0]
    if Tp > 0:
        cands.append(2.0 * Tp * math.log(Tp))
    if Tpp > 0:
        cands.append(4.0 * Tpp * math.log(Tpp) ** 2)
    return StochasticStage(A1, A2, A3, Tp, Tpp, math.ceil(max(cands)))


def stage_lengths_stochastic(
    tau_prev: float,
    tau_i: float,
    L_min: float,
    L_max: float,
    mu_i: float,
    B1: float,
    B4: float,
    sigma2: float,
    beta: float = 1.0,
) -> int:
    return stochastic_stage(tau_prev, tau_i, L_min, L_max, mu_i, B1, B4, sigma2, beta).T

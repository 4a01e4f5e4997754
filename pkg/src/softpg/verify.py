"""Numerical checks of the inequalities softmax PG theory relies on.

Each ``check_*`` function samples random logits (uniform in ``[-5, 5]`` per
coordinate), evaluates both sides of an inequality and returns a
:class:`PropertyReport`. A property passes when its largest signed violation
(left side minus right side) is at most ``tol``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import bandit as bd
from . import mdp as md
from .policy_core import softmax

THETA_RANGE = 5.0
TOL = 1e-9
REPORT_COLUMNS = ("name", "trials", "max_violation", "tightness", "pass")


@dataclass(frozen=True)
class PropertyReport:
    name: str
    trials: int
    max_violation: float
    tightness: float
    tol: float = TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tol)

    def row(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_violation": f"{self.max_violation:.6e}",
            "tightness": f"{self.tightness:.6e}",
            "pass": int(self.passed),
        }


def write_reports(reports: Iterable[PropertyReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


class _Tally:
    """Running max of ``lhs - rhs`` and ``lhs / rhs``."""

    def __init__(self):
        self.violation = -math.inf
        self.tightness = 0.0
        self.n = 0

    def add(self, lhs: float, rhs: float):
        self.n += 1
        self.violation = max(self.violation, lhs - rhs)
        if rhs > 0:
            self.tightness = max(self.tightness, lhs / rhs)
        elif lhs > 0:
            self.tightness = math.inf

    def report(self, name: str, tol: float = TOL) -> PropertyReport:
        v = self.violation if self.n else 0.0
        return PropertyReport(name, self.n, v, self.tightness, tol)


def random_theta(env, rng: np.random.Generator) -> np.ndarray:
    shape = (env.A,) if isinstance(env, bd.BanditSpec) else (env.S, env.A)
    return rng.uniform(-THETA_RANGE, THETA_RANGE, size=shape)


def _objective(env, tau: float):
    """``(value, grad)`` callables of the (regularized) objective."""
    if isinstance(env, bd.BanditSpec):
        return (lambda th: bd.bandit_entropy_value(env, th, tau)), (lambda th: bd.bandit_entropy_grad(env, th, tau))
    return (lambda th: md.value(env, th, tau)), (lambda th: md.evaluate(env, th, tau).grad_tau)


# ---------------------------------------------------------------- gradients


def finite_diff_grad(f: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if not 1e-8 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-8, 1e-3]")
    theta = np.array(theta, dtype=float)
    g = np.zeros_like(theta)
    flat, gflat = theta.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(theta)
        flat[i] = orig - step
        down = f(theta)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return g


# ---------------------------------------------------------------- landscape


def check_smoothness(env, L_claimed: float, trials: int, rng: np.random.Generator, tau: float = 0.0) -> PropertyReport:
    """Taylor remainder ``|f(t') - f(t) - <grad f(t), t' - t>|`` against ``L/2 ||t' - t||^2``."""
    value, grad = _objective(env, tau)
    tally = _Tally()
    for _ in range(trials):
        theta = random_theta(env, rng)
        d = rng.standard_normal(theta.shape)
        d *= rng.uniform(0.0, 1.0) / np.linalg.norm(d)
        rem = abs(value(theta + d) - value(theta) - float(np.sum(grad(theta) * d)))
        tally.add(rem, 0.5 * L_claimed * float(np.sum(d * d)))
    return tally.report(f"smoothness[L={L_claimed:.6g},tau={tau:g}]")


def _f_star(env, tau: float = 0.0) -> float:
    if isinstance(env, bd.BanditSpec):
        return bd.soft_optimal_value(env, tau)
    return md.optimal_values(env, tau).f


def lojasiewicz_sides(env, theta, tau: float = 0.0, opt=None, opt_tau=None) -> tuple[float, float]:
    """``(||grad||, C(theta) * gap^{1 - xi})`` with ``xi = 0`` (plain) or ``1/2`` (``tau > 0``)."""
    if isinstance(env, bd.BanditSpec):
        pi = softmax(theta)
        if tau == 0:
            g = bd.bandit_grad(env, theta)
            return float(np.linalg.norm(g)), float(pi[env.a_star] * (env.f_star - pi @ env.means))
        g = bd.bandit_entropy_grad(env, theta, tau)
        gap = max(bd.soft_optimal_value(env, tau) - bd.bandit_entropy_value(env, theta, tau), 0.0)
        return float(np.linalg.norm(g)), math.sqrt(2.0 * tau) * float(pi.min()) * math.sqrt(gap)
    cache = md.evaluate(env, theta, tau)
    if tau == 0:
        opt = md.optimal_values(env) if opt is None else opt
        C = md.lojasiewicz_constant(env, cache, opt)
        return float(np.linalg.norm(cache.grad)), C * max(opt.f - cache.f, 0.0)
    opt_tau = md.optimal_values(env, tau) if opt_tau is None else opt_tau
    P_star, _ = md.policy_matrices(env, opt_tau.pi)
    ratio = float(np.max(md.visitation(env, P_star) / cache.d))
    C = math.sqrt(2.0 * tau / env.S) * math.sqrt(env.rho.min()) * float(cache.pi.min()) / math.sqrt(ratio)
    return float(np.linalg.norm(cache.grad_tau)), C * math.sqrt(max(opt_tau.f - cache.f_tau, 0.0))


def check_lojasiewicz(env, trials: int, rng: np.random.Generator, tau: float = 0.0) -> PropertyReport:
    """``C(theta) gap^{1-xi} <= ||grad||`` at random logits."""
    opt = md.optimal_values(env) if isinstance(env, md.MdpSpec) else None
    opt_tau = md.optimal_values(env, tau) if isinstance(env, md.MdpSpec) and tau > 0 else None
    tally = _Tally()
    for _ in range(trials):
        norm, lower = lojasiewicz_sides(env, random_theta(env, rng), tau, opt, opt_tau)
        tally.add(lower, norm)
    return tally.report(f"lojasiewicz[tau={tau:g}]")


def check_reversed_lojasiewicz(env, trials: int, rng: np.random.Generator) -> PropertyReport:
    """``||grad|| <= nu (f* - f)`` with ``nu = sqrt(2)/Delta*`` (bandit) or ``sqrt(2)/((1-gamma) Delta*)``."""
    tally = _Tally()
    if isinstance(env, bd.BanditSpec):
        if not env.opt_gap > 0:
            raise ValueError("reversed Lojasiewicz needs a unique best arm")
        nu = bd.reversed_lojasiewicz_constant(env)
        for _ in range(trials):
            theta = random_theta(env, rng)
            gap = env.f_star - bd.bandit_value(env, theta)
            tally.add(float(np.linalg.norm(bd.bandit_grad(env, theta))), nu * gap)
        return tally.report("reversed_lojasiewicz")
    opt = md.optimal_values(env)
    if not md.optimal_action_gap(env, opt) > 0:
        raise ValueError(f"{env.name}: some state has tied optimal actions, so the action gap is zero")
    nu = md.reversed_lojasiewicz_constant(env, opt)
    for _ in range(trials):
        c = md.evaluate(env, random_theta(env, rng))
        tally.add(float(np.linalg.norm(c.grad)), nu * (opt.f - c.f))
    return tally.report("reversed_lojasiewicz")


# ---------------------------------------------------------------- estimator


def bandit_second_moment(spec: bd.BanditSpec, theta, tau: float = 0.0) -> float:
    """Exact ``E ||g_hat||^2`` for deterministic rewards, by enumerating the pulled arm."""
    rng = np.random.default_rng(0)
    det = bd.BanditSpec(spec.means, family="deterministic")
    pi = softmax(theta)
    total = 0.0
    for a in range(spec.A):
        g = bd.bandit_entropy_sample_grad(det, theta, tau, rng, arm=a).g_hat
        total += pi[a] * float(g @ g)
    return total


def mdp_joint_moments(spec: md.MdpSpec, theta, tau: float = 0.0, limit: int = 10**6):
    """Exact ``E g_hat`` and ``E ||g_hat||^2`` over all joint per-state action draws."""
    if spec.A**spec.S > limit:
        raise ValueError(f"A^S = {spec.A}^{spec.S} joint outcomes exceeds {limit}; use sampling instead")
    cache = md.evaluate(spec, theta, tau)
    rng = np.random.default_rng(0)
    mean = np.zeros((spec.S, spec.A))
    second = 0.0
    for acts in itertools.product(range(spec.A), repeat=spec.S):
        acts = np.array(acts)
        w = float(np.prod(cache.pi[np.arange(spec.S), acts]))
        g = md.mdp_sample_grad(spec, theta, cache, tau, rng, actions=acts).g_hat
        mean += w * g
        second += w * float(np.sum(g * g))
    return mean, second, cache


def check_sgc(env, trials: int, rng: np.random.Generator) -> PropertyReport:
    """Exact-expectation ``E ||g_hat||^2 <= rho ||grad f||`` at random logits.

    Bandit rewards are treated as deterministic at their means.
    """
    tally = _Tally()
    if isinstance(env, bd.BanditSpec):
        rho = bd.sgc_constant(env)
        for _ in range(trials):
            theta = random_theta(env, rng)
            tally.add(bandit_second_moment(env, theta), rho * float(np.linalg.norm(bd.bandit_grad(env, theta))))
        return tally.report("sgc")
    for _ in range(trials):
        theta = random_theta(env, rng)
        _, second, cache = mdp_joint_moments(env, theta)
        tally.add(second, md.sgc_constant(env, cache) * float(np.linalg.norm(cache.grad)))
    return tally.report("sgc")


def two_arm_sgc_equality(r1: float, r2: float, p: float) -> tuple[float, float, float]:
    """Both sides of the two-arm growth condition and the ratio that makes them equal.

    ``lhs = E ||g_hat||^2`` by enumerating both arms, ``rhs = ||grad f||`` and
    ``rho = sqrt(2) [(1-p) r1^2 + p r2^2] / Delta`` so that ``lhs = rho rhs``.
    """
    delta = r1 - r2
    if not delta > 0:
        raise ValueError("need r1 > r2")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    spec = bd.BanditSpec(np.array([r1, r2]), family="deterministic") if 0 <= r2 and r1 <= 1 else None
    pi = np.array([p, 1.0 - p])
    r = np.array([r1, r2])
    lhs = 0.0
    for a in range(2):
        r_hat = np.zeros(2)
        r_hat[a] = r[a] / pi[a]
        g = pi * (r_hat - pi @ r_hat)
        lhs += pi[a] * float(g @ g)
    grad = pi * (r - pi @ r)
    rhs = float(np.linalg.norm(grad))
    rho = math.sqrt(2.0) * ((1.0 - p) * r1**2 + p * r2**2) / delta
    if spec is not None:
        # same quantity through the library's estimator
        theta = np.log(pi)
        assert abs(bandit_second_moment(spec, theta) - lhs) <= 1e-12 * max(1.0, lhs)
    assert abs(lhs - rho * rhs) <= 1e-12 * max(1.0, lhs)
    return lhs, rhs, rho


# ---------------------------------------------------------------- entropy


def lambert_w(x: float) -> float:
    """Principal branch of ``W`` on ``[0, inf)`` via Halley's iteration."""
    x = float(x)
    if x < 0 or math.isnan(x):
        raise ValueError("lambert_w is defined here for x >= 0 only")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if x < math.e:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0))
        w -= step
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


def entropy_bias_bound(A: int, tau: float) -> float:
    """``tau W((A-1)/e)``: worst-case gap between the optimal and soft-optimal policies."""
    if A < 2 or tau <= 0:
        raise ValueError("need A >= 2 and tau > 0")
    return tau * lambert_w((A - 1) / math.e)


def measured_bias(r: np.ndarray, tau: float) -> float:
    """``(pi* - softmax(r/tau))^T r``."""
    r = np.asarray(r, dtype=float)
    return float(r.max() - softmax(r / tau) @ r)


def worst_case_rewards(A: int, tau: float) -> np.ndarray:
    """Rewards attaining the bias bound: ``tau (W + 1)`` on one arm, zero elsewhere."""
    r = np.zeros(A)
    r[0] = tau * (lambert_w((A - 1) / math.e) + 1.0)
    return r


def entropy_constants(env) -> tuple[float, float, float]:
    """``(B2, B3, B4)`` for bandits or MDPs."""
    A = env.A
    if isinstance(env, bd.BanditSpec):
        W = lambert_w((A - 1) / math.e)
        return W, math.log(A), W + math.log(A)
    c = math.log(A) / (1.0 - env.gamma)
    return c, c, 2.0 * c


def check_entropy_assumptions(
    env, tau_pairs: Iterable[tuple[float, float]] | None, trials: int, rng: np.random.Generator
) -> list[PropertyReport]:
    """Bias, upper-bound and temperature-shift inequalities relating ``f`` and ``f^tau``.

    For each trial a random ``theta`` is paired with ``tau1 > tau2`` (from
    ``tau_pairs`` cyclically, or drawn with ``tau1 ~ U(0.01, 1)`` and
    ``tau2 ~ U(0, tau1)``).
    """
    B2, B3, B4 = entropy_constants(env)
    pairs = list(tau_pairs) if tau_pairs else None
    bias, upper, shift = _Tally(), _Tally(), _Tally()
    is_bandit = isinstance(env, bd.BanditSpec)
    f_star = _f_star(env)
    memo: dict[float, tuple[float, float]] = {}

    def soft(tau):
        # (f^{*tau}, f(theta*_tau))
        if tau not in memo:
            if is_bandit:
                memo[tau] = (bd.soft_optimal_value(env, tau), float(bd.soft_optimal_policy(env, tau) @ env.means))
            else:
                sol = md.optimal_values(env, tau)
                memo[tau] = (sol.f, md.value(env, sol.Q / tau))
        return memo[tau]

    value = (lambda th, t: bd.bandit_entropy_value(env, th, t)) if is_bandit else (lambda th, t: md.value(env, th, t))
    for k in range(trials):
        if pairs:
            tau1, tau2 = pairs[k % len(pairs)]
        else:
            tau1 = float(rng.uniform(0.01, 1.0))
            tau2 = float(rng.uniform(0.0, tau1))
        if not tau2 < tau1:
            raise ValueError("each pair needs tau2 < tau1")
        theta = random_theta(env, rng)
        f = value(theta, 0.0)
        gaps = {}
        for tau in (tau1, tau2):
            if tau == 0:
                gaps[tau] = f_star - f
                continue
            fs_tau, f_at_soft = soft(tau)
            gaps[tau] = fs_tau - value(theta, tau)
            bias.add(f_star - f_at_soft, tau * B2)
            upper.add(f_at_soft - f, gaps[tau] + tau * B3)
        shift.add(gaps[tau2], gaps[tau1] + tau1 * B4)
    return [
        bias.report("assumption_bias"),
        upper.report("assumption_upper_bound"),
        shift.report("assumption_temperature_shift"),
    ]


# ---------------------------------------------------------------- theorem constants


@dataclass(frozen=True)
class BoundParams:
    setting: str
    kappa: float
    C1: float
    C2: float
    T0: float
    alpha: float
    T: int
    beta: float
    L: float
    mu: float

    def variance_bound(self, initial_gap: float, eps: float, sigma2: float) -> float:
        """Right-hand side of the bounded-variance rate at iterate ``T + 1``."""
        lt = math.log(self.T / self.beta)
        first = initial_gap * self.C1 * math.exp(-self.alpha * eps * self.T / (self.kappa * lt))
        return first + self.C1 * self.C2 / (2.0 * self.L) * lt**2 * sigma2 / (eps**2 * self.T)


def theorem_bound_constants(setting: str, params: dict) -> BoundParams:
    """Constants of the exponential-step convergence bounds.

    ``setting="variance"`` needs ``L, mu, T, beta``; ``setting="sgc"``
    additionally needs ``eta0`` and ``rho``.
    """
    L, mu, T = float(params["L"]), float(params["mu"]), int(params["T"])
    beta = float(params.get("beta", 1.0))
    if min(L, mu, T, beta) <= 0:
        raise ValueError("L, mu, T and beta must be positive")
    alpha = math.exp(math.log(beta / T) / T)
    lt = math.log(T / beta)
    if setting == "variance":
        kappa = 2.0 * L / mu
        C1 = math.exp(2.0 * beta / (kappa * lt)) if lt > 0 else math.inf
        C2 = 4.0 * kappa**2 / (math.e**2 * alpha**2)
        return BoundParams(setting, kappa, C1, C2, 0.0, alpha, T, beta, L, mu)
    if setting == "sgc":
        eta0, rho = float(params["eta0"]), float(params["rho"])
        kappa = 2.0 / (mu * eta0)
        C1 = math.exp(2.0 * beta / (kappa * lt)) if lt > 0 else math.inf
        C2 = C1 * 16.0 * rho * L * kappa**2 / (math.e**2 * alpha**2) * lt**2
        T0 = T * max(math.log(rho * eta0) / lt, 0.0) if lt > 0 else 0.0
        return BoundParams(setting, kappa, C1, C2, T0, alpha, T, beta, L, mu)
    raise ValueError(f"unknown setting {setting!r}")


def armijo_rate_bound(L: float, h: float, eta_max: float, mu: float, T: int) -> float:
    """``max{L / (2h(1-h)), 1 / (h eta_max)} / (mu T)`` for Armijo-driven exact PG."""
    return max(L / (2.0 * h * (1.0 - h)), 1.0 / (h * eta_max)) / (mu * T)

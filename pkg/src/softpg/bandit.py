"""Multi-armed bandits under a softmax policy.

Exact objective and gradient, the on-policy importance-sampling gradient,
entropy-regularized counterparts, random instance generation and a plain-text
instance format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .policy_core import log_softmax, row_entropy, softmax, softmax_jacobian_apply

FAMILIES = ("bernoulli", "gaussian", "beta", "deterministic")

# Problem constants for softmax bandits with rewards in [0, 1].
L_SMOOTH = 2.5
L1_SMOOTH = 3.0
GRAD_BOUND = math.sqrt(2.0)


def _clipped_normal_mean(loc: float, std: float) -> float:
    # E[clip(X, 0, 1)] for X ~ N(loc, std^2)
    a = -loc / std
    b = (1.0 - loc) / std
    pdf = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return loc * (ndtr(b) - ndtr(a)) + std * (pdf(a) - pdf(b)) + (1.0 - ndtr(b))


def _gaussian_location(mean: float, std: float) -> float:
    """Pre-clip location whose clipped draws have the requested mean."""
    lo, hi = -1.0 - 10 * std, 2.0 + 10 * std
    return brentq(lambda m: _clipped_normal_mean(m, std) - mean, lo, hi, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True, eq=False)
class BanditSpec:
    """A stochastic bandit with fixed mean rewards and support ``[0, 1]``.

    Gaussian arms are clipped to ``[0, 1]`` after shifting their location so
    the clipped mean equals ``means[a]``. Beta arms use ``Beta(k m, k (1-m))``
    with concentration ``k``. Arms with mean exactly 0 or 1 are deterministic.
    """

    means: np.ndarray
    family: str = "bernoulli"
    std: float = 0.1
    concentration: float = 5.0
    seed: int | None = None
    _loc: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = np.array(self.means, dtype=float)
        r.setflags(write=False)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("a bandit needs at least two arms")
        if np.any(r < 0) or np.any(r > 1) or not np.all(np.isfinite(r)):
            raise ValueError("mean rewards must lie in [0, 1]")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown reward family {self.family!r}; expected one of {FAMILIES}")
        if self.std <= 0 or self.concentration <= 0:
            raise ValueError("std and concentration must be positive")
        object.__setattr__(self, "means", r)
        loc = r.copy()
        if self.family == "gaussian":
            for a, m in enumerate(r):
                if 0.0 < m < 1.0:
                    loc[a] = _gaussian_location(m, self.std)
        object.__setattr__(self, "_loc", loc)

    @property
    def A(self) -> int:
        return self.means.size

    @property
    def a_star(self) -> int:
        return int(np.argmax(self.means))

    @property
    def f_star(self) -> float:
        return float(self.means.max())

    @property
    def reward_gap(self) -> float:
        """Smallest gap between any two arms."""
        r = np.sort(self.means)
        return float(np.min(np.diff(r)))

    @property
    def opt_gap(self) -> float:
        """Gap between the best arm and the runner-up."""
        r = np.sort(self.means)
        return float(r[-1] - r[-2])

    max_gap = opt_gap

    def sample_rewards(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw an ``(n, A)`` table of rewards, one column per arm."""
        r = self.means
        A = r.size
        if self.family == "deterministic":
            return np.broadcast_to(r, (n, A)).copy()
        if self.family == "bernoulli":
            return (rng.random((n, A)) < r).astype(float)
        det = (r <= 0.0) | (r >= 1.0)
        if self.family == "gaussian":
            out = np.clip(self._loc + self.std * rng.standard_normal((n, A)), 0.0, 1.0)
        else:
            k = self.concentration
            a = np.where(det, 1.0, k * r)
            b = np.where(det, 1.0, k * (1.0 - r))
            out = rng.beta(a, b, size=(n, A))
        if det.any():
            out[:, det] = r[det]
        return out


# ---------------------------------------------------------------- constants


def entropy_smoothness(tau: float, A: int) -> float:
    """Smoothness of the entropy-regularized bandit objective."""
    return 2.5 + 5.0 * tau * (1.0 + math.log(A))


def entropy_variance(tau: float, A: int) -> float:
    """Variance bound of the entropy-regularized IS gradient."""
    return 8.0 * (1.0 + (tau * math.log(A)) ** 2)


def reversed_lojasiewicz_constant(spec: BanditSpec) -> float:
    return math.sqrt(2.0) / spec.opt_gap


def sgc_constant(spec: BanditSpec) -> float:
    """Strong-growth constant ``8 A^{3/2} / Delta^2``."""
    return 8.0 * spec.A**1.5 / spec.reward_gap**2


def oracle_gap_step(spec: BanditSpec) -> float:
    """Gap-based constant step ``gap^2 / (40 A^{3/2})``.

    ``gap`` is the best-vs-second-best gap, the quantity that sets
    instance difficulty in the easy/hard experiments.
    """
    return spec.opt_gap**2 / (40.0 * spec.A**1.5)


def soft_optimal_policy(spec: BanditSpec, tau: float) -> np.ndarray:
    """Maximizer of the entropy-regularized objective, ``softmax(r / tau)``."""
    if tau <= 0:
        pi = np.zeros(spec.A)
        pi[spec.a_star] = 1.0
        return pi
    return softmax(spec.means / tau)


def soft_optimal_value(spec: BanditSpec, tau: float) -> float:
    """``tau * logsumexp(r / tau)``, the regularized optimum."""
    if tau <= 0:
        return spec.f_star
    z = spec.means / tau
    m = z.max()
    return float(tau * (m + np.log(np.exp(z - m).sum())))


# ---------------------------------------------------------------- objective


def bandit_value(spec: BanditSpec, theta: np.ndarray) -> float:
    return float(np.dot(softmax(theta), spec.means))


def bandit_grad(spec: BanditSpec, theta: np.ndarray) -> np.ndarray:
    pi = softmax(theta)
    return pi * (spec.means - np.dot(pi, spec.means))


def bandit_entropy_value(spec: BanditSpec, theta: np.ndarray, tau: float) -> float:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    pi = softmax(theta)
    return float(np.dot(pi, spec.means) + tau * row_entropy(pi))


def bandit_entropy_grad(spec: BanditSpec, theta: np.ndarray, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    pi = softmax(theta)
    return softmax_jacobian_apply(pi, spec.means - tau * log_softmax(theta))


@dataclass(frozen=True, eq=False)
class BanditGradSample:
    arm: int
    reward: float
    r_hat: np.ndarray
    g_hat: np.ndarray


def _draw(spec, theta, rng, arm):
    pi = softmax(theta)
    u = rng.random()
    rewards = spec.sample_rewards(rng, 1)[0]
    if arm is None:
        arm = int(np.searchsorted(np.cumsum(pi), u, side="right"))
        arm = min(arm, spec.A - 1)
    reward = float(rewards[arm])
    r_hat = np.zeros(spec.A)
    r_hat[arm] = reward / pi[arm]
    return pi, arm, reward, r_hat


def bandit_sample_grad(spec: BanditSpec, theta: np.ndarray, rng: np.random.Generator, arm: int | None = None) -> BanditGradSample:
    """One on-policy IS gradient sample.

    ``arm`` forces the pulled arm (the reward is still drawn) so tests can
    enumerate outcomes.
    """
    pi, arm, reward, r_hat = _draw(spec, theta, rng, arm)
    return BanditGradSample(arm, reward, r_hat, pi * (r_hat - np.dot(pi, r_hat)))


def bandit_entropy_sample_grad(
    spec: BanditSpec, theta: np.ndarray, tau: float, rng: np.random.Generator, arm: int | None = None
) -> BanditGradSample:
    """IS gradient of the entropy-regularized objective: ``H(pi)(r_hat - tau log pi)``."""
    pi, arm, reward, r_hat = _draw(spec, theta, rng, arm)
    g = softmax_jacobian_apply(pi, r_hat - tau * log_softmax(theta))
    return BanditGradSample(arm, reward, r_hat, g)


# ---------------------------------------------------------------- instances


def generate_bandit_instance(A: int, gap: float, family: str, rng: np.random.Generator, **params) -> BanditSpec:
    """Random means in ``[0, 1]`` whose best arm leads the runner-up by exactly ``gap``."""
    if A < 2:
        raise ValueError("need A >= 2")
    if not 0.0 < gap < 1.0:
        raise ValueError(f"gap must lie in (0, 1), got {gap}")
    best = int(rng.integers(A))
    while True:
        r = rng.uniform(0.0, 1.0 - gap, size=A)
        others = np.delete(r, best)
        if np.unique(others).size == others.size:
            break
    r[best] = others.max() + gap
    return BanditSpec(np.minimum(r, 1.0), family=family, **params)


def write_bandit(spec: BanditSpec, path: str | Path) -> None:
    lines = [
        "# softpg bandit instance",
        f"A = {spec.A}",
        f"family = {spec.family}",
        "means = " + " ".join(repr(float(m)) for m in spec.means),
        f"std = {spec.std!r}",
        f"concentration = {spec.concentration!r}",
        f"seed = {'' if spec.seed is None else spec.seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_bandit(path: str | Path) -> BanditSpec:
    kv = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    means = np.array([float(x) for x in kv["means"].split()])
    if int(kv["A"]) != means.size:
        raise ValueError(f"{path}: A={kv['A']} but {means.size} means listed")
    seed = kv.get("seed", "")
    return BanditSpec(
        means,
        family=kv.get("family", "bernoulli"),
        std=float(kv.get("std", 0.1)),
        concentration=float(kv.get("concentration", 5.0)),
        seed=int(seed) if seed else None,
    )

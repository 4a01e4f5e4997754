"""Tabular MDPs under a softmax policy.

Policy evaluation uses dense linear solves (every shipped environment has at
most 25 states), so values, visitation and gradients are exact to machine
precision. Entropy-regularized quantities are computed alongside the plain
ones whenever ``tau > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy_core import log_softmax, row_entropy, softmax, softmax_jacobian_apply


@dataclass(frozen=True, eq=False)
class MdpSpec:
    """Finite discounted MDP ``(S, A, P, r, rho, gamma)``.

    ``P[s, a, s']`` is the transition kernel and ``r[s, a]`` the expected
    reward. ``layout`` is free text describing the geometry.
    """

    P: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    gamma: float
    name: str = "mdp"
    layout: str = ""

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        r = np.array(self.r, dtype=float)
        rho = np.array(self.rho, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or r.shape != P.shape[:2] or rho.shape != (P.shape[0],):
            raise ValueError(f"inconsistent shapes P{P.shape} r{r.shape} rho{rho.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("each P[s, a, :] must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise ValueError("rho must be a probability vector")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        for arr in (P, r, rho):
            arr.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "rho", rho)

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]

    @property
    def reward_range(self) -> float:
        return float(self.r.max() - self.r.min())

    @property
    def unit_rewards(self) -> bool:
        return bool(self.r.min() >= 0.0 and self.r.max() <= 1.0)


@dataclass(frozen=True, eq=False)
class EvalCache:
    """Exact quantities of one policy on one MDP.

    The ``*_tau`` fields hold the entropy-regularized counterparts and equal
    the plain ones when ``tau == 0``.
    """

    tau: float
    pi: np.ndarray
    logpi: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    adv: np.ndarray
    d: np.ndarray
    f: float
    grad: np.ndarray
    V_tau: np.ndarray
    Q_tau: np.ndarray
    adv_tau: np.ndarray
    f_tau: float
    grad_tau: np.ndarray

    def objective(self) -> float:
        return self.f_tau

    def objective_grad(self) -> np.ndarray:
        return self.grad_tau


def _check_theta(spec: MdpSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.S, spec.A):
        raise ValueError(f"theta must have shape {(spec.S, spec.A)}, got {theta.shape}")
    return theta


def policy_matrices(spec: MdpSpec, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """State-to-state kernel and expected reward under ``pi``."""
    P_pi = np.einsum("sa,sat->st", pi, spec.P)
    r_pi = np.sum(pi * spec.r, axis=1)
    return P_pi, r_pi


def visitation(spec: MdpSpec, P_pi: np.ndarray) -> np.ndarray:
    """Normalized discounted state visitation from ``rho``."""
    S = spec.S
    d = (1.0 - spec.gamma) * np.linalg.solve((np.eye(S) - spec.gamma * P_pi).T, spec.rho)
    return np.maximum(d, 0.0)


def evaluate(spec: MdpSpec, theta: np.ndarray, tau: float = 0.0) -> EvalCache:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    theta = _check_theta(spec, theta)
    g = spec.gamma
    pi = softmax(theta)
    logpi = log_softmax(theta)
    P_pi, r_pi = policy_matrices(spec, pi)
    M = np.eye(spec.S) - g * P_pi
    V = np.linalg.solve(M, r_pi)
    Q = spec.r + g * spec.P @ V
    adv = Q - V[:, None]
    d = visitation(spec, P_pi)
    grad = d[:, None] * pi * adv / (1.0 - g)
    f = float(spec.rho @ V)
    if tau > 0:
        V_tau = np.linalg.solve(M, r_pi + tau * row_entropy(pi))
        Q_tau = spec.r + g * spec.P @ V_tau
        adv_tau = Q_tau - tau * logpi - V_tau[:, None]
        grad_tau = d[:, None] * pi * adv_tau / (1.0 - g)
        f_tau = float(spec.rho @ V_tau)
    else:
        V_tau, Q_tau, adv_tau, grad_tau, f_tau = V, Q, adv, grad, f
    return EvalCache(tau, pi, logpi, V, Q, adv, d, f, grad, V_tau, Q_tau, adv_tau, f_tau, grad_tau)


def value(spec: MdpSpec, theta: np.ndarray, tau: float = 0.0) -> float:
    """``V(rho)`` (or its regularized version) without the gradient work."""
    theta = _check_theta(spec, theta)
    pi = softmax(theta)
    P_pi, r_pi = policy_matrices(spec, pi)
    if tau > 0:
        r_pi = r_pi + tau * row_entropy(pi)
    V = np.linalg.solve(np.eye(spec.S) - spec.gamma * P_pi, r_pi)
    return float(spec.rho @ V)


def discounted_entropy(spec: MdpSpec, theta: np.ndarray) -> float:
    """``(1 / (1 - gamma)) sum_s d(s) H(pi(.|s))``."""
    pi = softmax(_check_theta(spec, theta))
    P_pi, _ = policy_matrices(spec, pi)
    d = visitation(spec, P_pi)
    return float(d @ row_entropy(pi) / (1.0 - spec.gamma))


# ---------------------------------------------------------------- optimum


@dataclass(frozen=True, eq=False)
class OptimalSolution:
    pi: np.ndarray
    f: float
    V: np.ndarray
    Q: np.ndarray


def _soft_max_rows(Q: np.ndarray, tau: float) -> np.ndarray:
    m = Q.max(axis=1)
    return m + tau * np.log(np.exp((Q - m[:, None]) / tau).sum(axis=1))


def optimal_values(spec: MdpSpec, tau: float = 0.0, tol: float = 1e-12, max_iter: int = 200_000) -> OptimalSolution:
    """Optimal (``tau == 0``) or entropy-regularized optimal policy and value.

    Plain case: value iteration, then policy-iteration polishing with exact
    solves so the greedy policy's value is exact. Regularized case: soft value
    iteration with a log-sum-exp backup and ``pi = softmax(Q / tau)``.
    """
    g = spec.gamma
    V = np.zeros(spec.S)
    for _ in range(max_iter):
        Q = spec.r + g * spec.P @ V
        V_new = Q.max(axis=1) if tau == 0 else _soft_max_rows(Q, tau)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta <= tol * (1.0 - g):
            break
    Q = spec.r + g * spec.P @ V
    if tau > 0:
        pi = softmax(Q / tau)
        return OptimalSolution(pi, float(spec.rho @ V), V, Q)
    actions = Q.argmax(axis=1)
    for _ in range(100):
        pi = np.zeros((spec.S, spec.A))
        pi[np.arange(spec.S), actions] = 1.0
        P_pi, r_pi = policy_matrices(spec, pi)
        V = np.linalg.solve(np.eye(spec.S) - g * P_pi, r_pi)
        Q = spec.r + g * spec.P @ V
        best = Q.argmax(axis=1)
        # switch only on strict improvement so ties cannot cycle
        improve = Q[np.arange(spec.S), best] > Q[np.arange(spec.S), actions] + 1e-13 * max(1.0, np.abs(V).max())
        if not improve.any():
            break
        actions = np.where(improve, best, actions)
    return OptimalSolution(pi, float(spec.rho @ V), V, Q)


# ---------------------------------------------------------------- constants


def smoothness(spec: MdpSpec, tau: float = 0.0) -> float:
    """Smoothness constant ``(8 + tau (4 + 8 log A)) / (1 - gamma)^3``."""
    return (8.0 + tau * (4.0 + 8.0 * math.log(spec.A))) / (1.0 - spec.gamma) ** 3


def grad_sample_bound(spec: MdpSpec) -> float:
    return math.sqrt(2.0 * spec.S) / (1.0 - spec.gamma) ** 2


def optimal_action_gap(spec: MdpSpec, opt: OptimalSolution | None = None) -> float:
    """``min_s [Q*(s, a*) - max_{a != a*} Q*(s, a)]``."""
    opt = optimal_values(spec) if opt is None else opt
    Qs = np.sort(opt.Q, axis=1)
    return float(np.min(Qs[:, -1] - Qs[:, -2]))


def reversed_lojasiewicz_constant(spec: MdpSpec, opt: OptimalSolution | None = None) -> float:
    return math.sqrt(2.0) / ((1.0 - spec.gamma) * optimal_action_gap(spec, opt))


def lojasiewicz_constant(spec: MdpSpec, cache: EvalCache, opt: OptimalSolution) -> float:
    """``min_s pi(a*(s)|s) / (sqrt(S) ||d^{pi*} / d^{pi}||_inf)``."""
    a_star = opt.pi.argmax(axis=1)
    P_star, _ = policy_matrices(spec, opt.pi)
    d_star = visitation(spec, P_star)
    ratio = np.max(d_star / cache.d)
    return float(np.min(cache.pi[np.arange(spec.S), a_star]) / (math.sqrt(spec.S) * ratio))


def non_uniform_smoothness(spec: MdpSpec, concentrability: float) -> float:
    """``[3 + (2 C - (1 - gamma)) / ((1 - gamma) gamma)] sqrt(S)``."""
    g = spec.gamma
    return (3.0 + (2.0 * concentrability - (1.0 - g)) / ((1.0 - g) * g)) * math.sqrt(spec.S)


def sgc_constant(spec: MdpSpec, cache: EvalCache) -> float:
    """``4 A^{3/2} S^{1/2} / ((1 - gamma)^4 Delta^2)`` with ``Delta`` from ``Q^pi``."""
    Qs = np.sort(cache.Q, axis=1)
    delta = float(np.min(np.diff(Qs, axis=1)))
    if delta <= 0:
        return math.inf
    return 4.0 * spec.A**1.5 * spec.S**0.5 / ((1.0 - spec.gamma) ** 4 * delta**2)


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True, eq=False)
class MdpGradSample:
    actions: np.ndarray
    Q_hat: np.ndarray
    g_hat: np.ndarray


def sample_actions(pi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(pi.shape[0])
    cdf = np.cumsum(pi, axis=1)
    a = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(a, pi.shape[1] - 1)


def mdp_sample_grad(
    spec: MdpSpec,
    theta: np.ndarray,
    cache: EvalCache,
    tau: float,
    rng: np.random.Generator,
    actions: np.ndarray | None = None,
) -> MdpGradSample:
    """Parallel importance-sampled gradient: one action drawn in every state.

    ``actions`` forces the per-state draws so tests can enumerate them.
    """
    pi = cache.pi
    if actions is None:
        actions = sample_actions(pi, rng)
    actions = np.asarray(actions, dtype=int)
    rows = np.arange(spec.S)
    Qsrc = cache.Q_tau if tau > 0 else cache.Q
    Q_hat = np.zeros((spec.S, spec.A))
    Q_hat[rows, actions] = Qsrc[rows, actions] / pi[rows, actions]
    scale = cache.d[:, None] / (1.0 - spec.gamma)
    g = scale * softmax_jacobian_apply(pi, Q_hat - tau * cache.logpi if tau > 0 else Q_hat)
    return MdpGradSample(actions, Q_hat, g)


# ---------------------------------------------------------------- environments


UP, RIGHT, DOWN, LEFT = range(4)
_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}


def make_cliff_world() -> MdpSpec:
    """3 x 7 cliff walk, 21 states, 4 actions, gamma = 0.9.

    Start at the bottom-left, goal at the bottom-right, cliff on the five
    bottom cells between them. Stepping onto the cliff pays -100 and returns
    the agent to the start; entering the goal pays +1 and the goal absorbs
    with zero reward. Cliff cells (reachable only through rho) send every
    action to the start with zero reward.
    """
    rows, cols = 3, 7
    S, A = rows * cols, 4
    idx = lambda i, j: i * cols + j
    start, goal = idx(2, 0), idx(2, 6)
    cliff = {idx(2, j) for j in range(1, 6)}
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    for i in range(rows):
        for j in range(cols):
            s = idx(i, j)
            for a, (di, dj) in _MOVES.items():
                if s == goal:
                    P[s, a, s] = 1.0
                    continue
                if s in cliff:
                    P[s, a, start] = 1.0
                    continue
                ni = min(max(i + di, 0), rows - 1)
                nj = min(max(j + dj, 0), cols - 1)
                ns = idx(ni, nj)
                if ns in cliff:
                    P[s, a, start] = 1.0
                    r[s, a] = -100.0
                else:
                    P[s, a, ns] = 1.0
                    r[s, a] = 1.0 if ns == goal else 0.0
    layout = "\n".join(
        "".join("S" if idx(i, j) == start else "G" if idx(i, j) == goal else "C" if idx(i, j) in cliff else "." for j in range(cols))
        for i in range(rows)
    )
    return MdpSpec(P, r, np.full(S, 1.0 / S), 0.9, name="cliff_world", layout=layout)


def make_deep_sea() -> MdpSpec:
    """5 x 5 deep-sea descent, 25 states, 2 actions (left, right), gamma = 0.9.

    Every action moves one row down and one column left or right (clipped at
    the walls). Moving right costs 0.02. Entering the bottom-left cell pays
    +1. The bottom row absorbs with zero reward. The start is the top-left
    cell, so reachable cells form the lower triangle.
    """
    n = 5
    S, A = n * n, 2
    idx = lambda i, j: i * n + j
    treasure = idx(n - 1, 0)
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    for i in range(n):
        for j in range(n):
            s = idx(i, j)
            if i == n - 1:
                P[s, :, s] = 1.0
                continue
            for a, dj in ((0, -1), (1, 1)):
                nj = min(max(j + dj, 0), n - 1)
                ns = idx(i + 1, nj)
                P[s, a, ns] = 1.0
                r[s, a] = (-0.02 if a == 1 else 0.0) + (1.0 if ns == treasure else 0.0)
    layout = "\n".join("".join("T" if idx(i, j) == treasure else "." if j <= i else " " for j in range(n)) for i in range(n))
    return MdpSpec(P, r, np.full(S, 1.0 / S), 0.9, name="deep_sea", layout=layout)


def make_flat_grad() -> MdpSpec:
    """22-state chain, 4 actions, gamma = 22/23.

    Action 0 advances one state, the other three stay put. Entering the last
    state pays +1; the last state absorbs with zero reward.
    """
    S, A = 22, 4
    goal = S - 1
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    for s in range(S):
        if s == goal:
            P[s, :, s] = 1.0
            continue
        P[s, 0, s + 1] = 1.0
        r[s, 0] = 1.0 if s + 1 == goal else 0.0
        P[s, 1:, s] = 1.0
    layout = "0" + "-" * (S - 2) + "G"
    return MdpSpec(P, r, np.full(S, 1.0 / S), 22.0 / 23.0, name="flat_grad", layout=layout)


ENVIRONMENTS = {
    "cliff_world": make_cliff_world,
    "deep_sea": make_deep_sea,
    "flat_grad": make_flat_grad,
}


def random_mdp(S: int, A: int, gamma: float, rng: np.random.Generator) -> MdpSpec:
    """Dense random MDP with rewards in ``[0, 1]`` and a uniform start."""
    P = rng.dirichlet(np.ones(S), size=(S, A))
    r = rng.random((S, A))
    return MdpSpec(P, r, np.full(S, 1.0 / S), gamma, name=f"random_{S}x{A}")


# ---------------------------------------------------------------- files


def write_mdp(spec: MdpSpec, path: str | Path) -> None:
    fmt = lambda xs: " ".join(repr(float(x)) for x in xs)
    lines = ["# softpg mdp instance"]
    lines += [f"#| {row}" for row in spec.layout.splitlines()]
    lines += [
        f"name = {spec.name}",
        f"S = {spec.S}",
        f"A = {spec.A}",
        f"gamma = {spec.gamma!r}",
        f"rho = {fmt(spec.rho)}",
    ]
    lines += [f"r {s} = {fmt(spec.r[s])}" for s in range(spec.S)]
    lines += [f"P {s} {a} = {fmt(spec.P[s, a])}" for s in range(spec.S) for a in range(spec.A)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mdp(path: str | Path) -> MdpSpec:
    text = Path(path).read_text().splitlines()
    layout = "\n".join(l[3:] for l in text if l.startswith("#| "))
    kv, rows, trans = {}, {}, {}
    for line in text:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        parts = key.split()
        nums = [float(x) for x in val.split()] if parts[0] in ("r", "P", "rho") else None
        if parts[0] == "r":
            rows[int(parts[1])] = nums
        elif parts[0] == "P":
            trans[(int(parts[1]), int(parts[2]))] = nums
        elif parts[0] == "rho":
            kv["rho"] = nums
        else:
            kv[parts[0]] = val.strip()
    S, A = int(kv["S"]), int(kv["A"])
    if len(rows) != S or len(trans) != S * A:
        raise ValueError(f"{path}: expected {S} reward rows and {S * A} transition rows")
    r = np.array([rows[s] for s in range(S)])
    P = np.array([[trans[(s, a)] for a in range(A)] for s in range(S)])
    return MdpSpec(P, r, np.array(kv["rho"]), float(kv["gamma"]), name=kv.get("name", "mdp"), layout=layout)


def data_file(name: str) -> Path:
    """Path of the shipped text file for a built-in environment."""
    if name not in ENVIRONMENTS:
        raise KeyError(f"unknown environment {name!r}")
    return Path(__file__).parent / "data" / f"{name}.txt"

"""Softmax policy-gradient loops: exact, line-searched, stochastic and multi-stage.

Every ``run_*`` function returns a :class:`RunTrace`. Row ``t`` of a trace
describes iterate ``theta_t``: its value, suboptimality, exact gradient norm
of the objective being ascended, and the step size applied from it (zero on
the terminal row). Bandit runs with a precomputable step sequence go through
the compiled kernels in :mod:`softpg._kernels`; everything else runs a plain
Python loop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from . import bandit as bd
from . import mdp as md
from .linesearch import AlreadyOptimal, LineSearchConfig, armijo_search, log_armijo_search
from .policy_core import softmax
from .schedules import DoublingSchedule, ExpSchedule, stage_lengths_exact, stochastic_stage
from .verify import lambert_w

TAGS = (
    "PG",
    "PG-LS",
    "PG-Log-LS",
    "GNPG",
    "PG-A",
    "PG-E",
    "PG-E-MS",
    "SPG-ESS",
    "SPG-ESS-D",
    "SPG-O-G",
    "SPG-O-R",
    "SPG-E-ESS",
    "SPG-E-MS",
)
STOCHASTIC_TAGS = frozenset(t for t in TAGS if t.startswith("SPG"))

RECORD_MAX = 10_000
CHUNK = 4096


class DivergedError(RuntimeError):
    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


class _Converged(Exception):
    pass


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class OptimizerConfig:
    """Algorithm tag plus every knob any algorithm reads.

    ``None`` means "use the problem's theoretical default" (for example
    ``eta=None`` gives ``1/L`` for PG and ``eta0=None`` gives ``1/18`` for
    SPG-ESS on bandits).
    """

    algorithm: str
    T: int = 100_000
    eta: float | None = None
    # line search
    h: float = 0.5
    eps: float = 1e-4
    C: float = 1.0
    backtrack: float = 0.5
    max_backtracks: int = 60
    stop_gap: float | None = None
    # exponential schedules
    eta0: float | None = None
    beta: float = 1.0
    T0: int = 5000
    ess_mode: str = "sgc"
    og_scale: float = 1.0 / 12.0
    # entropy regularization
    tau: float = 0.1
    tau0: float = 0.5
    p: float = 1.0
    B1: float = 1.0
    B4: float | None = None
    n_stages: int | None = None
    stage_mode: str = "theory"
    T1: int = 5000
    sigma2: float | None = None
    # GNPG
    gnpg_eta: float | None = None
    concentrability: float | None = None
    # initialization
    init: str = "uniform"
    init_value: float = 12.0
    init_arm: int | None = None
    record_max: int = RECORD_MAX

    def __post_init__(self):
        if self.algorithm not in TAGS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {TAGS}")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.init not in ("uniform", "bad"):
            raise ValueError(f"init must be 'uniform' or 'bad', got {self.init!r}")
        if self.ess_mode not in ("sgc", "variance"):
            raise ValueError("ess_mode must be 'sgc' or 'variance'")
        if self.stage_mode not in ("theory", "doubling"):
            raise ValueError("stage_mode must be 'theory' or 'doubling'")
        positive = {"eps": self.eps, "C": self.C, "beta": self.beta, "T0": self.T0, "T1": self.T1, "og_scale": self.og_scale}
        if self.algorithm in ("PG-E", "SPG-E-ESS"):
            positive["tau"] = self.tau
        if self.algorithm in ("PG-E-MS", "SPG-E-MS"):
            positive.update(tau0=self.tau0, B1=self.B1)
            if self.p < 1:
                raise ValueError("p must be at least 1")
        for name, v in positive.items():
            if not v > 0:
                raise ValueError(f"{self.algorithm}: {name} must be positive, got {v}")
        for name in ("eta", "eta0", "gnpg_eta", "concentrability", "sigma2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive when given, got {v}")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        LineSearchConfig(self.h, self.C / self.eps, self.backtrack, self.max_backtracks)

    def with_(self, **kw) -> "OptimizerConfig":
        return replace(self, **kw)

    @property
    def linesearch(self) -> LineSearchConfig:
        return LineSearchConfig(self.h, self.C / self.eps, self.backtrack, self.max_backtracks)


# ---------------------------------------------------------------- problems


class BanditProblem:
    kind = "bandit"

    def __init__(self, spec: bd.BanditSpec):
        self.spec = spec
        self.A = spec.A
        self.S = 1
        self.L_min = bd.L_SMOOTH
        self.L_max = bd.entropy_smoothness(1.0, self.A)
        self.L1 = bd.L1_SMOOTH
        self.B = bd.GRAD_BOUND
        self.B4 = lambert_w((self.A - 1) / math.e) + math.log(self.A)

    def L(self, tau: float = 0.0) -> float:
        return bd.entropy_smoothness(tau, self.A)

    def sigma2(self, tau: float) -> float:
        return bd.entropy_variance(tau, self.A)

    def f_star(self, tau: float = 0.0) -> float:
        return bd.soft_optimal_value(self.spec, tau)

    def value(self, theta, tau: float = 0.0) -> float:
        return bd.bandit_entropy_value(self.spec, theta, tau)

    def evaluate(self, theta, tau: float = 0.0):
        """``(objective, objective gradient, unregularized value)``."""
        pi = softmax(theta)
        f = float(pi @ self.spec.means)
        if tau > 0:
            return bd.bandit_entropy_value(self.spec, theta, tau), bd.bandit_entropy_grad(self.spec, theta, tau), f
        return f, pi * (self.spec.means - f), f

    def adv_weighted(self, theta) -> np.ndarray:
        pi = softmax(theta)
        return (pi * (self.spec.means - pi @ self.spec.means))[None, :]

    def pi_star_mass(self, theta) -> float:
        return float(softmax(theta)[self.spec.a_star])

    def initial_theta(self, cfg: OptimizerConfig) -> np.ndarray:
        theta = np.zeros(self.A)
        if cfg.init == "bad":
            arm = int(np.argmin(self.spec.means)) if cfg.init_arm is None else cfg.init_arm
            theta[arm] = cfg.init_value
        return theta

    def gnpg_step(self, cfg: OptimizerConfig) -> float:
        return 1.0 / 6.0 if cfg.gnpg_eta is None else cfg.gnpg_eta


class MdpProblem:
    kind = "mdp"

    def __init__(self, spec: md.MdpSpec):
        self.spec = spec
        self.A = spec.A
        self.S = spec.S
        self.L_min = md.smoothness(spec, 0.0)
        self.L_max = md.smoothness(spec, 1.0)
        self.B = md.grad_sample_bound(spec)
        self.B4 = 2.0 * math.log(self.A) / (1.0 - spec.gamma)
        self._opt: dict[float, md.OptimalSolution] = {}

    def optimum(self, tau: float = 0.0) -> md.OptimalSolution:
        if tau not in self._opt:
            self._opt[tau] = md.optimal_values(self.spec, tau)
        return self._opt[tau]

    def L(self, tau: float = 0.0) -> float:
        return md.smoothness(self.spec, tau)

    def L1(self, concentrability: float | None = None) -> float:
        c = 1.0 / self.S if concentrability is None else concentrability
        return md.non_uniform_smoothness(self.spec, c)

    def sigma2(self, tau: float) -> float:
        raise ValueError("no variance bound is available for the MDP estimator; set sigma2 in the config")

    def f_star(self, tau: float = 0.0) -> float:
        return self.optimum(tau).f

    def value(self, theta, tau: float = 0.0) -> float:
        return md.value(self.spec, theta, tau)

    def evaluate(self, theta, tau: float = 0.0):
        c = md.evaluate(self.spec, theta, tau)
        return c.f_tau, c.grad_tau, c.f

    def adv_weighted(self, theta) -> np.ndarray:
        c = md.evaluate(self.spec, theta)
        return c.pi * c.adv

    def pi_star_mass(self, theta) -> float:
        a_star = self.optimum().pi.argmax(axis=1)
        return float(np.min(softmax(theta)[np.arange(self.S), a_star]))

    def initial_theta(self, cfg: OptimizerConfig) -> np.ndarray:
        theta = np.zeros((self.S, self.A))
        if cfg.init == "bad":
            theta[:, 0 if cfg.init_arm is None else cfg.init_arm] = cfg.init_value
        return theta

    def gnpg_step(self, cfg: OptimizerConfig) -> float:
        if cfg.gnpg_eta is not None:
            return cfg.gnpg_eta
        g = self.spec.gamma
        c = 1.0 / self.S if cfg.concentrability is None else cfg.concentrability
        return (1.0 - g) * g / (6.0 * (1.0 - g) + 4.0 * (c - (1.0 - g)))


def make_problem(env):
    if isinstance(env, (BanditProblem, MdpProblem)):
        return env
    if isinstance(env, bd.BanditSpec):
        return BanditProblem(env)
    if isinstance(env, md.MdpSpec):
        return MdpProblem(env)
    raise TypeError(f"unsupported environment {type(env).__name__}")


# ---------------------------------------------------------------- traces


TRACE_FIELDS = ("iter", "stage", "tau", "eta", "f", "subopt", "grad_norm")


@dataclass
class StageRecord:
    stage: int
    tau: float
    eta: float
    length: int
    start: int
    mu: float | None = None


@dataclass
class RunTrace:
    algorithm: str
    seed: int | None
    columns: dict
    f_obj: np.ndarray
    status: str = "ok"
    stages: list = field(default_factory=list)
    final_theta: np.ndarray | None = None
    min_pi_star: float | None = None
    wall_time: float = 0.0
    f_star: float = 0.0

    def __len__(self) -> int:
        return len(self.columns["iter"])

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    @property
    def final_subopt(self) -> float:
        return float(self.columns["subopt"][-1])

    @property
    def initial_subopt(self) -> float:
        return float(self.columns["subopt"][0])

    def iterations_to(self, target: float) -> int | None:
        """First recorded iteration with suboptimality at or below ``target``."""
        hit = np.flatnonzero(self.columns["subopt"] <= target)
        return int(self.columns["iter"][hit[0]]) if hit.size else None


class _Recorder:
    def __init__(self, T: int, f_star: float, record_max: int, boundaries=()):
        self.T = T
        self.every = 1 if T <= record_max else math.ceil(T / record_max)
        self.boundaries = set(int(b) for b in boundaries)
        self.f_star = f_star
        self.parts: dict[str, list] = {k: [] for k in TRACE_FIELDS + ("f_obj",)}

    def mark(self, t: int):
        self.boundaries.add(int(t))

    def keep(self, t: np.ndarray) -> np.ndarray:
        mask = (t % self.every == 0) | (t == self.T)
        if self.boundaries:
            mask |= np.isin(t, np.fromiter(self.boundaries, dtype=np.int64))
        return mask

    def add(self, t, stage, tau, eta, f, f_obj, gnorm):
        t = np.atleast_1d(np.asarray(t, dtype=np.int64))
        m = self.keep(t)
        if not m.any():
            return
        vals = dict(iter=t, stage=stage, tau=tau, eta=eta, f=f, f_obj=f_obj, grad_norm=gnorm)
        for k, v in vals.items():
            v = np.broadcast_to(np.asarray(v), t.shape)
            self.parts[k].append(np.array(v[m]))
        self.parts["subopt"].append(self.f_star - np.broadcast_to(np.asarray(f, dtype=float), t.shape)[m])

    def build(self, algorithm, seed, **meta) -> RunTrace:
        cols = {}
        for k in TRACE_FIELDS + ("f_obj",):
            cols[k] = np.concatenate(self.parts[k]) if self.parts[k] else np.zeros(0)
        cols["iter"] = cols["iter"].astype(np.int64)
        cols["stage"] = cols["stage"].astype(np.int64)
        f_obj = cols.pop("f_obj")
        return RunTrace(algorithm, seed, cols, f_obj, f_star=self.f_star, **meta)


# ---------------------------------------------------------------- step plans


@dataclass
class _Plan:
    """Per-iteration ``(eta, tau, stage)``; ``stages`` drives the ledger."""

    kind: str
    eta: float = 0.0
    tau: float = 0.0
    sched: object = None
    stages: list = field(default_factory=list)
    stage_exp: bool = False
    beta: float = 1.0

    def window(self, t0: int, n: int):
        t = np.arange(t0, t0 + n, dtype=np.int64)
        if self.kind == "constant":
            return np.full(n, self.eta), np.full(n, self.tau), np.zeros(n, dtype=np.int64)
        if self.kind == "exp":
            return self.sched.steps(t + 1), np.full(n, self.tau), np.zeros(n, dtype=np.int64)
        if self.kind == "doubling":
            k = (np.frexp((t // self.sched.T0 + 1).astype(float))[1] - 1).astype(np.int64)
            return self.sched.steps(t), np.full(n, self.tau), k
        starts = np.array([s.start for s in self.stages])
        idx = np.searchsorted(starts, t, side="right") - 1
        taus = np.array([s.tau for s in self.stages])[idx]
        eta0 = np.array([s.eta for s in self.stages])[idx]
        if not self.stage_exp:
            return eta0, taus, idx + 1
        lengths = np.array([s.length for s in self.stages], dtype=float)[idx]
        local = t - starts[idx] + 1
        return eta0 * np.exp(local * np.log(self.beta / lengths) / lengths), taus, idx + 1

    def tau_at(self, t: int) -> float:
        return float(self.window(t, 1)[1][0])

    def stage_at(self, t: int) -> int:
        return int(self.window(t, 1)[2][0])

    def boundaries(self) -> list[int]:
        return [s.start for s in self.stages[1:]]


# ---------------------------------------------------------------- drivers


def _check_finite(theta, rec, cfg, seed, t0):
    if not np.all(np.isfinite(theta)):
        trace = rec.build(cfg.algorithm, seed, status="diverged")
        raise DivergedError(f"{cfg.algorithm}: non-finite logits near iteration {t0}", trace)


def _finish(rec, problem, theta, T, tau, stage, cfg, seed, start, **meta) -> RunTrace:
    fobj, grad, f = problem.evaluate(theta, tau)
    rec.add(T, stage, tau, 0.0, f, fobj, float(np.linalg.norm(grad)))
    meta.setdefault("status", "ok")
    return rec.build(cfg.algorithm, seed, final_theta=np.array(theta), wall_time=time.perf_counter() - start, **meta)


def _bandit_kernel_run(problem: BanditProblem, cfg, plan: _Plan, rng=None, og_scale=0.0, seed=None) -> RunTrace:
    start = time.perf_counter()
    spec = problem.spec
    T = cfg.T
    theta = problem.initial_theta(cfg).astype(float)
    rec = _Recorder(T, spec.f_star, cfg.record_max, plan.boundaries())
    if plan.kind == "doubling":
        for b in plan.sched.boundaries(T):
            rec.mark(b)
    r = np.ascontiguousarray(spec.means, dtype=float)
    for t0 in range(0, T, CHUNK):
        n = min(CHUNK, T - t0)
        etas, taus, stages = plan.window(t0, n)
        etas = np.ascontiguousarray(etas, dtype=float)
        taus = np.ascontiguousarray(taus, dtype=float)
        f_out, fobj_out, g_out = np.empty(n), np.empty(n), np.empty(n)
        if rng is None:
            _kernels.exact_steps(theta, r, etas, taus, f_out, fobj_out, g_out)
            eta_out = etas
        else:
            rewards = np.ascontiguousarray(spec.sample_rewards(rng, n))
            u = rng.random(n)
            eta_out = np.empty(n)
            _kernels.stoch_steps(theta, r, rewards, u, etas, taus, float(og_scale), f_out, fobj_out, g_out, eta_out)
        rec.add(np.arange(t0, t0 + n), stages, taus, eta_out, f_out, fobj_out, g_out)
        _check_finite(theta, rec, cfg, seed, t0)
    last = plan.window(T - 1, 1)
    return _finish(rec, problem, theta, T, float(last[1][0]), int(last[2][0]), cfg, seed, start, stages=plan.stages)


def _python_loop(problem, cfg, plan: _Plan, rule, seed=None, rng=None, sampler=None) -> RunTrace:
    """Generic loop; ``rule(theta, grad, fobj, tau) -> (eta, direction)``."""
    start = time.perf_counter()
    T = cfg.T
    theta = problem.initial_theta(cfg).astype(float)
    f_star = problem.f_star(0.0)
    rec = _Recorder(T, f_star, cfg.record_max, plan.boundaries())
    if plan.kind == "doubling":
        for b in plan.sched.boundaries(T):
            rec.mark(b)
    etas, taus, stages = plan.window(0, T)
    min_star = problem.pi_star_mass(theta)
    status = "ok"
    t_end = T
    for t in range(T):
        tau = float(taus[t])
        fobj, grad, f = problem.evaluate(theta, tau)
        try:
            eta, direction = rule(t, theta, grad, fobj, f, tau, float(etas[t]))
        except _Converged:
            status, t_end = "converged", t
            break
        if sampler is not None:
            direction = sampler(theta, tau, rng)
        rec.add(t, stages[t], tau, eta, f, fobj, float(np.linalg.norm(grad)))
        theta = theta + eta * direction
        _check_finite(theta, rec, cfg, seed, t)
        min_star = min(min_star, problem.pi_star_mass(theta))
    rec.T = t_end
    tau_end = float(taus[min(t_end, T - 1)])
    stage_end = int(stages[min(t_end, T - 1)])
    return _finish(rec, problem, theta, t_end, tau_end, stage_end, cfg, seed, start,
                   status=status, min_pi_star=min_star, stages=plan.stages)


def _constant_rule(t, theta, grad, fobj, f, tau, eta):
    return eta, grad


# ---------------------------------------------------------------- exact PG


def run_exact_pg(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    """Constant-step exact PG; ``PG-E`` adds entropy with ``eta = 1/L^tau``."""
    problem = make_problem(env)
    tau = cfg.tau if cfg.algorithm == "PG-E" else 0.0
    eta = 1.0 / problem.L(tau) if cfg.eta is None else cfg.eta
    plan = _Plan("constant", eta=eta, tau=tau)
    if problem.kind == "bandit":
        return _bandit_kernel_run(problem, cfg, plan, seed=seed)
    return _python_loop(problem, cfg, plan, _constant_rule, seed=seed)


def run_pg_linesearch(env, cfg: OptimizerConfig, variant: str = "armijo", seed: int | None = None) -> RunTrace:
    """Exact PG with backtracking Armijo (``armijo``) or log-loss Armijo (``log_armijo``)."""
    if variant not in ("armijo", "log_armijo"):
        raise ValueError(f"unknown line-search variant {variant!r}")
    problem = make_problem(env)
    ls = cfg.linesearch
    f_star = problem.f_star(0.0)
    # Armijo runs to T unless a stop gap is given; the log-loss search needs f* - f > 0
    if variant == "armijo":
        stop_gap = -math.inf if cfg.stop_gap is None else cfg.stop_gap
    else:
        stop_gap = cfg.eps if cfg.stop_gap is None else cfg.stop_gap
    obj = lambda th: problem.value(th, 0.0)

    def rule(t, theta, grad, fobj, f, tau, _):
        if f_star - fobj <= stop_gap:
            raise _Converged
        if variant == "armijo":
            return armijo_search(obj, theta, grad, ls, f_theta=fobj), grad
        try:
            return log_armijo_search(obj, f_star, theta, grad, ls, f_theta=fobj), grad
        except AlreadyOptimal:
            raise _Converged from None

    return _python_loop(problem, cfg, _Plan("constant"), rule, seed=seed)


def run_gnpg(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    """Normalized-gradient ascent ``theta += eta * grad / ||grad||``."""
    problem = make_problem(env)
    eta = problem.gnpg_step(cfg)

    def rule(t, theta, grad, fobj, f, tau, _):
        n = float(np.linalg.norm(grad))
        if n < 1e-14:
            raise _Converged
        return eta, grad / n

    return _python_loop(problem, cfg, _Plan("constant"), rule, seed=seed)


def pg_a_step(weighted_adv: np.ndarray, scale: float = 1.0) -> float | None:
    """``1 / min_{s in S_hat} max_a |pi A|``; ``None`` when ``S_hat`` is empty.

    ``S_hat`` holds the states where some action has ``pi(a|s) A(s,a)``
    above ``1e-12 * scale`` (rounding noise would otherwise admit states
    whose advantages are exactly zero in exact arithmetic).
    """
    tol = 1e-12 * scale
    active = (weighted_adv > tol).any(axis=1)
    if not active.any():
        return None
    return 1.0 / float(np.min(np.abs(weighted_adv[active]).max(axis=1)))


def run_pg_a(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    problem = make_problem(env)
    if problem.kind == "mdp":
        spec = problem.spec
        scale = max(1.0, float(np.abs(spec.r).max()) / (1.0 - spec.gamma))
    else:
        scale = 1.0

    def rule(t, theta, grad, fobj, f, tau, _):
        eta = pg_a_step(problem.adv_weighted(theta), scale)
        if eta is None:
            raise _Converged
        return eta, grad

    return _python_loop(problem, cfg, _Plan("constant"), rule, seed=seed)


# ---------------------------------------------------------------- stochastic PG


def _mdp_sampler(problem: MdpProblem):
    def sample(theta, tau, rng):
        cache = md.evaluate(problem.spec, theta, tau)
        return md.mdp_sample_grad(problem.spec, theta, cache, tau, rng).g_hat

    return sample


def _stochastic(problem, cfg, plan, seed, og_scale=0.0) -> RunTrace:
    rng = np.random.default_rng(seed)
    if problem.kind == "bandit":
        return _bandit_kernel_run(problem, cfg, plan, rng=rng, og_scale=og_scale, seed=seed)
    if og_scale > 0:
        def rule(t, theta, grad, fobj, f, tau, _):
            _, g0, _ = problem.evaluate(theta, 0.0)
            return og_scale * float(np.linalg.norm(g0)), None
    else:
        def rule(t, theta, grad, fobj, f, tau, eta):
            return eta, None
    return _python_loop(problem, cfg, plan, rule, seed=seed, rng=rng, sampler=_mdp_sampler(problem))


def default_eta0(problem, cfg: OptimizerConfig, tau: float = 0.0) -> float:
    if cfg.eta0 is not None:
        return cfg.eta0
    if tau > 0:
        return 1.0 / problem.L(tau)
    if problem.kind == "bandit" and cfg.ess_mode == "sgc":
        return 1.0 / 18.0
    return 1.0 / problem.L(0.0)


def run_spg_ess(env, cfg: OptimizerConfig, doubling: bool = False, seed: int | None = None) -> RunTrace:
    """Stochastic PG with exponentially decreasing (optionally restarted) steps.

    ``SPG-E-ESS`` ascends the entropy-regularized objective with fixed ``tau``.
    In ``sgc`` mode the initial step must satisfy ``eta0 < 1 / (L1^2 B)``.
    """
    problem = make_problem(env)
    tau = cfg.tau if cfg.algorithm == "SPG-E-ESS" else 0.0
    eta0 = default_eta0(problem, cfg, tau)
    if cfg.ess_mode == "sgc" and tau == 0.0:
        L1 = problem.L1 if problem.kind == "bandit" else problem.L1(cfg.concentrability)
        cap = 1.0 / (L1**2 * problem.B)
        if not eta0 < cap:
            raise ValueError(f"eta0={eta0} violates eta0 < 1/(L1^2 B) = {cap}")
    if doubling:
        plan = _Plan("doubling", tau=tau, sched=DoublingSchedule(eta0, cfg.beta, cfg.T0))
    else:
        plan = _Plan("exp", tau=tau, sched=ExpSchedule(eta0, cfg.beta, cfg.T))
    return _stochastic(problem, cfg, plan, seed)


def run_spg_oracle(env, cfg: OptimizerConfig, variant: str = "O_G", seed: int | None = None) -> RunTrace:
    """Oracle-informed steps: ``||grad f|| / 12`` (O_G) or ``Delta^2 / (40 A^{3/2})`` (O_R)."""
    problem = make_problem(env)
    if variant == "O_G":
        return _stochastic(problem, cfg, _Plan("constant"), seed, og_scale=cfg.og_scale)
    if variant == "O_R":
        if problem.kind != "bandit":
            raise ValueError("the reward-gap oracle step is defined for bandits only")
        return _stochastic(problem, cfg, _Plan("constant", eta=bd.oracle_gap_step(problem.spec)), seed)
    raise ValueError(f"unknown oracle variant {variant!r}")


# ---------------------------------------------------------------- multi-stage


def exact_stage_plan(problem, cfg: OptimizerConfig) -> list[StageRecord]:
    """Stages ``tau_i = tau_{i-1} / 2``, ``eta_i = 1/L^{tau_i}`` and exact-setting horizons.

    Stages are generated until they cover ``cfg.T`` iterations or
    ``cfg.n_stages`` stages exist; the last stage absorbs any remainder.
    """
    B4 = problem.B4 if cfg.B4 is None else cfg.B4
    stages, start, tau_prev, i = [], 0, cfg.tau0, 1
    while start < cfg.T and (cfg.n_stages is None or i <= cfg.n_stages):
        tau = tau_prev / 2.0
        eta = 1.0 / problem.L(tau)
        mu = tau**cfg.p * cfg.B1
        length = stage_lengths_exact(tau_prev, tau, eta, mu, B4)
        stages.append(StageRecord(i, tau, eta, length, start, mu))
        start += length
        tau_prev, i = tau, i + 1
    return stages


def stochastic_stage_plan(problem, cfg: OptimizerConfig) -> list[StageRecord]:
    """Stages of the stochastic multi-stage method.

    ``stage_mode == "doubling"`` uses ``T_i = T1 * 2**(i-1)``; otherwise the
    theoretical horizon from :func:`softpg.schedules.stochastic_stage`.
    """
    B4 = problem.B4 if cfg.B4 is None else cfg.B4
    stages, start, tau_prev, i = [], 0, cfg.tau0, 1
    while start < cfg.T and (cfg.n_stages is None or i <= cfg.n_stages):
        tau = tau_prev / 2.0
        eta = 1.0 / problem.L(tau)
        mu = tau**cfg.p * cfg.B1
        if cfg.stage_mode == "doubling":
            length = cfg.T1 << (i - 1)
        else:
            sigma2 = problem.sigma2(tau) if cfg.sigma2 is None else cfg.sigma2
            length = stochastic_stage(tau_prev, tau, problem.L_min, problem.L_max, mu, cfg.B1, B4, sigma2, cfg.beta).T
        stages.append(StageRecord(i, tau, eta, length, start, mu))
        start += length
        tau_prev, i = tau, i + 1
    return stages


def run_multistage_exact(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    """Exact PG on the entropy-regularized objective with ``tau`` halved per stage."""
    problem = make_problem(env)
    plan = _Plan("stages", stages=exact_stage_plan(problem, cfg))
    if problem.kind == "bandit":
        return _bandit_kernel_run(problem, cfg, plan, seed=seed)
    return _python_loop(problem, cfg, plan, _constant_rule, seed=seed)


def run_multistage_stochastic(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    """Stochastic multi-stage method: per-stage exponential steps from ``1/L^{tau_i}``."""
    problem = make_problem(env)
    plan = _Plan("stages", stages=stochastic_stage_plan(problem, cfg), stage_exp=True, beta=cfg.beta)
    return _stochastic(problem, cfg, plan, seed)


# ---------------------------------------------------------------- dispatch


def run(env, cfg: OptimizerConfig, seed: int | None = None) -> RunTrace:
    """Run ``cfg.algorithm`` on ``env`` (a spec or problem)."""
    a = cfg.algorithm
    if a in ("PG", "PG-E"):
        return run_exact_pg(env, cfg, seed=seed)
    if a == "PG-LS":
        return run_pg_linesearch(env, cfg, "armijo", seed=seed)
    if a == "PG-Log-LS":
        return run_pg_linesearch(env, cfg, "log_armijo", seed=seed)
    if a == "GNPG":
        return run_gnpg(env, cfg, seed=seed)
    if a == "PG-A":
        return run_pg_a(env, cfg, seed=seed)
    if a == "PG-E-MS":
        return run_multistage_exact(env, cfg, seed=seed)
    if a in ("SPG-ESS", "SPG-E-ESS"):
        return run_spg_ess(env, cfg, doubling=False, seed=seed)
    if a == "SPG-ESS-D":
        return run_spg_ess(env, cfg, doubling=True, seed=seed)
    if a == "SPG-O-G":
        return run_spg_oracle(env, cfg, "O_G", seed=seed)
    if a == "SPG-O-R":
        return run_spg_oracle(env, cfg, "O_R", seed=seed)
    return run_multistage_stochastic(env, cfg, seed=seed)

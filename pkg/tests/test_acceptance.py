"""One check per acceptance criterion, at the stated tolerances and sizes.

Each test prints ``criterion N: PASS|FAIL | detail`` and records the same line
for the terminal summary (see ``conftest.py``).
"""

import dataclasses
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.special

from softpg import bandit as bd
from softpg import mdp as md
from softpg.harness.config import instance_env
from softpg.harness.presets import PRESETS, load_preset
from softpg.harness.runner import run_experiment, verify_suite
from softpg.linesearch import LineSearchConfig, armijo_condition, armijo_search, log_armijo_condition, log_armijo_search
from softpg.optimizers import OptimizerConfig, run
from softpg.verify import (
    check_entropy_assumptions,
    check_sgc,
    entropy_bias_bound,
    entropy_constants,
    measured_bias,
    two_arm_sgc_equality,
    worst_case_rewards,
)


@pytest.fixture
def criterion(record_property):
    start = time.perf_counter()

    def done(n, ok, detail, limit=None):
        elapsed = time.perf_counter() - start
        if limit is not None:
            ok = ok and elapsed < limit
            detail = f"{detail}; {elapsed:.1f}s of {limit}s"
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        print(line)
        record_property("criterion", (n, bool(ok), detail))
        assert ok, line

    return done


def det(means):
    return bd.BanditSpec(np.asarray(means, dtype=float), family="deterministic")


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


# ---------------------------------------------------------------- 1


def test_criterion_1_gradients(criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        A = int(rng.integers(2, 6))
        spec = det(rng.uniform(0, 1, A))
        th = rng.normal(size=A)
        tau = float(rng.uniform(0.05, 1.0))
        worst = max(worst, rel_err(bd.bandit_grad(spec, th), central_diff(lambda t: bd.bandit_value(spec, t), th)))
        fd = central_diff(lambda t: bd.bandit_entropy_value(spec, t, tau), th)
        worst = max(worst, rel_err(bd.bandit_entropy_grad(spec, th, tau), fd))
    for _ in range(100):
        S, A = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        spec = md.random_mdp(S, A, float(rng.uniform(0.5, 0.95)), rng)
        th = rng.normal(size=(S, A))
        tau = float(rng.uniform(0.05, 1.0))
        worst = max(worst, rel_err(md.evaluate(spec, th).grad, central_diff(lambda t: md.value(spec, t), th)))
        fd = central_diff(lambda t: md.value(spec, t, tau), th)
        worst = max(worst, rel_err(md.evaluate(spec, th, tau).grad_tau, fd))
    criterion(1, worst <= 1e-5, f"worst relative error {worst:.2e} (tol 1e-5)", limit=10)


# ---------------------------------------------------------------- 2


def test_criterion_2_constants(criterion, tmp_path):
    cfg = load_preset("verify-all")
    props = ("smoothness", "lojasiewicz", "reversed_lojasiewicz")
    cfg = dataclasses.replace(cfg, verify=dataclasses.replace(cfg.verify, properties=props))
    assert cfg.verify.trials == 10_000
    reports = verify_suite(cfg, tmp_path)
    failed = [r.name for r in reports if not r.passed]
    worst = max(r.max_violation for r in reports)
    criterion(2, not failed and len(reports) > 0,
              f"{len(reports)} properties, worst violation {worst:.2e} (slack 1e-9), failed {failed}", limit=60)


# ---------------------------------------------------------------- 3


def test_criterion_3_linesearch(criterion):
    rng = np.random.default_rng(3)
    bad = []
    for k in range(1000):
        A = int(rng.integers(2, 11))
        spec = det(rng.uniform(0, 1, A))
        th = rng.uniform(-5, 5, A)
        h = float(rng.uniform(0.05, 0.95))
        cfg = LineSearchConfig(h=h, eta_max=float(10 ** rng.uniform(-1, 4)))
        f = lambda t: bd.bandit_value(spec, t)
        g = bd.bandit_grad(spec, th)
        if k % 2 == 0:
            eta = armijo_search(f, th, g, cfg)
            ok = armijo_condition(f, th, g, eta, h)
            ok &= eta == cfg.eta_max or not armijo_condition(f, th, g, eta / cfg.backtrack, h)
            ok &= eta >= min(2 * (1 - h) / bd.L_SMOOTH, cfg.eta_max)
        else:
            if spec.f_star - f(th) <= 0:
                continue
            eta = log_armijo_search(f, spec.f_star, th, g, cfg)
            ok = log_armijo_condition(f, spec.f_star, th, g, eta, h)
            ok &= eta == cfg.eta_max or not log_armijo_condition(f, spec.f_star, th, g, eta / cfg.backtrack, h)
        if not ok:
            bad.append(k)
    # rate bound along full PG-LS runs, measured mu = min_t pi_t(a*)^2
    h, eps = 0.5, 1e-4
    ratios = []
    for i in range(20):
        spec = bd.generate_bandit_instance(5, 0.2, "deterministic", np.random.default_rng([3, i]))
        for T in (10, 100, 1000):
            tr = run(spec, OptimizerConfig("PG-LS", T=T, eps=eps, h=h))
            bound = max(bd.L_SMOOTH / (2 * h * (1 - h)), 1 / (h * (1 / eps))) / (tr.min_pi_star**2 * T)
            ratios.append(tr.final_subopt / bound)
    criterion(3, not bad and max(ratios) <= 1.0,
              f"{len(bad)} of 1000 invocations violate the contract; worst gap/bound {max(ratios):.3g}")


# ---------------------------------------------------------------- 4


def test_criterion_4_rate_separation(criterion):
    kw = dict(T=20_000, eps=1e-8, h=0.5, stop_gap=1e-8)
    ratios = []
    for i in range(20):
        spec = bd.generate_bandit_instance(2, 0.5, "deterministic", np.random.default_rng([4, i]))
        log = run(spec, OptimizerConfig("PG-Log-LS", **kw)).iterations_to(1e-8)
        ls = run(spec, OptimizerConfig("PG-LS", **kw)).iterations_to(1e-8)
        ratios.append(math.inf if log is None or ls is None else log / max(ls, 1))
    criterion(4, max(ratios) <= 0.25, f"worst Log-LS/LS iteration ratio {max(ratios):.3g} (need <= 0.25)", limit=30)


# ---------------------------------------------------------------- 5


def test_criterion_5_exact_mdp_ordering(criterion):
    T = 10_000
    rows, ordered, pg_fails = [], True, False
    for name in ("cliff_world", "deep_sea", "flat_grad"):
        spec = md.ENVIRONMENTS[name]()
        its = {}
        for algo in ("PG-Log-LS", "PG-LS", "PG"):
            tr = run(spec, OptimizerConfig(algo, T=T, eps=1e-4, h=0.5, record_max=T))
            it = tr.iterations_to(1e-3)
            its[algo] = math.inf if it is None else it
        ordered &= its["PG-Log-LS"] <= its["PG-LS"] <= its["PG"]
        pg_fails |= its["PG"] == math.inf
        rows.append(f"{name} " + "/".join(str(its[a]) for a in ("PG-Log-LS", "PG-LS", "PG")))
    criterion(5, ordered and pg_fails,
              "iterations to 1e-3 (Log-LS/LS/PG): " + ", ".join(rows), limit=300)


# ---------------------------------------------------------------- 6


def test_criterion_6_estimators(criterion):
    rng = np.random.default_rng(6)
    worst_bias = 0.0
    for _ in range(50):
        A = int(rng.integers(2, 11))
        spec = det(rng.uniform(0, 1, A))
        th = rng.normal(size=A) * 2
        pi = np.exp(th - th.max())
        pi /= pi.sum()
        mean = sum(pi[a] * bd.bandit_sample_grad(spec, th, rng, arm=a).g_hat for a in range(A))
        worst_bias = max(worst_bias, float(np.abs(mean - bd.bandit_grad(spec, th)).max()))
    spec = bd.generate_bandit_instance(10, 0.2, "bernoulli", rng)
    th = rng.normal(size=10)
    norms = np.array([np.linalg.norm(bd.bandit_sample_grad(spec, th, rng).g_hat) for _ in range(100_000)])
    second = float(np.mean(norms**2))
    max_bandit = float(norms.max() / math.sqrt(2))
    worst_mdp_bias = 0.0
    for _ in range(20):
        spec = md.random_mdp(2, 2, float(rng.uniform(0.5, 0.95)), rng)
        th = rng.normal(size=(2, 2))
        cache = md.evaluate(spec, th)
        mean = np.zeros((2, 2))
        for acts in itertools.product(range(2), repeat=2):
            w = cache.pi[0, acts[0]] * cache.pi[1, acts[1]]
            mean += w * md.mdp_sample_grad(spec, th, cache, 0.0, rng, actions=np.array(acts)).g_hat
        scale = max(1.0, float(np.abs(cache.grad).max()))
        worst_mdp_bias = max(worst_mdp_bias, float(np.abs(mean - cache.grad).max()) / scale)
    max_mdp = 0.0
    for i in range(10):
        S, A, gamma = 2 + i % 3, 2 + i % 2, (0.5, 0.9)[i % 2]
        spec = md.random_mdp(S, A, gamma, rng)
        bound = math.sqrt(2 * S) / (1 - gamma) ** 2
        th = rng.normal(size=(S, A)) * 2
        cache = md.evaluate(spec, th)
        for _ in range(10_000):
            g = md.mdp_sample_grad(spec, th, cache, 0.0, rng).g_hat
            max_mdp = max(max_mdp, float(np.linalg.norm(g)) / bound)
    ok = worst_bias <= 1e-12 and worst_mdp_bias <= 1e-12 and second <= 2 and max_bandit <= 1 + 1e-12 and max_mdp <= 1 + 1e-12
    criterion(6, ok, (f"bandit bias {worst_bias:.1e}, MDP bias {worst_mdp_bias:.1e}, E||g||^2 {second:.3f}, "
                      f"max norm / bound: bandit {max_bandit:.3f}, MDP {max_mdp:.3f}"), limit=60)


# ---------------------------------------------------------------- 7


def test_criterion_7_sgc(criterion):
    rng = np.random.default_rng(7)
    resid = 0.0
    for _ in range(10_000):
        r2 = rng.uniform(0, 0.99)
        r1 = rng.uniform(r2 + 1e-3, 1.0)
        lhs, rhs, rho = two_arm_sgc_equality(r1, r2, rng.uniform(1e-3, 1 - 1e-3))
        resid = max(resid, abs(lhs - rho * rhs))
    bandit_fail = 0
    for _ in range(100):
        spec = det(rng.uniform(0, 1, int(rng.integers(2, 6))))
        bandit_fail += not check_sgc(spec, 100, rng).passed
    mdp_fail = 0
    for i in range(20):
        spec = md.random_mdp(2 + i % 2, 2, float(rng.uniform(0.5, 0.95)), rng)
        mdp_fail += not check_sgc(spec, 20, rng).passed
    criterion(7, resid <= 1e-12 and bandit_fail == 0 and mdp_fail == 0,
              f"two-arm residual {resid:.1e}; failing bandits {bandit_fail}/100, MDPs {mdp_fail}/20", limit=60)


# ---------------------------------------------------------------- 8


def test_criterion_8_stochastic(criterion, tmp_path):
    easy = run_experiment(load_preset("fig2-easy-bernoulli"), tmp_path / "easy", workers=8)
    hard = run_experiment(load_preset("fig2-hard-bernoulli"), tmp_path / "hard", workers=8)
    m = {lab: easy.finals(lab).mean() for lab in ("SPG-ESS", "SPG-ESS-D", "SPG-O-G", "SPG-O-R")}
    init = easy.initials("SPG-ESS").mean()
    ok = all(m[lab] <= 0.1 * init and m[lab] <= 3 * m["SPG-O-G"] for lab in ("SPG-ESS", "SPG-ESS-D"))
    h = {lab: hard.finals(lab).mean() for lab in m}
    ok &= max(h, key=h.get) == "SPG-O-R"
    ok &= all(easy.finals(lab).size == 125 for lab in m)
    detail = "easy " + ", ".join(f"{k} {v:.2e}" for k, v in m.items()) + f" (initial {init:.3f}); hard "
    detail += ", ".join(f"{k} {v:.2e}" for k, v in h.items())
    criterion(8, ok, detail, limit=600)


# ---------------------------------------------------------------- 9


def test_criterion_9_entropy_bias(criterion):
    rng = np.random.default_rng(9)
    worst = -math.inf
    for _ in range(50):
        A = int(rng.integers(2, 11))
        spec = det(rng.uniform(0, 1, A))
        for tau in (0.05, 0.1, 0.2):
            tr = run(spec, OptimizerConfig("PG-E", T=200_000, tau=tau))
            worst = max(worst, tr.final_subopt - tau * scipy.special.lambertw((A - 1) / math.e).real)
    tight = max(abs(measured_bias(worst_case_rewards(A, tau), tau) - entropy_bias_bound(A, tau))
                for A in (2, 5, 10, 50) for tau in (0.05, 0.1, 0.2))
    criterion(9, worst <= 0 and tight <= 1e-6,
              f"max (final gap - bound) {worst:.3e}; worst-case reward residual {tight:.1e}", limit=60)


# ---------------------------------------------------------------- 10


def _stage_lengths(tau0, A, B1, p, T):
    W = scipy.special.lambertw((A - 1) / math.e).real
    B4 = W + math.log(A)
    out, prev, total = [], tau0, 0
    while total < T:
        tau = prev / 2
        L = 2.5 + 5 * tau * (1 + math.log(A))
        n = math.ceil(2 * L / (tau**p * B1) * math.log(prev / tau * (1 + B4)))
        out.append((tau, 1 / L, n))
        total += n
        prev = tau
    return out


def test_criterion_10_multistage_exact(criterion):
    cfg = load_preset("fig3-exact-entropy")
    algos = dict(cfg.algorithms)
    ms_cfg, pg_cfg = algos["PG-E-MS"], algos["PG"]
    assert (ms_cfg.p, ms_cfg.B1, ms_cfg.init_value, cfg.env.gap, cfg.instances) == (1, 0.01, 12, 0.05, 50)
    wins, ledger_ok = 0, True
    for i in range(cfg.instances):
        spec = instance_env(cfg, i)
        ms = run(spec, ms_cfg)
        pg = run(spec, pg_cfg)
        wins += ms.final_subopt < pg.final_subopt
        expect = _stage_lengths(ms_cfg.tau0, spec.A, ms_cfg.B1, ms_cfg.p, cfg.T)
        got = [(s.tau, s.eta, s.length) for s in ms.stages]
        ledger_ok &= len(got) == len(expect) and all(
            g[0] == e[0] and math.isclose(g[1], e[1], rel_tol=1e-14) and g[2] == e[2] for g, e in zip(got[:-1], expect[:-1])
        ) and got[-1][:2] == pytest.approx(expect[-1][:2])
    criterion(10, wins >= 40 and ledger_ok,
              f"PG-E-MS beats PG on {wins}/50 instances at T={cfg.T} (need >= 40); stage ledger exact: {ledger_ok}",
              limit=120)


# ---------------------------------------------------------------- 11


def test_criterion_11_multistage_stochastic(criterion, tmp_path):
    bad = run_experiment(load_preset("fig5-entropy-bad"), tmp_path / "bad", workers=8)
    uni = run_experiment(load_preset("fig4-entropy-uniform"), tmp_path / "uni", workers=8)
    b_ms, b_ess = bad.finals("SPG-E-MS").mean(), bad.finals("SPG-ESS").mean()
    u_ms, u_ess = uni.finals("SPG-E-MS").mean(), uni.finals("SPG-ESS").mean()
    ok = b_ms < b_ess and u_ms <= 2 * u_ess and bad.finals("SPG-E-MS").size == 125
    criterion(11, ok, f"bad init: MS {b_ms:.2e} vs ESS {b_ess:.2e}; uniform: MS {u_ms:.2e} vs ESS {u_ess:.2e}", limit=900)


# ---------------------------------------------------------------- 12


def test_criterion_12_assumptions(criterion):
    rng = np.random.default_rng(12)
    spec = bd.generate_bandit_instance(10, 0.2, "bernoulli", rng)
    reports = check_entropy_assumptions(spec, None, 1000, rng)
    W = scipy.special.lambertw(9 / math.e).real
    consts_ok = np.allclose(entropy_constants(spec), (W, math.log(10), W + math.log(10)), rtol=1e-13)
    mdp = md.random_mdp(3, 3, 0.9, rng)
    reports += check_entropy_assumptions(mdp, None, 1000, rng)
    c = math.log(3) / 0.1
    consts_ok &= np.allclose(entropy_constants(mdp), (c, c, 2 * c), rtol=1e-13)
    failed = [r.name for r in reports if not r.passed]
    worst = max(r.max_violation for r in reports)
    criterion(12, consts_ok and not failed, f"6 inequality families, worst violation {worst:.2e}, failed {failed}", limit=60)


# ---------------------------------------------------------------- 13


def _csvs(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_criterion_13_determinism(criterion, tmp_path):
    differing = []
    for name in PRESETS:
        cfg = load_preset(name)
        if cfg.mode == "verify":
            cfg = dataclasses.replace(cfg, verify=dataclasses.replace(cfg.verify, trials=200, bandit_instances=2, small_mdps=2))
            verify_suite(cfg, tmp_path / name / "a")
            verify_suite(cfg, tmp_path / name / "b")
        else:
            cfg = cfg.with_(T=500 if cfg.env.kind == "mdp" else 5000, instances=min(cfg.instances, 3), repeats=min(cfg.repeats, 2))
            run_experiment(cfg, tmp_path / name / "a")
            run_experiment(cfg, tmp_path / name / "b", workers=2)
        a, b = _csvs(tmp_path / name / "a"), _csvs(tmp_path / name / "b")
        if not a or a != b:
            differing.append(name)
    criterion(13, not differing, f"{len(PRESETS)} presets re-run at reduced T, differing: {differing}")

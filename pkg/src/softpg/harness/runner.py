"""Multi-seed experiment execution, CSV persistence and aggregation.

Output layout under ``out/<experiment name>/``::

    traces/<algorithm>/<run_id>.csv   one file per run
    aggregate/<algorithm>.csv         mean and 95% CI of suboptimality per iteration
    runs.csv                          one summary row per run
    manifest.json                     config echo, version, checksums

Run ``(instance i, repeat j, algorithm k)`` uses seed
``base_seed + i * 10**6 + j * 10**3 + k``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__, _kernels
from .. import bandit as bd
from .. import mdp as md
from .. import verify as vf
from ..optimizers import DivergedError, run
from .config import ALL_PROPERTIES, ExperimentConfig, instance_env, instance_name

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("run_id", "algorithm", "instance", "repeat", "seed", "iter", "stage", "tau", "eta", "f", "subopt", "grad_norm")
AGGREGATE_COLUMNS = ("algorithm", "iter", "mean_subopt", "ci95", "n")
RUNS_COLUMNS = ("run_id", "algorithm", "instance", "repeat", "seed", "status", "initial_subopt", "final_subopt", "iterations", "min_pi_star")


class HarnessIOError(OSError):
    """Writing results failed; a partial manifest was written if possible."""


def run_seed(base_seed: int, i: int, j: int, k: int) -> int:
    return base_seed + i * 10**6 + j * 10**3 + k


def run_id(i: int, j: int, k: int) -> str:
    return f"i{i:03d}-r{j:03d}-a{k:03d}"


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class RunResult:
    run_id: str
    label: str
    k: int
    instance: str
    repeat: int
    seed: int
    status: str
    iters: np.ndarray
    subopt: np.ndarray
    path: str
    min_pi_star: float | None = None


@dataclass
class ExperimentResult:
    out_dir: Path
    runs: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    @property
    def diverged(self) -> list[str]:
        return [r.run_id for r in self.runs if r.status == "diverged"]

    def finals(self, label: str) -> np.ndarray:
        """Final suboptimality of every non-diverged run of ``label``, in run-id order."""
        return np.array([r.subopt[-1] for r in self.runs if r.label == label and r.status != "diverged"])

    def initials(self, label: str) -> np.ndarray:
        return np.array([r.subopt[0] for r in self.runs if r.label == label and r.status != "diverged"])


def write_trace(path: Path, trace, rid, label, inst, repeat, seed) -> None:
    c = trace.columns
    prefix = f"{rid},{label},{inst},{repeat},{seed},"
    lines = [",".join(TRACE_COLUMNS)]
    for t in range(len(trace)):
        lines.append(prefix + ",".join(_fmt(c[k][t]) for k in TRACE_COLUMNS[5:]))
    path.write_text("\n".join(lines) + "\n")


def _execute(args) -> RunResult:
    cfg, i, j, k, out_dir = args
    label, ocfg = cfg.algorithms[k]
    ocfg = ocfg.with_(record_max=cfg.trace_points)
    env = instance_env(cfg, i)
    inst = instance_name(cfg, i)
    seed = run_seed(cfg.base_seed, i, j, k)
    rid = run_id(i, j, k)
    try:
        trace = run(env, ocfg, seed=seed)
    except DivergedError as exc:
        trace = exc.trace
        log.warning("%s %s diverged: %s", rid, label, exc)
    path = Path(out_dir) / "traces" / slug(label) / f"{rid}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trace(path, trace, rid, label, inst, j, seed)
    return RunResult(rid, label, k, inst, j, seed, trace.status, trace["iter"], trace["subopt"], str(path), trace.min_pi_star)


def aggregate(runs: list[RunResult]) -> list[tuple]:
    """Mean and CI half-width of suboptimality on the union of recorded iterations.

    Runs that stopped early contribute their last value at later iterations.
    """
    runs = [r for r in runs if r.status != "diverged" and len(r.iters)]
    if not runs:
        return []
    grid = np.unique(np.concatenate([r.iters for r in runs]))
    vals = np.empty((len(runs), grid.size))
    for n, r in enumerate(runs):
        idx = np.searchsorted(r.iters, grid, side="right") - 1
        vals[n] = r.subopt[np.maximum(idx, 0)]
    n = len(runs)
    mean = vals.mean(axis=0)
    sd = vals.std(axis=0, ddof=1) if n > 1 else np.zeros(grid.size)
    ci = 1.96 * sd / math.sqrt(n)
    return [(int(g), float(m), float(c), n) for g, m, c in zip(grid, mean, ci)]


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: Path, cfg: ExperimentConfig, files: list[Path], complete: bool, extra=None) -> Path:
    files = sorted(files)
    manifest = {
        "name": cfg.name,
        "version": __version__,
        "backend": _kernels.backend(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "complete": complete,
        "overrides": {"T": cfg.T, "base_seed": cfg.base_seed, "instances": cfg.instances, "repeats": cfg.repeats},
        "config": cfg.source,
        "files": {str(p.relative_to(out_dir)): sha256(p) for p in files if p.exists()},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, workers: int = 1) -> ExperimentResult:
    out_dir = Path(out_dir if out_dir is not None else Path(cfg.out) / cfg.name)
    tasks = [
        (cfg, i, j, k, str(out_dir))
        for i in range(cfg.instances)
        for j in range(cfg.repeats)
        for k in range(len(cfg.algorithms))
    ]
    written: list[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                runs = list(pool.map(_execute, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
        else:
            runs = [_execute(t) for t in tasks]
        runs.sort(key=lambda r: r.run_id)
        written += [Path(r.path) for r in runs]
        agg_dir = out_dir / "aggregate"
        agg_dir.mkdir(exist_ok=True)
        for label, _ in cfg.algorithms:
            rows = [(label, it, _fmt(m), _fmt(c), n) for it, m, c, n in aggregate([r for r in runs if r.label == label])]
            path = agg_dir / f"{slug(label)}.csv"
            _write_csv(path, AGGREGATE_COLUMNS, rows)
            written.append(path)
        summary = [
            (r.run_id, r.label, r.instance, r.repeat, r.seed, r.status, _fmt(r.subopt[0]), _fmt(r.subopt[-1]),
             int(r.iters[-1]), "" if r.min_pi_star is None else _fmt(r.min_pi_star))
            for r in runs
        ]
        _write_csv(out_dir / "runs.csv", RUNS_COLUMNS, summary)
        written.append(out_dir / "runs.csv")
        diverged = [r.run_id for r in runs if r.status == "diverged"]
        write_manifest(out_dir, cfg, written, True, {"diverged": diverged})
    except OSError as exc:
        try:
            write_manifest(out_dir, cfg, written, False, {"error": str(exc)})
        except OSError:
            pass
        raise HarnessIOError(f"writing results under {out_dir} failed: {exc}") from exc
    res = ExperimentResult(out_dir, runs, {str(p): sha256(p) for p in written})
    return res


# ---------------------------------------------------------------- verify


MDP_TAU_PAIRS = ((1.0, 0.5), (0.5, 0.1), (0.2, 0.05), (0.1, 0.0))
SUITE_TAU = 0.5


def _named(prefix: str, rep: vf.PropertyReport) -> vf.PropertyReport:
    return replace(rep, name=f"{prefix}:{rep.name}")


def _bandit_checks(spec, props, trials, rng, prefix):
    out = []
    if "smoothness" in props:
        out.append(vf.check_smoothness(spec, bd.L_SMOOTH, trials, rng))
        out.append(vf.check_smoothness(spec, bd.entropy_smoothness(SUITE_TAU, spec.A), trials, rng, tau=SUITE_TAU))
    if "lojasiewicz" in props:
        out.append(vf.check_lojasiewicz(spec, trials, rng))
        out.append(vf.check_lojasiewicz(spec, trials, rng, tau=SUITE_TAU))
    if "reversed_lojasiewicz" in props:
        out.append(vf.check_reversed_lojasiewicz(spec, trials, rng))
    if "sgc" in props:
        out.append(vf.check_sgc(spec, max(1, trials // 10), rng))
    if "entropy_assumptions" in props:
        out += vf.check_entropy_assumptions(spec, None, max(1, trials // 10), rng)
    return [_named(prefix, r) for r in out]


def _mdp_checks(spec, props, trials, rng, prefix):
    out = []
    # the smoothness constants assume a reward span of at most 1 (CliffWorld's -100 is skipped)
    if "smoothness" in props and spec.reward_range <= 1.0:
        out.append(vf.check_smoothness(spec, md.smoothness(spec), trials, rng))
        out.append(vf.check_smoothness(spec, md.smoothness(spec, SUITE_TAU), trials, rng, tau=SUITE_TAU))
    if "lojasiewicz" in props:
        out.append(vf.check_lojasiewicz(spec, trials, rng))
        out.append(vf.check_lojasiewicz(spec, max(1, trials // 10), rng, tau=SUITE_TAU))
    if "reversed_lojasiewicz" in props and md.optimal_action_gap(spec) > 0:
        out.append(vf.check_reversed_lojasiewicz(spec, trials, rng))
    if "sgc" in props and spec.unit_rewards and spec.A**spec.S <= 10**4:
        out.append(vf.check_sgc(spec, max(1, trials // 100), rng))
    if "entropy_assumptions" in props:
        out += vf.check_entropy_assumptions(spec, MDP_TAU_PAIRS, max(1, trials // 10), rng)
    return [_named(prefix, r) for r in out]


def _two_arm_report(trials, rng) -> vf.PropertyReport:
    worst = 0.0
    for _ in range(trials):
        r2 = rng.uniform(0.0, 0.99)
        r1 = rng.uniform(r2 + 1e-3, 1.0)
        p = rng.uniform(1e-3, 1 - 1e-3)
        lhs, rhs, rho = vf.two_arm_sgc_equality(r1, r2, p)
        worst = max(worst, abs(lhs - rho * rhs))
    return vf.PropertyReport("two_arm_sgc_equality", trials, worst, 1.0, tol=1e-12)


def _entropy_bias_report(trials, rng) -> vf.PropertyReport:
    tally = vf._Tally()
    for _ in range(trials):
        A = int(rng.integers(2, 21))
        tau = float(rng.uniform(0.01, 1.0))
        r = rng.uniform(0.0, 1.0, size=A)
        tally.add(vf.measured_bias(r, tau), vf.entropy_bias_bound(A, tau))
    return tally.report("entropy_bias_bound")


def verify_suite(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> list[vf.PropertyReport]:
    """Run every selected checker and write ``properties.csv``."""
    v = cfg.verify
    props = set(ALL_PROPERTIES) if "all" in v.properties else set(v.properties)
    unknown = props - set(ALL_PROPERTIES)
    if unknown:
        raise ValueError(f"unknown properties {sorted(unknown)}")
    rng = np.random.default_rng(cfg.base_seed)
    reports: list[vf.PropertyReport] = []
    if props:
        for i in range(v.bandit_instances):
            spec = bd.generate_bandit_instance(v.bandit_A, v.bandit_gap, "deterministic", np.random.default_rng([cfg.base_seed, i]))
            reports += _bandit_checks(spec, props, v.trials, rng, f"bandit{i:03d}")
        for name in v.mdps:
            reports += _mdp_checks(md.ENVIRONMENTS[name](), props, v.trials, rng, name)
        for i in range(v.small_mdps):
            spec = md.random_mdp(2 + i % 2, 2, 0.9, np.random.default_rng([cfg.base_seed, 10**6 + i]))
            reports += _mdp_checks(spec, props, max(1, v.trials // 10), rng, f"random_mdp{i:03d}")
        if "two_arm_sgc" in props:
            reports.append(_two_arm_report(v.trials, rng))
        if "entropy_bias" in props:
            reports.append(_entropy_bias_report(max(1, v.trials // 10), rng))
    out_dir = Path(out_dir if out_dir is not None else Path(cfg.out) / cfg.name)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "properties.csv"
        vf.write_reports(reports, path)
        write_manifest(out_dir, cfg, [path], True, {"failed": [r.name for r in reports if not r.passed]})
    except OSError as exc:
        raise HarnessIOError(f"writing {out_dir}/properties.csv failed: {exc}") from exc
    return reports


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)

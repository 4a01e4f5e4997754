"""Time the compiled bandit kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py --steps 20000 --arms 10

Both paths run the same step sequence from the same logits; the script also
reports the largest difference between their final logits.
"""

import argparse
import time

import numpy as np

from softpg import _kernels


def _bench(fn, args, reps):
    best = float("inf")
    for _ in range(reps):
        theta = args[0].copy()
        t0 = time.perf_counter()
        fn(theta, *args[1:])
        best = min(best, time.perf_counter() - t0)
    return best, theta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--arms", type=int, default=10)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n, A = args.steps, args.arms
    r = rng.uniform(0, 1, A)
    theta = np.zeros(A)
    etas = np.full(n, 0.05)
    taus = np.zeros(n)
    rewards = (rng.random((n, A)) < r).astype(float)
    u = rng.random(n)
    outs = lambda: (np.empty(n), np.empty(n), np.empty(n))

    if _kernels.numba is None:
        print("numba is not installed; only the numpy path is available")
    jit_exact, jit_stoch = _kernels.numba_kernels() if _kernels.numba is not None else (None, None)

    rows = []
    for name, np_fn, jit_fn, extra in (
        ("exact", _kernels.exact_steps_numpy, jit_exact, (r, etas, taus)),
        ("stochastic", _kernels.stoch_steps_numpy, jit_stoch, (r, rewards, u, etas, taus, 0.0)),
    ):
        call_args = lambda: (theta.copy(), *extra, *outs()) + ((np.empty(n),) if name == "stochastic" else ())
        t_np, th_np = _bench(np_fn, call_args(), args.reps)
        if jit_fn is None:
            rows.append((name, t_np, None, None))
            continue
        jit_fn(*call_args())  # compile outside the timing
        t_jit, th_jit = _bench(jit_fn, call_args(), args.reps)
        rows.append((name, t_np, t_jit, float(np.max(np.abs(th_np - th_jit)))))

    print(f"steps={n} arms={A} (best of {args.reps})")
    print(f"{'kernel':<12}{'numpy us/step':>15}{'numba us/step':>15}{'speedup':>10}{'max |dtheta|':>15}")
    for name, t_np, t_jit, diff in rows:
        if t_jit is None:
            print(f"{name:<12}{1e6 * t_np / n:>15.3f}{'-':>15}{'-':>10}{'-':>15}")
        else:
            print(f"{name:<12}{1e6 * t_np / n:>15.3f}{1e6 * t_jit / n:>15.3f}{t_np / t_jit:>10.1f}{diff:>15.2e}")


if __name__ == "__main__":
    main()

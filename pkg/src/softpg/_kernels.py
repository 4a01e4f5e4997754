"""Hot loops for bandit runs.

Two interchangeable implementations live here: numba-compiled loops and a
pure-numpy fallback. ``SOFTPG_NO_NUMBA=1`` (or a missing numba install)
selects the fallback. Both advance ``theta`` in place over one chunk of
pre-drawn randomness and write per-step diagnostics into caller buffers, so
the random stream never depends on which backend is active.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("SOFTPG_NO_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------- numpy


def exact_steps_numpy(theta, r, etas, taus, f_out, fobj_out, g_out):
    """Exact (entropy-regularized when tau > 0) softmax PG over one chunk."""
    for t in range(etas.shape[0]):
        z = theta - theta.max()
        e = np.exp(z)
        s = e.sum()
        pi = e / s
        logpi = z - np.log(s)
        tau = taus[t]
        v = r - tau * logpi
        fv = np.dot(pi, v)
        g = pi * (v - fv)
        f_out[t] = np.dot(pi, r)
        fobj_out[t] = fv
        g_out[t] = np.sqrt(np.dot(g, g))
        theta += etas[t] * g


def stoch_steps_numpy(theta, r, rewards, u, etas, taus, og_scale, f_out, fobj_out, g_out, eta_out):
    """Importance-sampled softmax PG over one chunk.

    ``rewards[t]`` holds a reward draw for every arm; only the pulled arm's
    entry is used. With ``og_scale > 0`` the step is ``og_scale * ||grad f||``
    (exact, unregularized gradient) instead of ``etas[t]``.
    """
    A = theta.shape[0]
    for t in range(etas.shape[0]):
        z = theta - theta.max()
        e = np.exp(z)
        s = e.sum()
        pi = e / s
        logpi = z - np.log(s)
        tau = taus[t]
        f = np.dot(pi, r)
        v = r - tau * logpi
        fv = np.dot(pi, v)
        g = pi * (v - fv)
        f_out[t] = f
        fobj_out[t] = fv
        g_out[t] = np.sqrt(np.dot(g, g))
        if og_scale > 0.0:
            g0 = pi * (r - f)
            eta = og_scale * np.sqrt(np.dot(g0, g0))
        else:
            eta = etas[t]
        eta_out[t] = eta
        a = int(np.searchsorted(np.cumsum(pi), u[t], side="right"))
        if a >= A:
            a = int(np.flatnonzero(pi > 0.0)[-1])
        rhat = np.zeros(A)
        rhat[a] = rewards[t, a] / pi[a]
        vh = rhat - tau * logpi
        theta += eta * (pi * (vh - np.dot(pi, vh)))


# ---------------------------------------------------------------- numba


_NUMBA_CACHE: dict = {}


def numba_kernels():
    """Compiled ``(exact_steps, stoch_steps)``, built once on first use."""
    if numba is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    if not _NUMBA_CACHE:
        _NUMBA_CACHE["k"] = _build_numba()
    return _NUMBA_CACHE["k"]


def _build_numba():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def _policy(theta, pi, logpi):
        A = theta.shape[0]
        m = theta[0]
        for a in range(1, A):
            if theta[a] > m:
                m = theta[a]
        s = 0.0
        for a in range(A):
            pi[a] = np.exp(theta[a] - m)
            s += pi[a]
        ls = np.log(s)
        for a in range(A):
            pi[a] = pi[a] / s
            logpi[a] = theta[a] - m - ls

    @njit
    def exact_steps(theta, r, etas, taus, f_out, fobj_out, g_out):
        A = theta.shape[0]
        pi = np.empty(A)
        logpi = np.empty(A)
        g = np.empty(A)
        for t in range(etas.shape[0]):
            _policy(theta, pi, logpi)
            tau = taus[t]
            f = 0.0
            fv = 0.0
            for a in range(A):
                f += pi[a] * r[a]
                fv += pi[a] * (r[a] - tau * logpi[a])
            gn = 0.0
            for a in range(A):
                g[a] = pi[a] * ((r[a] - tau * logpi[a]) - fv)
                gn += g[a] * g[a]
            f_out[t] = f
            fobj_out[t] = fv
            g_out[t] = np.sqrt(gn)
            eta = etas[t]
            for a in range(A):
                theta[a] += eta * g[a]

    @njit
    def stoch_steps(theta, r, rewards, u, etas, taus, og_scale, f_out, fobj_out, g_out, eta_out):
        A = theta.shape[0]
        pi = np.empty(A)
        logpi = np.empty(A)
        for t in range(etas.shape[0]):
            _policy(theta, pi, logpi)
            tau = taus[t]
            f = 0.0
            fv = 0.0
            for a in range(A):
                f += pi[a] * r[a]
                fv += pi[a] * (r[a] - tau * logpi[a])
            gn = 0.0
            g0n = 0.0
            for a in range(A):
                ga = pi[a] * ((r[a] - tau * logpi[a]) - fv)
                gn += ga * ga
                g0a = pi[a] * (r[a] - f)
                g0n += g0a * g0a
            f_out[t] = f
            fobj_out[t] = fv
            g_out[t] = np.sqrt(gn)
            if og_scale > 0.0:
                eta = og_scale * np.sqrt(g0n)
            else:
                eta = etas[t]
            eta_out[t] = eta
            # first index whose running mass exceeds u
            target = u[t]
            acc = 0.0
            k = -1
            for a in range(A):
                acc += pi[a]
                if acc > target:
                    k = a
                    break
            if k < 0:
                # rounding left u above the total mass
                k = A - 1
                while pi[k] == 0.0:
                    k -= 1
            rk = rewards[t, k] / pi[k]
            # <pi, rhat - tau log pi> = pi_k rhat_k - tau sum pi log pi
            mean = pi[k] * rk
            for a in range(A):
                mean -= tau * pi[a] * logpi[a]
            for a in range(A):
                va = -tau * logpi[a]
                if a == k:
                    va += rk
                theta[a] += eta * pi[a] * (va - mean)

    return exact_steps, stoch_steps


if USE_NUMBA:
    exact_steps, stoch_steps = numba_kernels()
else:
    exact_steps, stoch_steps = exact_steps_numpy, stoch_steps_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

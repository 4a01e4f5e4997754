"""Softmax parameterization shared by bandits and tabular MDPs.

Logits are stored as a dense ``S x A`` array. Bandits use a single row and
most helpers accept a 1-D vector of length ``A`` as shorthand for that row.
"""

from __future__ import annotations

import numpy as np

ENTROPY_FLOOR = 1e-300


def _as_finite(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim not in (1, 2) or theta.shape[-1] == 0:
        raise ValueError(f"logits must be a non-empty vector or matrix, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("logits must be finite")
    return theta


def softmax(theta: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction.

    Parameters
    ----------
    theta : np.ndarray
        Logits of shape ``(A,)`` or ``(S, A)``.

    Returns
    -------
    np.ndarray
        Probabilities with the same shape; each row sums to one.
    """
    theta = _as_finite(theta)
    z = np.exp(theta - theta.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def log_softmax(theta: np.ndarray) -> np.ndarray:
    """Row-wise ``log softmax(theta)``, exact even where probabilities underflow."""
    theta = _as_finite(theta)
    shifted = theta - theta.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def row_entropy(pi: np.ndarray) -> np.ndarray | float:
    """Shannon entropy of each row, using ``0 log 0 = 0``.

    A 1-D input returns a float; a matrix returns one value per row.
    """
    pi = np.asarray(pi, dtype=float)
    safe = np.where(pi < ENTROPY_FLOOR, 1.0, pi)
    terms = np.where(pi < ENTROPY_FLOOR, 0.0, pi * np.log(safe))
    out = -terms.sum(axis=-1)
    # tiny negative values can appear from rounding on one-hot rows
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def softmax_jacobian_apply(pi_row: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply ``diag(pi) - pi pi^T`` to ``v`` without forming the matrix."""
    pi_row = np.asarray(pi_row, dtype=float)
    v = np.asarray(v, dtype=float)
    if pi_row.shape != v.shape:
        raise ValueError(f"shape mismatch: pi {pi_row.shape} vs v {v.shape}")
    return pi_row * (v - np.sum(pi_row * v, axis=-1, keepdims=True))


def argmax_action(row: np.ndarray) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or row.size == 0:
        raise ValueError("argmax_action needs a non-empty 1-D row")
    return int(np.argmax(row))


def one_hot_logits(A: int, arm: int, value: float, S: int | None = None) -> np.ndarray:
    """Logits that are zero except ``value`` on ``arm`` (per row when ``S`` is given)."""
    if S is None:
        theta = np.zeros(A)
        theta[arm] = value
        return theta
    theta = np.zeros((S, A))
    theta[:, arm] = value
    return theta

"""Pure numpy versions of the compiled kernels (same signatures, same results)."""
from __future__ import annotations

import numpy as np

NEWTON_MAX = 100


def _alpha_and_slope(q, c):
    """Unnormalized split ``alpha(q)`` and ``d sum(alpha)/dq`` for a batch."""
    B, K = c.shape
    alpha = np.empty_like(c)
    tail = np.zeros(B)
    dtail = np.zeros(B)
    for k in range(K - 1, -1, -1):
        ak = q * (tail + c[:, k])
        dak = tail + c[:, k] + q * dtail
        alpha[:, k] = ak
        tail = tail + ak
        dtail = dtail + dak
    return alpha, tail, dtail


def balanced_sinr_batch(strengths, snr: float):
    """Balanced max-min SINR for each row of ascending ``strengths``.

    Newton iteration on ``log sum(alpha(e^u)) = 0``, which is convex in ``u``,
    started to the right of the root. Returns ``(q, alpha)``.
    """
    s = np.atleast_2d(np.asarray(strengths, float))
    c = 1.0 / (snr * s)
    u = np.log(snr * s[:, -1])
    for _ in range(NEWTON_MAX):
        q = np.exp(u)
        _, total, slope = _alpha_and_slope(q, c)
        step = np.log(total) * total / (q * slope)
        u = u - step
        if np.all(np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(u))):
            break
    q = np.exp(u)
    alpha, total, _ = _alpha_and_slope(q, c)
    return q, alpha / total[:, None]


def suffix_min(strengths):
    s = np.asarray(strengths, float)
    return np.minimum.accumulate(s[..., ::-1], axis=-1)[..., ::-1]


def siso_grid_search(J, v, snr: float, levels: int, enforce_order: bool, chunk: int = 1 << 16):
    """Exhaustive search of uniform phase levels for the best SIC max-min SINR.

    ``J`` is ``K x M`` (reflected coefficients per element), ``v`` the ``K``
    direct coefficients, both in decoding order. Returns ``(q, flat_index)``
    with ``flat_index`` in base ``levels``, element 0 most significant;
    ``(-1.0, -1)`` when ``enforce_order`` rejects every point.
    """
    J = np.asarray(J, complex)
    v = np.asarray(v, complex)
    K, M = J.shape
    total = levels ** M
    roots = np.exp(2j * np.pi * np.arange(levels) / levels)
    weights = levels ** np.arange(M - 1, -1, -1)
    best_q, best_idx = -1.0, -1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // weights[None, :]) % levels
        h = roots[digits] @ J.T + v[None, :]
        s = np.abs(h) ** 2
        if enforce_order:
            keep = np.all(np.diff(s, axis=1) >= 0, axis=1)
            if not keep.any():
                continue
            idx, s = idx[keep], s[keep]
        q, _ = balanced_sinr_batch(suffix_min(s), snr)
        j = int(np.argmax(q))
        if q[j] > best_q:
            best_q, best_idx = float(q[j]), int(idx[j])
    return best_q, best_idx

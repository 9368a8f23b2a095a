"""Benchmark schemes and finite-resolution phase quantization.

OMA here is TDMA: user ``k`` gets time fraction ``tau_k`` and transmit
power ``p_k`` with average power ``sum(tau_k p_k) <= P``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sdp
from .channels import ChannelSet, channel_strengths, combined_channels
from .errors import ContractViolation
from .miso import maxmin_sinr_miso, solve_miso
from .ordering import max_combined_strength, order_users
from .relax import bisect_max, gaussian_candidates, gram, phases_of, unit_diagonal_problem
from .siso import (PhaseConfig, SolverConfig, effective_strengths, optimal_power_allocation,
                   solve_siso, target_sinrs_siso)

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# quantization


def quantize_phases(phases, bits):
    """Nearest level of ``2**bits`` uniform levels under circular distance.

    ``bits=None`` (continuous) returns the input unchanged. Accepts a
    :class:`PhaseConfig` or a bare array and returns the same kind.
    """
    theta = phases.theta if isinstance(phases, PhaseConfig) else phases
    theta = np.asarray(theta, float)
    if bits is not None:
        if int(bits) < 1:
            raise ContractViolation("bits must be >= 1")
        levels = 2 ** int(bits)
        step = 2.0 * math.pi / levels
        theta = (np.round(theta / step) % levels) * step
    return PhaseConfig(theta) if isinstance(phases, PhaseConfig) else theta


def quantized_sinr(ch_decoding: ChannelSet, result, bits, power: float, mode: str) -> float:
    """Max-min target SINR after quantizing a solution's phases.

    ``ch_decoding`` must already be in the result's decoding order. The
    single-antenna case re-balances power for the quantized channels; the
    multi-antenna case keeps the beams.
    """
    theta = quantize_phases(result.phases.theta, bits)
    if mode == "siso":
        s = channel_strengths(ch_decoding, theta)
        alloc, _ = optimal_power_allocation(effective_strengths(s), power, ch_decoding.noise_power)
        return float(np.min(target_sinrs_siso(s, alloc.alpha, power / ch_decoding.noise_power)))
    h = combined_channels(ch_decoding, theta)
    return maxmin_sinr_miso(h, result.allocation, ch_decoding.noise_power)


# --------------------------------------------------------------------------
# NOMA without IRS


def noma_no_irs(ch: ChannelSet, power: float, mode: str = "siso",
                config: SolverConfig | None = None, seed=0):
    """The matching solver on the direct links only, ordered by ``|v_k|^2``."""
    direct = ch.without_irs()
    ordering = order_users(direct, 1, seed)
    if mode == "siso":
        return solve_siso(direct, ordering, power, config, seed)
    if mode == "miso":
        return solve_miso(direct, ordering, power, config, seed)
    raise ContractViolation(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# OMA


@dataclass(frozen=True)
class OmaResult:
    rates: np.ndarray
    min_rate: float
    tau: np.ndarray
    powers: np.ndarray
    strengths: np.ndarray
    theta: np.ndarray | None = None


def _phi_inv(y, iters: int = 100):
    """Solve ``(x - 1) e^x + 1 = y`` for ``x >= 0`` elementwise.

    The left side is convex and increasing on ``x >= 0``, so Newton started
    to the right of the root decreases monotonically onto it.
    """
    y = np.asarray(y, float)
    x = np.maximum(1.5, np.log1p(y) + 2.0)
    for _ in range(iters):
        ex = np.exp(x)
        step = ((x - 1.0) * ex + 1.0 - y) / (x * ex)
        x = np.maximum(x - step, 0.5 * x)
        if np.all(np.abs(step) <= 1e-14 * x):
            break
    return x


def _tdma_at_marginal(lam: float, a: np.ndarray):
    """Equal-rate schedule whose users share marginal energy ``lam``.

    With ``x_k = rate ln2 / tau_k`` the optimality condition for user ``k``
    is ``a_k ((x_k - 1) e^x_k + 1) = lam``; the time fractions then fix the
    common rate. Returns ``(rate, tau, energy)``; energy grows with ``lam``.
    """
    x = _phi_inv(lam / a)
    c = 1.0 / np.sum(1.0 / x)
    tau = c / x
    return c / LN2, tau, a * tau * np.expm1(x)


def oma_from_strengths(strengths, power: float, noise: float) -> OmaResult:
    """Max-min TDMA rates for fixed channel strengths.

    Users have per-user energy ``a_k tau_k (2^(R/tau_k) - 1)`` (units of
    the power budget, ``a_k = 1/snr_k``); the optimum spends the whole
    budget at a common marginal energy, found by geometric bisection.
    """
    s = np.asarray(strengths, float)
    if s.ndim != 1 or s.size < 1:
        raise ContractViolation("need at least one user")
    if np.any(s <= 0):
        raise ContractViolation("strengths must be positive")
    a = noise / (power * s)

    def energy(lam):
        return float(np.sum(_tdma_at_marginal(lam, a)[2]))

    hi = 1.0
    while energy(hi) < 1.0:
        hi *= 4.0
    lo = hi
    while energy(lo) >= 1.0:
        lo /= 4.0
    while hi > lo * (1.0 + 1e-14):
        mid = math.sqrt(lo * hi)
        if energy(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    _, tau, e = _tdma_at_marginal(lo, a)
    powers = e / tau * power
    rates = tau * np.log2(1.0 + powers * s / noise)
    return OmaResult(rates, float(rates.min()), tau, powers, s)


def maxmin_strength_phases(ch: ChannelSet, trials: int = 400, seed=0, eps_b: float = 1e-4):
    """Shared phases maximizing the smallest combined strength."""
    zero = np.zeros(ch.M)
    if ch.M == 0:
        return zero, channel_strengths(ch, zero)
    cas = ch.cascades()
    G = np.array([gram(cas[k]) for k in range(ch.K)])
    scale = float(np.max(np.abs(G)))
    G = G / scale
    inc = channel_strengths(ch, zero) / scale

    def test(q):
        problem = unit_diagonal_problem(ch.M + 1)
        for k in range(ch.K):
            problem.add({"E": G[k]}, ">=", q)
        sol = sdp.feasibility(problem)
        return sol.blocks["E"] if sol.status == sdp.FEASIBLE else None

    q_hi = float(np.min(np.sum(np.abs(cas), axis=1) ** 2 / scale).min())
    lo = float(inc.min())
    witness = test(lo)
    if witness is None:
        return zero, channel_strengths(ch, zero)
    lo, witness, _ = bisect_max(test, lo, max(q_hi, lo), eps_b, witness)
    rng = np.random.default_rng(seed)
    cands = np.vstack([np.ones((1, ch.M)), gaussian_candidates(witness, trials, rng)])
    ext = np.concatenate([cands, np.ones((cands.shape[0], 1))], axis=1)
    s = np.sum(np.abs(np.einsum("dm,kmn->dkn", ext, cas)) ** 2, axis=-1)
    best = int(np.argmax(s.min(axis=1)))
    return phases_of(cands[best]), s[best]


def oma_maxmin(ch: ChannelSet, power: float, with_irs: bool, trials: int = 400, seed=0,
               per_slot_phases: bool = False) -> OmaResult:
    """Max-min TDMA benchmark; each slot uses maximum-ratio transmission.

    With the IRS, one shared phase vector serves every slot unless
    ``per_slot_phases`` lets each user keep its own strength maximizer.
    """
    noise = ch.noise_power
    if not with_irs or ch.M == 0:
        s = np.sum(np.abs(ch.v) ** 2, axis=1)
        return oma_from_strengths(s, power, noise)
    if per_slot_phases:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s = np.empty(ch.K)
        for k, child in enumerate(ss.spawn(ch.K)):
            s[k], _ = max_combined_strength(ch, k, trials, child)
        return oma_from_strengths(s, power, noise)
    theta, s = maxmin_strength_phases(ch, trials, seed)
    res = oma_from_strengths(s, power, noise)
    return OmaResult(res.rates, res.min_rate, res.tau, res.powers, res.strengths, theta)

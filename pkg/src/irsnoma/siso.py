"""Single-antenna base station: alternating phase / power optimization.

Every function here works in *decoding order*: index 0 is the weakest user,
whose signal every other user decodes and cancels first. :func:`solve_siso`
applies an :class:`~irsnoma.ordering.OrderingResult` to bring a channel set
into that order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .channels import ChannelSet, channel_strengths, wrap_phase
from .errors import ContractViolation, DomainError, NumericalFailure
from .numerics import dominant_eigpair
from .kernels import suffix_min
from .ordering import OrderingResult
from .relax import (bisect_max, gaussian_candidates, gram, lift, phases_of,
                    unit_diagonal_problem)

ORDER_RTOL = 1e-9


@dataclass(frozen=True)
class PowerAllocation:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, float)
        if np.any(a < 0) or a.sum() > 1 + 1e-12:
            raise ContractViolation("power fractions must be >= 0 and sum to <= 1")


@dataclass(frozen=True)
class PhaseConfig:
    theta: np.ndarray
    lifted: np.ndarray | None = None


@dataclass(frozen=True)
class BisectionConfig:
    q_min: float | None = None
    q_max: float | None = None
    eps_b: float = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 0.01
    eps_b: float = 1e-4
    randomization: int = 400
    iteration_cap: int = 50
    multi_start: bool = False

    def __post_init__(self):
        if self.randomization < 1:
            raise ContractViolation("randomization trials must be >= 1")


@dataclass
class SolveResult:
    """Outcome of one max-min solve.

    ``rates``, ``order`` and the allocation are in decoding order;
    ``order[t]`` is the original index of the ``t``-th decoded user.
    """

    q_star: float
    rates: np.ndarray
    allocation: object
    phases: PhaseConfig
    iterations: int
    q_trace: list
    wall_time: float
    order: np.ndarray
    flags: list = field(default_factory=list)
    omegas: list | None = None

    @property
    def min_rate(self) -> float:
        return float(np.min(self.rates))


# --------------------------------------------------------------------------
# SINR evaluation


def sinr_siso(strengths, alpha, power: float, noise: float, k: int) -> float:
    """Own-signal SINR of the ``k``-th decoded user after SIC."""
    s = np.asarray(strengths, float)
    a = np.asarray(getattr(alpha, "alpha", alpha), float)
    interference = power * s[k] * a[k + 1:].sum()
    return float(a[k] * power * s[k] / (interference + noise))


def sic_sinr_matrix(strengths, alpha, snr: float) -> np.ndarray:
    """``gamma[..., t, k]``: user ``k`` decoding flow ``t``; ``nan`` for ``k < t``."""
    s = np.asarray(strengths, float)
    a = np.asarray(getattr(alpha, "alpha", alpha), float)
    K = a.size
    tail = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
    sk = s[..., None, :]
    gam = a[:, None] * sk / (tail[:, None] * sk + 1.0 / snr)
    mask = np.triu(np.ones((K, K), bool))
    return np.where(mask, gam, np.nan)


def target_sinrs_siso(strengths, alpha, snr: float) -> np.ndarray:
    """Per-flow target SINR: the worst SINR among users that must decode it."""
    return np.nanmin(sic_sinr_matrix(strengths, alpha, snr), axis=-1)


def maxmin_sinr_siso(strengths, alpha, snr: float):
    return np.min(target_sinrs_siso(strengths, alpha, snr), axis=-1)


def rates_from_sinr(sinr) -> np.ndarray:
    return np.log2(1.0 + np.asarray(sinr, float))


def order_consistent(strengths, rtol: float = ORDER_RTOL) -> np.ndarray:
    """True where strengths are non-decreasing along the last axis."""
    s = np.asarray(strengths, float)
    scale = np.max(np.abs(s), axis=-1, keepdims=True)
    return np.all(np.diff(s, axis=-1) >= -rtol * scale, axis=-1)


# --------------------------------------------------------------------------
# power allocation


def balancing_matrix(strengths, snr: float) -> np.ndarray:
    """The ``(K+1) x (K+1)`` nonnegative matrix whose Perron root is ``1/Q``."""
    s = np.asarray(strengths, float)
    K = s.size
    upper = np.triu(np.ones((K, K)), 1)
    c = 1.0 / (snr * s)
    pi = np.zeros((K + 1, K + 1))
    pi[:K, :K] = upper
    pi[:K, K] = c
    pi[K, :K] = upper.sum(axis=0)
    pi[K, K] = c.sum()
    return pi


def effective_strengths(strengths) -> np.ndarray:
    """Suffix minima: the SIC bottleneck strength for each flow.

    The target SINR of flow ``t`` only depends on ``min_{k>=t} s_k``, so the
    balanced split of these values is max-min optimal for any strength
    profile, ordered or not.
    """
    return suffix_min(strengths)


def optimal_power_allocation(strengths, power: float, noise: float):
    """Max-min optimal power split for fixed channel strengths.

    Returns ``(PowerAllocation, Q)``; every user's own SINR equals ``Q``.
    """
    s = np.asarray(strengths, float)
    if s.ndim != 1 or s.size < 1:
        raise ContractViolation("strengths must be a non-empty vector")
    if np.any(~(s > 0)):
        raise DomainError("channel strengths must be strictly positive")
    lam, vec = dominant_eigpair(balancing_matrix(s, power / noise))
    if vec[-1] < 1e-12 * vec.max():
        raise NumericalFailure("Perron vector has a vanishing last component")
    alpha = vec[:-1] / vec[-1]
    alpha = alpha / alpha.sum()
    return PowerAllocation(alpha), 1.0 / lam


# --------------------------------------------------------------------------
# phase shifts


def closed_form_phases_two_user(ch: ChannelSet) -> PhaseConfig:
    """Co-phase every reflected path of the stronger user with its direct path.

    Channel set must be single-antenna, two users, in decoding order (index
    1 is the stronger user). When the direct path vanishes its phase is
    taken as zero.
    """
    if ch.N != 1 or ch.K != 2:
        raise ContractViolation("closed form needs N=1 and K=2")
    direct = ch.v[1, 0].conj()
    xi = float(np.angle(direct)) if direct != 0 else 0.0
    phi = np.angle(ch.g[1].conj())
    psi = np.angle(ch.F[:, 0])
    return PhaseConfig(wrap_phase(xi - phi - psi))


def strengths_for(ch: ChannelSet, cands: np.ndarray) -> np.ndarray:
    """Channel strengths for unit-modulus candidates ``(D, M)`` -> ``(D, K)``."""
    cas = ch.cascades()
    h = np.einsum("dm,kmn->dkn", cands, cas[:, :-1, :]) + cas[None, :, -1, :]
    return np.sum(np.abs(h) ** 2, axis=-1)


@dataclass
class PhaseStep:
    phases: PhaseConfig
    q: float
    feasible: bool
    bisection_steps: int


def phase_opt_siso(ch: ChannelSet, alpha, power: float, bisect: BisectionConfig | None = None,
                   trials: int = 400, seed=0, incumbent=None) -> PhaseStep:
    """Bisection over ``Q`` with a relaxed phase feasibility problem.

    The returned ``q`` is re-evaluated at the returned phases; the
    incumbent (default all-zero phases) is kept whenever no candidate beats
    it.
    """
    bisect = bisect or BisectionConfig()
    a = np.asarray(getattr(alpha, "alpha", alpha), float)
    snr = power / ch.noise_power
    if incumbent is None:
        incumbent = np.zeros(ch.M)
    incumbent = np.asarray(incumbent, float)
    s_inc = channel_strengths(ch, incumbent)
    q_inc = float(maxmin_sinr_siso(s_inc, a, snr))
    if ch.M == 0:
        return PhaseStep(PhaseConfig(np.zeros(0)), q_inc, True, 0)

    K = ch.K
    cas = ch.cascades()
    G = np.array([gram(cas[k]) for k in range(K)]) * snr
    tail = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
    inc_ok = bool(order_consistent(s_inc))

    def test(q):
        coef = a - q * tail
        if np.any(coef <= 0):
            return None
        problem = unit_diagonal_problem(ch.M + 1)
        for k in range(K):
            problem.add({"E": G[k]}, ">=", q / coef[k])
        for k in range(K - 1):
            problem.add({"E": G[k + 1] - G[k]}, ">=", 0.0)
        sol = sdp.feasibility(problem)
        return sol.blocks["E"] if sol.status == sdp.FEASIBLE else None

    with np.errstate(divide="ignore"):
        ratio = np.where(tail[:-1] > 0, a[:-1] / tail[:-1], np.inf)
    ub = np.sum(np.abs(cas[:, :, 0]), axis=1) ** 2 * snr
    q_hi = min(float(ratio.min(initial=np.inf)), float(np.min(a * ub)))
    if bisect.q_max is not None:
        q_hi = min(q_hi, bisect.q_max)
    if inc_ok:
        lo, witness = q_inc, lift(incumbent)
    else:
        lo, witness = 0.0, None
    if bisect.q_min is not None and bisect.q_min > lo:
        lo, witness = bisect.q_min, test(bisect.q_min)
        if witness is None:
            lo = 0.0
    if witness is None:
        witness = test(max(lo, 1e-12 * q_hi))
    steps = 0
    if witness is not None and q_hi > lo:
        lo, witness, steps = bisect_max(test, lo, q_hi, bisect.eps_b, witness)

    rng = np.random.default_rng(seed)
    cands = [np.exp(1j * incumbent)[None, :], np.ones((1, ch.M))]
    if witness is not None:
        cands.append(gaussian_candidates(witness, trials, rng))
    cands = np.vstack(cands)
    S = strengths_for(ch, cands)
    q_all = maxmin_sinr_siso(S, a, snr)
    ok = order_consistent(S)
    ok[0] = True  # the incumbent is always admissible
    q_all = np.where(ok, q_all, -np.inf)
    best = int(np.argmax(q_all))
    feasible = bool(ok[1:].any()) or inc_ok
    return PhaseStep(PhaseConfig(phases_of(cands[best]), witness), float(q_all[best]),
                     feasible, steps)


# --------------------------------------------------------------------------
# overall alternating algorithm


def initial_candidates(ch: ChannelSet, ordering: OrderingResult | None) -> list:
    """All-zero phases followed by each user's strength maximizer, strongest first."""
    cands = [np.zeros(ch.M)]
    if ch.M and ordering is not None:
        cands += [np.asarray(ordering.best_phases[i], float) for i in ordering.permutation[::-1]]
    return cands


def _balanced_point(ch: ChannelSet, theta, power: float):
    s = channel_strengths(ch, theta)
    alloc, _ = optimal_power_allocation(effective_strengths(s), power, ch.noise_power)
    return alloc, float(maxmin_sinr_siso(s, alloc.alpha, power / ch.noise_power))


def _bcd_siso(ch: ChannelSet, theta, power: float, config: SolverConfig, ss):
    alloc, q = _balanced_point(ch, theta, power)
    trace, flags, lifted = [q], [], None
    if not order_consistent(channel_strengths(ch, theta)):
        flags.append("initial_order_violated")
    if ch.M == 0:
        return theta, alloc, trace, 1, flags, lifted
    for iterations in range(1, config.iteration_cap + 1):
        (step_seed,) = ss.spawn(1)
        step = phase_opt_siso(ch, alloc, power, BisectionConfig(eps_b=config.eps_b),
                              config.randomization, step_seed, incumbent=theta)
        if not step.feasible and "no_feasible_phase" not in flags:
            flags.append("no_feasible_phase")
        new_alloc, q_new = _balanced_point(ch, step.phases.theta, power)
        gain = q_new - q
        if gain >= 0:
            theta, alloc, q, lifted = step.phases.theta, new_alloc, q_new, step.phases.lifted
        trace.append(q)  # incumbent retention keeps the trace monotone
        if gain < config.eps * max(trace[-2], 1e-300):
            return theta, alloc, trace, iterations, flags, lifted
    flags.append("iteration_cap")
    return theta, alloc, trace, config.iteration_cap, flags, lifted


def solve_siso(ch: ChannelSet, ordering: OrderingResult, power: float,
               config: SolverConfig | None = None, seed=0) -> SolveResult:
    """Alternate phase optimization and closed-form power allocation.

    ``ch`` is in original user order; ``ordering.permutation`` fixes the
    decoding order. Each run stops when the relative gain of ``Q`` drops
    below ``config.eps``. The loop starts from the best-scoring candidate of
    :func:`initial_candidates`; with ``config.multi_start`` it is restarted
    from every candidate and the best run is kept (ties go to the earliest).
    """
    config = config or SolverConfig()
    if ch.N != 1:
        raise ContractViolation("solve_siso needs a single-antenna BS")
    t0 = time.perf_counter()
    perm = np.asarray(ordering.permutation, int)
    chd = ch.reorder(perm)
    snr = power / ch.noise_power
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    starts = initial_candidates(chd, _reorder_result(ordering, perm))
    if not config.multi_start:
        scores = [_balanced_point(chd, th, power)[1] for th in starts]
        starts = [starts[int(np.argmax(scores))]]
    best = None
    for theta0, child in zip(starts, ss.spawn(len(starts))):
        run = _bcd_siso(chd, theta0, power, config, child)
        if best is None or run[2][-1] > best[2][-1]:
            best = run
    theta, alloc, trace, iterations, flags, lifted = best

    gam = target_sinrs_siso(channel_strengths(chd, theta), alloc.alpha, snr)
    return SolveResult(float(gam.min()), rates_from_sinr(gam), alloc, PhaseConfig(theta, lifted),
                       iterations, trace, time.perf_counter() - t0, perm, flags)


def _reorder_result(ordering: OrderingResult, perm) -> OrderingResult:
    """Ordering expressed on a channel set already permuted by ``perm``."""
    return OrderingResult(np.arange(perm.size), ordering.strengths[perm],
                          ordering.best_phases[perm])

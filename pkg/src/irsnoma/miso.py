"""Multi-antenna base station: alternating phase / beamformer optimization.

Beams are columns of an ``N x K`` matrix in decoding order. The beam step
solves a minimum-power problem at a trial ``Q``; ``Q`` is feasible exactly
when that minimum power fits the budget.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import sdp
from .channels import ChannelSet, combined_channels
from .errors import ContractViolation
from .numerics import hermitian_eig, numerical_rank
from .ordering import OrderingResult
from .relax import bisect_max, gaussian_candidates, lift, phases_of, unit_diagonal_problem
from .siso import (PhaseConfig, SolveResult, SolverConfig, _reorder_result,
                   initial_candidates, optimal_power_allocation, rates_from_sinr,
                   effective_strengths)

RANK_TOL = 1e-6


@dataclass(frozen=True)
class BeamSet:
    W: np.ndarray  # N x K, column t serves flow t

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.W) ** 2))

    def scaled_to(self, power: float) -> "BeamSet":
        p = self.power
        if p <= 0:
            raise ContractViolation("cannot rescale an all-zero beam set")
        return BeamSet(self.W * np.sqrt(power / p))


def beam_gains(h: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``G[..., k, i] = |h_k w_i|^2`` for channels ``h`` of shape ``(..., K, N)``."""
    return np.abs(h @ W) ** 2


def sinr_miso(h: np.ndarray, beams: BeamSet, noise: float, t: int, k: int) -> float:
    """SINR of user ``k`` decoding flow ``t`` (``k >= t``)."""
    if k < t:
        raise ContractViolation("user k only decodes flows t <= k")
    g = beam_gains(h, beams.W)
    return float(g[k, t] / (g[k, t + 1:].sum() + noise))


def target_sinrs_from_gains(g: np.ndarray, noise: float) -> np.ndarray:
    """Per-flow target SINR from a gain array ``(..., K, K)``."""
    K = g.shape[-1]
    # interference on user k when decoding flow t: sum over i > t
    tail = np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]
    interf = np.concatenate([tail[..., 1:], np.zeros(g.shape[:-1] + (1,))], axis=-1)
    own = np.swapaxes(g, -1, -2)          # [t, k] = g[k, t]
    interf = np.swapaxes(interf, -1, -2)  # [t, k]
    gam = own / (interf + noise)
    mask = np.triu(np.ones((K, K), bool))
    return np.min(np.where(mask, gam, np.inf), axis=-1)


def target_sinrs_miso(h: np.ndarray, beams: BeamSet, noise: float) -> np.ndarray:
    return target_sinrs_from_gains(beam_gains(h, beams.W), noise)


def maxmin_sinr_miso(h, beams: BeamSet, noise: float) -> float:
    return float(np.min(target_sinrs_miso(h, beams, noise)))


# --------------------------------------------------------------------------
# beam step


def _beam_names(K):
    return [f"W{t}" for t in range(K)]


def beamforming_opt(h: np.ndarray, q: float, power: float, noise: float):
    """Relaxed minimum-power beam covariances meeting target SINR ``q``.

    Returns ``(omegas, p_min)`` with covariances in Watts, or
    ``(None, inf)`` when the solver cannot certify an optimum.
    """
    K, N = h.shape
    names = _beam_names(K)
    # work in units of the power budget so the data is well scaled
    Hs = np.einsum("kn,km->knm", h.conj(), h) * (power / noise)
    problem = sdp.SdpProblem([(nm, N) for nm in names])
    for k in range(K):
        for t in range(k + 1):
            coeffs = {names[t]: Hs[k]}
            for i in range(t + 1, K):
                coeffs[names[i]] = -q * Hs[k]
            problem.add(coeffs, ">=", q)
    problem.objective = {nm: np.eye(N) for nm in names}
    problem.sense = "min"
    sol = sdp.solve(problem)
    if not sol.ok:
        return None, np.inf
    omegas = [sol.blocks[nm] * power for nm in names]
    return omegas, float(sol.objective_value) * power


def rank_profile(omegas, tol: float = RANK_TOL) -> list:
    return [numerical_rank(om, tol) for om in omegas]


def extract_beams(omegas, h: np.ndarray, power: float, noise: float, trials: int,
                  rng: np.random.Generator) -> BeamSet:
    """Beams from covariances: exact factors when every rank is at most one,
    otherwise the best of Gaussian draws (plus principal directions)."""
    K = len(omegas)
    N = omegas[0].shape[0]
    factors = []
    for om in omegas:
        eig = hermitian_eig(0.5 * (om + om.conj().T))
        lam = np.clip(eig.values, 0.0, None)
        factors.append(eig.vectors * np.sqrt(lam)[None, :])
    principal = np.stack([f[:, 0] for f in factors], axis=1)
    if max(rank_profile(omegas)) <= 1:
        return BeamSet(principal)
    r = (rng.standard_normal((trials, K, N)) + 1j * rng.standard_normal((trials, K, N))) / np.sqrt(2)
    draws = np.einsum("tnm,dtm->dnt", np.stack(factors), r)
    cands = np.concatenate([principal[None], draws], axis=0)
    cands *= np.sqrt(power / np.sum(np.abs(cands) ** 2, axis=(1, 2)))[:, None, None]
    q = np.min(target_sinrs_from_gains(beam_gains(h[None], cands), noise), axis=-1)
    return BeamSet(cands[int(np.argmax(q))])


def sic_sinr_bound(h: np.ndarray, power: float, noise: float) -> float:
    """Upper bound on the max-min target SINR.

    User ``k`` must decode ``k + 1`` flows in turn, which forces received
    power ``noise * ((1 + Q)^(k+1) - 1)`` out of at most ``||h_k||^2 P``.
    """
    snr_k = np.sum(np.abs(h) ** 2, axis=1) * power / noise
    k = np.arange(1, h.shape[0] + 1)
    return float(np.min(np.expm1(np.log1p(snr_k) / k)))


@dataclass
class BeamStep:
    beams: BeamSet
    q: float
    omegas: list | None
    bisection_steps: int


def beam_step(h: np.ndarray, power: float, noise: float, incumbent: BeamSet,
              eps_b: float, trials: int, rng) -> BeamStep:
    q_inc = maxmin_sinr_miso(h, incumbent, noise)
    snr_bound = sic_sinr_bound(h, power, noise)

    def test(q):
        omegas, pmin = beamforming_opt(h, q, power, noise)
        return omegas if pmin <= power * (1 + 1e-9) else None

    lo, omegas = q_inc, None
    if lo <= 0:
        lo = 1e-12 * snr_bound
        omegas = test(lo)
        if omegas is None:
            return BeamStep(incumbent, q_inc, None, 0)
    lo, omegas, steps = bisect_max(test, lo, max(snr_bound, lo), eps_b, omegas)
    if omegas is None:
        return BeamStep(incumbent, q_inc, None, steps)
    beams = extract_beams(omegas, h, power, noise, trials, rng).scaled_to(power)
    q = maxmin_sinr_miso(h, beams, noise)
    if q < q_inc:
        return BeamStep(incumbent, q_inc, omegas, steps)
    return BeamStep(beams, q, omegas, steps)


# --------------------------------------------------------------------------
# phase step


@dataclass
class MisoPhaseStep:
    phases: PhaseConfig
    q: float
    bisection_steps: int


def _beam_cascades(ch: ChannelSet, W: np.ndarray) -> np.ndarray:
    """``c[k, i] = Gamma_k w_i`` of shape ``(K, K, M+1)``."""
    return np.einsum("kmn,ni->kim", ch.cascades(), W)


def phase_opt_miso(ch: ChannelSet, beams: BeamSet, eps_b: float = 1e-4, trials: int = 400,
                   seed=0, incumbent=None) -> MisoPhaseStep:
    """Bisection over ``Q`` with relaxed phases at fixed beams; never worse
    than the incumbent (default all-zero phases)."""
    noise = ch.noise_power
    incumbent = np.zeros(ch.M) if incumbent is None else np.asarray(incumbent, float)
    h_inc = combined_channels(ch, incumbent)
    q_inc = maxmin_sinr_miso(h_inc, beams, noise)
    if ch.M == 0:
        return MisoPhaseStep(PhaseConfig(np.zeros(0)), q_inc, 0)

    K = ch.K
    c = _beam_cascades(ch, beams.W)
    scale = float(np.max(np.abs(c))) ** 2
    R = np.einsum("kim,kil->kiml", c.conj(), c) / scale
    nscale = noise / scale

    def test(q):
        problem = unit_diagonal_problem(ch.M + 1)
        for k in range(K):
            for t in range(k + 1):
                a = R[k, t] - q * R[k, t + 1:].sum(axis=0)
                problem.add({"E": a}, ">=", q * nscale)
        sol = sdp.feasibility(problem)
        return sol.blocks["E"] if sol.status == sdp.FEASIBLE else None

    own = np.array([np.sum(np.abs(c[t, t])) ** 2 for t in range(K)])
    q_hi = float(np.min(own)) / noise
    lo, witness, steps = q_inc, lift(incumbent), 0
    if q_hi > lo:
        lo, witness, steps = bisect_max(test, lo, q_hi, eps_b, witness)

    rng = np.random.default_rng(seed)
    cands = np.vstack([np.exp(1j * incumbent)[None, :], gaussian_candidates(witness, trials, rng)])
    ext = np.concatenate([cands, np.ones((cands.shape[0], 1))], axis=1)
    gains = np.abs(np.einsum("dm,kim->dki", ext, c)) ** 2
    q_all = np.min(target_sinrs_from_gains(gains, noise), axis=-1)
    best = int(np.argmax(q_all))
    return MisoPhaseStep(PhaseConfig(phases_of(cands[best]), witness), float(q_all[best]), steps)


# --------------------------------------------------------------------------
# initialization and the overall loop


def matched_filter_beams(h: np.ndarray, power: float) -> BeamSet:
    K = h.shape[0]
    norms = np.linalg.norm(h, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return BeamSet((h.conj() / norms[:, None]).T * np.sqrt(power / K))


def weakest_direction_beams(h: np.ndarray, power: float, noise: float) -> BeamSet:
    """Every flow on the weakest user's matched direction, balanced power split."""
    nrm = np.linalg.norm(h[0])
    if nrm == 0:
        return matched_filter_beams(h, power)
    u = h[0].conj() / nrm
    s = np.abs(h @ u) ** 2
    if np.any(s <= 0):
        return matched_filter_beams(h, power)
    alloc, _ = optimal_power_allocation(effective_strengths(s), power, noise)
    return BeamSet(np.outer(u, np.sqrt(alloc.alpha * power)))


def initial_beams(h: np.ndarray, power: float, noise: float) -> BeamSet:
    cands = [matched_filter_beams(h, power), weakest_direction_beams(h, power, noise)]
    q = [maxmin_sinr_miso(h, b, noise) for b in cands]
    return cands[int(np.argmax(q))]


def solve_miso(ch: ChannelSet, ordering: OrderingResult, power: float,
               config: SolverConfig | None = None, seed=0) -> SolveResult:
    """Alternate the beam step and the phase step until the relative gain
    of ``Q`` drops below ``config.eps``.

    ``ch`` is in original user order; results are in decoding order.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    perm = np.asarray(ordering.permutation, int)
    chd = ch.reorder(perm)
    noise = ch.noise_power
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    best = None
    for th in initial_candidates(chd, _reorder_result(ordering, perm)):
        h = combined_channels(chd, th)
        b = initial_beams(h, power, noise)
        q = maxmin_sinr_miso(h, b, noise)
        if best is None or q > best[2]:
            best = (th, b, q)
    theta, beams, q = best
    trace, flags, lifted, omegas = [q], [], None, None
    iterations = 0
    for iterations in range(1, config.iteration_cap + 1):
        beam_ss, phase_ss = ss.spawn(2)
        h = combined_channels(chd, theta)
        bstep = beam_step(h, power, noise, beams, config.eps_b, config.randomization,
                          np.random.default_rng(beam_ss))
        if bstep.omegas is not None:
            omegas = bstep.omegas
        pstep = phase_opt_miso(chd, bstep.beams, config.eps_b, config.randomization,
                               phase_ss, incumbent=theta)
        q_new = maxmin_sinr_miso(combined_channels(chd, pstep.phases.theta), bstep.beams, noise)
        gain = q_new - q
        if gain >= 0:
            theta, beams, q = pstep.phases.theta, bstep.beams, q_new
            lifted = pstep.phases.lifted
        trace.append(q)
        if gain < config.eps * max(trace[-2], 1e-300):
            break
    else:
        flags.append("iteration_cap")

    gam = target_sinrs_miso(combined_channels(chd, theta), beams, noise)
    return SolveResult(float(gam.min()), rates_from_sinr(gam), beams, PhaseConfig(theta, lifted),
                       iterations, trace, time.perf_counter() - t0, perm, flags, omegas)

"""Combined-channel-strength (CCS) user ordering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sdp
from .channels import ChannelSet
from .errors import ContractViolation, NumericalFailure
from .relax import gaussian_candidates, gram, phases_of, unit_diagonal_problem

DEFAULT_TRIALS = 400


@dataclass(frozen=True)
class OrderingResult:
    """Users sorted weakest first.

    ``permutation[i]`` is the original index of the ``i``-th weakest user.
    ``strengths`` and ``best_phases`` are indexed by original user index.
    """

    permutation: np.ndarray
    strengths: np.ndarray
    best_phases: np.ndarray


def cophase_candidate(cascade: np.ndarray) -> np.ndarray:
    """Align every reflected term with the direct path.

    The channel is projected on the direct-path direction (or, without a
    direct path, on the dominant reflected direction) and each element is
    rotated onto the phase of the direct term.
    """
    J, direct = cascade[:-1], cascade[-1]
    nrm = np.linalg.norm(direct)
    if nrm > 0:
        d = direct.conj() / nrm
    else:
        _, _, vh = np.linalg.svd(J)
        d = vh[0].conj()
    # the direct term projects to the real positive number ||direct||
    return np.exp(-1j * np.angle(J @ d))


def _strengths(cascade: np.ndarray, cands: np.ndarray) -> np.ndarray:
    h = cands @ cascade[:-1] + cascade[-1][None, :]
    return np.sum(np.abs(h) ** 2, axis=1)


def max_combined_strength(ch: ChannelSet, user: int, randomization_trials: int = DEFAULT_TRIALS,
                          seed=0, return_bound: bool = False):
    """Largest ``||h_user||^2`` over IRS phases via SDR plus randomization.

    Returns ``(strength, phases)``, or ``(strength, phases, sdr_bound)`` when
    ``return_bound`` is set. The all-zero and co-phasing candidates are
    always scored alongside the random draws.
    """
    if randomization_trials < 1:
        raise ContractViolation("randomization_trials must be >= 1")
    if not 0 <= user < ch.K:
        raise IndexError(f"user {user} out of range")
    if ch.M == 0:
        s = float(np.sum(np.abs(ch.v[user]) ** 2))
        return (s, np.zeros(0), s) if return_bound else (s, np.zeros(0))

    cascade = ch.cascade(user)
    G = gram(cascade)
    scale = np.abs(G).max()
    problem = unit_diagonal_problem(ch.M + 1)
    problem.objective = {"E": G / scale}
    problem.sense = "max"
    sol = sdp.solve(problem)
    if not sol.ok:
        raise NumericalFailure(f"strength relaxation failed: {sol.status}")
    bound = sol.objective_value * scale

    rng = np.random.default_rng(seed)
    cands = gaussian_candidates(sol.blocks["E"], randomization_trials, rng)
    cands = np.vstack([np.ones(ch.M), cophase_candidate(cascade), cands])
    values = _strengths(cascade, cands)
    best = int(np.argmax(values))
    out = (float(values[best]), phases_of(cands[best]))
    return out + (float(bound),) if return_bound else out


def order_users(ch: ChannelSet, randomization_trials: int = DEFAULT_TRIALS, seed=0) -> OrderingResult:
    """Sort users ascending by maximal combined strength; ties by index."""
    if ch.K < 2:
        raise ContractViolation("ordering needs K >= 2")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(ch.K)
    strengths = np.empty(ch.K)
    phases = np.zeros((ch.K, ch.M))
    for k in range(ch.K):
        strengths[k], phases[k] = max_combined_strength(ch, k, randomization_trials, children[k])
    perm = np.argsort(strengths, kind="stable")
    return OrderingResult(perm, strengths, phases)

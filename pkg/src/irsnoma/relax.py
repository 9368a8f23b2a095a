"""Helpers shared by the semidefinite relaxations of the phase subproblems.

The lifted variable is ``E = w w^H`` with ``w = [exp(1j*theta); 1]``.
A quadratic ``|w^T c|^2`` equals ``Tr(R E)`` with ``R = conj(c) c^T``.
"""
from __future__ import annotations

import math

import numpy as np

from . import sdp
from .channels import wrap_phase
from .numerics import psd_sqrt_factor


def outer_lifted(c: np.ndarray) -> np.ndarray:
    """``R`` with ``Tr(R E) = |w^T c|^2`` for ``E = w w^H``."""
    return np.outer(c.conj(), c)


def gram(cascade: np.ndarray) -> np.ndarray:
    """``G`` with ``Tr(G E) = ||w^T Gamma||^2``."""
    return cascade.conj() @ cascade.T


def lift(theta) -> np.ndarray:
    w = np.append(np.exp(1j * np.asarray(theta, float)), 1.0)
    return np.outer(w, w.conj())


def unit_diagonal_problem(dim: int, name: str = "E") -> sdp.SdpProblem:
    problem = sdp.SdpProblem([(name, dim)])
    for i in range(dim):
        problem.fix_entry(name, i, 1.0)
    return problem


def gaussian_candidates(E: np.ndarray, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus candidates drawn from ``CN(0, E)``, normalized by the last entry.

    Returns a ``(trials + 1, M)`` complex array; row 0 is the principal
    eigenvector candidate, which costs nothing and is often the best.
    """
    m1 = E.shape[0]
    factor = psd_sqrt_factor(E)
    r = (rng.standard_normal((trials, m1)) + 1j * rng.standard_normal((trials, m1))) / math.sqrt(2.0)
    draws = r @ factor.T
    w, u = np.linalg.eigh(0.5 * (E + E.conj().T))
    draws = np.vstack([u[:, -1][None, :], draws])
    last = draws[:, -1:]
    last = np.where(np.abs(last) > 0, last, 1.0)
    ratio = draws[:, :-1] / last
    return np.exp(1j * np.angle(ratio))


def phases_of(u: np.ndarray) -> np.ndarray:
    return wrap_phase(np.angle(u))


def bisect_max(test, lo: float, hi: float, rel_tol: float, payload=None, max_steps: int = 200):
    """Largest ``q`` in ``[lo, hi]`` for which ``test(q)`` returns non-``None``.

    ``lo`` is assumed feasible with witness ``payload``. Steps are geometric
    while the bracket spans more than a factor of four and ``lo > 0``.
    """
    steps = 0
    while hi - lo > rel_tol * hi and steps < max_steps:
        if lo > 0 and hi > 4.0 * lo:
            mid = math.sqrt(lo * hi)
        else:
            mid = 0.5 * (lo + hi)
        res = test(mid)
        if res is not None:
            lo, payload = mid, res
        else:
            hi = mid
        steps += 1
    return lo, payload, steps

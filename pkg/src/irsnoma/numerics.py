"""Dense complex linear algebra used by the optimizers.

All tolerances are relative to the scale of the matrix at hand: channel
gains in this problem span many orders of magnitude, so absolute thresholds
would be meaningless.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, NotPSDError, NumericalFailure


class EigenDecomposition(NamedTuple):
    """Eigenvalues sorted descending, eigenvectors as matching columns."""

    values: np.ndarray
    vectors: np.ndarray


def _as_square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def hermitian_eig(a, rtol: float = 1e-10) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Ties keep LAPACK's index order so repeated runs give identical output.
    """
    a = _as_square(a, "A")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > rtol * max(scale, np.finfo(float).tiny):
        raise ContractViolation("A is not Hermitian within tolerance")
    w, u = np.linalg.eigh(hermitian_part(a))
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], u[:, order])


def _polish_eigpair(a, lam, v, pivot, steps=4):
    # Newton on (A - lam I) v = 0 with v[pivot] held fixed.
    n = a.shape[0]
    best = (lam, v, np.max(np.abs(a @ v - lam * v)))
    for _ in range(steps):
        r = a @ v - lam * v
        jac = a - lam * np.eye(n)
        jac[:, pivot] = -v
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam_new = lam + delta[pivot]
        v_new = v + delta
        v_new[pivot] = v[pivot]
        res = np.max(np.abs(a @ v_new - lam_new * v_new))
        if not np.isfinite(res) or res >= best[2]:
            break
        lam, v = lam_new, v_new
        best = (lam, v, res)
    return best


def dominant_eigpair(a, rtol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Perron root and nonnegative eigenvector of a nonnegative matrix.

    The eigenvector is scaled so its last component is 1 when that component
    is nonzero, otherwise so its largest component is 1.

    Raises
    ------
    NumericalFailure
        If the residual ``|A v - lam v|_inf`` cannot be driven below
        ``rtol * lam * |v|_inf``.
    """
    a = np.asarray(_as_square(a, "A"), dtype=float)
    if np.any(a < 0):
        raise ContractViolation("A must be entrywise nonnegative")
    n = a.shape[0]
    try:
        w, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    # The Perron root is real and equals the spectral radius.
    idx = int(np.argmax(w.real))
    lam = float(w[idx].real)
    v = vecs[:, idx].real.copy()
    if v.sum() < 0:
        v = -v
    v = np.where(v < 0, 0.0, v)
    vmax = v.max()
    if vmax <= 0:
        raise NumericalFailure("dominant eigenvector vanished")
    if v[-1] > 1e-12 * vmax:
        pivot = n - 1
    else:
        pivot = int(np.argmax(v))
    v = v / v[pivot]
    lam, v, res = _polish_eigpair(a, lam, v, pivot)
    v = np.where(v < 0, 0.0, v)
    vinf = np.max(np.abs(v))
    if res > rtol * max(abs(lam), np.finfo(float).tiny) * vinf:
        raise NumericalFailure(f"Perron residual {res:.3e} above tolerance")
    return lam, v


def numerical_rank(a, tol: float = 1e-8) -> int:
    """Number of eigenvalues above ``tol * lambda_max`` of a PSD matrix."""
    a = _as_square(a, "A")
    w = np.linalg.eigvalsh(hermitian_part(a))
    lmax = w.max() if w.size else 0.0
    if lmax <= 0:
        if w.size and w.min() < -tol * max(np.abs(w).max(), 0):
            raise NotPSDError("matrix is negative definite")
        return 0
    if w.min() < -tol * lmax:
        raise NotPSDError(f"eigenvalue {w.min():.3e} below -tol*lambda_max")
    return int(np.count_nonzero(w > tol * lmax))


def psd_sqrt_factor(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Return ``U diag(sqrt(max(w,0)))`` with ``a ~= F F^H``."""
    w, u = np.linalg.eigh(hermitian_part(a))
    w = np.where(w > rtol * max(w.max(initial=0.0), 0.0), w, 0.0)
    return u * np.sqrt(w)

"""Dense primal-dual interior-point solver for small complex SDPs.

Problems have Hermitian PSD matrix blocks and real linear trace constraints::

    max / min   sum_b Tr(C_b X_b)
    s.t.        sum_b Tr(A_ib X_b)  (>=, <=, ==)  r_i
                X_b >= 0

Internally each problem is brought to the standard form
``min <C,X> + c'x  s.t.  A(X) + Ax = b,  X psd,  x >= 0`` where the
nonnegative vector ``x`` collects inequality slacks. The solver is an
infeasible-start path-following method using the HKM search direction with
a Mehrotra predictor-corrector step, working natively on complex Hermitian
blocks.

Feasibility questions are answered by a phase-I problem that minimizes the
largest normalized constraint violation ``s`` over ``s >= -1``; the point is
declared feasible when ``s <= margin``. The same phase-I answers infeasibility
for :func:`solve`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

MAX_BLOCK_DIM = 256
MAX_ITER = 200
FEASIBILITY_MARGIN = 1e-7
_SENSES = (">=", "<=", "==")


@dataclass
class Constraint:
    """``sum_b Tr(coeffs[b] X_b)  sense  rhs``."""

    coeffs: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ContractViolation(f"unknown constraint sense {self.sense!r}")


@dataclass
class SdpProblem:
    blocks: list
    constraints: list = field(default_factory=list)
    objective: dict | None = None
    sense: str = "max"

    def add(self, coeffs: dict, sense: str, rhs: float) -> None:
        self.constraints.append(Constraint(coeffs, sense, float(rhs)))

    def fix_entry(self, block: str, index: int, value: float) -> None:
        """Pin the real diagonal entry ``X_b[index, index]`` to ``value``."""
        n = self.dim(block)
        a = np.zeros((n, n), complex)
        a[index, index] = 1.0
        self.add({block: a}, "==", value)

    def dim(self, block: str) -> int:
        for name, n in self.blocks:
            if name == block:
                return n
        raise KeyError(block)


@dataclass
class SdpSolution:
    status: str
    blocks: dict
    objective_value: float
    duality_gap: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


# --------------------------------------------------------------------------
# standard form


@dataclass
class _StdForm:
    names: list
    dims: list
    A: list          # per block (m, n, n) complex
    Alp: np.ndarray  # (m, nlp)
    b: np.ndarray
    C: list
    clp: np.ndarray


def _validate(problem: SdpProblem) -> dict:
    dims = {}
    for name, n in problem.blocks:
        if name in dims:
            raise ContractViolation(f"duplicate block {name!r}")
        if not 1 <= n <= MAX_BLOCK_DIM:
            raise ContractViolation(f"block {name!r} dimension {n} outside [1, {MAX_BLOCK_DIM}]")
        dims[name] = n

    def check(mat, name):
        if name not in dims:
            raise ContractViolation(f"unknown block {name!r}")
        mat = np.asarray(mat)
        if mat.shape != (dims[name], dims[name]):
            raise ContractViolation(f"coefficient for {name!r} has shape {mat.shape}")
        scale = max(np.abs(mat).max(initial=0.0), 1e-300)
        if np.abs(mat - mat.conj().T).max(initial=0.0) > 1e-10 * scale:
            raise ContractViolation(f"coefficient for {name!r} is not Hermitian")

    for con in problem.constraints:
        for name, mat in con.coeffs.items():
            check(mat, name)
    if problem.objective:
        for name, mat in problem.objective.items():
            check(mat, name)
    if problem.sense not in ("max", "min"):
        raise ContractViolation("sense must be 'max' or 'min'")
    return dims


def _row_matrices(problem, dims, con):
    return {name: 0.5 * (np.asarray(m, complex) + np.asarray(m, complex).conj().T)
            for name, m in con.coeffs.items()}


def _row_norm(mats) -> float:
    return math.sqrt(sum(float(np.sum(np.abs(m) ** 2)) for m in mats.values()))


def _assemble(problem, dims, rows, nlp, C, clp) -> _StdForm:
    names = [name for name, _ in problem.blocks]
    m = len(rows)
    A = [np.zeros((m, dims[n], dims[n]), complex) for n in names]
    Alp = np.zeros((m, nlp))
    b = np.zeros(m)
    for i, (mats, lp, rhs) in enumerate(rows):
        for j, name in enumerate(names):
            if name in mats:
                A[j][i] = mats[name]
        for idx, val in lp.items():
            Alp[i, idx] = val
        b[i] = rhs
    Cb = [np.asarray(C.get(n, np.zeros((dims[n], dims[n]))), complex) for n in names]
    return _StdForm(names, [dims[n] for n in names], A, Alp, b, Cb, np.asarray(clp, float))


# --------------------------------------------------------------------------
# interior-point core


def _herm(a):
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def _aop(A, W):
    """``Re Tr(A_i W)`` for each constraint ``i``."""
    m = A.shape[0]
    return np.real(A.reshape(m, -1) @ W.T.reshape(-1))


def _max_step(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Linv = np.linalg.inv(L)
    T = Linv @ dX @ Linv.conj().T
    lam = np.linalg.eigvalsh(_herm(T)).min()
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


def _ipm(sf: _StdForm, tol: float, max_iter: int):
    try:
        with np.errstate(all="ignore"):
            return _ipm_core(sf, tol, max_iter)
    except (np.linalg.LinAlgError, FloatingPointError):
        X = [np.zeros((n, n), complex) for n in sf.dims]
        nlp = sf.Alp.shape[1]
        return (NUMERICAL_FAILURE, X, np.zeros(nlp), np.zeros(sf.b.size), math.nan, math.nan,
                math.inf, math.inf, max_iter)


def _ipm_core(sf: _StdForm, tol: float, max_iter: int):
    m = sf.b.size
    nlp = sf.Alp.shape[1]
    n_tot = sum(sf.dims) + nlp
    normb = 1.0 + np.linalg.norm(sf.b)
    normC = 1.0 + math.sqrt(sum(np.linalg.norm(c) ** 2 for c in sf.C) + float(sf.clp @ sf.clp))

    anorm = np.zeros(m)
    for Ab in sf.A:
        anorm += np.sum(np.abs(Ab.reshape(m, -1)) ** 2, axis=1)
    anorm += np.sum(sf.Alp ** 2, axis=1)
    anorm = np.sqrt(anorm)
    nmax = max(sf.dims + [1])
    xi = max(10.0, math.sqrt(nmax), nmax * float(np.max((1 + np.abs(sf.b)) / (1 + anorm), initial=1.0)))
    eta = max(10.0, math.sqrt(nmax), normC, float(anorm.max(initial=1.0)))

    X = [xi * np.eye(n, dtype=complex) for n in sf.dims]
    Z = [eta * np.eye(n, dtype=complex) for n in sf.dims]
    x = np.full(nlp, xi)
    z = np.full(nlp, eta)
    y = np.zeros(m)

    status = NUMERICAL_FAILURE
    pobj = dobj = math.nan
    it = 0
    best = None
    for it in range(1, max_iter + 1):
        AX = sf.Alp @ x
        for Ab, Xb in zip(sf.A, X):
            AX = AX + _aop(Ab, Xb)
        rp = sf.b - AX
        Rd = [Cb - Zb - np.tensordot(y, Ab, axes=1) for Cb, Zb, Ab in zip(sf.C, Z, sf.A)]
        rd = sf.clp - z - sf.Alp.T @ y
        gap = sum(float(np.real(np.vdot(Xb, Zb))) for Xb, Zb in zip(X, Z)) + float(x @ z)
        mu = gap / n_tot
        pobj = sum(float(np.real(np.vdot(Cb, Xb))) for Cb, Xb in zip(sf.C, X)) + float(sf.clp @ x)
        dobj = float(sf.b @ y)
        pinf = np.linalg.norm(rp) / normb
        dinf = math.sqrt(sum(np.linalg.norm(r) ** 2 for r in Rd) + float(rd @ rd)) / normC
        relgap = max(gap, abs(pobj - dobj)) / (1.0 + abs(pobj) + abs(dobj))
        phi = max(pinf, dinf, relgap)
        if best is None or phi < best[0]:
            best = (phi, [b.copy() for b in X], x.copy(), pobj, dobj, relgap, pinf)
        if phi < tol:
            status = OPTIMAL
            break
        xmax = max([np.abs(b).max() for b in X] + [np.abs(x).max(initial=0.0)])
        if not np.isfinite(phi) or np.abs(y).max(initial=0.0) > 1e13 or xmax > 1e13:
            break

        try:
            Zinv = [_herm(np.linalg.inv(Zb)) for Zb in Z]
        except np.linalg.LinAlgError:
            break
        G = [Xb @ Ab @ Zi for Xb, Ab, Zi in zip(X, sf.A, Zinv)]
        Msch = (sf.Alp * (x / z)) @ sf.Alp.T
        for Ab, Gb in zip(sf.A, G):
            Msch += np.real(Ab.reshape(m, -1) @ Gb.transpose(0, 2, 1).reshape(m, -1).T)
        Msch = 0.5 * (Msch + Msch.T)
        reg = 1e-14 * max(np.abs(np.diag(Msch)).max(initial=1.0), 1.0)
        try:
            cho = np.linalg.cholesky(Msch + reg * np.eye(m))
        except np.linalg.LinAlgError:
            cho = None

        def solve_schur(r):
            if cho is not None:
                t = np.linalg.solve(cho, r)
                return np.linalg.solve(cho.T, t)
            return np.linalg.lstsq(Msch, r, rcond=None)[0]

        XRdZ = [Xb @ Rb @ Zi for Xb, Rb, Zi in zip(X, Rd, Zinv)]
        xz = x / z

        def direction(Rc, rc):
            rhs = rp - sf.Alp @ rc + sf.Alp @ (xz * rd)
            for Ab, Rcb, W in zip(sf.A, Rc, XRdZ):
                rhs = rhs - _aop(Ab, Rcb) + _aop(Ab, W)
            dy = solve_schur(rhs)
            dZ = [Rb - np.tensordot(dy, Ab, axes=1) for Rb, Ab in zip(Rd, sf.A)]
            dX = [Rcb - _herm(Xb @ dZb @ Zi) for Rcb, Xb, dZb, Zi in zip(Rc, X, dZ, Zinv)]
            dz = rd - sf.Alp.T @ dy
            dx = rc - xz * dz
            return dX, dx, dy, dZ, dz

        def steps(dX, dx, dZ, dz):
            ap = min([_max_step(Xb, d) for Xb, d in zip(X, dX)] + [_max_step_lp(x, dx)])
            ad = min([_max_step(Zb, d) for Zb, d in zip(Z, dZ)] + [_max_step_lp(z, dz)])
            return ap, ad

        # predictor
        dX, dx, dy, dZ, dz = direction([-Xb for Xb in X], -x)
        ap, ad = steps(dX, dx, dZ, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_aff = sum(float(np.real(np.vdot(Xb + ap * a, Zb + ad * c)))
                      for Xb, a, Zb, c in zip(X, dX, Z, dZ)) + float((x + ap * dx) @ (z + ad * dz))
        sigma = min(1.0, max(0.0, (gap_aff / gap) ** 3)) if gap > 0 else 0.0

        # corrector
        Rc = [sigma * mu * Zi - Xb - _herm(a @ c @ Zi)
              for Zi, Xb, a, c in zip(Zinv, X, dX, dZ)]
        rc = sigma * mu / z - x - dx * dz / z
        dX, dx, dy, dZ, dz = direction(Rc, rc)
        ap, ad = steps(dX, dx, dZ, dz)
        tau = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, tau * ap), min(1.0, tau * ad)

        X = [_herm(Xb + ap * d) for Xb, d in zip(X, dX)]
        x = x + ap * dx
        y = y + ad * dy
        Z = [_herm(Zb + ad * d) for Zb, d in zip(Z, dZ)]
        z = z + ad * dz

    if status != OPTIMAL and best is not None:
        phi, Xb, xb, pobj_b, dobj_b, relgap_b, pinf_b = best
        return NUMERICAL_FAILURE, Xb, xb, y, pobj_b, dobj_b, relgap_b, pinf_b, it
    return status, X, x, y, pobj, dobj, relgap, pinf, it


# --------------------------------------------------------------------------
# public API


def _normalized_rows(problem, dims):
    """Yield ``(mats, sense, rhs)`` with each row scaled to unit size.

    Rows with an all-zero left side are returned separately as constants.
    """
    rows, constants = [], []
    for con in problem.constraints:
        mats = _row_matrices(problem, dims, con)
        scale = max(_row_norm(mats), abs(con.rhs))
        if _row_norm(mats) == 0.0:
            constants.append((con.sense, con.rhs))
            continue
        rows.append(({k: v / scale for k, v in mats.items()}, con.sense, con.rhs / scale))
    return rows, constants


def _constant_ok(sense, rhs, margin):
    if sense == ">=":
        return 0.0 >= rhs - margin
    if sense == "<=":
        return 0.0 <= rhs + margin
    return abs(rhs) <= margin


def _zero_blocks(problem):
    return {name: np.zeros((n, n), complex) for name, n in problem.blocks}


def feasibility(problem: SdpProblem, tolerance: float = 1e-9,
                margin: float = FEASIBILITY_MARGIN) -> SdpSolution:
    """Find a point maximizing the smallest normalized constraint slack.

    ``objective_value`` is the largest normalized violation ``s`` (negative
    when every inequality holds strictly); the status is ``feasible`` when
    ``s <= margin``.
    """
    dims = _validate(problem)
    rows, constants = _normalized_rows(problem, dims)
    if not all(_constant_ok(s, r, margin) for s, r in constants):
        return SdpSolution(INFEASIBLE, _zero_blocks(problem), math.inf, math.nan, 0)
    if not rows:
        return SdpSolution(FEASIBLE, _zero_blocks(problem), 0.0, 0.0, 0)

    n_ineq = sum(1 for _, s, _ in rows if s != "==")
    std_rows = []
    slack = 1
    for mats, sense, rhs in rows:
        if sense == ">=":
            std_rows.append((mats, {0: 1.0, slack: -1.0}, rhs + 1.0))
            slack += 1
        elif sense == "<=":
            std_rows.append((mats, {0: -1.0, slack: 1.0}, rhs - 1.0))
            slack += 1
        else:
            std_rows.append((mats, {}, rhs))
    if n_ineq:
        nlp, clp = 1 + n_ineq, np.r_[1.0, np.zeros(n_ineq)]
    else:
        nlp, clp = 0, np.zeros(0)
    sf = _assemble(problem, dims, std_rows, nlp, {}, clp)
    status, X, x, _, pobj, dobj, relgap, pinf, iters = _ipm(sf, tolerance, MAX_ITER)
    blocks = dict(zip(sf.names, X))
    if n_ineq:
        violation = float(x[0]) - 1.0
        if status != OPTIMAL:
            # An unconverged run still certifies infeasibility when even the
            # dual bound exceeds the margin.
            if dobj - 1.0 > margin and np.isfinite(dobj):
                return SdpSolution(INFEASIBLE, blocks, dobj - 1.0, relgap, iters)
            if pinf < 1e-7 and violation <= margin:
                return SdpSolution(FEASIBLE, blocks, violation, relgap, iters)
            return SdpSolution(NUMERICAL_FAILURE, blocks, violation, relgap, iters)
        ok = violation <= margin
        return SdpSolution(FEASIBLE if ok else INFEASIBLE, blocks, violation, relgap, iters)
    # equalities only
    if status == OPTIMAL or pinf < 1e-7:
        return SdpSolution(FEASIBLE, blocks, 0.0, relgap, iters)
    return SdpSolution(INFEASIBLE if pinf > 1e-3 else NUMERICAL_FAILURE, blocks,
                       math.inf, relgap, iters)


def check_feasible(problem: SdpProblem) -> str:
    return feasibility(problem).status


def solve(problem: SdpProblem, tolerance: float = 1e-9) -> SdpSolution:
    """Optimize the problem's objective.

    Returns status ``optimal`` on convergence, ``infeasible`` when phase-I
    certifies a positive violation, and ``numerical_failure`` otherwise.
    """
    dims = _validate(problem)
    rows, constants = _normalized_rows(problem, dims)
    if not all(_constant_ok(s, r, FEASIBILITY_MARGIN) for s, r in constants):
        return SdpSolution(INFEASIBLE, _zero_blocks(problem), math.nan, math.nan, 0)
    sign = -1.0 if problem.sense == "max" else 1.0
    obj = {k: sign * np.asarray(v, complex) for k, v in (problem.objective or {}).items()}
    cscale = max(_row_norm(obj), 1e-300) if obj else 1.0
    obj = {k: v / cscale for k, v in obj.items()}
    if not rows:
        if not obj or all(np.abs(v).max() == 0 for v in obj.values()):
            return SdpSolution(OPTIMAL, _zero_blocks(problem), 0.0, 0.0, 0)

    std_rows = []
    slack = 0
    for mats, sense, rhs in rows:
        if sense == ">=":
            std_rows.append((mats, {slack: -1.0}, rhs))
            slack += 1
        elif sense == "<=":
            std_rows.append((mats, {slack: 1.0}, rhs))
            slack += 1
        else:
            std_rows.append((mats, {}, rhs))
    sf = _assemble(problem, dims, std_rows, slack, obj, np.zeros(slack))
    status, X, x, y, pobj, dobj, relgap, pinf, iters = _ipm(sf, tolerance, MAX_ITER)
    blocks = dict(zip(sf.names, X))
    value = sign * pobj * cscale
    if status == OPTIMAL:
        return SdpSolution(OPTIMAL, blocks, value, relgap, iters)
    phase1 = feasibility(problem, tolerance)
    if phase1.status == INFEASIBLE:
        return SdpSolution(INFEASIBLE, phase1.blocks, math.nan, math.nan, iters + phase1.iterations)
    if pinf < 1e-7 and relgap < 1e-5:
        return SdpSolution(FEASIBLE, blocks, value, relgap, iters)
    return SdpSolution(NUMERICAL_FAILURE, blocks, value, relgap, iters)

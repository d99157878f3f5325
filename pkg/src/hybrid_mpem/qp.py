"""Dense strictly convex QP solver for the node subproblems.

Solves

    minimize    1/2 x'Qx + c'x
    subject to  A_eq x  = b_eq
                A_ineq x <= b_ineq
                lb <= x <= ub

with the Goldfarb-Idnani dual active-set method.  The method starts from the
unconstrained minimizer and adds violated constraints one at a time, so it
needs no feasible starting point and reports infeasibility with a Farkas
certificate.  Problems here are tiny (h <= 50 variables), so every step
re-forms the small projected matrices instead of updating factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import lsq_linear

from ._jit import njit

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "solve",
    "kkt_residual",
]

_EPS = np.finfo(float).eps

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


_STATUS = {
    STATUS_OPTIMAL: QpStatus.OPTIMAL,
    STATUS_INFEASIBLE: QpStatus.INFEASIBLE,
    STATUS_MAX_ITER: QpStatus.MAX_ITER,
}


def _as_opt(v, n, name):
    if v is None:
        return None
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
    return a


@dataclass(frozen=True)
class QpProblem:
    """Canonical QP data.  Unused constraint families are left as ``None``."""

    Q: np.ndarray
    c: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    _rows: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=1e-12, atol=0.0):
            raise ValueError("Q must be symmetric")
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.shape != (n,):
            raise ValueError(f"c must have shape ({n},), got {c.shape}")
        lb = _as_opt(self.lb, n, "lb")
        ub = _as_opt(self.ub, n, "ub")
        if lb is not None and ub is not None and np.any(lb > ub):
            raise ValueError("lb must not exceed ub")
        A_ineq, b_ineq = self._pair(self.A_ineq, self.b_ineq, n, "ineq")
        A_eq, b_eq = self._pair(self.A_eq, self.b_eq, n, "eq")
        for name, val in [("Q", Q), ("c", c), ("lb", lb), ("ub", ub), ("A_ineq", A_ineq),
                          ("b_ineq", b_ineq), ("A_eq", A_eq), ("b_eq", b_eq)]:
            object.__setattr__(self, name, val)

    @staticmethod
    def _pair(A, b, n, name):
        if A is None and b is None:
            return None, None
        if A is None or b is None:
            raise ValueError(f"A_{name} and b_{name} must be given together")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape != (b.size, n):
            raise ValueError(f"A_{name} must have shape ({b.size}, {n}), got {A.shape}")
        return A, b

    @property
    def n(self) -> int:
        return self.c.size

    def constraint_rows(self):
        """All constraints stacked as ``C x (=|<=) d``; equalities first.

        Returns ``(C, d, meq)``.  Row order: equalities, general inequalities,
        finite upper bounds, finite lower bounds.
        """
        if self._rows is not None:
            return self._rows
        n = self.n
        eye = np.eye(n)
        C_parts, d_parts = [], []
        meq = 0
        if self.A_eq is not None:
            C_parts.append(self.A_eq)
            d_parts.append(self.b_eq)
            meq = self.b_eq.size
        if self.A_ineq is not None:
            C_parts.append(self.A_ineq)
            d_parts.append(self.b_ineq)
        if self.ub is not None:
            fin = np.isfinite(self.ub)
            C_parts.append(eye[fin])
            d_parts.append(self.ub[fin])
        if self.lb is not None:
            fin = np.isfinite(self.lb)
            C_parts.append(-eye[fin])
            d_parts.append(-self.lb[fin])
        if C_parts:
            C = np.ascontiguousarray(np.vstack(C_parts))
            d = np.ascontiguousarray(np.concatenate(d_parts))
        else:
            C = np.zeros((0, n))
            d = np.zeros(0)
        rows = (C, d, meq)
        object.__setattr__(self, "_rows", rows)
        return rows

    def with_linear(self, c) -> "QpProblem":
        """Same constraints and Hessian, new linear term (constraint stack reused)."""
        new = QpProblem.__new__(QpProblem)
        for name in ("Q", "lb", "ub", "A_ineq", "b_ineq", "A_eq", "b_eq"):
            object.__setattr__(new, name, getattr(self, name))
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.shape != self.c.shape:
            raise ValueError("linear term has the wrong length")
        object.__setattr__(new, "c", c)
        object.__setattr__(new, "_rows", self._rows)
        return new


@dataclass(frozen=True)
class QpSolution:
    x_star: np.ndarray
    kkt_residual: float
    iterations: int
    status: QpStatus
    multipliers: np.ndarray  # one per stacked row of constraint_rows(), >= 0 for inequalities
    certificate: np.ndarray | None = None  # Farkas ray over stacked rows when infeasible

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


# --------------------------------------------------------------------------
# compiled core


@njit(nogil=True)
def _solve_small(M, b):
    # Gaussian elimination with partial pivoting; cheaper than LAPACK at these sizes
    q = b.shape[0]
    A = M.copy()
    x = b.copy()
    for k in range(q):
        piv = k
        big = abs(A[k, k])
        for i in range(k + 1, q):
            if abs(A[i, k]) > big:
                big = abs(A[i, k])
                piv = i
        if piv != k:
            for j in range(q):
                A[k, j], A[piv, j] = A[piv, j], A[k, j]
            x[k], x[piv] = x[piv], x[k]
        for i in range(k + 1, q):
            f = A[i, k] / A[k, k]
            for j in range(k + 1, q):
                A[i, j] -= f * A[k, j]
            x[i] -= f * x[k]
    for k in range(q - 1, -1, -1):
        s = x[k]
        for j in range(k + 1, q):
            s -= A[k, j] * x[j]
        x[k] = s / A[k, k]
    return x


@njit(nogil=True)
def _directions(Hinv, N, q, nvec):
    # primal step z and dual step r for adding normal nvec to the active set
    n = Hinv.shape[0]
    w = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Hinv[i, j] * nvec[j]
        w[i] = acc
    if q == 0:
        return w, np.zeros(0)
    B = np.zeros((q, n))  # B = N_q Hinv, rows are the active normals mapped through Hinv
    for k in range(q):
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += N[k, i] * Hinv[i, j]
            B[k, j] = acc
    M = np.zeros((q, q))
    rhs = np.zeros(q)
    for k in range(q):
        acc = 0.0
        for j in range(n):
            acc += N[k, j] * w[j]
        rhs[k] = acc
        for l in range(q):
            acc = 0.0
            for j in range(n):
                acc += B[k, j] * N[l, j]
            M[k, l] = acc
    r = _solve_small(M, rhs)
    z = w.copy()
    for k in range(q):
        for j in range(n):
            z[j] -= B[k, j] * r[k]
    return z, r


@njit(nogil=True)
def _row_slack(Cn, dn, i, x):
    # slack d_i - C_i x and the magnitude used for its tolerance
    acc = 0.0
    mag = 0.0
    for j in range(x.shape[0]):
        acc += Cn[i, j] * x[j]
        mag += abs(Cn[i, j] * x[j])
    return dn[i] - acc, abs(dn[i]) + mag


@njit(nogil=True)
def _inverse(H):
    n = H.shape[0]
    diag = True
    for i in range(n):
        for j in range(n):
            if i != j and H[i, j] != 0.0:
                diag = False
    if diag:
        Hinv = np.zeros((n, n))
        for i in range(n):
            Hinv[i, i] = 1.0 / H[i, i]
        return Hinv
    Hinv = np.linalg.inv(H)
    return 0.5 * (Hinv + Hinv.T)


@njit(nogil=True)
def _dual_active_set(H, c, C, d, meq, max_iter):
    """Goldfarb-Idnani on ``C[:meq] x = d[:meq]``, ``C[meq:] x <= d[meq:]``.

    Returns (x, lam, status, iterations, certificate).
    """
    n = H.shape[0]
    m = C.shape[0]
    Hinv = _inverse(H)

    scale = np.ones(m)
    Cn = np.empty((m, n))
    dn = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += C[i, j] * C[i, j]
        s = np.sqrt(s)
        if s > 0.0:
            scale[i] = s
        for j in range(n):
            Cn[i, j] = C[i, j] / scale[i]
        dn[i] = d[i] / scale[i]

    x = -(Hinv @ c)
    lam = np.zeros(m)
    cert = np.zeros(m)
    N = np.zeros((n, n))  # active normals, >= orientation, one per row
    active = np.full(n, -1)
    orient = np.ones(m)
    u = np.zeros(n)
    is_active = np.zeros(m, dtype=np.bool_)
    q = 0
    it = 0

    for i in range(m):
        nz = False
        for j in range(n):
            if Cn[i, j] != 0.0:
                nz = True
                break
        if not nz:
            bad = dn[i] < 0.0 if i >= meq else dn[i] != 0.0
            if bad:
                cert[i] = 1.0 / scale[i]
                return x, lam, 1, it, cert
            is_active[i] = True  # trivially satisfied, never selected

    # equalities: always added, never dropped
    for p in range(meq):
        if is_active[p]:
            continue
        slack = dn[p] - Cn[p] @ x
        o = 1.0 if slack <= 0.0 else -1.0
        nvec = -o * Cn[p]
        z, r = _directions(Hinv, N, q, nvec)
        zn = z @ nvec
        wn = nvec @ (Hinv @ nvec)
        mag = abs(dn[p]) + np.abs(Cn[p]) @ np.abs(x)
        if zn <= 1e-12 * wn:
            if abs(slack) <= 1e3 * 2.220446049250313e-16 * (1.0 + mag):
                is_active[p] = True  # redundant equality
                continue
            cert[p] = o / scale[p]
            for j in range(q):
                cert[active[j]] = -r[j] * orient[active[j]] / scale[active[j]]
            return x, lam, 1, it, cert
        t = -(o * slack) / zn
        x = x + t * z
        for j in range(q):
            u[j] -= t * r[j]
        N[q, :] = nvec
        active[q] = p
        u[q] = t
        orient[p] = o
        is_active[p] = True
        q += 1
        it += 1

    status = 0
    while True:
        p = -1
        worst = 0.0
        for i in range(meq, m):
            if is_active[i]:
                continue
            slack, mag = _row_slack(Cn, dn, i, x)
            tol = 10.0 * 2.220446049250313e-16 * (1.0 + mag)
            if slack < -tol and slack < worst:
                worst = slack
                p = i
        if p < 0:
            break

        nvec = -Cn[p]
        up = 0.0
        added = False
        while not added:
            it += 1
            if it > max_iter:
                status = 2
                break
            z, r = _directions(Hinv, N, q, nvec)
            t1 = np.inf
            k = -1
            for j in range(q):
                if active[j] >= meq and r[j] > 1e-14:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        k = j
            zn = 0.0
            wn = 0.0
            for j in range(n):
                zn += z[j] * nvec[j]
                acc = 0.0
                for i in range(n):
                    acc += Hinv[j, i] * nvec[i]
                wn += nvec[j] * acc
            if zn > 1e-12 * wn:
                t2 = -_row_slack(Cn, dn, p, x)[0] / zn
            else:
                t2 = np.inf
            if t1 == np.inf and t2 == np.inf:
                cert[p] = 1.0 / scale[p]
                for j in range(q):
                    a = active[j]
                    cert[a] = -r[j] * orient[a] / scale[a]
                return x, lam, 1, it, cert
            if t2 == np.inf:
                for j in range(q):
                    u[j] -= t1 * r[j]
                up += t1
            else:
                t = min(t1, t2)
                for j in range(n):
                    x[j] += t * z[j]
                for j in range(q):
                    u[j] -= t * r[j]
                up += t
                if t2 <= t1:
                    N[q, :] = nvec
                    active[q] = p
                    u[q] = up
                    is_active[p] = True
                    q += 1
                    added = True
                    continue
            # drop constraint k
            is_active[active[k]] = False
            for j in range(k, q - 1):
                N[j, :] = N[j + 1, :]
                active[j] = active[j + 1]
                u[j] = u[j + 1]
            q -= 1
            active[q] = -1
            u[q] = 0.0
        if status != 0:
            break

    if status == 0 and q > 0:
        x = _refine_active(Hinv, Cn, dn, active, q, x)
    for j in range(q):
        a = active[j]
        lam[a] = orient[a] * u[j] / scale[a]
    return x, lam, status, it, cert


@njit(nogil=True)
def _refine_active(Hinv, Cn, dn, active, q, x):
    # x is reached from the unconstrained minimiser, so active rows carry an
    # error of order eps*|Hinv c|; one projection step in the Hinv metric
    # restores them to the accuracy of x itself
    n = x.shape[0]
    A = np.zeros((q, n))
    r = np.zeros(q)
    for k in range(q):
        i = active[k]
        acc = 0.0
        for j in range(n):
            A[k, j] = Cn[i, j]
            acc += Cn[i, j] * x[j]
        r[k] = dn[i] - acc
    B = np.zeros((q, n))
    for k in range(q):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc += A[k, l] * Hinv[l, j]
            B[k, j] = acc
    M = np.zeros((q, q))
    for k in range(q):
        for l in range(q):
            acc = 0.0
            for j in range(n):
                acc += B[k, j] * A[l, j]
            M[k, l] = acc
    w = _solve_small(M, r)
    out = x.copy()
    for k in range(q):
        for j in range(n):
            out[j] += B[k, j] * w[k]
    if not np.all(np.isfinite(out)):
        return x
    return out


# --------------------------------------------------------------------------
# residuals


def _kkt_terms(Q, c, C, d, meq, x, lam):
    slack = d - C @ x
    viol = 0.0
    if meq:
        viol = float(np.max(np.abs(slack[:meq])))
    if slack.size > meq:
        viol = max(viol, float(np.max(np.maximum(-slack[meq:], 0.0))))
    Qx = Q @ x
    scale = 1.0 + float(np.max(np.abs(Qx), initial=0.0)) + float(np.max(np.abs(c), initial=0.0))
    grad = Qx + c + C.T @ lam
    station = float(np.max(np.abs(grad), initial=0.0)) / scale
    compl = 0.0
    dual_neg = 0.0
    if slack.size > meq:
        li = lam[meq:]
        compl = float(np.max(np.abs(li * slack[meq:]), initial=0.0))
        compl /= scale * (1.0 + float(np.max(np.abs(x), initial=0.0)))
        dual_neg = float(np.max(np.maximum(-li, 0.0), initial=0.0)) / scale
    return max(viol, station, compl, dual_neg)


def kkt_residual(p: QpProblem, x) -> float:
    """KKT residual of a candidate point, with multipliers estimated from ``x``.

    The value is the largest of: absolute primal violation; stationarity and
    dual-sign violation relative to ``1 + |Qx| + |c|``; complementarity
    relative to that scale times ``1 + |x|``.  Multipliers come from a
    sign-constrained least-squares fit over the (nearly) active rows.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (p.n,):
        raise ValueError(f"x must have shape ({p.n},), got {x.shape}")
    C, d, meq = p.constraint_rows()
    slack = d - C @ x
    mag = 1.0 + np.abs(d) + np.abs(C) @ np.abs(x)
    cand = np.zeros(slack.size, dtype=bool)
    cand[:meq] = True
    cand[meq:] = slack[meq:] <= 1e-7 * mag[meq:]
    lam = np.zeros(slack.size)
    idx = np.flatnonzero(cand)
    grad = p.Q @ x + p.c
    if idx.size:
        A = C[idx].T
        lo = np.where(idx < meq, -np.inf, 0.0)
        hi = np.full(idx.size, np.inf)
        fit = lsq_linear(A, -grad, bounds=(lo, hi), method="bvls", tol=1e-14)
        lam[idx] = fit.x
    return _kkt_terms(p.Q, p.c, C, d, meq, x, lam)


def solve(p: QpProblem, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Solve ``p``; ``status`` is optimal, infeasible, or max_iter."""
    try:
        np.linalg.cholesky(p.Q)
    except np.linalg.LinAlgError:
        raise ValueError("Q must be positive definite") from None
    C, d, meq = p.constraint_rows()
    if max_iter is None:
        max_iter = 50 + 10 * (p.n + C.shape[0])
    x, lam, code, iters, cert = _dual_active_set(p.Q, p.c, C, d, meq, int(max_iter))
    status = _STATUS[int(code)]
    res = _kkt_terms(p.Q, p.c, C, d, meq, x, lam)
    if status is QpStatus.OPTIMAL and res > tol:
        # reported, not hidden: callers treat non-optimal as failure
        status = QpStatus.MAX_ITER
    return QpSolution(
        x_star=x,
        kkt_residual=res,
        iterations=int(iters),
        status=status,
        multipliers=lam,
        certificate=cert if status is QpStatus.INFEASIBLE else None,
    )

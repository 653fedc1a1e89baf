"""Dense convex quadratic programming.

Problems are minimize 0.5 x'Px + f'x subject to A_eq x = b_eq and
A_in x <= b_in. The equality solver factors the KKT system directly
(symmetric indefinite LDL', one step of iterative refinement); singular
systems fall back to a null-space solve that keeps constraint feasibility
at machine precision no matter how badly P dwarfs the constraint rows.
Inequalities are handled by an active-set loop: start from the
equality-only solution, add the most violated constraint, drop the most
negative multiplier, ties broken by lowest index. A new row whose normal
is dependent on the working set triggers a dual step (drop the row with
the smallest multiplier-to-dual-direction ratio) so the loop can walk off
an over-determined vertex. Infeasibility is certified by a phase-1 linear
program rather than guessed from iteration failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

# residual scales for accepting a KKT solution, relative to problem data
_STAT_TOL = 1e-8
_FEAS_TOL = 1e-8
_DUAL_TOL = 1e-10


@dataclass(frozen=True)
class QuadProgram:
    """Dense QP data; inequality rows are optional, equalities too."""

    P: np.ndarray
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        f = np.asarray(self.f, dtype=float).reshape(-1)
        d = f.shape[0]
        if P.shape != (d, d):
            raise ValueError("P must be d x d matching f")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "f", f)
        for attr, battr in (("A_eq", "b_eq"), ("A_in", "b_in")):
            A = getattr(self, attr)
            b = getattr(self, battr)
            if A is None:
                if b is not None and np.size(b):
                    raise ValueError(f"{battr} given without {attr}")
                object.__setattr__(self, attr, None)
                object.__setattr__(self, battr, None)
                continue
            A = np.asarray(A, dtype=float)
            if A.ndim != 2:
                A = A.reshape(-1, d) if d else np.zeros((0, 0))
            if A.shape[1] != d:
                raise ValueError(f"{attr} column count does not match f")
            b = np.asarray(b, dtype=float).reshape(-1)
            if A.shape[0] != b.shape[0]:
                raise ValueError(f"{attr} and {battr} row counts differ")
            object.__setattr__(self, attr, A)
            object.__setattr__(self, battr, b)

    @property
    def dim(self) -> int:
        return self.f.shape[0]

    @property
    def n_eq(self) -> int:
        return 0 if self.A_eq is None else self.A_eq.shape[0]

    @property
    def n_in(self) -> int:
        return 0 if self.A_in is None else self.A_in.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.f @ x)


@dataclass(frozen=True)
class QpSolution:
    """Primal/dual result with KKT residual diagnostics.

    status is one of "optimal", "infeasible", "max_iter", "nonconvex".
    mu covers every inequality row (zero off the active set).
    """

    x: np.ndarray
    lam_eq: np.ndarray
    mu: np.ndarray
    active_set: tuple
    status: str
    iterations: int = 0
    stationarity: float = np.nan
    feasibility: float = np.nan


class _LdlSolver:
    """Symmetric indefinite LDL' factorization with a block-diagonal solve.

    Deterministic (Bunch-Kaufman pivoting) and refactor-free across multiple
    right-hand sides; raises LinAlgError on a numerically singular pivot.
    """

    def __init__(self, K: np.ndarray):
        lu, d, perm = scipy.linalg.ldl(K, lower=True)
        self._M = lu[perm]             # unit lower triangular
        self._d = d
        self._perm = perm
        self._scale = max(np.max(np.abs(d)), 1.0) if d.size else 1.0
        self.inertia = self._inertia()

    def _inertia(self):
        """Eigenvalue sign counts (pos, neg, zero) of the block diagonal.

        The zero band is wide (1e-9 of the pivot scale) because Hessians
        assembled through ill-conditioned eliminations scatter their exact
        zeros to ~1e-11 of the scale; counting that debris as negative
        curvature would misreport convex problems.
        """
        d = self._d
        n = d.shape[0]
        tol = 1e-9 * self._scale
        pos = neg = zero = 0
        i = 0
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                tr = d[i, i] + d[i + 1, i + 1]
                det = d[i, i] * d[i + 1, i + 1] - d[i + 1, i] ** 2
                disc = np.sqrt(max(tr * tr - 4.0 * det, 0.0))
                for ev in ((tr + disc) / 2.0, (tr - disc) / 2.0):
                    pos, neg, zero = (pos + (ev > tol), neg + (ev < -tol),
                                      zero + (-tol <= ev <= tol))
                i += 2
            else:
                ev = d[i, i]
                pos, neg, zero = (pos + (ev > tol), neg + (ev < -tol),
                                  zero + (-tol <= ev <= tol))
                i += 1
        return pos, neg, zero

    def _solve_block_diag(self, z: np.ndarray) -> np.ndarray:
        d = self._d
        n = d.shape[0]
        w = np.empty_like(z)
        i = 0
        while i < n:
            if i + 1 < n and d[i + 1, i] != 0.0:
                blk = d[i:i + 2, i:i + 2]
                det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
                if abs(det) < (1e-14 * self._scale) ** 2:
                    raise np.linalg.LinAlgError("singular 2x2 pivot")
                inv = np.array([[blk[1, 1], -blk[0, 1]],
                                [-blk[1, 0], blk[0, 0]]]) / det
                w[i:i + 2] = inv @ z[i:i + 2]
                i += 2
            else:
                if abs(d[i, i]) < 1e-14 * self._scale:
                    raise np.linalg.LinAlgError("singular 1x1 pivot")
                w[i] = z[i] / d[i, i]
                i += 1
        return w

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        z = scipy.linalg.solve_triangular(
            self._M, rhs[self._perm], lower=True, unit_diagonal=True)
        w = self._solve_block_diag(z)
        v = scipy.linalg.solve_triangular(
            self._M, w, lower=True, unit_diagonal=True, trans="T")
        x = np.empty_like(v)
        x[self._perm] = v
        return x


def _independent_rows(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Indices of a maximal independent row subset (pivoted QR on A')."""
    if A.shape[0] == 0:
        return np.arange(0)
    R, piv = scipy.linalg.qr(A.T, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.arange(0)
    r = int(np.sum(diag > tol * diag[0]))
    return np.sort(piv[:r])


def _null_space_solve(P, f, Ak, bk):
    """Stationary point via an orthonormal basis of the constraint null space.

    For singular KKT systems the plain least-squares solve trades equality
    feasibility against the (often much larger) stationarity rows, so a
    Hessian of norm 1e8 can push the constraint residual past tolerance.
    Here feasibility comes from a QR of the constraint rows alone and is
    immune to the scale of P. Two different eigenvalue bands on the reduced
    Hessian: inversion drops only roundoff-level directions (eps * dim,
    matching the lstsq default, because genuine curvature can sit ten
    orders below the top), while the curvature certificate uses a much
    wider band so that assembly debris near zero is never reported as
    indefiniteness. Returns (x, lam, convex_ok).
    """
    d = f.shape[0]
    e = Ak.shape[0]
    if e:
        Q, R = np.linalg.qr(Ak.T, mode="complete")
        Re = R[:e, :e]
        yp = scipy.linalg.solve_triangular(Re, bk, lower=False, trans="T")
        x_p = Q[:, :e] @ yp
        Z = Q[:, e:]
    else:
        x_p = np.zeros(d)
        Z = np.eye(d)
    convex_ok = True
    v = np.zeros(Z.shape[1])
    if Z.shape[1]:
        Hr = Z.T @ P @ Z
        Hr = 0.5 * (Hr + Hr.T)
        g = Z.T @ (P @ x_p + f)
        w, V = np.linalg.eigh(Hr)
        wmax = float(np.max(np.abs(w)))
        if wmax > 0.0:
            convex_ok = bool(w[0] >= -1e-9 * wmax)
            coef = V.T @ g
            pos = w > np.finfo(float).eps * Hr.shape[0] * wmax
            coef[pos] /= w[pos]
            coef[~pos] = 0.0
            v = -(V @ coef)
    x = x_p + Z @ v
    if e:
        lam = scipy.linalg.solve_triangular(
            Re, Q[:, :e].T @ -(P @ x + f), lower=False)
    else:
        lam = np.zeros(0)
    return x, lam, convex_ok


def _kkt_solve(P, f, A, b):
    """Solve the stationarity system for an equality-constrained QP.

    Returns (x, lam, residual, convex_ok) where lam covers the rows of A.
    Dependent rows of A are pruned before factoring (their multipliers are
    zero); a singular factorization falls back to the null-space solve, so
    flat directions of P are handled deterministically. convex_ok certifies
    nonnegative curvature on the constraint null space, via the
    factorization inertia on the direct path (with e independent rows the
    KKT matrix of a convex problem has exactly e negative eigenvalues) and
    via the reduced Hessian spectrum on the fallback path.
    """
    d = f.shape[0]
    e_full = 0 if A is None else A.shape[0]
    if e_full:
        keep = _independent_rows(A)
        Ak, bk = A[keep], b[keep]
    else:
        keep = np.arange(0)
        Ak = np.zeros((0, d))
        bk = np.zeros(0)
    e = Ak.shape[0]
    K = np.zeros((d + e, d + e))
    K[:d, :d] = P
    if e:
        K[:d, d:] = Ak.T
        K[d:, :d] = Ak
    rhs = np.concatenate([-f, bk])
    scale = 1.0 + np.linalg.norm(rhs)

    z = None
    convex_ok = True
    if d:
        try:
            fac = _LdlSolver(K)
            convex_ok = fac.inertia[1] <= e
            z = fac.solve(rhs)
            z = z + fac.solve(rhs - K @ z)      # one refinement pass
        except np.linalg.LinAlgError:
            z = None
    if z is None or np.linalg.norm(K @ z - rhs) > 1e-9 * scale:
        xn, ln, convex_ok = _null_space_solve(P, f, Ak, bk)
        z = np.concatenate([xn, ln])
    x = z[:d]
    lam = np.zeros(e_full)
    if e:
        lam[keep] = z[d:]
    return x, lam, float(np.linalg.norm(K @ z - rhs)), convex_ok


def _classify_eq(P, f, A, b, x, lam, convex_ok=True):
    """Map KKT residuals to a status for an equality-constrained solve."""
    stat = np.linalg.norm(P @ x + f + (A.T @ lam if A is not None and A.size else 0.0))
    feas = 0.0
    if A is not None and A.shape[0]:
        feas = float(np.linalg.norm(A @ x - b))
    stat_ok = stat <= _STAT_TOL * (1.0 + np.linalg.norm(f) + np.linalg.norm(P, ord="fro") * np.linalg.norm(x))
    feas_ok = feas <= _FEAS_TOL * (1.0 + (np.linalg.norm(b) if b is not None and np.size(b) else 0.0))
    if feas_ok and stat_ok:
        if not convex_ok:
            # a clean stationary point of an indefinite problem is a saddle
            return "nonconvex", float(stat), float(feas)
        return "optimal", float(stat), float(feas)
    if not feas_ok:
        # distinguish an inconsistent constraint system from a KKT breakdown
        if A is not None and A.shape[0]:
            xi, res, *_ = np.linalg.lstsq(A, b, rcond=None)
            if np.linalg.norm(A @ xi - b) > _FEAS_TOL * (1.0 + np.linalg.norm(b)):
                return "infeasible", float(stat), float(feas)
        return "nonconvex", float(stat), float(feas)
    return "nonconvex", float(stat), float(feas)


def solve_eq_qp(P, f, A_eq=None, b_eq=None) -> QpSolution:
    """Equality-constrained QP via one KKT solve.

    The curvature must be nonnegative along the feasible set for the result
    to be a minimizer; an inconsistent KKT system is reported as
    "nonconvex", an inconsistent constraint system as "infeasible".
    """
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    f = np.asarray(f, dtype=float).reshape(-1)
    if A_eq is not None:
        A_eq = np.asarray(A_eq, dtype=float).reshape(-1, f.shape[0])
        b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    x, lam, _, convex_ok = _kkt_solve(P, f, A_eq, b_eq)
    status, stat, feas = _classify_eq(P, f, A_eq, b_eq, x, lam, convex_ok)
    return QpSolution(x=x, lam_eq=lam, mu=np.zeros(0), active_set=(),
                      status=status, iterations=1,
                      stationarity=stat, feasibility=feas)


def _phase1_feasible(prog: QuadProgram, tol: float = 1e-8) -> bool:
    """Feasibility certificate: minimize the worst constraint violation s.

    s is floored at -1 so the LP is always bounded; the system is feasible
    iff the optimum is <= tol (equalities infeasible shows up as LP
    infeasibility).
    """
    d = prog.dim
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A_ub = None
    b_ub = None
    if prog.n_in:
        A_ub = np.hstack([prog.A_in, -np.ones((prog.n_in, 1))])
        b_ub = prog.b_in
    A_eq = None
    b_eq = None
    if prog.n_eq:
        A_eq = np.hstack([prog.A_eq, np.zeros((prog.n_eq, 1))])
        b_eq = prog.b_eq
    bounds = [(None, None)] * d + [(-1.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:          # equality system infeasible
        return False
    if not res.success:
        # numerical trouble in the LP; do not claim infeasibility
        return True
    return bool(res.fun <= tol)


def _dual_swap(prog: QuadProgram, work: list, mu_prev: dict | None):
    """Walk off an over-determined vertex by swapping out a working row.

    work[-1] is a freshly added row whose normal turned out to be dependent
    on the other working rows, so they cannot all hold as equalities at
    once. Expressing that normal in the working rows gives a dual direction
    r; shifting multiplier weight onto the new row drives the old
    multipliers down at rate r, and the first to reach zero leaves (the
    classical dual step of Goldfarb-Idnani). Returns the dropped row index,
    or None when the step does not apply: independent normal, stale
    multipliers, or no positive direction component. Mutates work and
    mu_prev in place.
    """
    if mu_prev is None or len(work) < 2:
        return None
    rest = work[:-1]
    rows = [prog.A_eq] if prog.n_eq else []
    rows.append(prog.A_in[rest])
    At = np.vstack(rows).T
    a_w = prog.A_in[work[-1]]
    r_dir, *_ = np.linalg.lstsq(At, a_w, rcond=None)
    if np.linalg.norm(At @ r_dir - a_w) > 1e-8 * (1.0 + np.linalg.norm(a_w)):
        return None
    r_in = r_dir[prog.n_eq:]
    t_best = np.inf
    drop = None
    for row, ri in zip(rest, r_in):
        if ri > _DUAL_TOL:
            t = max(mu_prev.get(row, 0.0), 0.0) / float(ri)
            if t < t_best:
                t_best = t
                drop = row
    if drop is None:
        return None
    for row, ri in zip(rest, r_in):
        if row != drop:
            mu_prev[row] = max(mu_prev.get(row, 0.0), 0.0) - t_best * float(ri)
    mu_prev.pop(drop, None)
    work.remove(drop)
    return drop


def solve_qp_active_set(prog: QuadProgram, max_iter: int | None = None,
                        warm_start=()) -> QpSolution:
    """Primal active-set solve of a dense convex QP.

    Each iteration solves the equality QP for the current working set,
    drops the most negative working multiplier if there is one (ties to the
    lowest row index), otherwise adds the most violated inequality. The
    returned active_set lists the inequality rows binding at the solution.

    max_iter defaults to 10 * (dim + number of inequalities). A revisited
    working set or an exhausted budget yields "max_iter" unless the phase-1
    check proves the constraints infeasible.
    """
    d = prog.dim
    c = prog.n_in
    if max_iter is None:
        max_iter = 10 * (d + c)
    if c == 0:
        sol = solve_eq_qp(prog.P, prog.f, prog.A_eq, prog.b_eq)
        return QpSolution(x=sol.x, lam_eq=sol.lam_eq, mu=np.zeros(0), active_set=(),
                          status=sol.status, iterations=sol.iterations,
                          stationarity=sol.stationarity, feasibility=sol.feasibility)

    work: list[int] = list(dict.fromkeys(int(i) for i in warm_start))
    seen = {frozenset(work)}
    b_scale = 1.0 + float(np.max(np.abs(prog.b_in)))
    last = None
    mu_prev: dict[int, float] | None = None
    last_add = False
    it = 0
    for it in range(1, max_iter + 1):
        if prog.n_eq:
            A = np.vstack([prog.A_eq, prog.A_in[work]]) if work else prog.A_eq
            b = np.concatenate([prog.b_eq, prog.b_in[work]]) if work else prog.b_eq
        else:
            A = prog.A_in[work] if work else None
            b = prog.b_in[work] if work else None
        x, lam, _, convex_ok = _kkt_solve(prog.P, prog.f, A, b)
        lam_eq = lam[:prog.n_eq]
        mu_work = lam[prog.n_eq:]
        last = (x, lam_eq, mu_work)

        # working-set equalities not met: either the QP is infeasible or the
        # working set is inconsistent; phase-1 decides which
        if A is not None and np.linalg.norm(A @ x - b) > _FEAS_TOL * (1.0 + np.linalg.norm(b)):
            if not _phase1_feasible(prog):
                return QpSolution(x=x, lam_eq=lam_eq, mu=np.zeros(c), active_set=tuple(work),
                                  status="infeasible", iterations=it)
            if work:
                dropped = _dual_swap(prog, work, mu_prev) if last_add else None
                if dropped is not None:
                    # the fresh row stays, the blocking row leaves
                    key = frozenset(work)
                    if key in seen:
                        break
                    seen.add(key)
                    continue
                work.pop()      # retreat from the most recent addition
                last_add = False
                mu_prev = None
                continue
            return QpSolution(x=x, lam_eq=lam_eq, mu=np.zeros(c), active_set=tuple(work),
                              status="nonconvex", iterations=it)

        mu_prev = dict(zip(work, (float(v) for v in mu_work)))
        last_add = False
        if work and mu_work.size and np.min(mu_work) < -_DUAL_TOL:
            # drop: most negative multiplier, lowest constraint index on ties
            order = np.lexsort((np.asarray(work), mu_work))
            work.remove(int(np.asarray(work)[order[0]]))
            continue

        viol = prog.A_in @ x - prog.b_in
        worst = int(np.lexsort((np.arange(c), -viol))[0])
        if viol[worst] <= _FEAS_TOL * b_scale:
            mu = np.zeros(c)
            for idx, m in zip(work, mu_work):
                mu[idx] = max(m, 0.0)
            stat = float(np.linalg.norm(prog.P @ x + prog.f
                                        + (prog.A_eq.T @ lam_eq if prog.n_eq else 0.0)
                                        + prog.A_in.T @ mu))
            feas = float(max(np.max(viol), 0.0))
            return QpSolution(x=x, lam_eq=lam_eq, mu=mu, active_set=tuple(sorted(work)),
                              status="optimal" if convex_ok else "nonconvex",
                              iterations=it,
                              stationarity=stat, feasibility=feas)
        if worst in work:
            # flagged active yet violated: tolerance conflict, give up honestly
            break
        work.append(worst)
        last_add = True
        key = frozenset(work)
        if key in seen:
            break
        seen.add(key)

    if not _phase1_feasible(prog):
        status = "infeasible"
    else:
        status = "max_iter"
    x = last[0] if last is not None else np.zeros(d)
    return QpSolution(x=x, lam_eq=np.zeros(prog.n_eq), mu=np.zeros(c),
                      active_set=tuple(sorted(work)), status=status, iterations=it)

"""Linear programs and a dense bounded-variable primal simplex.

``solve`` accepts ``method="simplex"`` (the in-house tableau code below) or
``method="highs"`` (scipy's HiGHS). Both are deterministic for fixed input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class LinearProgram:
    """min c.x + offset  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub."""

    names: list[str]
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    offset: float = 0.0
    eq_names: list[str] = field(default_factory=list)
    ub_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.names)
        self.c = np.asarray(self.c, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.validate()

    @property
    def n(self) -> int:
        return len(self.names)

    def validate(self) -> None:
        n = self.n
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("c, lb, ub must match the variable catalog")
        if np.any(self.lb > self.ub):
            bad = [self.names[i] for i in np.flatnonzero(self.lb > self.ub)]
            raise ValueError(f"lower bound above upper bound for {bad[:5]}")
        if not np.all(np.isfinite(self.lb)):
            raise ValueError("lower bounds must be finite")
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("row count mismatch between matrix and right-hand side")
        for a in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite coefficient")

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.offset)

    def max_violation(self, x: np.ndarray) -> float:
        v = [0.0, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0))]
        if len(self.b_eq):
            v.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if len(self.b_ub):
            v.append(float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        return max(v)

    def dump(self) -> str:
        """Human-readable text form, one constraint per line (LP-file flavoured)."""

        def expr(row):
            terms = []
            for j in np.flatnonzero(row):
                terms.append(f"{row[j]:+.12g} {self.names[j]}")
            return " ".join(terms) if terms else "0"

        lines = ["Minimize", f" obj: {expr(self.c)} {self.offset:+.12g}", "Subject To"]
        for i, row in enumerate(self.A_eq):
            name = self.eq_names[i] if i < len(self.eq_names) else f"e{i}"
            lines.append(f" {name}: {expr(row)} = {self.b_eq[i]:.12g}")
        for i, row in enumerate(self.A_ub):
            name = self.ub_names[i] if i < len(self.ub_names) else f"u{i}"
            lines.append(f" {name}: {expr(row)} <= {self.b_ub[i]:.12g}")
        lines.append("Bounds")
        for j, name in enumerate(self.names):
            hi = "+inf" if np.isinf(self.ub[j]) else f"{self.ub[j]:.12g}"
            lines.append(f" {self.lb[j]:.12g} <= {name} <= {hi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class SolveReport:
    status: str
    objective: float
    x: np.ndarray
    iterations: int
    method: str = "simplex"

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve(lp: LinearProgram, max_iters: int = 50_000, tol: float = 1e-9, method: str = "highs") -> SolveReport:
    if method == "simplex":
        return _solve_simplex(lp, max_iters, tol)
    if method == "highs":
        return _solve_highs(lp, max_iters, tol)
    raise ValueError(f"unknown LP method {method!r}")


def _solve_highs(lp: LinearProgram, max_iters: int, tol: float) -> SolveReport:
    from scipy.optimize import linprog
    from scipy.sparse import csr_array

    res = linprog(
        lp.c,
        A_ub=csr_array(lp.A_ub) if len(lp.b_ub) else None,
        b_ub=lp.b_ub if len(lp.b_ub) else None,
        A_eq=csr_array(lp.A_eq) if len(lp.b_eq) else None,
        b_eq=lp.b_eq if len(lp.b_eq) else None,
        bounds=np.column_stack([lp.lb, lp.ub]),
        method="highs-ds",
        options={"maxiter": max_iters, "presolve": True},
    )
    status = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, INFEASIBLE)
    x = np.asarray(res.x, dtype=float) if res.x is not None else np.full(lp.n, np.nan)
    if status == OPTIMAL:
        x = np.clip(x, lp.lb, lp.ub)
    obj = lp.objective(x) if status == OPTIMAL else float("nan")
    return SolveReport(status, obj, x, int(getattr(res, "nit", 0)), "highs")


class _Tableau:
    """Dense tableau for  A x = b,  0 <= x <= u  with nonbasic variables at either bound."""

    def __init__(self, A, b, u, basis, tol):
        self.T = A.copy()
        self.u = u.copy()
        self.basis = np.array(basis, dtype=int)
        self.at_upper = np.zeros(A.shape[1], dtype=bool)
        self.xB = b.copy()
        self.tol = tol
        self.iterations = 0

    def run(self, cost, max_iters) -> str:
        T, tol = self.T, self.tol
        # reduced costs d = c - c_B B^-1 A ; the tableau already holds B^-1 A
        d = cost - cost[self.basis] @ T
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= max_iters:
                return ITERATION_LIMIT
            improving = np.where(self.at_upper, d > tol, d < -tol)
            improving[self.basis] = False
            improving &= self.u > 0  # fixed variables never enter
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return OPTIMAL
            # Dantzig pricing, lowest index on ties; Bland's rule after a degenerate streak
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if self.at_upper[j] else 1.0
            col = T[:, j]
            rate = direction * col
            theta = self.u[j]
            leave = -1
            leave_upper = False
            ub_basic = self.u[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                down = np.where(rate > tol, self.xB / rate, np.inf)
                up = np.where(rate < -tol, (ub_basic - self.xB) / -rate, np.inf)
            down = np.maximum(down, 0.0)
            up = np.maximum(up, 0.0)
            best = min(down.min(initial=np.inf), up.min(initial=np.inf))
            if np.isfinite(best) and (best < theta - tol or np.isinf(theta)):
                theta = best
                # tie-break: lowest variable index among the blocking basics
                ties = np.flatnonzero((down <= best + tol) | (up <= best + tol))
                r = ties[np.argmin(self.basis[ties])]
                leave = int(r)
                leave_upper = bool(up[r] <= best + tol and not down[r] <= best + tol)
            if np.isinf(theta):
                return UNBOUNDED
            degenerate_run = degenerate_run + 1 if theta <= tol else 0
            if degenerate_run > 50:
                bland = True
            self.xB -= theta * rate
            self.iterations += 1
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            # pivot
            piv = T[leave, j]
            entering_value = theta if direction > 0 else self.u[j] - theta
            old = self.basis[leave]
            T[leave] /= piv
            others = col.copy()
            others[leave] = 0.0
            T -= np.outer(others, T[leave])
            d -= d[j] * T[leave]
            self.basis[leave] = j
            self.at_upper[j] = False
            self.at_upper[old] = leave_upper
            self.xB[leave] = entering_value

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.xB
        return x


def _solve_simplex(lp: LinearProgram, max_iters: int, tol: float) -> SolveReport:
    n = lp.n
    m_eq, m_ub = len(lp.b_eq), len(lp.b_ub)
    m = m_eq + m_ub
    width = lp.ub - lp.lb
    # shift to x' = x - lb >= 0 and add one slack per inequality
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([lp.b_eq - lp.A_eq @ lp.lb, lp.b_ub - lp.A_ub @ lp.lb])
    u = np.concatenate([width, np.full(m_ub, np.inf)])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # slacks of non-negated inequality rows start basic; everything else gets an artificial
    basis = np.full(m, -1)
    for i in range(m_eq, m):
        if not neg[i]:
            basis[i] = n + (i - m_eq)
    art_rows = np.flatnonzero(basis < 0)
    n_art = len(art_rows)
    A_full = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        A_full[i, n + m_ub + k] = 1.0
        basis[i] = n + m_ub + k
    u_full = np.concatenate([u, np.full(n_art, np.inf)])
    tab = _Tableau(A_full, b, u_full, basis, tol)
    n_total = A_full.shape[1]
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))

    if n_art:
        phase1 = np.zeros(n_total)
        phase1[n + m_ub :] = 1.0
        status = tab.run(phase1, max_iters)
        if status == ITERATION_LIMIT:
            return SolveReport(status, float("nan"), np.full(n, np.nan), tab.iterations)
        if tab.values()[n + m_ub :].sum() > 1e-7 * scale:
            return SolveReport(INFEASIBLE, float("nan"), np.full(n, np.nan), tab.iterations)
        # drive remaining artificials out of the basis, then pin them at zero
        for r in range(m):
            if tab.basis[r] >= n + m_ub:
                row = tab.T[r, : n + m_ub]
                nz = np.flatnonzero((np.abs(row) > 1e-9) & ~np.isin(np.arange(n + m_ub), tab.basis))
                if nz.size:
                    j = int(nz[0])
                    piv = tab.T[r, j]
                    val = tab.values()[j]
                    tab.T[r] /= piv
                    col = tab.T[:, j].copy()
                    col[r] = 0.0
                    tab.T -= np.outer(col, tab.T[r])
                    # artificial is zero, so the entering variable keeps its nonbasic value
                    tab.xB[r] = val
                    tab.at_upper[tab.basis[r]] = False
                    tab.basis[r] = j
                    tab.at_upper[j] = False
        tab.u[n + m_ub :] = 0.0

    cost = np.concatenate([lp.c, np.zeros(m_ub + n_art)])
    status = tab.run(cost, max_iters)
    if status != OPTIMAL:
        return SolveReport(status, float("nan"), np.full(n, np.nan), tab.iterations)
    x = np.clip(tab.values()[:n], 0.0, width) + lp.lb
    x = _polish(lp, x, tab, n, m_ub)
    return SolveReport(OPTIMAL, lp.objective(x), x, tab.iterations)


def _polish(lp: LinearProgram, x: np.ndarray, tab: _Tableau, n: int, m_ub: int) -> np.ndarray:
    """Recompute basic values from the original rows to shed accumulated pivot error."""
    full = np.concatenate([x - lp.lb, tab.values()[n : n + m_ub]])
    basis = tab.basis[tab.basis < n + m_ub]
    if len(basis) != len(tab.basis):
        return x
    m_eq = len(lp.b_eq)
    A = np.zeros((m_eq + m_ub, n + m_ub))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([lp.b_eq - lp.A_eq @ lp.lb, lp.b_ub - lp.A_ub @ lp.lb])
    nonbasic = np.ones(n + m_ub, dtype=bool)
    nonbasic[basis] = False
    rhs = b - A[:, nonbasic] @ full[nonbasic]
    try:
        xb = np.linalg.solve(A[:, basis], rhs)
    except np.linalg.LinAlgError:
        return x
    cand = full.copy()
    cand[basis] = xb
    out = cand[:n] + lp.lb
    if lp.max_violation(out) <= lp.max_violation(x) + 1e-12:
        return np.clip(out, lp.lb, lp.ub)
    return x

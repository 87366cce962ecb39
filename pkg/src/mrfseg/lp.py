"""Primal simplex for box-bounded LPs with equality/inequality rows and warm starts.

Geared to branch-and-cut workloads: every structural variable carries finite
bounds, rows arrive incrementally (cutting planes), and bounds tighten during
branching. The solver therefore accepts a starting basis and restores
feasibility with a composite phase 1 instead of always solving from scratch.

Internally each row gets a slack variable whose bounds encode the sense
('<=' -> [0, inf), '>=' -> (-inf, 0], '=' -> [0, 0]) and the working system is
[A I] (x, s) = b with nonbasic variables pinned to a finite bound. Pricing is
Dantzig with a Bland fallback after a run of degenerate pivots; the basis
inverse is kept explicitly and refactorized every 100 pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
BREAKDOWN = "numerical_breakdown"

_FEAS_TOL = 1e-9
_DUAL_TOL = 1e-9
_PIVOT_TOL = 1e-9
_RESIDUAL_TOL = 1e-7
_REFACTOR_EVERY = 100
_BLAND_AFTER = 1000

_SENSES = ("=", "<=", ">=")


class LpError(RuntimeError):
    """Unrecoverable LP failure (unbounded ray or numerical collapse)."""


@dataclass(eq=False)
class LpRow:
    cols: np.ndarray
    vals: np.ndarray
    sense: str
    rhs: float


@dataclass(eq=False)
class LpProblem:
    """min c.x subject to rows and finite box bounds lb <= x <= ub."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.lb = np.asarray(self.lb, dtype=np.float64)
        self.ub = np.asarray(self.ub, dtype=np.float64)
        if not (self.c.shape == self.lb.shape == self.ub.shape):
            raise ValueError("c, lb, ub must have identical shapes")

    @property
    def num_cols(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_row(self, cols, vals, sense: str, rhs: float) -> None:
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if cols.shape != vals.shape or cols.ndim != 1:
            raise ValueError("row columns/values mismatch")
        if cols.size and (cols.min() < 0 or cols.max() >= self.num_cols):
            raise ValueError("row references nonexistent column")
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}, got {sense!r}")
        if not np.isfinite(rhs) or not np.isfinite(vals).all():
            raise ValueError("row coefficients must be finite")
        self.rows.append(LpRow(cols, vals, sense, float(rhs)))

    def with_bounds(self, lb, ub) -> "LpProblem":
        """Problem view sharing objective and rows but with its own bound arrays."""
        return replace(self, lb=np.asarray(lb, dtype=np.float64), ub=np.asarray(ub, dtype=np.float64))

    def copy(self) -> "LpProblem":
        return LpProblem(self.c.copy(), self.lb.copy(), self.ub.copy(), list(self.rows))


@dataclass
class LpBasis:
    """Per-column and per-row-slack status tags (AT_LOWER / AT_UPPER / BASIC)."""

    col_status: np.ndarray
    row_status: np.ndarray


@dataclass(eq=False)
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    basis: LpBasis | None
    pivots: int


class _Simplex:
    def __init__(self, prob: LpProblem):
        if not (np.isfinite(prob.lb).all() and np.isfinite(prob.ub).all()):
            raise ValueError("structural variables need finite bounds")
        if (prob.lb > prob.ub + 1e-12).any():
            raise ValueError("lower bound exceeds upper bound")
        self.ncols = prob.num_cols
        self.m = prob.num_rows
        ntot = self.ncols + self.m
        self.ntot = ntot
        rows_i, cols_i, data = [], [], []
        slack_lo = np.zeros(self.m)
        slack_hi = np.zeros(self.m)
        b = np.zeros(self.m)
        for r, row in enumerate(prob.rows):
            rows_i.extend([r] * row.cols.size)
            cols_i.extend(row.cols.tolist())
            data.extend(row.vals.tolist())
            rows_i.append(r)
            cols_i.append(self.ncols + r)
            data.append(1.0)
            b[r] = row.rhs
            if row.sense == "<=":
                slack_lo[r], slack_hi[r] = 0.0, np.inf
            elif row.sense == ">=":
                slack_lo[r], slack_hi[r] = -np.inf, 0.0
            else:
                slack_lo[r] = slack_hi[r] = 0.0
        self.A = sp.csc_matrix((data, (rows_i, cols_i)), shape=(self.m, ntot))
        self.lo = np.concatenate([prob.lb, slack_lo])
        self.hi = np.concatenate([prob.ub, slack_hi])
        self.cf = np.concatenate([prob.c, np.zeros(self.m)])
        self.b = b
        self.status = np.empty(ntot, dtype=np.int8)
        self.basis = np.empty(self.m, dtype=np.int64)
        self.binv = np.eye(self.m)
        self.xB = np.zeros(self.m)
        self.pivots = 0
        self._since_refactor = 0
        self._bland = False
        self._nonimproving = 0

    # ----- basis management -------------------------------------------------

    def _slack_basis(self) -> None:
        self.status[: self.ncols] = AT_LOWER
        self.status[self.ncols :] = BASIC
        self.basis = np.arange(self.ncols, self.ntot, dtype=np.int64)

    def _init_basis(self, warm: LpBasis | None) -> None:
        if warm is None:
            self._slack_basis()
        else:
            ok = (
                warm.col_status.size == self.ncols
                and warm.row_status.size <= self.m
            )
            if ok:
                self.status[: self.ncols] = warm.col_status
                nr = warm.row_status.size
                self.status[self.ncols : self.ncols + nr] = warm.row_status
                self.status[self.ncols + nr :] = BASIC  # fresh rows carry their slack
                # nonbasic variables must rest on a finite bound
                nb_low = (self.status == AT_LOWER) & ~np.isfinite(self.lo)
                nb_up = (self.status == AT_UPPER) & ~np.isfinite(self.hi)
                self.status[nb_low] = AT_UPPER
                self.status[nb_up] = AT_LOWER
                basic = np.flatnonzero(self.status == BASIC)
                if basic.size != self.m:
                    ok = False
                else:
                    self.basis = basic.astype(np.int64)
            if not ok:
                self._slack_basis()
        if not self._try_refactor():
            self._slack_basis()
            if not self._try_refactor():
                raise LpError("slack basis failed to factor")

    def _try_refactor(self) -> bool:
        if self.m == 0:
            self.binv = np.zeros((0, 0))
            self.xB = np.zeros(0)
            return True
        B = self.A[:, self.basis].toarray()
        try:
            binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        if not np.isfinite(binv).all():
            return False
        if abs(binv @ B - np.eye(self.m)).max() > 1e-6:
            return False
        self.binv = binv
        self._recompute_xB()
        self._since_refactor = 0
        return True

    def _nonbasic_values(self) -> np.ndarray:
        x = np.where(self.status == AT_UPPER, self.hi, self.lo)
        x[self.status == BASIC] = 0.0
        return x

    def _recompute_xB(self) -> None:
        xn = self._nonbasic_values()
        self.xB = self.binv @ (self.b - self.A @ xn)

    # ----- pricing ----------------------------------------------------------

    def _price(self, d: np.ndarray, phase: int) -> int:
        # phase 1 wants dF/dt < 0 where dF/dt = -s*d_j; phase 2 wants dc/dt < 0 = s*d_j
        if phase == 1:
            score = np.where(self.status == AT_LOWER, d, -d)
        else:
            score = np.where(self.status == AT_LOWER, -d, d)
        score[self.status == BASIC] = -np.inf
        # variables already pinned by equal bounds cannot move
        score[self.lo == self.hi] = -np.inf
        if self._bland:
            elig = np.flatnonzero(score > _DUAL_TOL)
            return int(elig[0]) if elig.size else -1
        j = int(np.argmax(score))
        return j if score[j] > _DUAL_TOL else -1

    # ----- ratio tests ------------------------------------------------------

    def _ratio_phase2(self, delta: np.ndarray):
        loB, hiB = self.lo[self.basis], self.hi[self.basis]
        t = np.full(self.m, np.inf)
        side = np.zeros(self.m, dtype=np.int8)
        up = delta > _PIVOT_TOL
        dn = delta < -_PIVOT_TOL
        with np.errstate(invalid="ignore"):
            t[up] = (hiB[up] - self.xB[up]) / delta[up]
            t[dn] = (loB[dn] - self.xB[dn]) / delta[dn]
        side[up] = AT_UPPER
        side[dn] = AT_LOWER
        np.maximum(t, 0.0, out=t)
        return t, side

    def _ratio_phase1(self, delta: np.ndarray):
        loB, hiB = self.lo[self.basis], self.hi[self.basis]
        below = self.xB < loB - _FEAS_TOL
        above = self.xB > hiB + _FEAS_TOL
        t = np.full(self.m, np.inf)
        side = np.zeros(self.m, dtype=np.int8)
        up = delta > _PIVOT_TOL
        dn = delta < -_PIVOT_TOL
        # block at the nearest bound ahead in the direction of movement
        tgt_up = np.where(below, loB, hiB)  # above & increasing never blocks
        tgt_dn = np.where(above, hiB, loB)
        sel = up & ~above
        t[sel] = (tgt_up[sel] - self.xB[sel]) / delta[sel]
        side[sel] = np.where(below[sel], AT_LOWER, AT_UPPER)
        sel = dn & ~below
        t[sel] = (tgt_dn[sel] - self.xB[sel]) / delta[sel]
        side[sel] = np.where(above[sel], AT_UPPER, AT_LOWER)
        np.maximum(t, 0.0, out=t)
        return t, side

    # ----- pivot application ------------------------------------------------

    def _apply(self, j: int, s: float, w: np.ndarray, t: float, r: int, side: int) -> None:
        delta = -s * w
        if t > 0:
            self.xB += t * delta
        if r < 0:  # bound flip
            self.status[j] = AT_UPPER if self.status[j] == AT_LOWER else AT_LOWER
            return
        start = self.lo[j] if s > 0 else self.hi[j]
        leaving = self.basis[r]
        self.status[leaving] = side
        self.status[j] = BASIC
        self.basis[r] = j
        wr = w[r]
        self.binv[r] /= wr
        mask = np.ones(self.m, dtype=bool)
        mask[r] = False
        self.binv[mask] -= np.outer(w[mask], self.binv[r])
        self.xB[r] = start + s * t
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            if not self._try_refactor():
                raise LpError("refactorization failed")

    # ----- main loops ---------------------------------------------------------

    def _infeasibility(self) -> float:
        loB, hiB = self.lo[self.basis], self.hi[self.basis]
        return float(np.maximum(loB - self.xB, 0.0).sum() + np.maximum(self.xB - hiB, 0.0).sum())

    def _iterate(self, phase: int, max_pivots: int) -> str:
        while True:
            if phase == 1:
                loB, hiB = self.lo[self.basis], self.hi[self.basis]
                g = (self.xB > hiB + _FEAS_TOL).astype(np.float64) - (
                    self.xB < loB - _FEAS_TOL
                ).astype(np.float64)
                if not g.any():
                    return "feasible"
                y = g @ self.binv
                d = self.A.T @ y
            else:
                y = self.cf[self.basis] @ self.binv
                d = self.cf - self.A.T @ y
            j = self._price(d, phase)
            if j < 0:
                return OPTIMAL if phase == 2 else INFEASIBLE
            s = 1.0 if self.status[j] == AT_LOWER else -1.0
            w = self.binv @ self.A[:, [j]].toarray().ravel()
            delta = -s * w
            t_rows, sides = self._ratio_phase1(delta) if phase == 1 else self._ratio_phase2(delta)
            t_flip = self.hi[j] - self.lo[j]
            if self._bland and np.isfinite(t_rows).any():
                tmin = float(t_rows.min())
                cand = np.flatnonzero(t_rows <= tmin + 1e-12)
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(np.argmin(t_rows)) if self.m else -1
            tmin = t_rows[r] if r >= 0 else np.inf
            if tmin <= t_flip:
                t, row, side = tmin, r, int(sides[r])
            else:
                t, row, side = t_flip, -1, 0
            if not np.isfinite(t):
                raise LpError("unbounded direction encountered")
            self._apply(j, s, w, float(t), row, side)
            self.pivots += 1
            if t <= 1e-12:
                self._nonimproving += 1
                if self._nonimproving >= _BLAND_AFTER:
                    self._bland = True
            else:
                self._nonimproving = 0
            if self.pivots > max_pivots:
                return BREAKDOWN

    def solve(self, warm: LpBasis | None) -> LpSolution:
        self._init_basis(warm)
        max_pivots = 200 * (self.m + self.ncols) + 20000
        for attempt in range(3):
            out = self._iterate(1, max_pivots)
            if out == INFEASIBLE:
                return LpSolution(INFEASIBLE, None, float("nan"), None, self.pivots)
            if out == BREAKDOWN:
                return LpSolution(BREAKDOWN, None, float("nan"), None, self.pivots)
            out = self._iterate(2, max_pivots)
            if out == BREAKDOWN:
                return LpSolution(BREAKDOWN, None, float("nan"), None, self.pivots)
            if not self._try_refactor():
                self._slack_basis()
                if not self._try_refactor():
                    return LpSolution(BREAKDOWN, None, float("nan"), None, self.pivots)
                continue
            # refactorization may reveal drift; loop runs phase 1 again if so
            if self._infeasibility() <= self.m * _RESIDUAL_TOL:
                break
        else:
            return LpSolution(BREAKDOWN, None, float("nan"), None, self.pivots)
        xfull = self._nonbasic_values()
        xfull[self.basis] = self.xB
        snap = np.clip(xfull, self.lo, self.hi)
        xfull = np.where(np.abs(snap - xfull) <= 1e-9, snap, xfull)
        resid = np.abs(self.A @ xfull - self.b).max(initial=0.0)
        if resid > _RESIDUAL_TOL:
            return LpSolution(BREAKDOWN, None, float("nan"), None, self.pivots)
        x = xfull[: self.ncols]
        obj = float(self.cf @ xfull)
        basis = LpBasis(
            self.status[: self.ncols].copy(), self.status[self.ncols :].copy()
        )
        return LpSolution(OPTIMAL, x, obj, basis, self.pivots)


def solve_lp(prob: LpProblem, warm: LpBasis | None = None) -> LpSolution:
    """Solve to a basic optimal solution or report infeasibility.

    Deterministic for identical inputs; a warm basis only changes the path, not
    the reported status or objective (degenerate ties may pick another vertex of
    the same value).
    """
    return _Simplex(prob).solve(warm)


def add_rows_and_resolve(prob: LpProblem, rows, warm: LpBasis | None = None) -> LpSolution:
    """Append rows (cols, vals, sense, rhs) to prob and re-solve.

    Slacks of the new rows enter the warm basis, so a dual-feasible restart only
    has to drive out the violated cuts."""
    for cols, vals, sense, rhs in rows:
        prob.add_row(cols, vals, sense, rhs)
    return solve_lp(prob, warm)


def tighten_bound_and_resolve(
    prob: LpProblem, var: int, lower: float, upper: float, warm: LpBasis | None = None
) -> LpSolution:
    """Set new bounds on one variable and re-solve from the given basis."""
    if lower > upper:
        raise ValueError(f"lower {lower} exceeds upper {upper}")
    prob.lb[var] = lower
    prob.ub[var] = upper
    return solve_lp(prob, warm)


def to_lp_text(prob: LpProblem, name: str = "problem") -> str:
    """Render in CPLEX-LP text format for external cross-checking."""

    def term(v, j, first):
        s = "" if first and v >= 0 else ("+ " if v >= 0 else "- ")
        return f"{s}{abs(v):.12g} x{j}"

    lines = [f"\\ {name}", "Minimize", " obj:"]
    parts = [term(v, j, j == 0) for j, v in enumerate(prob.c) if v != 0.0] or ["0 x0"]
    lines[-1] += " " + " ".join(parts)
    lines.append("Subject To")
    op = {"=": "=", "<=": "<=", ">=": ">="}
    for r, row in enumerate(prob.rows):
        parts = [
            term(v, j, idx == 0)
            for idx, (j, v) in enumerate(zip(row.cols.tolist(), row.vals.tolist()))
        ]
        lines.append(f" c{r}: " + " ".join(parts) + f" {op[row.sense]} {row.rhs:.12g}")
    lines.append("Bounds")
    for j in range(prob.num_cols):
        lines.append(f" {prob.lb[j]:.12g} <= x{j} <= {prob.ub[j]:.12g}")
    lines.append("End")
    return "\n".join(lines) + "\n"

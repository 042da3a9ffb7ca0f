"""Dense simplex for small equality-form LPs over the probability simplex.

Programs have the form ``min/max c.x  s.t.  A x = b, x >= 0`` where one row
of ``A`` is the simplex constraint.  Two solvers are provided:

* a float tableau simplex (numpy) with Bland's rule, and
* an exact revised simplex over :class:`fractions.Fraction`, also with
  Bland's rule, used as a referee.  It starts from the float solver's basis
  when that basis is exactly primal feasible and otherwise runs its own
  phase one.

Linearly dependent rows are detected exactly (rational elimination, cached
per constraint matrix) and dropped before either solver runs.
"""

from __future__ import annotations

import enum
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
INFEASIBLE_TOL = 1e-8
MAX_PIVOTS = 100_000


class MalformedProgramError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"


class Sense(str, enum.Enum):
    MIN = "MIN"
    MAX = "MAX"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Equality-constrained LP with implicit nonnegativity.

    The first ``n_simplex`` variables (all of them by default) are the
    probability block; exactly one row must be the all-ones row over that
    block with right-hand side 1.  Any further variables are slacks.
    """

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    n_simplex: int | None = None
    row_labels: tuple[str, ...] = ()
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        b = np.asarray(self.b_eq, dtype=float).reshape(-1)
        try:
            a = np.asarray(self.a_eq, dtype=float)
        except ValueError:
            raise MalformedProgramError("constraint rows have unequal lengths") from None
        if a.ndim != 2 or a.shape[1] != c.size:
            raise MalformedProgramError(
                f"constraint rows must have length n_vars={c.size}, got shape {a.shape}"
            )
        if a.shape[0] != b.size:
            raise MalformedProgramError(f"{a.shape[0]} rows but {b.size} right-hand sides")
        ns = c.size if self.n_simplex is None else int(self.n_simplex)
        if not 0 < ns <= c.size:
            raise MalformedProgramError("n_simplex out of range")
        pattern = np.r_[np.ones(ns), np.zeros(c.size - ns)]
        n_simplex_rows = int(np.sum(np.all(a == pattern, axis=1) & (b == 1.0)))
        if n_simplex_rows != 1:
            raise MalformedProgramError(
                f"simplex row (all ones, rhs 1) must appear exactly once, found {n_simplex_rows}"
            )
        for arr in (a, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "a_eq", a)
        object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "n_simplex", ns)
        labels = tuple(self.row_labels) or tuple(f"r{i}" for i in range(b.size))
        object.__setattr__(self, "row_labels", labels)

    @classmethod
    def from_rows(cls, objective: Sequence[float],
                  rows: Sequence[tuple[Sequence[float], float]], **kw) -> "LinearProgram":
        lengths = {len(r) for r, _ in rows}
        if len(lengths) > 1:
            raise MalformedProgramError(f"constraint rows have unequal lengths {sorted(lengths)}")
        return cls(objective, np.array([r for r, _ in rows], dtype=float),
                   np.array([v for _, v in rows], dtype=float), **kw)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def eq_constraints(self) -> list[tuple[np.ndarray, float]]:
        return [(self.a_eq[i], float(self.b_eq[i])) for i in range(self.b_eq.size)]

    def with_objective(self, objective) -> "LinearProgram":
        return LinearProgram(objective, self.a_eq, self.b_eq, self.n_simplex,
                             self.row_labels, self.notes)


@dataclass(frozen=True, eq=False)
class LpOutcome:
    status: Status
    optimum: float | None = None
    solution: np.ndarray | None = None
    certificate: np.ndarray | None = None
    exact_optimum: Fraction | None = None
    basis: tuple[int, ...] | None = None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# exact rank reveal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _RowReduction:
    keep: tuple[int, ...]
    # for each dropped row: (row, {kept_row: coeff}) with
    # row_i - sum coeff_k row_k == 0 exactly
    dependencies: tuple[tuple[int, tuple[tuple[int, Fraction], ...]], ...]


_REDUCTION_CACHE: dict[tuple, _RowReduction] = {}


def _row_reduction(a: np.ndarray) -> _RowReduction:
    key = (a.shape, a.tobytes())
    hit = _REDUCTION_CACHE.get(key)
    if hit is not None:
        return hit
    echelon: list[tuple[int, dict[int, Fraction], dict[int, Fraction]]] = []
    keep: list[int] = []
    deps = []
    for i, row in enumerate(a):
        v = {j: Fraction(float(x)) for j, x in enumerate(row) if x != 0}
        combo = {i: Fraction(1)}
        for piv, e, ecombo in echelon:
            f = v.get(piv)
            if not f:
                continue
            f = f / e[piv]
            for j, x in e.items():
                nv = v.get(j, 0) - f * x
                if nv:
                    v[j] = nv
                else:
                    v.pop(j, None)
            for k, x in ecombo.items():
                nc = combo.get(k, 0) - f * x
                if nc:
                    combo[k] = nc
                else:
                    combo.pop(k, None)
        if v:
            echelon.append((min(v), v, combo))
            keep.append(i)
        else:
            # combo . A == 0 with combo[i] == 1
            deps.append((i, tuple(sorted((k, -x) for k, x in combo.items() if k != i))))
    red = _RowReduction(tuple(keep), tuple(deps))
    if len(_REDUCTION_CACHE) > 256:
        _REDUCTION_CACHE.clear()
    _REDUCTION_CACHE[key] = red
    return red


# ---------------------------------------------------------------------------
# float tableau simplex
# ---------------------------------------------------------------------------

def format_tableau(t: np.ndarray, basis: Sequence[int]) -> str:
    buf = io.StringIO()
    m = t.shape[0] - 1
    for i in range(m):
        buf.write(f"x{basis[i]:<4d}|" + " ".join(f"{v:8.4f}" for v in t[i]) + "\n")
    buf.write("  obj|" + " ".join(f"{v:8.4f}" for v in t[m]) + "\n")
    return buf.getvalue()


class _FloatTableau:
    def __init__(self, a: np.ndarray, b: np.ndarray, verbose: bool = False):
        m, n = a.shape
        self.m, self.n = m, n
        t = np.zeros((m + 1, n + m + 1))
        t[:m, :n] = a
        t[:m, n:n + m] = np.eye(m)
        t[:m, -1] = b
        self.t = t
        self.basis = list(range(n, n + m))
        self.pivots = 0
        self.verbose = verbose

    def pivot(self, r: int, j: int):
        t = self.t
        t[r] /= t[r, j]
        col = t[:, j].copy()
        col[r] = 0.0
        t -= np.outer(col, t[r])
        t[np.abs(t) < 1e-15] = 0.0
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise SolverError("pivot limit exceeded")
        if self.verbose:
            log.debug("pivot row %d col %d\n%s", r, j, format_tableau(t, self.basis))

    def set_costs(self, costs: np.ndarray):
        """Install reduced costs for ``costs`` over all tableau columns."""
        t = self.t
        m = self.m
        cb = costs[self.basis]
        t[m, :-1] = costs - cb @ t[:m, :-1]
        t[m, -1] = -(cb @ t[:m, -1])

    def run(self, allowed: int):
        """Bland's rule over columns ``< allowed``."""
        t, m = self.t, self.m
        while True:
            d = t[m, :allowed]
            enter = np.flatnonzero(d < -PIVOT_TOL)
            if enter.size == 0:
                return
            j = int(enter[0])
            col = t[:m, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                raise SolverError("unbounded direction; program lacks a bounded simplex block")
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12]
            r = min(ties, key=lambda i: self.basis[i])
            self.pivot(int(r), j)


def _solve_float(a, b, c, verbose=False):
    """Returns (status, x, basis, certificate_on_reduced_rows, pivots)."""
    m, n = a.shape
    tab = _FloatTableau(a, b, verbose)
    phase1 = np.r_[np.zeros(n), np.ones(m)]
    tab.set_costs(phase1)
    tab.run(n + m)
    infeas = -tab.t[m, -1]
    if infeas > INFEASIBLE_TOL:
        y = 1.0 - tab.t[m, n:n + m]  # duals from artificial reduced costs
        return Status.INFEASIBLE, None, None, y, tab.pivots
    for r in range(m):
        if tab.basis[r] >= n:
            cands = np.flatnonzero(np.abs(tab.t[r, :n]) > PIVOT_TOL)
            if cands.size == 0:
                raise SolverError("dependent row survived rank reduction")
            tab.pivot(r, int(cands[0]))
    tab.set_costs(np.r_[c, np.zeros(m)])
    tab.run(n)
    x = np.zeros(n)
    x[tab.basis] = tab.t[:m, -1]
    x[np.abs(x) < 1e-15] = 0.0
    return Status.OPTIMAL, x, tuple(tab.basis), None, tab.pivots


# ---------------------------------------------------------------------------
# exact revised simplex
# ---------------------------------------------------------------------------

def _inverse(cols: list[dict[int, Fraction]], m: int) -> list[list[Fraction]] | None:
    mat = [[Fraction(0)] * m + [Fraction(int(i == k)) for k in range(m)] for i in range(m)]
    for k, col in enumerate(cols):
        for i, v in col.items():
            mat[i][k] = v
    for k in range(m):
        p = next((i for i in range(k, m) if mat[i][k] != 0), None)
        if p is None:
            return None
        mat[k], mat[p] = mat[p], mat[k]
        pv = mat[k][k]
        mat[k] = [v / pv for v in mat[k]]
        for i in range(m):
            if i != k and mat[i][k] != 0:
                f = mat[i][k]
                mat[i] = [vi - f * vk for vi, vk in zip(mat[i], mat[k])]
    return [row[m:] for row in mat]


class _ExactRevised:
    def __init__(self, cols, b, m):
        self.cols = cols  # sparse columns, artificials appended by caller
        self.b = b
        self.m = m
        self.pivots = 0

    def load_basis(self, basis):
        binv = _inverse([self.cols[j] for j in basis], self.m)
        if binv is None:
            return False
        xb = [sum((binv[i][k] * self.b[k] for k in range(self.m)), Fraction(0))
              for i in range(self.m)]
        if any(v < 0 for v in xb):
            return False
        self.basis, self.binv, self.xb = list(basis), binv, xb
        return True

    def identity_basis(self, first_artificial):
        m = self.m
        self.basis = list(range(first_artificial, first_artificial + m))
        self.binv = [[Fraction(int(i == k)) for k in range(m)] for i in range(m)]
        self.xb = list(self.b)

    def duals(self, costs):
        m = self.m
        return [sum((costs[self.basis[k]] * self.binv[k][i] for k in range(m)), Fraction(0))
                for i in range(m)]

    def ftran(self, j):
        col = self.cols[j]
        return [sum((self.binv[k][i] * v for i, v in col.items()), Fraction(0))
                for k in range(self.m)]

    def run(self, costs, allowed):
        m = self.m
        while True:
            y = self.duals(costs)
            in_basis = set(self.basis)
            enter = None
            for j in range(allowed):
                if j in in_basis:
                    continue
                dj = costs[j] - sum((y[i] * v for i, v in self.cols[j].items()), Fraction(0))
                if dj < 0:
                    enter = j
                    break
            if enter is None:
                return y
            u = self.ftran(enter)
            best, r = None, None
            for k in range(m):
                if u[k] > 0:
                    ratio = self.xb[k] / u[k]
                    if (best is None or ratio < best
                            or (ratio == best and self.basis[k] < self.basis[r])):
                        best, r = ratio, k
            if r is None:
                raise SolverError("unbounded direction in exact solve")
            self.pivot(r, enter, u)

    def pivot(self, r, j, u=None):
        u = self.ftran(j) if u is None else u
        m = self.m
        ur = u[r]
        self.binv[r] = [v / ur for v in self.binv[r]]
        self.xb[r] = self.xb[r] / ur
        for k in range(m):
            if k != r and u[k] != 0:
                f = u[k]
                self.binv[k] = [a - f * b for a, b in zip(self.binv[k], self.binv[r])]
                self.xb[k] -= f * self.xb[r]
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise SolverError("pivot limit exceeded")


def _solve_exact(a, b, c, start_basis=None):
    m, n = a.shape
    cols = [{i: Fraction(float(a[i, j])) for i in range(m) if a[i, j] != 0} for j in range(n)]
    cols += [{i: Fraction(1)} for i in range(m)]
    bq = [Fraction(float(v)) for v in b]
    cq = [Fraction(float(v)) for v in c] + [Fraction(0)] * m
    solver = _ExactRevised(cols, bq, m)
    if start_basis is None or not solver.load_basis(start_basis):
        solver.identity_basis(n)
        phase1 = [Fraction(0)] * n + [Fraction(1)] * m
        y = solver.run(phase1, n + m)
        infeas = sum((phase1[j] * v for j, v in zip(solver.basis, solver.xb)), Fraction(0))
        if infeas > 0:
            if infeas > INFEASIBLE_TOL:
                return Status.INFEASIBLE, None, None, None, np.array([float(v) for v in y]), solver.pivots
            raise SolverError(
                f"exact phase one residual {float(infeas):.3g} is below the infeasibility "
                "threshold; input data are inconsistent at rounding level"
            )
        for r in range(m):
            if solver.basis[r] >= n:
                in_basis = set(solver.basis)
                for j in range(n):
                    if j not in in_basis and solver.ftran(j)[r] != 0:
                        solver.pivot(r, j)
                        break
                else:
                    raise SolverError("dependent row survived rank reduction")
    solver.run(cq, n)
    x = [Fraction(0)] * n
    for j, v in zip(solver.basis, solver.xb):
        x[j] = v
    opt = sum((cq[j] * x[j] for j in range(n)), Fraction(0))
    return Status.OPTIMAL, opt, x, tuple(solver.basis), None, solver.pivots


# ---------------------------------------------------------------------------
# public entry point
# ---------------------------------------------------------------------------

def solve_lp(p: LinearProgram, sense: Sense | str = Sense.MIN, *,
             exact: bool = False, verbose: bool = False) -> LpOutcome:
    """Optimize ``p`` in the given sense.

    With ``exact=True`` the optimum is certified in rational arithmetic on the
    exact binary values of the float inputs; ``exact_optimum`` then holds the
    rational optimum.  Infeasibility comes with a Farkas certificate ``y``
    over the original rows: ``y @ A <= 0`` and ``y @ b > 0``.
    """
    sense = Sense(sense.upper() if isinstance(sense, str) else sense)
    a, b = p.a_eq, p.b_eq
    c = p.objective if sense is Sense.MIN else -p.objective
    red = _row_reduction(a)

    for i, combo in red.dependencies:
        resid = float(Fraction(float(b[i])) - sum(
            (x * Fraction(float(b[k])) for k, x in combo), Fraction(0)))
        if abs(resid) > INFEASIBLE_TOL:
            y = np.zeros(b.size)
            y[i] = 1.0
            for k, x in combo:
                y[k] = -float(x)
            if resid < 0:
                y = -y
            return LpOutcome(Status.INFEASIBLE, certificate=y)

    keep = list(red.keep)
    ar, br = a[keep].copy(), b[keep].copy()
    flip = br < 0
    ar[flip] *= -1
    br[flip] *= -1

    def lift(y_red):
        y = np.zeros(b.size)
        y[keep] = np.where(flip, -y_red, y_red)
        return y

    status, x, basis, y, pivots = _solve_float(ar, br, c, verbose)
    if not exact:
        if status is Status.INFEASIBLE:
            return LpOutcome(status, certificate=lift(y), pivots=pivots)
        opt = float(x @ c)
        return LpOutcome(status, opt if sense is Sense.MIN else -opt, x, basis=basis, pivots=pivots)

    status, qopt, qx, qbasis, y, pivots = _solve_exact(ar, br, c, basis)
    if status is Status.INFEASIBLE:
        return LpOutcome(status, certificate=lift(y), pivots=pivots)
    qopt = qopt if sense is Sense.MIN else -qopt
    x = np.array([float(v) for v in qx])
    return LpOutcome(status, float(qopt), x, exact_optimum=qopt, basis=qbasis, pivots=pivots)


def is_feasible(p: LinearProgram, exact: bool = False) -> LpOutcome:
    """Feasibility check (zero objective); OPTIMAL means feasible."""
    return solve_lp(p.with_objective(np.zeros(p.n_vars)), Sense.MIN, exact=exact)

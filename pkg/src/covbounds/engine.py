"""Bound LPs, witnesses, sharpness feasibility checks and back-door identification."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import closedform
from .closedform import BoundsInterval
from .dist import (
    ObservedDistribution,
    StructuralTruth,
    ZeroProbabilityError,
    marginal,
    pushforward_observed,
    structural_effect,
)
from .lp import LinearProgram, LpOutcome, Sense, Status, solve_lp
from .model import CausalModel, ModelError, ResponseParameterization, Strategy, parameterize

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6


class InfeasibleDistributionError(ValueError):
    """The observed distribution is incompatible with the model."""

    def __init__(self, msg, outcome: LpOutcome | None = None):
        super().__init__(msg)
        self.outcome = outcome


class PositivityError(ValueError):
    pass


@dataclass(frozen=True)
class Estimand:
    kind: str = "RD"
    s: int | None = None

    def __post_init__(self):
        if self.kind not in ("EY0", "EY1", "RD"):
            raise ValueError(f"unknown estimand kind {self.kind!r}")
        if self.s not in (None, 0, 1):
            raise ValueError("conditioning value must be 0 or 1")

    @classmethod
    def parse(cls, text: str, s: int | None = None) -> "Estimand":
        return cls(text.upper(), s)

    def check(self, m: CausalModel):
        if self.s is not None and m.covariate is None:
            raise ModelError(f"{m.name}: conditional estimand needs a covariate")

    def __str__(self):
        return self.kind if self.s is None else f"{self.kind}|S={self.s}"


def _coefficients(param: ResponseParameterization, kind: str) -> np.ndarray:
    y1, y0 = param.potential_outcome(1), param.potential_outcome(0)
    return {"RD": y1 - y0, "EY1": y1, "EY0": y0}[kind]


def _check_lp_model(m: CausalModel):
    if m.strategy is not Strategy.LP:
        raise ModelError(f"{m.name}: no LP parameterization for a {m.strategy.value} model")


def _cell_rows(m: CausalModel, d: ObservedDistribution, strata=None):
    """One equality row per (left assignment, right assignment) cell.

    ``strata`` restricts rows to left or right assignments in which the
    covariate takes one of the given values.  Left assignments of zero
    probability are omitted and reported in the returned notes.
    """
    param = parameterize(m)
    left, right = param.left_vars, param.right_vars
    cov = m.covariate
    rows, rhs, labels, notes = [], [], [], []
    for li, lvals in enumerate(param.left_assignments):
        lassign = dict(zip(left, lvals))
        if strata is not None and cov in lassign and lassign[cov] not in strata:
            continue
        pl = d.prob(lassign) if lassign else 1.0
        if pl <= 0:
            notes.append("omitted zero-probability left cell "
                         + ",".join(f"{k}={v}" for k, v in lassign.items()))
            continue
        ridx = param.right_index[li]
        for ri, rvals in enumerate(param.right_assignments):
            rassign = dict(zip(right, rvals))
            if strata is not None and cov in rassign and rassign[cov] not in strata:
                continue
            rows.append((ridx == ri).astype(float))
            rhs.append(d.prob({**lassign, **rassign}) / pl)
            labels.append(",".join(f"{k}={v}" for k, v in {**lassign, **rassign}.items()))
    for n in notes:
        log.warning("%s: %s", m.name, n)
    return rows, rhs, labels, notes


def build_bounds_lp(m: CausalModel, d: ObservedDistribution, e: Estimand) -> LinearProgram:
    """LP over joint response types whose optimum is the sharp bound on ``e``."""
    _check_lp_model(m)
    e.check(m)
    param = parameterize(m)
    missing = set(m.observed_vars) - set(d.vars)
    if missing:
        raise ModelError(f"{m.name}: distribution lacks variables {sorted(missing)}")
    d = marginal(d, m.observed_vars)
    rows, rhs, labels, notes = _cell_rows(m, d)
    n = param.type_count
    rows.append(np.ones(n))
    rhs.append(1.0)
    labels.append("simplex")
    c = _coefficients(param, e.kind).astype(float)
    if e.s is not None and m.covariate_side == "right":
        ps = d.prob({m.covariate: e.s})
        if ps <= 0:
            raise ZeroProbabilityError({m.covariate: e.s})
        c = c * (param.covariate_value == e.s) / ps
    return LinearProgram(c, np.array(rows), np.array(rhs), row_labels=tuple(labels),
                         notes=tuple(notes))


@dataclass(frozen=True, eq=False)
class LpBounds(BoundsInterval):
    """Covariate-optimal interval carrying the optimal LP solutions."""

    lower_solution: np.ndarray | None = field(default=None, compare=False, repr=False)
    upper_solution: np.ndarray | None = field(default=None, compare=False, repr=False)


def co_bounds(m: CausalModel, d: ObservedDistribution, e: Estimand | str = "RD",
              exact: bool = False) -> LpBounds:
    e = Estimand.parse(e) if isinstance(e, str) else e
    lp = build_bounds_lp(m, d, e)
    lo = solve_lp(lp, Sense.MIN, exact=exact)
    if lo.status is Status.INFEASIBLE:
        raise InfeasibleDistributionError(
            f"{m.name}: observed distribution is outside the model (bounds LP infeasible)", lo)
    hi = solve_lp(lp, Sense.MAX, exact=exact)
    upper = max(hi.optimum, lo.optimum)
    return LpBounds(lo.optimum, upper, "co", e.kind, True, lo.solution, hi.solution)


def witness_distribution(m: CausalModel, d: ObservedDistribution, solution) -> StructuralTruth:
    """Structural truth attaining an LP optimum, with ``d``'s left-block joint."""
    param = parameterize(m)
    q = np.clip(np.asarray(solution, dtype=float)[:param.type_count], 0.0, None)
    q = q / q.sum()
    left_joint = marginal(d, m.left_block) if m.left_block else None
    return StructuralTruth(m.name, q, left_joint, structural_effect(m, q))


def estimand_value(m: CausalModel, q, e: Estimand) -> float:
    return structural_effect(m, q, e.kind, e.s)


# ---------------------------------------------------------------------------
# sharpness checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SharpnessResult:
    feasible: bool
    witness: StructuralTruth | None = None
    outcome: LpOutcome | None = field(default=None, repr=False)


def _stratum_objective(m, param, d, kind, s):
    """(coefficients over types, rhs scale) of the linearized theta_s."""
    f = _coefficients(param, kind).astype(float)
    if m.covariate_side == "right":
        ind = (param.covariate_value == s).astype(float)
        return f * ind, d.prob({m.covariate: s})
    return f, 1.0


def _sharpness_lp(m, d, bounds_per_s, eps, kind, side, strata):
    param = parameterize(m)
    d = marginal(d, m.observed_vars)
    rows, rhs, labels, _ = _cell_rows(m, d, strata)
    n = param.type_count
    n_slack = len(bounds_per_s)
    rows = [np.r_[r, np.zeros(n_slack)] for r in rows]
    rows.append(np.r_[np.ones(n), np.zeros(n_slack)])
    rhs.append(1.0)
    labels.append("simplex")
    sign = 1.0 if side == "lower" else -1.0
    for k, (s, bound) in enumerate(sorted(bounds_per_s.items())):
        coef, scale = _stratum_objective(m, param, d, kind, s)
        slack = np.zeros(n_slack)
        slack[k] = 1.0
        # lower: theta_s + slack = L_s + eps ; upper: -theta_s + slack = -(U_s - eps)
        rows.append(np.r_[sign * coef, slack])
        rhs.append(sign * (bound + sign * eps) * scale)
        labels.append(f"theta_{s}")
    return LinearProgram(np.zeros(n + n_slack), np.array(rows), np.array(rhs), n_simplex=n,
                         row_labels=tuple(labels))


def _positive_strata(m, d, bounds_per_s):
    cov = m.covariate
    if cov is None:
        raise ModelError(f"{m.name}: sharpness checks need a covariate")
    kept = {}
    for s, b in bounds_per_s.items():
        if d.prob({cov: s}) <= 0:
            log.warning("%s: stratum %s=%s has zero probability, skipped", m.name, cov, s)
            continue
        kept[s] = b
    return kept


def _result(m, d, out: LpOutcome) -> SharpnessResult:
    if out.status is Status.INFEASIBLE:
        return SharpnessResult(False, None, out)
    return SharpnessResult(True, witness_distribution(m, d, out.solution), out)


def pointwise_sharpness_check(m: CausalModel, d: ObservedDistribution,
                              bounds_per_s: Mapping[int, float], eps: float = DEFAULT_EPSILON,
                              kind: str = "RD", side: str = "lower",
                              exact: bool = False) -> dict[int, SharpnessResult]:
    """Per stratum: is some model distribution matching only that stratum's
    observed conditional within ``eps`` of the stratum bound?"""
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    _check_lp_model(m)
    out = {}
    for s, b in _positive_strata(m, d, bounds_per_s).items():
        lp = _sharpness_lp(m, d, {s: b}, eps, kind, side, strata={s})
        out[s] = _result(m, d, solve_lp(lp, exact=exact))
    return out


def uniform_sharpness_check(m: CausalModel, d: ObservedDistribution,
                            bounds_per_s: Mapping[int, float], eps: float = DEFAULT_EPSILON,
                            kind: str = "RD", side: str = "lower",
                            exact: bool = False) -> SharpnessResult:
    """Does one model distribution reproduce all of ``d`` and come within
    ``eps`` of every stratum bound simultaneously?"""
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    _check_lp_model(m)
    kept = _positive_strata(m, d, bounds_per_s)
    lp = _sharpness_lp(m, d, kept, eps, kind, side, strata=None)
    return _result(m, d, solve_lp(lp, exact=exact))


# ---------------------------------------------------------------------------
# closed-form methods and back-door
# ---------------------------------------------------------------------------

def cm_bounds(m: CausalModel, d: ObservedDistribution, e: Estimand | str = "RD") -> BoundsInterval:
    e = Estimand.parse(e) if isinstance(e, str) else e
    return closedform.base_bounds(d, e.kind, "cm", m.instrument)


def ca_bounds(m: CausalModel, d: ObservedDistribution, e: Estimand | str = "RD") -> BoundsInterval:
    e = Estimand.parse(e) if isinstance(e, str) else e
    if m.covariate is None:
        raise ModelError(f"{m.name}: covariate averaging needs a covariate")
    return closedform.averaged_bounds(d, m.covariate, e.kind, m.instrument)


def conditional_lower_bounds(m: CausalModel, d: ObservedDistribution, kind: str = "RD",
                             side: str = "lower") -> dict[int, float]:
    """Stratum-conditional base bounds L_s (or U_s) for the sharpness checks."""
    intervals, _ = closedform.stratum_bounds(d, m.covariate, kind, m.instrument)
    return {s: iv.lower if side == "lower" else iv.upper for s, iv in intervals.items()}


def backdoor_rd(d: ObservedDistribution, covariate: str = "S") -> float:
    """sum_s P(S=s) [P(Y=1|X=1,S=s) - P(Y=1|X=0,S=s)]."""
    d = marginal(d, (covariate, "X", "Y"))
    total = 0.0
    for s in (0, 1):
        for x in (0, 1):
            if d.prob({"X": x, covariate: s}) <= 0:
                raise PositivityError(f"positivity violated: P(X={x},{covariate}={s}) = 0")
        total += d.prob({covariate: s}) * (
            d.cond({"Y": 1}, {"X": 1, covariate: s}) - d.cond({"Y": 1}, {"X": 0, covariate: s})
        )
    return total


def compute_bounds(m: CausalModel, d: ObservedDistribution, e: Estimand, method: str,
                   exact: bool = False) -> BoundsInterval:
    if method == "co":
        return co_bounds(m, d, e, exact=exact)
    if e.s is not None:
        raise ModelError("conditional estimands are supported by the co method only")
    if method == "cm":
        return cm_bounds(m, d, e)
    if method == "ca":
        return ca_bounds(m, d, e)
    if method == "backdoor":
        if e.kind != "RD":
            raise ModelError("back-door identification is implemented for RD")
        v = backdoor_rd(d, m.covariate or "S")
        return BoundsInterval(v, v, "backdoor", "RD", True)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# testable implications
# ---------------------------------------------------------------------------

def model_constraint_violations(m: CausalModel, d: ObservedDistribution,
                                tol: float = 1e-6) -> list[str]:
    """Equality constraints the model imposes on ``d`` that fail beyond ``tol``.

    For every ancestral subset R of the right block, P(R | left) may depend
    only on the left-block parents of R.  LP models are additionally checked
    for feasibility of the bounds LP (inequality constraints).
    """
    d = marginal(d, m.observed_vars)
    right, left = m.right_block, m.left_block
    problems = []
    for r in range(1, len(right) + 1):
        for sub in itertools.combinations(right, r):
            if any(p in right and p not in sub for v in sub for p in m.parents(v)):
                continue
            relevant = {p for v in sub for p in m.parents(v) if p in left}
            free = [v for v in left if v not in relevant]
            if not free:
                continue
            for rvals in itertools.product((0, 1), repeat=len(sub)):
                for rel in itertools.product((0, 1), repeat=len(relevant)):
                    fixed = dict(zip(sorted(relevant), rel))
                    vals = []
                    for fv in itertools.product((0, 1), repeat=len(free)):
                        given = {**fixed, **dict(zip(free, fv))}
                        if d.prob(given) > 0:
                            vals.append(d.cond(dict(zip(sub, rvals)), given))
                    if vals and max(vals) - min(vals) > tol:
                        problems.append(
                            f"P({','.join(sub)}={''.join(map(str, rvals))} | "
                            f"{','.join(f'{k}={v}' for k, v in fixed.items()) or 'left'}) varies "
                            f"with {','.join(free)} by {max(vals) - min(vals):.3g}"
                        )
    if m.strategy is Strategy.LP and not problems:
        lp = build_bounds_lp(m, d, Estimand("RD"))
        out = solve_lp(lp.with_objective(np.zeros(lp.n_vars)))
        if out.status is Status.INFEASIBLE:
            problems.append("no response-type distribution reproduces the observed table")
    return problems

"""Probability tables over observed binary variables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .model import CausalModel, ModelError, parameterize

NORMALIZATION_TOL = 1e-12


class DistributionError(ValueError):
    pass


class ZeroProbabilityError(DistributionError):
    def __init__(self, event: Mapping[str, int]):
        self.event = dict(event)
        name = ",".join(f"{k}={v}" for k, v in event.items()) or "<empty>"
        super().__init__(f"zero-probability conditioning event P({name}) = 0")


@dataclass(frozen=True, eq=False)
class ObservedDistribution:
    """Joint distribution over binary variables.

    The table has one axis per variable (in ``vars`` order).  Entries must be
    nonnegative and sum to one within ``1e-12``; nothing is silently
    renormalized, use :meth:`normalized` explicitly.
    """

    vars: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        vars_ = tuple(self.vars)
        table = np.array(self.table, dtype=float).reshape((2,) * len(vars_))
        if len(set(vars_)) != len(vars_):
            raise DistributionError(f"duplicate variables in {vars_}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise DistributionError("probabilities must be finite and nonnegative")
        total = table.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise DistributionError(f"probabilities sum to {total!r}, not 1")
        table.setflags(write=False)
        object.__setattr__(self, "vars", vars_)
        object.__setattr__(self, "table", table)

    # -- queries -----------------------------------------------------------

    def _axes(self, names) -> tuple[int, ...]:
        unknown = [n for n in names if n not in self.vars]
        if unknown:
            raise DistributionError(f"unknown variable(s) {unknown}; table has {list(self.vars)}")
        return tuple(self.vars.index(n) for n in names)

    def prob(self, assignment: Mapping[str, int] | None = None, **kw: int) -> float:
        """Marginal probability of a (partial) named assignment."""
        event = dict(assignment or {}, **kw)
        axes = self._axes(event)
        index = [slice(None)] * len(self.vars)
        for ax, name in zip(axes, event):
            index[ax] = int(event[name])
        return float(self.table[tuple(index)].sum())

    def cond(self, event: Mapping[str, int], given: Mapping[str, int]) -> float:
        """P(event | given)."""
        denom = self.prob(given)
        if denom <= 0:
            raise ZeroProbabilityError(given)
        return self.prob({**given, **event}) / denom

    def items(self):
        for idx in np.ndindex(self.table.shape):
            yield dict(zip(self.vars, idx)), float(self.table[idx])

    def normalized(self) -> "ObservedDistribution":
        t = np.clip(np.asarray(self.table, dtype=float), 0, None)
        return ObservedDistribution(self.vars, t / t.sum())

    def allclose(self, other: "ObservedDistribution", atol: float) -> bool:
        if set(self.vars) != set(other.vars):
            return False
        o = other.reorder(self.vars)
        return bool(np.max(np.abs(self.table - o.table)) <= atol)

    def reorder(self, vars_) -> "ObservedDistribution":
        axes = self._axes(vars_)
        return ObservedDistribution(tuple(vars_), np.transpose(self.table, axes))

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        p = {}
        for idx in np.ndindex(self.table.shape):
            v = float(self.table[idx])
            if v != 0.0:
                p["".join(map(str, idx))] = v
        return {"vars": list(self.vars), "p": p}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ObservedDistribution":
        try:
            vars_ = tuple(obj["vars"])
            entries = obj["p"]
        except (KeyError, TypeError):
            raise DistributionError('distribution JSON needs "vars" and "p"') from None
        table = np.zeros((2,) * len(vars_))
        for key, val in entries.items():
            if len(key) != len(vars_) or set(key) - {"0", "1"}:
                raise DistributionError(f"bad assignment key {key!r} for vars {vars_}")
            table[tuple(int(c) for c in key)] = float(val)
        return cls(vars_, table)

    def __repr__(self):
        return f"ObservedDistribution(vars={self.vars}, p={self.to_json()['p']})"


def load_distribution(path: str | Path) -> ObservedDistribution:
    with open(path) as fh:
        return ObservedDistribution.from_json(json.load(fh))


def condition_on(d: ObservedDistribution, assignment: Mapping[str, int]) -> ObservedDistribution:
    """Conditional table over the remaining variables given ``assignment``."""
    axes = d._axes(assignment)
    mass = d.prob(assignment)
    if mass <= 0:
        raise ZeroProbabilityError(assignment)
    index = [slice(None)] * len(d.vars)
    for ax, name in zip(axes, assignment):
        index[ax] = int(assignment[name])
    rest = tuple(v for v in d.vars if v not in assignment)
    sub = d.table[tuple(index)] / mass
    # absorb the 1-ulp drift of the division so the result passes validation
    return ObservedDistribution(rest, sub / sub.sum())


def marginalize_out(d: ObservedDistribution, vars_) -> ObservedDistribution:
    vars_ = tuple(vars_)
    axes = d._axes(vars_)
    rest = tuple(v for v in d.vars if v not in vars_)
    return ObservedDistribution(rest, d.table.sum(axis=axes) if axes else d.table)


def marginal(d: ObservedDistribution, keep) -> ObservedDistribution:
    keep = set(keep)
    return marginalize_out(d, [v for v in d.vars if v not in keep])


@dataclass(frozen=True, eq=False)
class StructuralTruth:
    """A point in the model: type distribution ``q`` plus left-block joint.

    ``left_joint`` is ``None`` for models with an empty left block.
    """

    model_id: str
    q: np.ndarray
    left_joint: ObservedDistribution | None
    theta_true: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
            raise DistributionError("q must be a probability vector")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def pz(self) -> float:
        """P(Z=1) when the left block is the single instrument Z."""
        if self.left_joint is None or self.left_joint.vars != ("Z",):
            raise DistributionError("pz is defined only for a Z-only left block")
        return self.left_joint.prob(Z=1)


def structural_effect(m: CausalModel, q, kind: str = "RD", s: int | None = None) -> float:
    """Estimand value computed directly from the type distribution."""
    param = parameterize(m)
    q = np.asarray(q, dtype=float)
    y1, y0 = param.potential_outcome(1), param.potential_outcome(0)
    f = {"RD": y1 - y0, "EY1": y1, "EY0": y0}[kind]
    if s is None or m.covariate_side == "left":
        return float(q @ f)
    ind = (param.covariate_value == s).astype(float)
    mass = float(q @ ind)
    if mass <= 0:
        raise ZeroProbabilityError({m.covariate: s})
    return float(q @ (ind * f)) / mass


def make_truth(m: CausalModel, q, left_joint: ObservedDistribution | None, **meta) -> StructuralTruth:
    return StructuralTruth(m.name, q, left_joint, structural_effect(m, q), meta)


def pushforward_observed(m: CausalModel, t: StructuralTruth) -> ObservedDistribution:
    """Observed joint implied by a structural truth.

    P(left=l, right=r) = P(left=l) * sum of q over the types mapping l to r.
    """
    param = parameterize(m)
    q = np.asarray(t.q, dtype=float)
    if q.shape != (param.type_count,):
        raise ModelError(
            f"{m.name}: q has {q.size} entries, parameterization has {param.type_count}"
        )
    left = param.left_vars
    if left:
        if t.left_joint is None or set(t.left_joint.vars) != set(left):
            raise ModelError(f"{m.name}: left_joint must cover {left}")
        lj = t.left_joint.reorder(left).table.reshape(-1)
    else:
        lj = np.ones(1)
    n_right = 2 ** len(param.right_vars)
    blocks = [
        lj[li] * np.bincount(param.right_index[li], weights=q, minlength=n_right)
        for li in range(len(param.left_assignments))
    ]
    joint = np.stack(blocks).reshape((2,) * (len(left) + len(param.right_vars)))
    total = joint.sum()
    if abs(total - 1.0) > 1e-9:
        raise DistributionError(f"pushforward mass {total!r}; left_joint or q not normalized")
    out = ObservedDistribution(left + param.right_vars, joint / total)
    return out.reorder(m.observed_vars)

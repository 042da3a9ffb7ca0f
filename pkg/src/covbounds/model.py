"""Binary causal models and their canonical response-function parameterization.

A model splits its observed variables into a *left* block (instrument side,
e.g. ``{Z}`` or ``{Z, S}``) and a *right* block whose members share a single
latent confounder (e.g. ``{X, Y}`` or ``{S, X, Y}``).  The right-block latent
is represented by an arbitrary distribution over joint response types; the
left-block latent is never parameterized because every bound conditions on
left-block assignments.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

CANONICAL_ORDER = ("Z", "S", "X", "Y")


class ModelError(ValueError):
    """Raised for structurally invalid models."""


class UnknownModelError(KeyError):
    def __init__(self, model_id: str):
        self.model_id = model_id
        super().__init__(
            f"unknown model {model_id!r}; valid ids: {', '.join(BUILTIN_IDS)}"
        )

    def __str__(self) -> str:
        return self.args[0]


class Strategy(str, enum.Enum):
    LP = "LP"
    BACKDOOR_ONLY = "BACKDOOR_ONLY"


def _canonical_sort(names: Iterable[str]) -> tuple[str, ...]:
    names = list(names)
    if all(n in CANONICAL_ORDER for n in names):
        return tuple(sorted(names, key=CANONICAL_ORDER.index))
    return tuple(names)


@dataclass(frozen=True)
class CausalModel:
    name: str
    observed_vars: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    left_block: tuple[str, ...]
    right_block: tuple[str, ...]
    exogenous: tuple[str, ...] = ()
    treatment: str = "X"
    outcome: str = "Y"
    covariate: str | None = None
    strategy: Strategy = Strategy.LP
    description: str = field(default="", compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "observed_vars", _canonical_sort(self.observed_vars))
        order = self.observed_vars
        set_(self, "left_block", tuple(v for v in order if v in set(self.left_block)))
        set_(self, "right_block", tuple(v for v in order if v in set(self.right_block)))
        set_(self, "exogenous", tuple(v for v in order if v in set(self.exogenous)))
        set_(self, "edges", tuple(tuple(e) for e in self.edges))
        set_(self, "strategy", Strategy(self.strategy))
        self._validate()

    def _validate(self):
        vars_ = set(self.observed_vars)
        if len(vars_) != len(self.observed_vars):
            raise ModelError(f"{self.name}: duplicate variable names")
        for a, b in self.edges:
            if a not in vars_ or b not in vars_:
                raise ModelError(f"{self.name}: edge {a}->{b} uses an undeclared variable")
            if a == b:
                raise ModelError(f"{self.name}: self-loop on {a}")
        left, right = set(self.left_block), set(self.right_block)
        if left & right:
            raise ModelError(f"{self.name}: {sorted(left & right)} in both blocks")
        if left | right != vars_:
            missing = sorted(vars_ - left - right)
            raise ModelError(f"{self.name}: {missing} belong to no block")
        if not set(self.exogenous) <= left:
            raise ModelError(f"{self.name}: exogenous variables must sit in the left block")
        for v in self.exogenous:
            if self.parents(v):
                raise ModelError(f"{self.name}: exogenous {v} has parents")
        for role in (self.treatment, self.outcome):
            if role not in right:
                raise ModelError(f"{self.name}: {role} must be in the right block")
        if self.covariate is not None and self.covariate not in vars_:
            raise ModelError(f"{self.name}: covariate {self.covariate} not observed")
        for a, b in self.edges:
            if a in right and b in left:
                raise ModelError(f"{self.name}: edge {a}->{b} runs from right to left block")
        self.topological_order()  # raises on cycles

    # -- structure ---------------------------------------------------------

    def parents(self, v: str) -> tuple[str, ...]:
        ps = {a for a, b in self.edges if b == v}
        return tuple(p for p in self.observed_vars if p in ps)

    def topological_order(self) -> tuple[str, ...]:
        remaining = list(self.observed_vars)
        done: list[str] = []
        while remaining:
            ready = [v for v in remaining if all(p in done for p in self.parents(v))]
            if not ready:
                raise ModelError(f"{self.name}: edge set is cyclic")
            done.append(ready[0])
            remaining.remove(ready[0])
        return tuple(done)

    @property
    def covariate_side(self) -> str | None:
        if self.covariate is None:
            return None
        return "left" if self.covariate in self.left_block else "right"

    @property
    def instrument(self) -> str | None:
        """The left-block variable other than the covariate, when unique."""
        cands = [v for v in self.left_block if v != self.covariate]
        return cands[0] if len(cands) == 1 else None

    def in_iv_covariate_class(self) -> bool:
        """Membership predicate for the class of IV models with a covariate.

        Checks structurally that the instrument is conditionally ignorable
        given the covariate and that it has no direct path into the outcome.
        """
        z, s = self.instrument, self.covariate
        if z is None or s is None:
            return False
        if (z, self.outcome) in self.edges or z in self.right_block:
            return False
        if s in self.right_block and (z, s) in self.edges:
            # conditioning on a right-block child of Z opens Z <- ... U_r
            return False
        return True

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "vars": list(self.observed_vars),
            "edges": [list(e) for e in self.edges],
            "left": list(self.left_block),
            "right": list(self.right_block),
            "exogenous": list(self.exogenous),
            "treatment": self.treatment,
            "outcome": self.outcome,
            "covariate": self.covariate,
            "strategy": self.strategy.value,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CausalModel":
        try:
            return cls(
                name=obj["name"],
                observed_vars=tuple(obj["vars"]),
                edges=tuple(tuple(e) for e in obj["edges"]),
                left_block=tuple(obj["left"]),
                right_block=tuple(obj["right"]),
                exogenous=tuple(obj.get("exogenous", ())),
                treatment=obj.get("treatment", "X"),
                outcome=obj.get("outcome", "Y"),
                covariate=obj.get("covariate"),
                strategy=obj.get("strategy", "LP"),
            )
        except KeyError as exc:
            raise ModelError(f"model JSON is missing field {exc.args[0]!r}") from None


def load_model(ref: str | Path) -> CausalModel:
    """Resolve a builtin id or a path to a model JSON file."""
    if str(ref) in _BUILTINS:
        return builtin_model(str(ref))
    path = Path(ref)
    if not path.exists():
        raise UnknownModelError(str(ref))
    with open(path) as fh:
        return CausalModel.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# builtin models
# ---------------------------------------------------------------------------

def _m(name, vars_, edges, left, right, exo=(), cov=None, strategy=Strategy.LP, desc=""):
    return dict(
        name=name,
        observed_vars=tuple(vars_),
        edges=tuple(tuple(e.split("->")) for e in edges),
        left_block=tuple(left),
        right_block=tuple(right),
        exogenous=tuple(exo),
        covariate=cov,
        strategy=strategy,
        description=desc,
    )


_BUILTINS = {
    "iv_base": _m("iv_base", "ZXY", ["Z->X", "X->Y"], "Z", "XY", exo="Z",
                  desc="binary instrumental variable model"),
    "confounded_pair": _m("confounded_pair", "XY", ["X->Y"], "", "XY",
                          desc="confounded exposure and outcome"),
    "s_model_1": _m("s_model_1", "SXY", ["S->X", "X->Y"], "S", "XY", exo="S", cov="S",
                    desc="S as an unconfounded parent of X (an instrument)"),
    "s_model_2": _m("s_model_2", "SXY", ["S->X", "S->Y", "X->Y"], "", "SXY", cov="S",
                    desc="S confounded with X and Y, parent of both"),
    "a": _m("a", "ZSXY", ["S->Z", "Z->X", "X->Y"], "ZS", "XY", cov="S",
            desc="S as a confounded parent of Z"),
    "b": _m("b", "ZSXY", ["Z->S", "Z->X", "X->Y"], "ZS", "XY", cov="S",
            desc="S as a confounded child of Z"),
    "c": _m("c", "ZSXY", ["S->Z", "S->X", "Z->X", "X->Y"], "ZS", "XY", cov="S",
            desc="S as a confounded parent of Z and a parent of X"),
    "d": _m("d", "ZSXY", ["Z->S", "S->X", "Z->X", "X->Y"], "ZS", "XY", cov="S",
            desc="S as a confounded child of Z and a parent of X"),
    "e": _m("e", "ZSXY", ["S->X", "S->Y", "Z->X", "X->Y"], "Z", "SXY", exo="Z", cov="S",
            desc="S independent of Z, confounded parent of X and Y"),
    "f": _m("f", "ZSXY", ["Z->S", "S->X", "X->Y"], "ZS", "XY", cov="S",
            desc="effect of Z on X entirely mediated via S"),
    "mediator": _m("mediator", "ZSXY", ["Z->X", "X->Y", "S->Y"], "Z", "SXY", exo="Z",
                   cov="S", strategy=Strategy.BACKDOOR_ONLY,
                   desc="IV setting with an unconfounded mediator-like S on the Y side"),
}

BUILTIN_IDS = tuple(_BUILTINS)
SIM_SETTINGS = ("a", "b", "c", "d", "e", "f")


def builtin_model(model_id: str) -> CausalModel:
    try:
        kwargs = _BUILTINS[model_id]
    except KeyError:
        raise UnknownModelError(model_id) from None
    return CausalModel(**kwargs)


# ---------------------------------------------------------------------------
# response-function parameterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarResponse:
    """Enumerated response functions of one right-block variable.

    ``functions[k]`` is a truth table: entry ``i`` is the value taken on the
    ``i``-th parent assignment, parents ordered as in ``parents`` with the
    first parent most significant.
    """

    name: str
    parents: tuple[str, ...]
    functions: tuple[tuple[int, ...], ...]

    def __call__(self, k: int, parent_values: Mapping[str, int]) -> int:
        i = 0
        for p in self.parents:
            i = 2 * i + parent_values[p]
        return self.functions[k][i]


def _enumerate_functions(n_parents: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.product((0, 1), repeat=2 ** n_parents))


@dataclass(frozen=True)
class ResponseParameterization:
    model: CausalModel
    variables: tuple[VarResponse, ...]

    @property
    def type_count(self) -> int:
        return int(np.prod([len(v.functions) for v in self.variables]))

    @property
    def left_vars(self) -> tuple[str, ...]:
        return self.model.left_block

    @property
    def right_vars(self) -> tuple[str, ...]:
        return self.model.right_block

    @cached_property
    def joint_types(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product(*(range(len(v.functions)) for v in self.variables)))

    @cached_property
    def left_assignments(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product((0, 1), repeat=len(self.left_vars)))

    @cached_property
    def right_assignments(self) -> tuple[tuple[int, ...], ...]:
        return tuple(itertools.product((0, 1), repeat=len(self.right_vars)))

    def evaluate(self, t: int, left: Mapping[str, int],
                 do: Mapping[str, int] | None = None) -> dict[str, int]:
        """Right-block values produced by joint type ``t`` under ``left``.

        ``do`` fixes variables by intervention; their response functions are
        then ignored.
        """
        ks = self.joint_types[t]
        values = dict(left)
        by_name = {v.name: (v, k) for v, k in zip(self.variables, ks)}
        for name in self.model.topological_order():
            if name not in by_name:
                continue
            if do and name in do:
                values[name] = do[name]
            else:
                var, k = by_name[name]
                values[name] = var(k, values)
        return {v: values[v] for v in self.right_vars}

    @cached_property
    def right_index(self) -> np.ndarray:
        """``right_index[l, t]``: lexicographic index of the right assignment
        that type ``t`` yields under left assignment ``l``."""
        out = np.empty((len(self.left_assignments), self.type_count), dtype=np.int64)
        for li, lvals in enumerate(self.left_assignments):
            left = dict(zip(self.left_vars, lvals))
            for t in range(self.type_count):
                vals = self.evaluate(t, left)
                idx = 0
                for v in self.right_vars:
                    idx = 2 * idx + vals[v]
                out[li, t] = idx
        out.setflags(write=False)
        return out

    def _invariant_over_left(self, fn) -> np.ndarray:
        rows = []
        for lvals in self.left_assignments:
            left = dict(zip(self.left_vars, lvals))
            rows.append([fn(t, left) for t in range(self.type_count)])
        arr = np.asarray(rows, dtype=float)
        if not np.all(arr == arr[0]):
            raise ModelError(
                f"{self.model.name}: quantity depends on left-block values; "
                "the estimand is not a function of the right-block types alone"
            )
        out = arr[0]
        out.setflags(write=False)
        return out

    def potential_outcome(self, x: int) -> np.ndarray:
        """``Y_t(X=x)`` for every joint type."""
        return self._po[x]

    @cached_property
    def _po(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.model
        return tuple(
            self._invariant_over_left(
                lambda t, left, x=x: self.evaluate(t, left, do={m.treatment: x})[m.outcome]
            )
            for x in (0, 1)
        )

    @cached_property
    def covariate_value(self) -> np.ndarray:
        """Natural value of a right-block covariate for every joint type."""
        s = self.model.covariate
        if s is None or s not in self.right_vars:
            raise ModelError(f"{self.model.name}: no right-block covariate")
        return self._invariant_over_left(lambda t, left: self.evaluate(t, left)[s])


def parameterize(m: CausalModel) -> ResponseParameterization:
    """Canonical response-function parameterization of an LP model.

    Functions are enumerated lexicographically over their truth tables and
    joint types lexicographically over variables in the model's variable
    order, so repeated calls give identical orderings.
    """
    if m.strategy is not Strategy.LP:
        raise ModelError(f"{m.name}: no LP parameterization for a {m.strategy.value} model")
    return _parameterize_cached(m)


_PARAM_CACHE: dict[CausalModel, ResponseParameterization] = {}


def _parameterize_cached(m: CausalModel) -> ResponseParameterization:
    try:
        return _PARAM_CACHE[m]
    except KeyError:
        pass
    variables = tuple(
        VarResponse(v, m.parents(v), _enumerate_functions(len(m.parents(v))))
        for v in m.right_block
    )
    param = ResponseParameterization(m, variables)
    _PARAM_CACHE[m] = param
    return param

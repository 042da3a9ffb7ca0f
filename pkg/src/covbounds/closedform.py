"""Closed-form bound expressions as data, plus averaging and RD composition.

Every expression set is a max (lower bound) or min (upper bound) over affine
terms in named probability atoms.  Terms are stored as strings in subscript
notation and parsed once at import:

=================  ===========================  =========================
notation           atom kind                    meaning
=================  ===========================  =========================
``p_{yx}``         ``joint``                    P(Y=y, X=x)
``p_{yx.z}``       ``cond_z``                   P(Y=y, X=x | Z=z)
``p_{yx.zs}``      ``cond_zs``                  P(Y=y, X=x | Z=z, S=s)
``p_{yx.zs}``      ``cond_zs`` (literal ``s``)  stratum taken from context
``p_{yxs.z}``      ``joint_s_cond_z``           P(Y=y, X=x, S=s | Z=z)
``p_{s}``          ``marg_s``                   P(S=s)
=================  ===========================  =========================
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping

from .dist import ObservedDistribution, condition_on, marginal

ATOM_KINDS = ("joint", "cond_z", "cond_zs", "joint_s_cond_z", "marg_s")


class RegistryError(KeyError):
    def __str__(self) -> str:
        return self.args[0]


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class ProbAtom:
    kind: str
    y: int | None = None
    x: int | None = None
    z: int | None = None
    s: int | None = None  # None in cond_zs: bound from the evaluation context

    def __post_init__(self):
        need = {
            "joint": ("y", "x"),
            "cond_z": ("y", "x", "z"),
            "cond_zs": ("y", "x", "z"),
            "joint_s_cond_z": ("y", "x", "s", "z"),
            "marg_s": ("s",),
        }
        if self.kind not in need:
            raise ExpressionError(f"unknown atom kind {self.kind!r}")
        for name in ("y", "x", "z", "s"):
            v = getattr(self, name)
            if name in need[self.kind] and v not in (0, 1):
                raise ExpressionError(f"{self.kind} atom needs {name} in {{0,1}}")
            if name not in need[self.kind] and v is not None and not (
                    self.kind == "cond_zs" and name == "s"):
                raise ExpressionError(f"{self.kind} atom takes no {name} index")
        if self.kind == "cond_zs" and self.s not in (0, 1, None):
            raise ExpressionError("cond_zs stratum must be 0, 1 or contextual")

    def relabel_y(self) -> "ProbAtom":
        if self.y is None:
            raise ExpressionError(f"{self} has no outcome index to relabel")
        return replace(self, y=1 - self.y)

    def relabel_x(self) -> "ProbAtom":
        return replace(self, x=1 - self.x)

    def __str__(self) -> str:
        s = "s" if self.s is None else str(self.s)
        if self.kind == "joint":
            return f"p_{{{self.y}{self.x}}}"
        if self.kind == "cond_z":
            return f"p_{{{self.y}{self.x}.{self.z}}}"
        if self.kind == "cond_zs":
            return f"p_{{{self.y}{self.x}.{self.z}{s}}}"
        if self.kind == "joint_s_cond_z":
            return f"p_{{{self.y}{self.x}{self.s}.{self.z}}}"
        return f"p_{{{self.s}}}"


@dataclass(frozen=True)
class Term:
    constant: Fraction
    coeffs: tuple[tuple[Fraction, ProbAtom], ...]

    @property
    def stratum(self) -> int | None:
        """The explicit stratum shared by all s-indexed atoms, if any."""
        ss = {a.s for _, a in self.coeffs if a.kind == "cond_zs" and a.s is not None}
        return ss.pop() if len(ss) == 1 else None

    def map_atoms(self, fn) -> "Term":
        return Term(self.constant, tuple((c, fn(a)) for c, a in self.coeffs))

    def negated(self, offset: int) -> "Term":
        return Term(offset - self.constant, tuple((-c, a) for c, a in self.coeffs))

    def __str__(self) -> str:
        parts = []
        if self.constant:
            parts.append(str(self.constant))
        for c, a in self.coeffs:
            mag = "" if abs(c) == 1 else f"{abs(c)}*"
            sign = "-" if c < 0 else "+"
            if not parts:
                parts.append(("-" if c < 0 else "") + mag + str(a))
            else:
                parts.append(f" {sign} {mag}{a}")
        return "".join(parts) if parts else "0"


_ATOM_RE = re.compile(r"p_\{([0-9s.]+)\}")
_TOKEN_RE = re.compile(r"\s*([+-]?)\s*(?:(\d+)\s*\*?\s*)?(p_\{[0-9s.]+\})?")


def parse_atom(text: str) -> ProbAtom:
    m = _ATOM_RE.fullmatch(text.strip())
    if not m:
        raise ExpressionError(f"not an atom: {text!r}")
    body = m.group(1)
    head, _, tail = body.partition(".")
    d = [None if ch == "s" else int(ch) for ch in head]
    t = [None if ch == "s" else int(ch) for ch in tail]
    if not tail:
        if len(d) == 2:
            return ProbAtom("joint", y=d[0], x=d[1])
        if len(d) == 1:
            return ProbAtom("marg_s", s=d[0])
    elif len(d) == 2 and len(t) == 1:
        return ProbAtom("cond_z", y=d[0], x=d[1], z=t[0])
    elif len(d) == 2 and len(t) == 2:
        return ProbAtom("cond_zs", y=d[0], x=d[1], z=t[0], s=t[1])
    elif len(d) == 3 and len(t) == 1:
        return ProbAtom("joint_s_cond_z", y=d[0], x=d[1], s=d[2], z=t[0])
    raise ExpressionError(f"cannot classify atom {text!r}")


def parse_term(text: str) -> Term:
    """Parse e.g. ``"1 - p_{00.00} - p_{01.00}"`` or ``"-p_{00.0}+p_{10.1}"``."""
    pos, const, coeffs = 0, Fraction(0), []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionError(f"cannot parse term {text!r} at {pos}")
        sign = -1 if m.group(1) == "-" else 1
        num = Fraction(m.group(2)) if m.group(2) else None
        atom = m.group(3)
        if atom:
            coeffs.append((sign * (num or 1), parse_atom(atom)))
        elif num is not None:
            const += sign * num
        else:
            raise ExpressionError(f"dangling sign in {text!r}")
        pos = m.end()
    return Term(const, tuple(coeffs))


@dataclass(frozen=True)
class ExpressionSet:
    id: str
    sense: str  # "MAX" (lower bound) or "MIN" (upper bound)
    terms: tuple[Term, ...]
    estimand: str  # "EY0", "EY1" or "RD"
    provenance: str = "transcribed"
    note: str = ""

    def __post_init__(self):
        if self.sense not in ("MAX", "MIN"):
            raise ExpressionError(f"sense must be MAX or MIN, got {self.sense!r}")
        if not self.terms:
            raise ExpressionError(f"{self.id}: empty expression set")
        if self.estimand not in ("EY0", "EY1", "RD"):
            raise ExpressionError(f"{self.id}: unknown estimand {self.estimand!r}")

    @property
    def is_lower(self) -> bool:
        return self.sense == "MAX"

    def render(self) -> str:
        return "\n".join(str(t) for t in self.terms)


def _set(id_, sense, estimand, lines, provenance="transcribed", note=""):
    return ExpressionSet(id_, sense, tuple(parse_term(s) for s in lines), estimand,
                         provenance, note)


def mirror_set(es: ExpressionSet, new_id: str | None = None) -> ExpressionSet:
    """Outcome relabeling y -> 1-y with lower/upper duality.

    For E[Y(x)] the mirrored bound is 1 - (relabeled term); for the risk
    difference it is -(relabeled term).  Applying it twice is the identity.
    """
    offset = 0 if es.estimand == "RD" else 1
    terms = tuple(t.map_atoms(ProbAtom.relabel_y).negated(offset) for t in es.terms)
    sense = "MIN" if es.sense == "MAX" else "MAX"
    if new_id is None:
        new_id = es.id[:-7] if es.id.endswith("@mirror") else es.id + "@mirror"
    return ExpressionSet(new_id, sense, terms, es.estimand, "derived-by-symmetry", es.note)


def _relabel_x_set(es: ExpressionSet, new_id: str) -> ExpressionSet:
    swap = {"EY0": "EY1", "EY1": "EY0", "RD": "RD"}
    terms = tuple(t.map_atoms(ProbAtom.relabel_x) for t in es.terms)
    return ExpressionSet(new_id, es.sense, terms, swap[es.estimand], "derived-by-symmetry")


# -- transcriptions ----------------------------------------------------------

_A_MINUS_S = [
    "p_{10.1}",
    "-p_{00.0}-p_{01.0}+p_{10.1}+p_{01.1}",
    "p_{10.0}+p_{01.0}-p_{00.1}-p_{01.1}",
    "p_{10.0}",
]

_A_GIVEN_S = [
    "p_{10.1s}",
    "-p_{00.0s}-p_{01.0s}+p_{10.1s}+p_{01.1s}",
    "p_{10.0s}+p_{01.0s}-p_{00.1s}-p_{01.1s}",
    "p_{10.0s}",
]

_A_GIVEN_S_VERBATIM = [
    "p_{10.1s}",
    "-p_{00.0s}-p_{01.0s}+p_{10.1s}+p_{01.1s}",
    "p_{10.0}+p_{01.0}-p_{00.1}-p_{01.1s}",
    "p_{10.0s}",
]

_A_CO_E = [
    "p_{100.1}+p_{101.1}",
    "-p_{000.0}-p_{010.0}+p_{100.1}+p_{010.1}+p_{101.1}",
    "p_{100.0}+p_{010.0}-p_{000.1}-p_{010.1}+p_{101.1}",
    "p_{100.0}+p_{101.1}",
    "p_{100.1}-p_{001.0}-p_{011.0}+p_{101.1}+p_{011.1}",
    "-p_{000.0}-p_{010.0}+p_{100.1}+p_{010.1}-p_{001.0}-p_{011.0}+p_{101.1}+p_{011.1}",
    "p_{100.0}+p_{010.0}-p_{000.1}-p_{010.1}-p_{001.0}-p_{011.0}+p_{101.1}+p_{011.1}",
    "p_{100.0}-p_{001.0}-p_{011.0}+p_{101.1}+p_{011.1}",
    "p_{100.1}+p_{101.0}+p_{011.0}-p_{001.1}-p_{011.1}",
    "-p_{000.0}-p_{010.0}+p_{100.1}+p_{010.1}+p_{101.0}+p_{011.0}-p_{001.1}-p_{011.1}",
    "p_{100.0}+p_{010.0}-p_{000.1}-p_{010.1}+p_{101.0}+p_{011.0}-p_{001.1}-p_{011.1}",
    "p_{100.0}+p_{101.0}+p_{011.0}-p_{001.1}-p_{011.1}",
    "p_{100.1}+p_{101.0}",
    "-p_{000.0}-p_{010.0}+p_{100.1}+p_{010.1}+p_{101.0}",
    "p_{100.0}+p_{010.0}-p_{000.1}-p_{010.1}+p_{101.0}",
    "p_{100.0}+p_{101.0}",
]

# lower bound on P[Y(X=1)=1] within one stratum, z-only atoms
_BP_EY1_LOWER = [
    "1-p_{00.0}-p_{01.0}-p_{10.0}",
    "1-p_{00.1}-p_{01.1}-p_{10.1}",
    "1-p_{01.0}-p_{10.0}-p_{00.1}-p_{01.1}",
    "1-p_{00.0}-p_{01.0}-p_{01.1}-p_{10.1}",
]

_ADDIV_BP_PER_S = [
    "1-p_{00.01}-p_{01.01}-p_{10.01}",
    "1-p_{00.11}-p_{01.11}-p_{10.11}",
    "1-p_{01.01}-p_{10.01}-p_{00.11}-p_{01.11}",
    "1-p_{00.01}-p_{01.01}-p_{01.11}-p_{10.11}",
    "1-p_{00.00}-p_{01.00}-p_{10.00}",
    "1-p_{00.10}-p_{01.10}-p_{10.10}",
    "1-p_{01.00}-p_{10.00}-p_{00.10}-p_{01.10}",
    "1-p_{00.00}-p_{01.00}-p_{01.10}-p_{10.10}",
]

_ADDIV_CO = [
    "1-p_{00.00}-p_{01.00}-p_{10.00}",
    "1-p_{00.10}-p_{01.10}-p_{10.10}",
    "1-p_{00.01}-p_{01.01}-p_{10.01}",
    "1-p_{00.11}-p_{01.11}-p_{10.11}",
    "1-p_{01.00}-p_{10.00}-p_{00.01}-p_{01.01}",
    "1-p_{00.00}-p_{01.00}-p_{01.01}-p_{10.01}",
    "1-p_{01.00}-p_{10.00}-p_{00.10}-p_{01.10}",
    "1-p_{01.01}-p_{10.01}-p_{00.10}-p_{01.10}",
    "1-p_{00.00}-p_{01.00}-p_{01.10}-p_{10.10}",
    "1-p_{00.01}-p_{01.01}-p_{01.10}-p_{10.10}",
    "1-p_{01.10}-p_{10.10}-p_{00.11}-p_{01.11}",
    "1-p_{01.00}-p_{10.00}-p_{00.11}-p_{01.11}",
    "1-p_{01.01}-p_{10.01}-p_{00.11}-p_{01.11}",
    "1-p_{00.01}-p_{01.01}-p_{01.11}-p_{10.11}",
    "1-p_{00.00}-p_{01.00}-p_{01.11}-p_{10.11}",
    "1-p_{00.10}-p_{01.10}-p_{01.11}-p_{10.11}",
]


def _build_registry() -> dict[str, ExpressionSet]:
    reg = {}

    def add(es):
        reg[es.id] = es

    simple_lower = _set("simple_lower", "MAX", "RD", ["-p_{10}-p_{01}"])
    add(simple_lower)
    add(mirror_set(simple_lower, "simple_upper"))
    bp_ey0_lower = _set("bp_ey0_lower", "MAX", "EY0", _A_MINUS_S)
    add(bp_ey0_lower)
    add(mirror_set(bp_ey0_lower, "bp_ey0_upper"))
    bp_ey1_lower = _set("bp_ey1_lower", "MAX", "EY1", _BP_EY1_LOWER,
                        note="one stratum of the averaged additional-IV bound, S dropped")
    add(bp_ey1_lower)
    add(mirror_set(bp_ey1_lower, "bp_ey1_upper"))
    add(_set("A_minus_S", "MAX", "EY0", _A_MINUS_S))
    add(_set("A_given_s", "MAX", "EY0", _A_GIVEN_S, provenance="corrected",
             note="third term fully s-conditioned"))
    add(_set("A_given_s_verbatim", "MAX", "EY0", _A_GIVEN_S_VERBATIM,
             note="third term as printed, mixing marginal and s-conditioned atoms"))
    add(_set("A_co_setting_e", "MAX", "EY0", _A_CO_E))
    add(_set("addiv_bp_per_s", "MAX", "EY1", _ADDIV_BP_PER_S,
             note="terms 0-3 belong to stratum s=1, terms 4-7 to s=0"))
    add(_set("addiv_co", "MAX", "EY1", _ADDIV_CO))
    return reg


REGISTRY: dict[str, ExpressionSet] = _build_registry()

# natural (no-instrument) bounds on E[Y(x)], used when a model has no Z
_NATURAL = {
    ("EY0", "MAX"): _set("natural_ey0_lower", "MAX", "EY0", ["p_{10}"]),
    ("EY1", "MAX"): _set("natural_ey1_lower", "MAX", "EY1", ["p_{11}"]),
}
_NATURAL[("EY0", "MIN")] = mirror_set(_NATURAL[("EY0", "MAX")], "natural_ey0_upper")
_NATURAL[("EY1", "MIN")] = mirror_set(_NATURAL[("EY1", "MAX")], "natural_ey1_upper")


def get_expression_set(set_id: str) -> ExpressionSet:
    try:
        return REGISTRY[set_id]
    except KeyError:
        raise RegistryError(
            f"unknown expression set {set_id!r}; valid ids: {', '.join(REGISTRY)}"
        ) from None


# -- evaluation --------------------------------------------------------------

def _atom_value(d: ObservedDistribution, a: ProbAtom, s_context: int | None,
                z_var: str, s_var: str) -> float:
    s = a.s if a.s is not None else s_context
    if a.kind == "joint":
        return d.prob({"Y": a.y, "X": a.x})
    if a.kind == "marg_s":
        return d.prob({s_var: s})
    if a.kind == "cond_z":
        return d.cond({"Y": a.y, "X": a.x}, {z_var: a.z})
    if a.kind == "joint_s_cond_z":
        return d.cond({"Y": a.y, "X": a.x, s_var: s}, {z_var: a.z})
    if s is None:
        raise ExpressionError(f"{a} needs a stratum: pass s_context")
    return d.cond({"Y": a.y, "X": a.x}, {z_var: a.z, s_var: s})


def eval_term(t: Term, d: ObservedDistribution, s_context=None, z_var="Z", s_var="S",
              _cache=None) -> float:
    cache = {} if _cache is None else _cache
    total = float(t.constant)
    for c, a in t.coeffs:
        v = cache.get(a)
        if v is None:
            v = cache[a] = _atom_value(d, a, s_context, z_var, s_var)
        total += float(c) * v
    return total


def eval_terms(es: ExpressionSet, d: ObservedDistribution, s_context=None,
               z_var="Z", s_var="S") -> list[float]:
    """Values of the terms that apply in ``s_context`` (all when None)."""
    cache: dict = {}
    out = []
    for t in es.terms:
        st = t.stratum
        if s_context is not None and st is not None and st != s_context:
            continue
        out.append(eval_term(t, d, s_context, z_var, s_var, cache))
    return out


def eval_expression_set(es: ExpressionSet, d: ObservedDistribution,
                        s_context: int | None = None, *, z_var: str = "Z",
                        s_var: str = "S") -> float:
    """max (lower sets) or min (upper sets) of the applicable terms."""
    vals = eval_terms(es, d, s_context, z_var, s_var)
    return max(vals) if es.is_lower else min(vals)


# -- intervals -----------------------------------------------------------------

@dataclass(frozen=True)
class BoundsInterval:
    lower: float
    upper: float
    method: str
    estimand: str = "RD"
    sharp_by_construction: bool = False

    def __post_init__(self):
        if self.method not in ("cm", "ca", "co", "backdoor"):
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.lower > self.upper + 1e-9:
            raise ValueError(f"{self.method}: lower {self.lower} exceeds upper {self.upper}")
        lo, hi = (-1.0, 1.0) if self.estimand == "RD" else (0.0, 1.0)
        if self.lower < lo - 1e-9 or self.upper > hi + 1e-9:
            raise ValueError(f"{self.method}: [{self.lower}, {self.upper}] outside [{lo}, {hi}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def within(self, other: "BoundsInterval", tol: float = 1e-9) -> bool:
        """``self`` is a subset of ``other`` under the tolerance rule."""
        return self.lower >= other.lower - tol and self.upper <= other.upper + tol


def compose_rd(ey1: BoundsInterval, ey0: BoundsInterval, method: str | None = None) -> BoundsInterval:
    lo = max(-1.0, ey1.lower - ey0.upper)
    hi = min(1.0, ey1.upper - ey0.lower)
    return BoundsInterval(lo, hi, method or ey1.method, "RD",
                          ey1.sharp_by_construction and ey0.sharp_by_construction)


def covariate_average(intervals: Mapping[int, BoundsInterval],
                      weights: Mapping[int, float]) -> BoundsInterval:
    if set(intervals) != set(weights):
        raise ValueError(f"strata {sorted(intervals)} do not match weights {sorted(weights)}")
    if any(w < 0 for w in weights.values()) or abs(sum(weights.values()) - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    ests = {iv.estimand for iv in intervals.values()}
    if len(ests) != 1:
        raise ValueError("cannot average intervals of different estimands")
    lo = sum(weights[s] * intervals[s].lower for s in sorted(intervals))
    hi = sum(weights[s] * intervals[s].upper for s in sorted(intervals))
    return BoundsInterval(lo, hi, "ca", ests.pop())


def _interval(lower_set, upper_set, d, method, estimand, **kw) -> BoundsInterval:
    lo = eval_expression_set(lower_set, d, **kw)
    hi = eval_expression_set(upper_set, d, **kw)
    return BoundsInterval(lo, hi, method, estimand)


def base_bounds(d: ObservedDistribution, estimand: str = "RD", method: str = "cm",
                z_var: str | None = "Z") -> BoundsInterval:
    """Bounds ignoring any covariate: Balke-Pearl when an instrument is
    present in ``d``, otherwise the natural (confounded-pair) bounds."""
    if z_var is not None and z_var in d.vars:
        sets = {
            "EY0": ("bp_ey0_lower", "bp_ey0_upper"),
            "EY1": ("bp_ey1_lower", "bp_ey1_upper"),
        }
        get = lambda k: tuple(REGISTRY[i] for i in sets[k])  # noqa: E731
        dz = marginal(d, (z_var, "X", "Y"))
        kw = dict(z_var=z_var)
    else:
        get = lambda k: (_NATURAL[(k, "MAX")], _NATURAL[(k, "MIN")])  # noqa: E731
        dz = marginal(d, ("X", "Y"))
        kw = {}
    if estimand == "RD":
        ey1 = _interval(*get("EY1"), dz, method, "EY1", **kw)
        ey0 = _interval(*get("EY0"), dz, method, "EY0", **kw)
        return compose_rd(ey1, ey0, method)
    return _interval(*get(estimand), dz, method, estimand, **kw)


def stratum_bounds(d: ObservedDistribution, covariate: str, estimand: str = "RD",
                   z_var: str | None = "Z") -> tuple[dict[int, BoundsInterval], dict[int, float]]:
    """Per-stratum base bounds and stratum weights; empty strata are omitted."""
    intervals, weights = {}, {}
    for s in (0, 1):
        w = d.prob({covariate: s})
        if w <= 0:
            continue
        ds = condition_on(d, {covariate: s})
        intervals[s] = base_bounds(ds, estimand, "ca", z_var)
        weights[s] = w
    return intervals, weights


def averaged_bounds(d: ObservedDistribution, covariate: str, estimand: str = "RD",
                    z_var: str | None = "Z") -> BoundsInterval:
    intervals, weights = stratum_bounds(d, covariate, estimand, z_var)
    total = sum(weights.values())
    return covariate_average(intervals, {s: w / total for s, w in weights.items()})

"""Monte-Carlo comparison of cm, ca and co bounds over settings (a)-(f)."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .closedform import BoundsInterval
from .dist import ObservedDistribution, StructuralTruth, make_truth, pushforward_observed
from .engine import ca_bounds, cm_bounds, co_bounds
from .model import SIM_SETTINGS, builtin_model, parameterize

CONTAINMENT_TOL = 1e-9
WIDTH_FLOOR = 1e-12
HIST_LO, HIST_HI, HIST_STEP = 0.5, 2.0, 0.01
N_BINS = int(round((HIST_HI - HIST_LO) / HIST_STEP))
DESK_N = 2000
FULL_N = 100_000

CSV_COLUMNS = (
    "setting", "rep", "seed", "theta_true",
    "cm_lo", "cm_hi", "ca_lo", "ca_hi", "co_lo", "co_hi",
    "co_in_cm", "co_in_ca", "ca_in_cm",
    "w_cm", "w_ca", "w_co", "r_co_cm", "r_co_ca", "r_ca_cm",
)


class SimulationError(RuntimeError):
    def __init__(self, setting, rep, seed, cause):
        super().__init__(f"replicate {setting}#{rep} (seed {seed}) failed: {cause!r}")
        self.setting, self.rep, self.seed = setting, rep, seed


def replicate_seed(master_seed: int, setting: str, rep: int) -> int:
    h = hashlib.sha256(f"{master_seed}|{setting}|{rep}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def sample_truth(setting: str, rng: np.random.Generator) -> StructuralTruth:
    """Flat Dirichlet over joint response types and over left-block cells;
    P(Z=1) ~ U[0.05, 0.95] when Z is the whole left block."""
    m = builtin_model(setting)
    param = parameterize(m)
    q = rng.dirichlet(np.ones(param.type_count))
    if m.left_block == ("Z",):
        pz = rng.uniform(0.05, 0.95)
        lj = ObservedDistribution(("Z",), [1.0 - pz, pz])
    elif m.left_block:
        cells = rng.dirichlet(np.ones(2 ** len(m.left_block)))
        lj = ObservedDistribution(m.left_block, cells)
    else:
        lj = None
    return make_truth(m, q, lj)


def _ratio(num: float, den: float) -> float:
    return num / den if den > WIDTH_FLOOR else math.nan


@dataclass(frozen=True)
class SimRecord:
    setting: str
    rep: int
    seed: int
    theta_true: float
    cm: BoundsInterval
    ca: BoundsInterval
    co: BoundsInterval

    @property
    def co_in_cm(self) -> bool:
        return self.co.within(self.cm, CONTAINMENT_TOL)

    @property
    def co_in_ca(self) -> bool:
        return self.co.within(self.ca, CONTAINMENT_TOL)

    @property
    def ca_in_cm(self) -> bool:
        return self.ca.within(self.cm, CONTAINMENT_TOL)

    @property
    def r_co_cm(self) -> float:
        return _ratio(self.co.width, self.cm.width)

    @property
    def r_co_ca(self) -> float:
        return _ratio(self.co.width, self.ca.width)

    @property
    def r_ca_cm(self) -> float:
        return _ratio(self.ca.width, self.cm.width)

    def all_valid(self, tol: float = 1e-7) -> bool:
        return all(iv.contains(self.theta_true, tol) for iv in (self.cm, self.ca, self.co))

    def row(self) -> list[str]:
        def f(v):
            return "NA" if isinstance(v, float) and math.isnan(v) else repr(float(v))

        vals = [
            self.setting, str(self.rep), str(self.seed), f(self.theta_true),
            f(self.cm.lower), f(self.cm.upper), f(self.ca.lower), f(self.ca.upper),
            f(self.co.lower), f(self.co.upper),
            str(int(self.co_in_cm)), str(int(self.co_in_ca)), str(int(self.ca_in_cm)),
            f(self.cm.width), f(self.ca.width), f(self.co.width),
            f(self.r_co_cm), f(self.r_co_ca), f(self.r_ca_cm),
        ]
        return vals

    @classmethod
    def from_row(cls, row: dict) -> "SimRecord":
        fl = float
        return cls(
            row["setting"], int(row["rep"]), int(row["seed"]), fl(row["theta_true"]),
            BoundsInterval(fl(row["cm_lo"]), fl(row["cm_hi"]), "cm"),
            BoundsInterval(fl(row["ca_lo"]), fl(row["ca_hi"]), "ca"),
            BoundsInterval(fl(row["co_lo"]), fl(row["co_hi"]), "co", sharp_by_construction=True),
        )


def run_replicate(setting: str, rep: int, seed: int) -> SimRecord:
    m = builtin_model(setting)
    truth = sample_truth(setting, np.random.default_rng(seed))
    d = pushforward_observed(m, truth)
    co = co_bounds(m, d, "RD")
    co = BoundsInterval(co.lower, co.upper, "co", "RD", True)
    return SimRecord(setting, rep, seed, truth.theta_true, cm_bounds(m, d), ca_bounds(m, d), co)


def _run_chunk(args):
    setting, reps, master_seed = args
    out = []
    for rep in reps:
        seed = replicate_seed(master_seed, setting, rep)
        try:
            out.append(run_replicate(setting, rep, seed))
        except Exception as exc:  # reported with the failing seed
            return out, (setting, rep, seed, exc)
    return out, None


def run_simulation(settings=SIM_SETTINGS, n_per_setting: int = DESK_N, master_seed: int = 0,
                   workers: int = 1, chunk: int = 50) -> list[SimRecord]:
    """Records sorted by (setting, rep); independent of ``workers``."""
    if n_per_setting < 1:
        raise ValueError("n_per_setting must be >= 1")
    for s in settings:
        if s not in SIM_SETTINGS:
            raise ValueError(f"unknown setting {s!r}; valid: {', '.join(SIM_SETTINGS)}")
    tasks = [
        (s, tuple(range(i, min(i + chunk, n_per_setting))), master_seed)
        for s in settings for i in range(0, n_per_setting, chunk)
    ]
    if workers <= 1:
        results = map(_run_chunk, tasks)
        records, failure = _collect(results)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records, failure = _collect(pool.map(_run_chunk, tasks))
    if failure is not None:
        raise SimulationError(*failure)
    order = {s: i for i, s in enumerate(SIM_SETTINGS)}
    return sorted(records, key=lambda r: (order[r.setting], r.rep))


def _collect(results):
    records, failure = [], None
    for recs, err in results:
        records.extend(recs)
        if err is not None and failure is None:
            failure = err
    return records, failure


def default_workers() -> int:
    env = os.environ.get("COVBOUNDS_WORKERS")
    if env:
        return max(1, int(env))
    return 1


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

# histogram orientation: wider interval over narrower one
HIST_RATIOS = (
    ("width(ca)/width(co)", "ca", "co"),
    ("width(cm)/width(co)", "cm", "co"),
    ("width(cm)/width(ca)", "cm", "ca"),
)

TABLE_ROWS = (
    "co⊆cm", "co⊆ca", "ca⊆cm",
    "width(co)/width(cm)", "width(co)/width(ca)", "width(ca)/width(cm)",
)


@dataclass
class SettingSummary:
    setting: str
    n: int
    p_co_in_cm: float
    p_co_in_ca: float
    p_ca_in_cm: float
    mean_r_co_cm: float
    mean_r_co_ca: float
    mean_r_ca_cm: float
    undefined: dict[str, int]
    histograms: dict[str, list[int]] = field(repr=False)
    n_invalid: int = 0

    def table_values(self) -> tuple[float, ...]:
        return (self.p_co_in_cm, self.p_co_in_ca, self.p_ca_in_cm,
                self.mean_r_co_cm, self.mean_r_co_ca, self.mean_r_ca_cm)


@dataclass
class MetricsSummary:
    settings: dict[str, SettingSummary]
    bin_edges: list[float]

    def to_json(self) -> dict:
        return {
            "bins": {"lo": HIST_LO, "hi": HIST_HI, "step": HIST_STEP,
                     "note": "out-of-range ratios are clipped into the edge bins"},
            "settings": {
                k: {
                    "n": s.n,
                    "co_in_cm": s.p_co_in_cm,
                    "co_in_ca": s.p_co_in_ca,
                    "ca_in_cm": s.p_ca_in_cm,
                    "mean_width_co_over_cm": s.mean_r_co_cm,
                    "mean_width_co_over_ca": s.mean_r_co_ca,
                    "mean_width_ca_over_cm": s.mean_r_ca_cm,
                    "undefined_ratios": s.undefined,
                    "invalid_records": s.n_invalid,
                    "histograms": s.histograms,
                }
                for k, s in self.settings.items()
            },
        }

    def table(self) -> str:
        cols = list(self.settings)
        head = ["metric"] + [f"model.{c}" for c in cols]
        body = []
        for i, label in enumerate(TABLE_ROWS):
            body.append([label] + [_fmt(self.settings[c].table_values()[i]) for c in cols])
        widths = [max(len(r[j]) for r in [head] + body) for j in range(len(head))]
        lines = [" ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines += [" ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.2f}"


def _mean(vals) -> float:
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def histogram(values) -> tuple[list[int], int]:
    """Counts over fixed 0.01 bins on [0.5, 2.0]; NaN values are counted as undefined."""
    vals = np.array([v for v in values if not math.isnan(v)], dtype=float)
    undefined = len(values) - vals.size
    idx = np.floor((np.clip(vals, HIST_LO, HIST_HI) - HIST_LO) / HIST_STEP + 1e-9).astype(int)
    idx = np.clip(idx, 0, N_BINS - 1)
    counts = np.bincount(idx, minlength=N_BINS)
    return [int(c) for c in counts], undefined


def summarize(records) -> MetricsSummary:
    if not records:
        raise ValueError("no records to summarize")
    by_setting: dict[str, list[SimRecord]] = {}
    for r in records:
        by_setting.setdefault(r.setting, []).append(r)
    out = {}
    for s, recs in by_setting.items():
        hists, undefined = {}, {}
        for label, num, den in HIST_RATIOS:
            vals = [_ratio(getattr(r, num).width, getattr(r, den).width) for r in recs]
            hists[label], undefined[label] = histogram(vals)
        for label, attr in (("width(co)/width(cm)", "r_co_cm"), ("width(co)/width(ca)", "r_co_ca"),
                            ("width(ca)/width(cm)", "r_ca_cm")):
            undefined[label] = sum(math.isnan(getattr(r, attr)) for r in recs)
        out[s] = SettingSummary(
            setting=s,
            n=len(recs),
            p_co_in_cm=float(np.mean([r.co_in_cm for r in recs])),
            p_co_in_ca=float(np.mean([r.co_in_ca for r in recs])),
            p_ca_in_cm=float(np.mean([r.ca_in_cm for r in recs])),
            mean_r_co_cm=_mean([r.r_co_cm for r in recs]),
            mean_r_co_ca=_mean([r.r_co_ca for r in recs]),
            mean_r_ca_cm=_mean([r.r_ca_cm for r in recs]),
            undefined=undefined,
            histograms=hists,
            n_invalid=sum(not r.all_valid() for r in recs),
        )
    edges = [round(HIST_LO + i * HIST_STEP, 10) for i in range(N_BINS + 1)]
    return MetricsSummary(out, edges)


# ---------------------------------------------------------------------------
# back-door-only mediator model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MediatorTruth:
    """Forward-simulated truth for Z -> X -> Y <- S with U_r -> {X, S}.

    ``xs`` is the joint over (compliance type of X, S) driven by U_r and
    ``py`` holds P(Y=1 | X=x, S=s) from Y's independent error.
    """

    pz: float
    xs: np.ndarray  # shape (4, 2): X response type (truth table over z) x S
    py: np.ndarray  # shape (2, 2): indexed [x, s]
    observed: ObservedDistribution
    theta_true: float


def sample_mediator_truth(rng: np.random.Generator) -> MediatorTruth:
    pz = rng.uniform(0.05, 0.95)
    xs = rng.dirichlet(np.ones(8)).reshape(4, 2)
    py = rng.uniform(size=(2, 2))
    table = np.zeros((2, 2, 2, 2))  # Z, S, X, Y
    x_of = ((0, 0), (0, 1), (1, 0), (1, 1))  # truth tables z -> x
    for z in (0, 1):
        w_z = pz if z else 1.0 - pz
        for k, tt in enumerate(x_of):
            x = tt[z]
            for s in (0, 1):
                table[z, s, x, 1] += w_z * xs[k, s] * py[x, s]
                table[z, s, x, 0] += w_z * xs[k, s] * (1.0 - py[x, s])
    ps = xs.sum(axis=0)
    theta = float(sum(xs[k, s] * (py[1, s] - py[0, s]) for k in range(4) for s in (0, 1)))
    assert abs(theta - float(ps @ (py[1] - py[0]))) < 1e-12
    table /= table.sum()
    return MediatorTruth(pz, xs, py, ObservedDistribution(("Z", "S", "X", "Y"), table), theta)

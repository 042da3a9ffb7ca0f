"""Command-line driver.

Exit codes: 0 ok, 2 invalid input or unknown id, 3 distribution inconsistent
with the model, 4 output path not writable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .closedform import REGISTRY, RegistryError, get_expression_set
from .dist import DistributionError, load_distribution, pushforward_observed
from .engine import (
    DEFAULT_EPSILON,
    Estimand,
    InfeasibleDistributionError,
    PositivityError,
    compute_bounds,
    conditional_lower_bounds,
    model_constraint_violations,
    pointwise_sharpness_check,
    uniform_sharpness_check,
    witness_distribution,
)
from .model import BUILTIN_IDS, SIM_SETTINGS, ModelError, UnknownModelError, builtin_model, load_model
from .sim import (
    CSV_COLUMNS,
    DESK_N,
    FULL_N,
    SimRecord,
    SimulationError,
    default_workers,
    run_simulation,
    sample_mediator_truth,
    sample_truth,
    summarize,
)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNWRITABLE = 0, 2, 3, 4
METHODS = ("cm", "ca", "co", "backdoor")


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INPUT):
        super().__init__(msg)
        self.code = code


def header(config: dict) -> str:
    """First line of every output file; enough to rerun exactly."""
    cfg = {k: v for k, v in sorted(config.items()) if v is not None}
    seed = cfg.pop("seed", None)
    line = f"# covbounds {__version__} config={json.dumps(cfg, sort_keys=True, separators=(',', ':'))}"
    if seed is not None:
        line += f" master_seed={seed}"
    return line


def atomic_write(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_UNWRITABLE) from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_UNWRITABLE) from None


def _check_writable_dir(path: Path):
    """Fail before long computations rather than after."""
    path = Path(path)
    probe = path
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        raise CliError(f"output directory {path} is not writable", EXIT_UNWRITABLE)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_list_models(args) -> str:
    lines = []
    for mid in BUILTIN_IDS:
        m = builtin_model(mid)
        edges = ", ".join(f"{a}->{b}" for a, b in m.edges)
        lines.append(f"{mid:16s} vars={''.join(m.observed_vars):5s} {edges}")
    return "\n".join(lines)


def cmd_registry(args) -> str:
    if args.id is None:
        return "\n".join(f"{k:22s} {v.sense.name.lower()} {v.estimand} [{v.provenance}]"
                         for k, v in REGISTRY.items())
    return get_expression_set(args.id).render()


def _parse_methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise CliError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def _fmt(v: float) -> str:
    return f"{v + 0.0:.12g}"


def cmd_compute(args) -> str:
    methods = _parse_methods(args.method)
    if args.s is not None and args.s not in (0, 1):
        raise CliError("--s must be 0 or 1")
    m = load_model(args.model_file or args.model)
    d = load_distribution(args.dist)
    missing = set(m.observed_vars) - set(d.vars)
    if missing:
        raise CliError(f"distribution lacks variable(s) {sorted(missing)} required by {m.name}")
    e = Estimand.parse(args.estimand, args.s)
    e.check(m)
    config = {
        "command": "compute", "model": m.name, "dist": str(args.dist), "estimand": str(e),
        "method": ",".join(methods), "check": args.check, "epsilon": args.epsilon,
        "side": args.side, "exact": args.exact,
    }
    out = [header(config)]
    if args.validate_model_constraints:
        problems = model_constraint_violations(m, d)
        if problems:
            raise CliError("distribution violates model constraints:\n  " + "\n  ".join(problems),
                           EXIT_INFEASIBLE)
        out.append("model constraints: ok")
    for method in methods:
        iv = compute_bounds(m, d, e, method, exact=args.exact)
        if method == "backdoor":
            out.append(f"backdoor {e}: {_fmt(iv.lower)}")
            continue
        witness = "yes" if method == "co" else "no"
        out.append(f"{method:8s} {e}: [{_fmt(iv.lower)}, {_fmt(iv.upper)}]  "
                   f"width={_fmt(iv.width)} witness={witness}")
        if method == "co" and args.witness:
            sol = iv.lower_solution if args.side == "lower" else iv.upper_solution
            w = witness_distribution(m, d, sol)
            out.append(f"witness ({args.side}) theta={_fmt(w.theta_true)}")
            out.append(json.dumps(pushforward_observed(m, w).to_json(), sort_keys=True))
    if args.check:
        if m.covariate is None:
            raise CliError(f"{m.name} has no covariate; sharpness checks need one")
        kind = e.kind
        bounds = conditional_lower_bounds(m, d, kind, args.side)
        out.append("stratum bounds: " + ", ".join(f"s={s}: {_fmt(b)}" for s, b in bounds.items()))
        if args.check == "pointwise":
            res = pointwise_sharpness_check(m, d, bounds, args.epsilon, kind, args.side, args.exact)
            for s, r in res.items():
                out.append(f"pointwise s={s}: {'FEASIBLE' if r.feasible else 'INFEASIBLE'}")
        else:
            r = uniform_sharpness_check(m, d, bounds, args.epsilon, kind, args.side, args.exact)
            out.append(f"uniform: {'FEASIBLE' if r.feasible else 'INFEASIBLE'}")
            if not r.feasible and r.outcome is not None and r.outcome.certificate is not None:
                cert = np.asarray(r.outcome.certificate, dtype=float)
                out.append("certificate: " + " ".join(_fmt(c) for c in cert))
    text = "\n".join(out)
    if args.out:
        atomic_write(Path(args.out), text + "\n")
    return text


def _expand_settings(text: str) -> list[str]:
    items = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            if lo not in SIM_SETTINGS or hi not in SIM_SETTINGS:
                raise CliError(f"bad settings range {part!r}")
            items += SIM_SETTINGS[SIM_SETTINGS.index(lo):SIM_SETTINGS.index(hi) + 1]
        elif part:
            if part not in SIM_SETTINGS:
                raise CliError(f"unknown setting {part!r}; valid: {', '.join(SIM_SETTINGS)}")
            items.append(part)
    if not items:
        raise CliError("no settings given")
    return [s for s in SIM_SETTINGS if s in items]


def records_csv(records, head: str) -> str:
    buf = io.StringIO()
    buf.write(head + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def read_records_csv(path: Path) -> tuple[str, list[SimRecord]]:
    with open(path, newline="") as fh:
        head = fh.readline().rstrip("\n")
        if not head.startswith("# covbounds"):
            raise CliError(f"{path}: missing covbounds header line")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise CliError(f"{path}: unexpected columns {reader.fieldnames}")
        return head, [SimRecord.from_row(row) for row in reader]


def _summary_outputs(records, head):
    s = summarize(records)
    return head + "\n" + s.table() + "\n", head + "\n" + json.dumps(s.to_json(), indent=1) + "\n", s


def cmd_simulate(args) -> str:
    settings = _expand_settings(args.settings)
    n = FULL_N if args.full else args.n
    if n < 1:
        raise CliError("--n must be >= 1")
    workers = args.workers if args.workers is not None else default_workers()
    out_dir = Path(args.out_dir)
    _check_writable_dir(out_dir)
    # workers is deliberately absent: outputs do not depend on it
    head = header({"command": "simulate", "settings": ",".join(settings), "n": n, "seed": args.seed})
    records = run_simulation(settings, n, args.seed, workers)
    table, summary_json, _ = _summary_outputs(records, head)
    atomic_write(out_dir / "results.csv", records_csv(records, head))
    atomic_write(out_dir / "summary.txt", table)
    atomic_write(out_dir / "summary.json", summary_json)
    return table.rstrip("\n") + f"\nwrote {out_dir}/results.csv, summary.txt, summary.json"


def cmd_report(args) -> str:
    path = Path(args.csv)
    if not path.is_file():
        raise CliError(f"no such file {path}")
    head, records = read_records_csv(path)
    table, summary_json, _ = _summary_outputs(records, head)
    if args.out:
        atomic_write(Path(args.out), summary_json)
    return table.rstrip("\n")


def cmd_sample_dist(args) -> str:
    """Draw an observed table from a setting (or the mediator) for trying `compute`."""
    rng = np.random.default_rng(args.seed)
    if args.model == "mediator":
        t = sample_mediator_truth(rng)
        d, theta = t.observed, t.theta_true
    elif args.model in SIM_SETTINGS:
        t = sample_truth(args.model, rng)
        d, theta = pushforward_observed(builtin_model(args.model), t), t.theta_true
    else:
        raise CliError(f"sample-dist supports {', '.join(SIM_SETTINGS)} and mediator")
    obj = d.to_json()
    text = json.dumps(obj, indent=1, sort_keys=True)
    if args.out:
        # JSON cannot carry a comment line; the config travels inside the object
        obj["_meta"] = {"header": header({"command": "sample-dist", "model": args.model,
                                           "seed": args.seed}), "theta_true": theta}
        atomic_write(Path(args.out), json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return text + f"\ntheta_true={_fmt(theta)}"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covbounds", description="Bounds on causal effects with a covariate.")
    p.add_argument("--version", action="version", version=f"covbounds {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list-models", help="list builtin causal models").set_defaults(func=cmd_list_models)

    r = sub.add_parser("registry", help="print closed-form expression sets")
    r.add_argument("id", nargs="?")
    r.set_defaults(func=cmd_registry)

    c = sub.add_parser("compute", help="bounds for one observed distribution")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="builtin model id")
    g.add_argument("--model-file", help="model JSON file")
    c.add_argument("--dist", required=True, help="distribution JSON file")
    c.add_argument("--estimand", default="rd", type=str.upper, choices=("RD", "EY0", "EY1"))
    c.add_argument("--s", type=int, help="condition the estimand on S=s (co only)")
    c.add_argument("--method", default="cm,ca,co")
    c.add_argument("--check", choices=("pointwise", "uniform"))
    c.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    c.add_argument("--side", choices=("lower", "upper"), default="lower")
    c.add_argument("--exact", action="store_true", help="rational-arithmetic LP")
    c.add_argument("--witness", action="store_true", help="dump the observed table of the co witness")
    c.add_argument("--validate-model-constraints", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compute)

    s = sub.add_parser("simulate", help="Monte-Carlo comparison over settings a..f")
    s.add_argument("--settings", default="a..f")
    s.add_argument("--n", type=int, default=DESK_N)
    s.add_argument("--full", action="store_true", help=f"n={FULL_N} per setting")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, help="default: $COVBOUNDS_WORKERS or 1")
    s.add_argument("--out-dir", default="sim_out")
    s.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", help="summarize an existing results CSV")
    rp.add_argument("--csv", required=True)
    rp.add_argument("--out", help="write the JSON summary here")
    rp.set_defaults(func=cmd_report)

    sd = sub.add_parser("sample-dist", help="draw an observed table from a setting")
    sd.add_argument("--model", required=True)
    sd.add_argument("--seed", type=int, default=0)
    sd.add_argument("--out")
    sd.set_defaults(func=cmd_sample_dist)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleDistributionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UnknownModelError, RegistryError) as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, DistributionError, PositivityError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

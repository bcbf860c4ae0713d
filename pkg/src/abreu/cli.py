"""Command-line front end: solve, classify, scan, verify.

Exit codes: 0 success, 1 error or failed check, 2 the run ended at an
expected singular event (blow-up, step collapse, f or f' reaching zero);
data are still written in that case.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .classify import ScanResult, classify_backward, classify_forward, scan, theorem_case
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    ReachedBound,
    Trajectory,
    integrate,
    seed_from_origin,
    termination_dict,
)
from .model import DomainError, ModelParams, State
from .series import ExactPole, RegularA, RegularB, Vanishing
from .verify import hessian_suite, max_first_integral, oracle_suite, pde_suite, polytope_suite

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_SINGULAR = 0, 1, 2
SCAN_COLUMNS = ["f_eps", "fp_eps", "case", "forward_kind", "forward_loc", "backward_kind", "backward_loc", "membership"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which is reserved for singular runs here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# -- output helpers ------------------------------------------------------------


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write("r,f,f_prime\n")
    for r, f, fp in zip(traj.r, traj.f, traj.fp):
        buf.write(f"{_fmt(r)},{_fmt(f)},{_fmt(fp)}\n")
    return buf.getvalue()


def read_trajectory_csv(path: str):
    """Read a trajectory CSV back as arrays (r, f, f')."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["r", "f", "f_prime"]:
            raise ValueError(f"unexpected header {header}")
        rows = [[float(v) for v in row] for row in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ".json"


# -- argument parsing ----------------------------------------------------------


def _add_model(p, n=3, kappa=1.0, lam=1.0):
    p.add_argument("--n", type=int, default=n, help=f"dimension (default {n})")
    p.add_argument("--kappa", type=float, default=kappa, help=f"curvature constant (default {kappa:g})")
    p.add_argument("--lambda", dest="lam", type=float, default=lam, help=f"first-integral constant (default {lam:g})")


def _add_tolerances(p):
    p.add_argument("--tol", type=float, default=None, help="relative tolerance (default 1e-10); abs tolerance is tol/100")
    p.add_argument("--blowup", type=float, default=None, help="blow-up threshold on |f|, |f'| (default 1e12)")


def _add_initial(p):
    p.add_argument("--eps", type=float, default=0.1, help="starting radius (default 0.1)")
    p.add_argument("--f", type=float, default=None, help="f at eps")
    p.add_argument("--fp", type=float, default=None, help="f' at eps")


def _range(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps, got {text!r}")
    if steps < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])


def _values(text: str) -> np.ndarray:
    """Either lo:hi:steps or a comma list of values."""
    if ":" in text:
        return _range(text)
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps or a comma list, got {text!r}")


def _box(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a0,b0,a1,b1,..., got {text!r}")
    if len(vals) % 2 or not vals:
        raise argparse.ArgumentTypeError("--box needs an even number of values")
    bounds = list(zip(vals[::2], vals[1::2]))
    if any(not a < b for a, b in bounds):
        raise argparse.ArgumentTypeError("each interval needs a < b")
    return bounds


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="abreu", description="Radial solutions of Abreu's equation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate one trajectory and write it as CSV")
    _add_model(p)
    _add_initial(p)
    _add_tolerances(p)
    p.add_argument("--target", type=float, required=True, help="radius to integrate to")
    p.add_argument(
        "--seed-origin",
        default=None,
        help="seed from an origin expansion instead of --f/--fp: regular_a:f0=..,a=.. | regular_b:f0=.. | vanishing | exact_pole",
    )
    p.add_argument("--out", default="trajectory.csv", help="CSV path; the JSON sidecar sits next to it")

    p = sub.add_parser("classify", help="classify the data (eps, f, f') against the theorems")
    _add_model(p)
    _add_initial(p)
    _add_tolerances(p)
    p.add_argument("--direction", choices=["forward", "backward", "both"], default="both")
    p.add_argument("--out", default=None, help="JSON path (default stdout)")

    p = sub.add_parser("scan", help="classify a rectangular grid of initial data")
    _add_model(p)
    _add_tolerances(p)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--f-range", type=_values, required=True, help="lo:hi:steps or a comma list")
    p.add_argument("--fp-range", type=_values, required=True, help="lo:hi:steps or a comma list")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="scan.csv", help="CSV path; the summary JSON sits next to it")

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("--suite", choices=["oracles", "pde", "polytope", "hessian", "all"], default="all")
    _add_model(p, n=None, kappa=1.0, lam=1.0)
    p.add_argument("--f", type=float, default=1.0, help="f at eps for the integrated PDE check")
    p.add_argument("--fp", type=float, default=1.0, help="f' at eps for the integrated PDE check")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--box", type=_box, default=None, help="cuboid a0,b0,a1,b1,... for the polytope suite")
    p.add_argument("--seed", type=int, default=0, help="seed for random Hessian inputs")
    p.add_argument("--out", default=None, help="optional JSON report path")
    return parser


# -- shared pieces -------------------------------------------------------------


def _config(args) -> IntegratorConfig:
    kw = {}
    if args.tol is not None:
        kw.update(rel_tol=args.tol, abs_tol=args.tol * 1e-2)
    if args.blowup is not None:
        kw["blowup_threshold"] = args.blowup
    return IntegratorConfig(**kw)


def _params(args) -> ModelParams:
    return ModelParams(args.n, args.kappa, args.lam)


def _header(args, params: ModelParams, cfg: Optional[IntegratorConfig] = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "params": {"n": params.n, "kappa": params.kappa, "lambda": params.lam},
    }
    if cfg is not None:
        doc["integrator"] = asdict(cfg)
    return doc


def parse_origin_spec(text: str):
    """'regular_a:f0=1,a=2' and friends -> an origin behaviour."""
    name, _, rest = text.partition(":")
    kw = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            kw[key.strip()] = float(val)
    kinds = {"regular_a": (RegularA, ("f0", "a")), "regular_b": (RegularB, ("f0",)), "vanishing": (Vanishing, ()), "exact_pole": (ExactPole, ())}
    if name not in kinds:
        raise UsageError(f"unknown origin behaviour {name!r}; choose from {sorted(kinds)}")
    cls, fields = kinds[name]
    if set(kw) != set(fields):
        raise UsageError(f"{name} takes exactly {fields}, got {sorted(kw)}")
    return cls(**kw)


def _initial_state(args, params) -> State:
    if getattr(args, "seed_origin", None):
        if args.f is not None or args.fp is not None:
            raise UsageError("--seed-origin replaces --f/--fp")
        return seed_from_origin(params, parse_origin_spec(args.seed_origin), args.eps)
    if args.f is None or args.fp is None:
        raise UsageError("need --f and --fp (or --seed-origin)")
    if params.n > 1 and args.f == 0:
        raise UsageError("f(eps) = 0 is a singular point of the equation")
    return State(args.eps, args.f, args.fp)


# -- subcommands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    params = _params(args)
    cfg = _config(args)
    init = _initial_state(args, params)
    traj = integrate(params, init, args.target, cfg)
    doc = _header(args, params, cfg)
    doc.update(
        {
            "initial": {"r": init.r, "f": init.f, "fp": init.fp, "seed_origin": args.seed_origin},
            "target": args.target,
            "termination": termination_dict(traj.termination),
            "samples": len(traj),
            "rejected_steps": traj.n_rejected,
            "residuals": {"max_relative_first_integral": max_first_integral(traj)},
            "csv": os.path.basename(args.out),
        }
    )
    atomic_write(args.out, trajectory_csv(traj))
    atomic_write(sidecar_path(args.out), dump_json(doc))
    tag = traj.termination.tag
    print(f"{tag}: {len(traj)} samples written to {args.out}", file=sys.stderr)
    return EXIT_OK if isinstance(traj.termination, ReachedBound) else EXIT_SINGULAR


def cmd_classify(args) -> int:
    params = _params(args)
    cfg = _config(args)
    if args.f is None or args.fp is None:
        raise UsageError("need --f and --fp")
    case = theorem_case(args.f, args.fp)
    doc = _header(args, params, cfg)
    doc.update({"epsilon": args.eps, "f_eps": args.f, "fp_eps": args.fp, "case": case.value})
    results = {}
    if args.direction in ("forward", "both"):
        results["forward"] = classify_forward(params, args.f, args.fp, args.eps, cfg)
    if args.direction in ("backward", "both"):
        results["backward"] = classify_backward(params, args.f, args.fp, args.eps, cfg)
    for name, res in results.items():
        doc[name] = res.to_dict()
    memberships = [r.membership for r in results.values()]
    if any(m is None for m in memberships):
        doc["membership"] = "not_applicable"
        code = EXIT_OK
    else:
        doc["membership"] = all(memberships)
        code = EXIT_OK if all(memberships) else EXIT_ERROR
    text = dump_json(doc)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return code


def _loc(outcome) -> str:
    if outcome.tag == "branch":
        return _fmt(outcome.location)
    if outcome.tag == "asymptote":
        return "inf"
    if outcome.tag == "origin":
        return "0"
    return ""


def _kind(outcome) -> str:
    if outcome.tag == "branch":
        return outcome.report.kind.tag
    if outcome.tag in ("asymptote", "origin"):
        return outcome.behavior.tag
    return outcome.tag


def scan_csv(result: ScanResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for row in result.rows:
        if row.outcome is None:
            tag = "inadmissible" if row.error and row.error.startswith("inadmissible") else "error"
            w.writerow([_fmt(row.f_eps), _fmt(row.fp_eps), tag, "", "", "", "", tag])
            continue
        o = row.outcome
        m = o.membership
        w.writerow(
            [
                _fmt(row.f_eps),
                _fmt(row.fp_eps),
                o.case.value,
                _kind(o.forward.outcome),
                _loc(o.forward.outcome),
                _kind(o.backward.outcome),
                _loc(o.backward.outcome),
                "not_applicable" if m is None else str(m).lower(),
            ]
        )
    return buf.getvalue()


def cmd_scan(args) -> int:
    params = _params(args)
    cfg = _config(args)
    result = scan(params, args.f_range, args.fp_range, args.eps, cfg, workers=args.workers)
    doc = _header(args, params, cfg)
    doc.update({"epsilon": args.eps, "f_values": list(args.f_range), "fp_values": list(args.fp_range), "csv": os.path.basename(args.out)})
    doc.update(result.to_dict())
    doc["errors"] = [{"f_eps": r.f_eps, "fp_eps": r.fp_eps, "error": r.error} for r in result.rows if r.error]
    atomic_write(args.out, scan_csv(result))
    atomic_write(sidecar_path(args.out), dump_json(doc))
    print(f"{len(result.rows)} points, {len(result.violations)} membership violations", file=sys.stderr)
    return EXIT_OK if not result.violations else EXIT_ERROR


def _print_checks(checks) -> None:
    width = max(len(c.name) for c in checks)
    for c in checks:
        op = "<=" if c.sense == "le" else ">="
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.measured:.3e} {op} {c.tolerance:.1e}")


def cmd_verify(args) -> int:
    suites = ["oracles", "pde", "polytope", "hessian"] if args.suite == "all" else [args.suite]
    checks = []
    box = args.box
    if box is not None and args.n is not None and len(box) != args.n:
        raise UsageError(f"--box describes {len(box)} dimensions but --n is {args.n}")
    n = args.n if args.n is not None else (len(box) if box else 3)
    for suite in suites:
        if suite == "oracles":
            checks += oracle_suite()
        elif suite == "pde":
            checks += pde_suite(ModelParams(n, args.kappa, args.lam), args.f, args.fp, args.eps)
        elif suite == "polytope":
            checks += polytope_suite(box or [(0.0, 1.0)] * n)
        else:
            checks += hessian_suite(seed=args.seed)
    _print_checks(checks)
    if args.out:
        doc = {"schema_version": SCHEMA_VERSION, "command": "verify", "suite": args.suite, "n": n, "checks": [c.to_dict() for c in checks]}
        atomic_write(args.out, dump_json(doc))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ERROR


COMMANDS = {"solve": cmd_solve, "classify": cmd_classify, "scan": cmd_scan, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError, IntegrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

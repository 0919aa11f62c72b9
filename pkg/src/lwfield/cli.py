"""Command-line front end: ``lwfield {fieldmap,verify,symbolic,nbody}``.

Exit codes: 0 ok, 1 a check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import io
import itertools
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import nbody, verify
from .errors import LwfieldError
from .fields import feynman_field, fundamental_fields, lw_potentials
from .retarded import retarded_time
from .trajectory import from_config

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CATALOG = {
    "rest": {"kind": "rest"},
    "uniform": {"kind": "uniform", "v": [0.5, 0.2, 0.0]},
    "circular": {"kind": "circular", "radius": 1.0, "omega": 0.3},
}


class UsageError(Exception):
    pass


# --- config --------------------------------------------------------------

def load_schema(command: str) -> dict:
    text = (resources.files("lwfield") / "schemas" / f"{command}.json").read_text("utf-8")
    return json.loads(text)


def load_config(path, command: str) -> dict:
    """Read a YAML or JSON config and validate it against the command schema."""
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    return validate(cfg or {}, command)


def validate(cfg: dict, command: str) -> dict:
    try:
        jsonschema.validate(cfg, load_schema(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid {command} config at {where}: {exc.message}") from None
    return cfg


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, "utf-8")


# --- fieldmap ------------------------------------------------------------

FIELDMAP_COLUMNS = ("x", "y", "z", "t", "Ex", "Ey", "Ez", "Bx", "By", "Bz",
                    "phi", "Ax", "Ay", "Az", "tau", "T")


def _fmt(x: float) -> str:
    return repr(float(x))


def run_fieldmap(cfg: dict, chunk: int = 65536) -> str:
    """CSV of fields on a row-major (x, y, z) grid; rows closer than margin to the path are skipped."""
    traj = from_config(cfg["trajectory"])
    t = float(cfg.get("t", 0.0))
    margin = float(cfg.get("margin", 1e-6))
    tol = float(cfg.get("tol", 1e-12))
    axes = [np.linspace(*cfg["grid"][k][:2], int(cfg["grid"][k][2])) for k in "xyz"]
    pts = np.array(list(itertools.product(*axes)), float).reshape(-1, 3)
    out = io.StringIO()
    out.write(f"# lwfield fieldmap schema_version={SCHEMA_VERSION}\n")
    out.write(f"# trajectory={json.dumps(cfg['trajectory'], sort_keys=True)}\n")
    out.write(f"# t={_fmt(t)} margin={_fmt(margin)} points={len(pts)}\n")
    out.write(",".join(FIELDMAP_COLUMNS) + "\n")
    skipped = 0
    for start in range(0, len(pts), chunk):
        p = pts[start:start + chunk]
        sol = retarded_time(traj, p, np.full(len(p), t), tol=tol)
        T = np.atleast_1d(sol.T)
        keep = T >= margin
        skipped += int(np.count_nonzero(~keep))
        if not keep.any():
            continue
        p = p[keep]
        ff = fundamental_fields(traj, p, np.full(len(p), t), tol=tol, t_min=0.0)
        em = feynman_field(ff)
        pot = lw_potentials(ff)
        cols = np.column_stack([p, np.full(len(p), t), em.E, em.B, pot.phi, pot.A, ff.tau, ff.T])
        for row in cols:
            out.write(",".join(_fmt(x) for x in row) + "\n")
    out.write(f"# skipped_rows={skipped}\n")
    return out.getvalue()


# --- verify --------------------------------------------------------------

def _check(name, passed, **detail):
    return {"check": name, "passed": bool(passed), **detail}


def _order_checks(report, window, floor, h):
    out = []
    for eq, r in report.equations.items():
        order = r.get("order")
        ok = r["max"] <= floor or (order is not None and window[0] <= order <= window[1])
        out.append(_check(f"{report.name}:{eq}@h={h:g}", ok, max=r["max"], order=order))
    return out


def run_suite(cfg: dict) -> dict:
    """Run the requested verification suites and collect pass/fail per check."""
    suites = cfg.get("suites", ["symbolic"])
    tcfg = cfg.get("trajectory", CATALOG["circular"])
    traj = from_config(tcfg)
    hs = cfg.get("h", [1e-2])
    window = cfg.get("order_window", [1.8, 2.2])
    ratio = float(cfg.get("control_ratio", 1e3))
    floor = float(cfg.get("residual_floor", 1e-8))
    corrupt = cfg.get("corrupt")
    tol = float(cfg.get("tol", verify.VERIFY_TOL))
    pc = cfg.get("points", {})
    points = verify.shell_points(traj, n=pc.get("n", 100), seed=pc.get("seed", 0),
                                 rmin=pc.get("rmin", 2.0), rmax=pc.get("rmax", 5.0))
    results = {}
    for suite in suites:
        checks = []
        if suite == "symbolic":
            from .symbolic import run_verifications
            rep = run_verifications()
            js = rep.to_json()
            for k, v in js["identities"].items():
                checks.append(_check(f"identity:{k}", v["zero"], residual=v["residual"]))
            for k, v in js["expansions"].items():
                checks.append(_check(f"listing:{k}", v["match"]))
            for k, v in js["scripts"].items():
                checks.append(_check(f"script:{k}", v["passed"], checks=len(v["checks"])))
        elif suite in ("maxwell", "wave_gauge"):
            fn = verify.maxwell_residuals if suite == "maxwell" else verify.wave_gauge_residuals
            if corrupt == "static_coulomb" and suite == "wave_gauge":
                raise UsageError("control 'static_coulomb' does not apply to the wave_gauge suite")
            for h in hs:
                rep = fn(traj, points, h, tol=tol, corrupt=corrupt)
                checks += _order_checks(rep, window, floor, h)
            if corrupt is None:
                ctl = verify.negative_controls(traj, points, hs[0], suite=suite, tol=tol)
                for name, eqs in ctl.items():
                    for eq, r in eqs.items():
                        checks.append(_check(f"control:{name}:{eq}", r >= ratio, ratio=r))
        elif suite == "plane_wave":
            rng = np.random.default_rng(pc.get("seed", 0))
            pts = (rng.uniform(-2, 2, (50, 3)), rng.uniform(-1, 1, 50))
            tol_pw = float(cfg.get("plane_wave_tol", 1e-6))
            for v in (1.0, -1.0):
                r = verify.plane_wave_check(verify.gaussian, v, pts, 1e-3).max("dalembertian")
                checks.append(_check(f"plane_wave:v={v:g}", r <= tol_pw, max=r))
            v = 0.5
            r = verify.plane_wave_check(verify.gaussian, v, pts, 1e-3).max("dalembertian")
            env = (1 - v * v) * float(np.max(np.abs(verify.gaussian_dd(pts[0][:, 0] - v * pts[1]))))
            checks.append(_check("plane_wave:v=0.5", r >= 0.1 * env, max=r, envelope=env))
        elif suite == "covariance":
            u = cfg.get("boost", [0.4, 0.0, 0.0])
            ctol = float(cfg.get("covariance_tol", 1e-6))
            rep = verify.covariance_check(traj, u, (points[0][:50], points[1][:50]))
            for eq in ("E", "B"):
                checks.append(_check(f"covariance:{eq}", rep.max(eq) <= ctol, max=rep.max(eq)))
        results[suite] = {"passed": all(c["passed"] for c in checks), "checks": checks}
    return {"schema_version": SCHEMA_VERSION, "command": "verify", "trajectory": tcfg,
            "corrupt": corrupt, "passed": all(r["passed"] for r in results.values()),
            "suites": results}


def run_symbolic(cfg: dict) -> dict:
    """Run the bundled scripts and any extra script files against the header namespace."""
    from .symbolic import engine
    from .symbolic.parser import parse_script
    results = {}
    header = engine.run_header()
    if cfg.get("builtin", True):
        for name, res in engine.run_bundled_scripts().items():
            results[name] = res
    for path in cfg.get("scripts", []):
        text = Path(path).read_text("utf-8")
        script = parse_script(text, known=header.namespace)
        results[path] = engine.run_script(script, header.namespace, name=path)
    out = {k: {"passed": r.passed, "checks": [c.__dict__ for c in r.checks]} for k, r in results.items()}
    return {"schema_version": SCHEMA_VERSION, "command": "symbolic",
            "passed": all(r.passed for r in results.values()), "scripts": out}


# --- nbody ---------------------------------------------------------------

def build_simulation(cfg: dict) -> nbody.SimulationConfig:
    t0 = float(cfg.get("t0", 0.0))
    bodies, pres = [], []
    for k, b in enumerate(cfg["bodies"]):
        bodies.append(nbody.Body(float(b["m0"]), float(b.get("charge", 0.0)), b.get("label", str(k))))
        pre = b.get("prehistory", {"kind": "inertial"})
        kind = pre["kind"]
        if kind == "inertial":
            if "r" not in b:
                raise UsageError(f"body {k}: inertial prehistory needs r (and v)")
            pres.append(nbody.inertial_prehistory(b["r"], b.get("v", [0.0, 0.0, 0.0]), t0))
        elif kind == "recorded":
            nodes = np.asarray(pre["nodes"], float)
            if nodes[-1, 0] != t0:
                raise UsageError(f"body {k}: recorded prehistory must end at t0")
            pres.append(nbody.RecordedTrajectory(nodes[:, 0], nodes[:, 1:4], nodes[:, 4:7], nodes[:, 7:10]))
        else:
            pres.append(from_config(pre))
    return nbody.SimulationConfig(
        bodies=bodies, prehistories=pres, dt=float(cfg["dt"]), horizon=float(cfg["horizon"]), t0=t0,
        sep_min=float(cfg.get("sep_min", nbody.SEP_MIN)), tol=float(cfg.get("tol", nbody.DEFAULT_TOL)),
        matched_prehistory=int(cfg.get("matched", 0)), max_steps=int(cfg.get("max_steps", 1_000_000)))


def run_nbody(cfg: dict):
    """Simulate; returns (record, summary). The summary flags the separation invariant."""
    sim = build_simulation(cfg)
    hist = nbody.make_histories(sim.bodies, sim.prehistories, sim.t0, matched=sim.matched_prehistory,
                                tol=sim.tol)
    rec = nbody.simulate(sim, histories=hist)
    worst = max((r.sep - (1 + r.q) * r.mtd for r in rec.reports), default=-math.inf)
    summary = {"schema_version": SCHEMA_VERSION, "command": "nbody", "termination": rec.termination,
               "message": rec.message, "steps": rec.steps, "t_end": rec.histories[0].end,
               "separation_invariant": worst <= 0.0,
               "passed": rec.termination in ("horizon", "collision stop") and worst <= 0.0}
    return rec, summary


# --- argument handling ---------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="lwfield", description="Retarded fields, identity checks and n-body runs.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fieldmap", help="sample E, B and potentials on a grid (CSV)")
    f.add_argument("config", help="YAML or JSON config")
    f.add_argument("--out", help="CSV path (default stdout)")

    v = sub.add_parser("verify", help="run verification suites (JSON report)")
    v.add_argument("config", nargs="?", help="YAML or JSON config")
    v.add_argument("--suite", action="append",
                   choices=["symbolic", "maxwell", "wave_gauge", "plane_wave", "covariance"],
                   help="suite to run; repeatable")
    v.add_argument("--traj", choices=sorted(CATALOG), help="catalog trajectory")
    v.add_argument("--h", type=float, action="append", help="FD step; repeatable")
    v.add_argument("--corrupt", choices=["static_coulomb", "modulated"],
                   help="replace the true field by a corrupted one (must fail)")
    v.add_argument("--out", help="JSON report path (default stdout)")

    s = sub.add_parser("symbolic", help="run symbolic scripts (JSON report)")
    s.add_argument("scripts", nargs="*", help="extra script files run against the header")
    s.add_argument("--config", help="YAML or JSON config")
    s.add_argument("--no-builtin", action="store_true", help="skip the bundled scripts")
    s.add_argument("--out", help="JSON report path (default stdout)")

    n = sub.add_parser("nbody", help="simulate an n-body system")
    n.add_argument("config", help="YAML or JSON config")
    n.add_argument("--out", help="JSON-lines run record path")
    n.add_argument("--csv-dir", help="directory for per-body CSV files")
    n.add_argument("--summary", help="JSON summary path (default stdout)")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "fieldmap":
            cfg = load_config(args.config, "fieldmap")
            _write(run_fieldmap(cfg), args.out)
            return EXIT_OK
        if args.command == "verify":
            cfg = load_config(args.config, "verify") if args.config else {}
            if args.suite:
                cfg["suites"] = args.suite
            if args.traj:
                cfg["trajectory"] = CATALOG[args.traj]
            if args.h:
                cfg["h"] = args.h
            if args.corrupt:
                cfg["corrupt"] = args.corrupt
            report = run_suite(validate(cfg, "verify"))
            _write(json.dumps(report, indent=2, default=str) + "\n", args.out)
            return EXIT_OK if report["passed"] else EXIT_FAIL
        if args.command == "symbolic":
            cfg = load_config(args.config, "symbolic") if args.config else {}
            if args.scripts:
                cfg["scripts"] = list(cfg.get("scripts", [])) + args.scripts
            if args.no_builtin:
                cfg["builtin"] = False
            report = run_symbolic(validate(cfg, "symbolic"))
            _write(json.dumps(report, indent=2) + "\n", args.out)
            return EXIT_OK if report["passed"] else EXIT_FAIL
        if args.command == "nbody":
            cfg = load_config(args.config, "nbody")
            rec, summary = run_nbody(cfg)
            # paths named in the config are relative to the config file
            base = Path(args.config).parent
            out = {k: base / v for k, v in cfg.get("output", {}).items()}
            jsonl = args.out or out.get("jsonl")
            csv_dir = args.csv_dir or out.get("csv_dir")
            if jsonl:
                Path(jsonl).parent.mkdir(parents=True, exist_ok=True)
                rec.write_jsonl(jsonl)
            if csv_dir:
                rec.write_csv(csv_dir)
            _write(json.dumps(summary, indent=2) + "\n", args.summary)
            return EXIT_OK if summary["passed"] else EXIT_FAIL
    except UsageError as exc:
        print(f"lwfield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LwfieldError, ValueError) as exc:
        print(f"lwfield: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line: simulate, verify-lemma, envelopes, export, validate-kernels.

Exit codes: 0 success, 1 error, 2 success with warnings (numerical health
warnings for ``simulate``, failed checks for the verification commands).
Every file is written under a staging name and renamed on success.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from .biot_savart import solve_stream, velocity_direct, velocity_from_stream
from .config import SimConfig, parse_config, serialize, validate
from .field import (ConfigurationError, SnapshotError, field_csv, field_from_function,
                    grad_sup_fd, level_set_area, parse_snapshot, read_snapshot, sup_norm)
from .geometry import DomainError
from .grid import GridError, GridSpec
from .growth import (EnvelopeParams, comparison_ode, cone_check, envelope_lower, envelope_upper,
                     format_blocks, gronwall_gap, lemma_scan, monitor, records_csv, report_json,
                     strip_bound)
from .kernel import green, kernel_K, kernel_sym, random_interior_points
from .transport import initial_field, run

log = logging.getLogger("diskeuler")

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2

# numerical-health thresholds for simulate
SUP_DRIFT = 0.01
AREA_DRIFT = 0.02

ENVELOPE_HEADER = "t,lower,upper,ode,gap"


# ---------------------------------------------------------------------------
# staging

class Staging:
    """Collects outputs in ``<out>/.staging`` and moves them into ``out`` on commit."""

    def __init__(self, out):
        self.out = Path(out)
        self.dir = self.out / ".staging"

    def __enter__(self):
        self.created = not self.out.exists()
        if self.dir.exists():
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True)
        return self

    def path(self, name):
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, name, text):
        self.path(name).write_text(text)

    def write_bytes(self, name, data):
        self.path(name).write_bytes(data)

    def commit(self):
        for src in sorted(self.dir.rglob("*")):
            if src.is_file():
                dst = self.out / src.relative_to(self.dir)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
        shutil.rmtree(self.dir)

    def __exit__(self, exc_type, exc, tb):
        if self.dir.exists():
            shutil.rmtree(self.dir)
        if self.created and self.out.exists() and not any(self.out.iterdir()):
            self.out.rmdir()
        return False


def _load_config(path) -> SimConfig:
    return parse_config(path) if path else validate(SimConfig())


def _out_dir(args, cfg):
    return Path(args.out) if args.out else Path(cfg.output.directory)


# ---------------------------------------------------------------------------
# simulate

def health_warnings(records, state):
    """Numerical-health warnings of a finished run."""
    warn = []
    if state.projected:
        warn.append(f"{state.projected} characteristic feet projected onto the boundary")
    r0 = records[0]
    for r in records[1:]:
        if r0.supnorm > 0 and abs(r.supnorm / r0.supnorm - 1.0) > SUP_DRIFT:
            warn.append(f"sup-norm drift above {SUP_DRIFT:g} at t={r.t:g}")
            break
    for r in records[1:]:
        if r0.area_05 > 0 and abs(r.area_05 / r0.area_05 - 1.0) > AREA_DRIFT:
            warn.append(f"level-set area drift above {AREA_DRIFT:g} at t={r.t:g}")
            break
    for r in records:
        for w in r.warnings:
            warn.append(f"t={r.t:g}: {w}")
    return warn


def summarize(cfg, records, state, warnings):
    r0, r1 = records[0], records[-1]
    doc = {
        "config": serialize(cfg),
        "records": len(records),
        "steps": state.steps,
        "projected": state.projected,
        "t_final": r1.t,
        "initial": r0.asdict(),
        "final": r1.asdict(),
        "supnorm_drift": (r1.supnorm / r0.supnorm - 1.0) if r0.supnorm else 0.0,
        "area_05_drift": (r1.area_05 / r0.area_05 - 1.0) if r0.area_05 else 0.0,
        "warnings": list(warnings),
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=float)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(args, cfg)
    with Staging(out) as stage:
        records, state = run(cfg, resume=args.resume, snapshot_dir=stage.path("snapshots"))
        warnings = health_warnings(records, state)
        stage.write_text("diagnostics.csv", records_csv(records))
        stage.write_text("summary.json", summarize(cfg, records, state, warnings))
        if len(records) >= 3:
            rep = monitor(records)
            stage.write_text("report.txt", rep.text())
            if "json" in cfg.output.formats:
                stage.write_text("report.json", report_json(rep))
        stage.commit()
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(records)} records to {out / 'diagnostics.csv'}")
    return EXIT_WARN if warnings else EXIT_OK


# ---------------------------------------------------------------------------
# verify-lemma

def verification_blocks(fld, cfg: SimConfig):
    """One block per checked inequality for the configured field."""
    d = cfg.diagnostics
    blocks = []
    scan = lemma_scan(fld, d.gamma, d.scan_radii, d.scan_angles, d.omega_sub)
    ok1, ok2 = scan.bounded()
    radii = sorted(scan.max_B1)
    blocks.append({
        "name": "omega_diagonal_growth",
        "inequality": "Omega(s, s) grows like c log(1/s) with c > 0",
        "constant": scan.omega_slope, "passed": bool(scan.omega_slope > 0),
        "detail": {f"omega_s={s!r}": v for s, v in sorted(scan.omega_diag.items())}})
    for name, ok, mb in (("residual_B1_bounded", ok1, scan.max_B1),
                         ("residual_B2_bounded", ok2, scan.max_B2)):
        blocks.append({
            "name": name,
            "inequality": "max |B| at the two smallest radii <= 3 x max |B| at the largest",
            "constant": max(mb[r] for r in radii[:2]) / mb[radii[-1]] if mb[radii[-1]] else math.inf,
            "passed": bool(ok), "detail": {f"max_s={r!r}": mb[r] for r in radii}})
    stream = solve_stream(fld)
    for delta in d.strip_deltas:
        sb = strip_bound(fld, delta, sub=d.omega_sub, stream=stream)
        blocks.append({
            "name": f"omega_strip_lower_bound_delta={delta!r}",
            "inequality": "Omega(x) >= C1 log(1/delta) for |x| <= delta, x in D+",
            "constant": sb.C1_fit, "passed": bool(sb.C1_fit > 0),
            "detail": {"omega_min": sb.omega_min, "max_B1": sb.max_B1,
                       "contraction_margin": sb.margin, "dominant": sb.dominant}})
    delta = d.strip_deltas[0]
    cc = cone_check(fld, delta, d.cone_probes, stream=stream)
    blocks.append({
        "name": "diagonal_cone_condition",
        "inequality": "(L - C)/(L + C) <= -u1/u2 <= (L + C)/(L - C) on the diagonal, L = log(1/delta)",
        "constant": cc.C_fit, "passed": bool(cc.passed), "detail": {"delta": delta}})
    return blocks


def cmd_verify_lemma(args) -> int:
    cfg = _load_config(args.config)
    fld = initial_field(cfg)
    blocks = verification_blocks(fld, cfg)
    out = _out_dir(args, cfg)
    with Staging(out) as stage:
        stage.write_text("verification.txt", format_blocks(blocks))
        stage.write_text("verification.json", json.dumps(
            {"results": blocks}, indent=2, sort_keys=True, default=_json_default))
        stage.commit()
    for b in blocks:
        print(f"{'PASS' if b['passed'] else 'FAIL'} {b['name']} constant={b['constant']!r}")
    return EXIT_OK if all(b["passed"] for b in blocks) else EXIT_WARN


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(type(v).__name__)


# ---------------------------------------------------------------------------
# envelopes

def envelope_table(p: EnvelopeParams, t, p_cut, tol=1e-8):
    """Rows (t, lower, upper, ode, gap) over the time grid ``t``."""
    p.validate()
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise DomainError("time grid must be non-empty, non-negative and increasing")
    lower = envelope_lower(p, t)
    upper = envelope_upper(p, t)
    ode = np.atleast_1d(comparison_ode(p, t, tol))
    gap = gronwall_gap(p, t, p_cut)
    return np.column_stack([t, lower, upper, ode, gap])


def envelope_csv(rows) -> str:
    lines = [ENVELOPE_HEADER]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def cmd_envelopes(args) -> int:
    cfg = _load_config(args.config)
    p = EnvelopeParams(A=args.A, B=args.B, C_upper=args.C_upper, c_lower=args.c_lower,
                       epsilon=args.epsilon if args.epsilon is not None else cfg.initial_data.epsilon,
                       C_gap=args.C_gap)
    p_cut = args.p_cut if args.p_cut is not None else cfg.initial_data.p
    if args.t is not None:
        t = np.array([float(s) for s in args.t.split(",")])
    else:
        t = np.linspace(0.0, args.t_max, args.nt)
    rows = envelope_table(p, t, p_cut)
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    with Staging(out) as stage:
        stage.write_text("envelopes.csv", envelope_csv(rows))
        stage.commit()
    print(f"wrote {len(rows)} rows to {out / 'envelopes.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export

def export_payload(snapshot, fmt, spec: GridSpec):
    data = Path(snapshot).read_bytes()
    values, _ = parse_snapshot(data)
    if fmt == "bin":
        return data, ".bin"
    fld = read_snapshot(snapshot, spec=spec if (spec.nr, spec.ntheta) == values.shape else None)
    if fmt == "csv":
        return field_csv(fld).encode(), ".csv"
    doc = {"time": fld.time, "nr": fld.nr, "ntheta": fld.ntheta, "supnorm": sup_norm(fld),
           "grad_sup": grad_sup_fd(fld), "area_05": level_set_area(fld, 0.5)}
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode(), ".json"


def cmd_export(args) -> int:
    cfg = _load_config(args.config)
    payload, ext = export_payload(args.snapshot, args.format, cfg.grid_spec())
    if args.out is None:
        sys.stdout.buffer.write(payload)
        return EXIT_OK
    out = Path(args.out)
    with Staging(out) as stage:
        stage.write_bytes(Path(args.snapshot).stem + ext, payload)
        stage.commit()
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate-kernels

def kernel_battery(seed=0):
    """Closed-form oracle checks; returns a list of (name, passed, value)."""
    rng = np.random.default_rng(seed)
    out = []
    hand = float(green(0.0, 1.0, 0.0, 1.5))
    out.append(("green_hand_value", abs(hand + math.log(2) / (2 * math.pi)) <= 1e-12, hand))
    x1, x2 = random_interior_points(rng, 100)
    y1, y2 = random_interior_points(rng, 100)
    sym = float(np.max(np.abs(green(x1, x2, y1, y2) - green(y1, y2, x1, x2))))
    out.append(("green_symmetry", sym <= 1e-12, sym))
    # boundary vanishing: extrapolate G along the ray to the wall from distances 1e-4, 2e-4
    ang = 2 * math.pi * rng.random(100)
    vals = []
    for d in (1e-4, 2e-4):
        rad = 1.0 - d
        vals.append(green(rad * np.sin(ang), 1.0 - rad * np.cos(ang), y1, y2))
    limit = float(np.max(np.abs(2 * vals[0] - vals[1])))
    out.append(("green_boundary_limit", limit <= 1e-6, limit))
    neg = bool(np.all(green(x1, x2, y1, y2) < 0))
    out.append(("green_negative", neg, float(np.max(green(x1, x2, y1, y2)))))
    b1, b2 = np.sin(ang), 1.0 - np.cos(ang)
    k1, k2 = kernel_K(b1, b2, y1, y2)
    flux = float(np.max(np.abs(k1 * b1 + k2 * (b2 - 1.0))))
    out.append(("kernel_no_flow", flux <= 1e-10, flux))
    h = 1e-5
    sep = np.hypot(x1 - y1, x2 - y2) > 0.05
    g1 = (green(x1 + h, x2, y1, y2) - green(x1 - h, x2, y1, y2)) / (2 * h)
    g2 = (green(x1, x2 + h, y1, y2) - green(x1, x2 - h, y1, y2)) / (2 * h)
    k1, k2 = kernel_K(x1, x2, y1, y2)
    fd = float(np.max(np.abs(np.concatenate([(k1 - g2)[sep], (k2 + g1)[sep]]))))
    out.append(("kernel_fd_gradient", fd <= 1e-6, fd))
    ya, yb = np.abs(y1[:10]) + 1e-3, y2[:10]
    axis = float(np.max(np.abs(kernel_sym(0.0, 0.5, ya, yb)[0])))
    out.append(("kernel_sym_axis_zero", axis == 0.0, axis))
    # rigid rotation at modest resolution, both velocity paths
    grid = GridSpec(nr=65, ntheta=129).build()
    fld = field_from_function(grid, lambda a, b: np.ones_like(a), parity=+1)
    p1, p2 = random_interior_points(rng, 40, rmax=0.9)
    e1, e2 = (p2 - 1.0) / 2.0, -p1 / 2.0
    scale = float(np.max(np.hypot(e1, e2)))
    u1, u2 = velocity_from_stream(solve_stream(fld), p1, p2)
    err = float(np.max(np.hypot(u1 - e1, u2 - e2))) / scale
    out.append(("rigid_rotation_spectral", err <= 5e-3, err))
    u1, u2 = velocity_direct(p1[:10], p2[:10], fld)
    err = float(np.max(np.hypot(u1 - e1[:10], u2 - e2[:10]))) / scale
    out.append(("rigid_rotation_direct", err <= 2e-2, err))
    return out


def cmd_validate_kernels(args) -> int:
    results = kernel_battery(args.seed)
    for name, ok, val in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} value={val!r}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_WARN


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="diskeuler", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="configuration file (defaults when omitted)")
        if out:
            p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, default=0, help="seed for random probe sampling")
        return p

    p = common(sub.add_parser("simulate", help="run the transport scenario"))
    p.add_argument("--resume", help="snapshot written by an earlier run")
    p.set_defaults(fn=cmd_simulate)
    p = common(sub.add_parser("verify-lemma", help="hyperbolic-rate checks on the initial field"))
    p.set_defaults(fn=cmd_verify_lemma)
    p = common(sub.add_parser("envelopes", help="tabulate growth envelopes"))
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--B", type=float, default=10.0)
    p.add_argument("--C-upper", dest="C_upper", type=float, default=1.0)
    p.add_argument("--c-lower", dest="c_lower", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--C-gap", dest="C_gap", type=float, default=0.0)
    p.add_argument("--p-cut", dest="p_cut", type=float, default=None)
    p.add_argument("--t", help="comma separated time grid")
    p.add_argument("--t-max", dest="t_max", type=float, default=5.0)
    p.add_argument("--nt", type=int, default=51)
    p.set_defaults(fn=cmd_envelopes)
    p = common(sub.add_parser("export", help="export a field snapshot"))
    p.add_argument("snapshot")
    p.add_argument("--format", choices=("csv", "summary", "bin"), default="csv")
    p.set_defaults(fn=cmd_export)
    p = common(sub.add_parser("validate-kernels", help="closed-form kernel oracle battery"), out=False)
    p.set_defaults(fn=cmd_validate_kernels)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigurationError, SnapshotError, DomainError, GridError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

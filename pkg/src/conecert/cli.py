"""``conecert`` command-line front end.

Every subcommand reads one JSON problem file and prints one JSON report::

    {"command": {...}, "status": "certified" | "violated" | "infeasible" | "error",
     "payload": {...}, "residuals": {condition_id: [...]}, "wall_time": seconds}

Exit codes: 0 certified, 1 violated or infeasible, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Optional

import numpy as np

from .config import Tolerances, default_tolerances
from .cones import ConeTriple, PolyhedralCone, orthant, validate
from .errors import ConeCertError, PreconditionError, UnsupportedDimensionError
from .network import (
    NetworkCertificate,
    NetworkSpec,
    certify_network,
    network_residuals,
    ring_network,
    ring_spec,
    ring_spectrum,
)
from .positivity import (
    LinearSystem,
    SupplyRate,
    certify_dissipativity,
    certify_stability,
    check_positivity,
    dissipativity_residuals,
    find_supply_rate,
    recover_alpha,
    stability_residuals,
)
from .simulate import check_invariance, emit_phase_portrait, simulate, write_atomic
from .synthesis import ring_gain_residuals, synthesize_feedback, synthesize_ring_gain

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# residual keys whose entries must be strictly positive; all others are >= 0
STRICT_KEYS = {"thm2-10a", "thm2-10b", "thm3-10a", "thm3-17", "thm4-20a", "thm4-20b", "synth-40"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# problem-file parsing
# ---------------------------------------------------------------------------


def _cone(obj, dim: Optional[int] = None) -> PolyhedralCone:
    if isinstance(obj, list):
        obj = {"generators": obj}
    if obj == "orthant" or (isinstance(obj, dict) and obj.get("orthant")):
        if dim is None:
            raise UsageError("orthant shorthand needs a known dimension")
        return orthant(dim)
    return PolyhedralCone.from_json(obj)


def _system(obj) -> LinearSystem:
    if not isinstance(obj, dict) or "A" not in obj:
        raise UsageError("'system' must be an object with at least 'A'")
    return LinearSystem.from_json(obj)


def _cones(obj, sys: LinearSystem) -> ConeTriple:
    if obj is None:
        raise UsageError("'cones' is required")
    if isinstance(obj, list) or "generators" in obj:
        obj = {"state": obj}
    if "state" not in obj:
        raise UsageError("'cones' needs a 'state' cone")
    # omitted input/output cones default to orthants
    return ConeTriple(_cone(obj["state"], sys.n),
                      _cone(obj.get("input", "orthant"), sys.m),
                      _cone(obj.get("output", "orthant"), sys.p))


def _gain(doc) -> Optional[np.ndarray]:
    g = doc.get("gain", doc.get("F"))
    if g is None:
        return None
    if isinstance(g, dict):
        g = g["F"]
    return np.asarray(g, float)


def _closed_loop(doc) -> LinearSystem:
    sys = _system(doc.get("system"))
    F = _gain(doc)
    return sys if F is None else sys.with_feedback(F.reshape(sys.m, sys.n))


def _network(doc):
    """Return ``(NetworkSpec, ring_size or None)``."""
    net = doc.get("network")
    if net is None:
        raise UsageError("'network' is required for network mode")
    if "ring" in net:
        ring = net["ring"]
        sys = _closed_loop(doc)
        W = ring.get("W")
        return ring_network(int(ring["N"]), sys, _cones(doc.get("cones"), sys), W), int(ring["N"])
    subs = [_system(s) for s in net["subsystems"]]
    tris = [_cones(c, s) for c, s in zip(net["cones"], subs)]
    coupling = {}
    for entry in net.get("coupling", []):
        coupling[(int(entry["j"]), int(entry["k"]))] = np.asarray(entry["W"], float)
    return NetworkSpec(subs, tris, coupling), None


def _load(path: str) -> dict:
    try:
        if path == "-":
            doc = json.load(sys.stdin)
        else:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read problem file: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("problem file must hold a JSON object")
    return doc


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _flat(values):
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.extend(_flat(v))
        else:
            out.append(float(v))
    return out


def residuals_ok(residuals: dict, feas_tol: float) -> bool:
    """Strict keys need every entry > 0; the rest need >= -feas_tol."""
    for key, vals in residuals.items():
        flat = _flat(vals)
        if key in STRICT_KEYS:
            if any(not x > 0 for x in flat):
                return False
        elif any(x < -feas_tol for x in flat):
            return False
    return True


def _values(entries):
    # positivity checks report (i, j, value) triples; reports keep the values only
    if isinstance(entries, list):
        return [t[-1] if isinstance(t, tuple) else t for t in entries]
    return entries


# ---------------------------------------------------------------------------
# subcommands; each returns (status, payload, residuals)
# ---------------------------------------------------------------------------


def cmd_check(doc, args, tol):
    sys_cl = _closed_loop(doc)
    cones = _cones(doc.get("cones"), sys_cl)
    rep = check_positivity(sys_cl, cones, tol)
    payload = {"invariant_state": rep.invariant_state, "input_ok": rep.input_ok,
               "output_ok": rep.output_ok, "closed_loop_A": sys_cl.A,
               "pairs": {k: [list(t[:2]) for t in v] for k, v in rep.residuals.items()}}
    return ("certified" if rep.overall else "violated"), payload, rep.residuals


def _stability(doc, args, tol):
    sys_cl = _closed_loop(doc)
    cone = _cones(doc.get("cones"), sys_cl).state
    if args.verify_only:
        v = _certificate(doc)["v"]
        res = stability_residuals(sys_cl.A, cone, v)
        return _verdict(res, tol), {"v": v}, res
    cert = certify_stability(sys_cl, cone, tol)
    res = stability_residuals(sys_cl.A, cone, cert.v) if cert.v is not None else {}
    payload = dict(cert.to_json(), status=cert.status)
    return ("certified" if cert.certified else "infeasible"), payload, res


def _dissipativity(doc, args, tol):
    sys_cl = _closed_loop(doc)
    cones = _cones(doc.get("cones"), sys_cl)
    if args.verify_only:
        c = _certificate(doc)
        supply = SupplyRate(c["q"], c["r"])
        alpha = c.get("alpha")
        if alpha is None:
            alpha = recover_alpha(sys_cl, cones.state.generators, np.asarray(c["v"], float), supply.q)
        res = dissipativity_residuals(sys_cl, cones, c["v"], float(alpha), supply)
        return _verdict(res, tol), {"v": c["v"], "alpha": alpha, **supply.to_json()}, res
    if "supply" in doc:
        supply = SupplyRate(doc["supply"]["q"], doc["supply"]["r"])
        cert = certify_dissipativity(sys_cl, cones, supply, tol)
    else:
        cert = find_supply_rate(sys_cl, cones, tol)
    res = {}
    if cert.v is not None and cert.supply is not None:
        res = dissipativity_residuals(sys_cl, cones, cert.v, cert.alpha, cert.supply)
    payload = dict(cert.to_json(), status=cert.status)
    return ("certified" if cert.certified else "infeasible"), payload, res


def _network_mode(doc, args, tol):
    net, ring_n = _network(doc)
    if args.verify_only:
        c = _certificate(doc)
        cert = NetworkCertificate([np.asarray(x, float) for x in c["v"]],
                                  [np.asarray(x, float) for x in c["q"]],
                                  [np.asarray(x, float) for x in c["r"]], 0.0, False)
        res = network_residuals(net, cert)
        return _verdict(res, tol), cert.to_json(), res
    cert = certify_network(net, symmetric=args.symmetric, tol=tol)
    res = network_residuals(net, cert) if cert.v else {}
    payload = dict(cert.to_json(), status=cert.status, N=net.N)
    if ring_n is not None:
        sub = net.subsystems[0]
        W = doc["network"]["ring"].get("W")
        payload["ring_abscissa"] = ring_spectrum(ring_spec(ring_n, sub, W), tol).abscissa
    return ("certified" if cert.certified else "infeasible"), payload, res


def cmd_certify(doc, args, tol):
    return {"stability": _stability, "dissipativity": _dissipativity,
            "network": _network_mode}[args.mode](doc, args, tol)


def _certificate(doc) -> dict:
    c = doc.get("certificate")
    if not isinstance(c, dict):
        raise UsageError("--verify-only needs a 'certificate' object in the problem file")
    return c


def _verdict(res, tol) -> str:
    return "certified" if residuals_ok(res, tol.feas_tol) else "violated"


def cmd_synthesize(doc, args, tol):
    sys = _system(doc.get("system"))
    cones = _cones(doc.get("cones"), sys)
    if args.mode == "single":
        result = synthesize_feedback(sys.A, sys.B, cones.state, v_grid=doc.get("v_grid"), tol=tol)
        status = "certified" if result.feasible else "infeasible"
        return status, result.to_json(), result.residuals
    v = doc.get("v") or (doc.get("certificate") or {}).get("v")
    if v is None:
        raise UsageError("ring synthesis needs a storage vector 'v'")
    W = (doc.get("network", {}).get("ring") or {}).get("W")
    gain = synthesize_ring_gain(sys, cones, v, W=W, tol=tol)
    feasible = gain.margin > tol.strict_tol
    payload = {"gain": gain.to_json(), "v": v, "feasible": feasible}
    res = {}
    if feasible:
        res = ring_gain_residuals(sys, cones, v, gain.F, W)
        cl = sys.with_feedback(gain.F)
        sizes = [2, 10, 1000]
        payload["ring_abscissa"] = {str(N): ring_spectrum(ring_spec(N, cl, W), tol).abscissa
                                    for N in sizes}
    return ("certified" if feasible else "infeasible"), payload, res


def _grid(args, doc, cone: PolyhedralCone):
    if args.grid is not None:
        if cone.dim != 2:
            raise UsageError("--grid builds a 2-D grid; the state is not 2-D")
        pts = np.linspace(-1.0, 1.0, args.grid)
        return [[a, b] for a in pts for b in pts]
    if "grid" in doc:
        return doc["grid"]
    return cone.generators.tolist()


def cmd_simulate(doc, args, tol):
    sys_cl = _closed_loop(doc)
    cone = _cones(doc.get("cones"), sys_cl).state
    grid = _grid(args, doc, cone)
    if args.out:
        summary = emit_phase_portrait(sys_cl, cone, grid, args.t_end, args.dt, args.out,
                                      tol.invariance_tol)
        return ("certified" if summary["all_inside"] else "violated"), summary, {}
    started = stayed = 0
    worst, samples = 0.0, 0
    for x0 in grid:
        traj = simulate(sys_cl, x0, None, args.t_end, args.dt)
        samples = len(traj)
        if np.all(cone.dual_generators @ np.asarray(x0, float) >= -tol.invariance_tol):
            started += 1
            res = check_invariance(traj, cone, tol.invariance_tol)
            stayed += res.all_inside
            worst = min(worst, res.worst_violation)
    summary = {"trajectories": len(grid), "samples_per_trajectory": samples,
               "started_inside": started, "stayed_inside": stayed,
               "all_inside": started == stayed, "worst_violation": worst}
    return ("certified" if started == stayed else "violated"), summary, {}


def cmd_validate_cone(doc, args, tol):
    if "cone" in doc:
        items = {"cone": doc["cone"]}
    elif "cones" in doc:
        items = doc["cones"] if isinstance(doc["cones"], dict) and "generators" not in doc["cones"] \
            else {"cone": doc["cones"]}
    else:
        raise UsageError("need a 'cone' or 'cones' entry")
    payload, ok = {}, True
    for name, obj in items.items():
        gens = obj["generators"] if isinstance(obj, dict) else obj
        rep = validate(gens, tol)
        entry = {"pointed": rep.pointed, "solid": rep.solid, "rank": rep.rank,
                 "dim": rep.dim, "proper": rep.proper}
        if rep.proper:
            entry["dual_generators"] = PolyhedralCone(gens, tol=tol).dual_generators
        ok &= rep.proper
        payload[name] = entry
    return ("certified" if ok else "violated"), payload, {}


COMMANDS = {
    "check": cmd_check,
    "certify": cmd_certify,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "validate-cone": cmd_validate_cone,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", help="JSON problem file ('-' for stdin)")
    common.add_argument("--feas-tol", type=float, help="weak-row violation tolerance")
    common.add_argument("--strict-tol", type=float, help="margin needed for strict feasibility")
    common.add_argument("--box", type=float, help="variable box for certificate LPs")
    common.add_argument("--report", help="also write the report to this file")

    p = argparse.ArgumentParser(prog="conecert",
                                description="Cone-positivity certificates for linear systems.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="cone invariance of a (closed-loop) system")
    c = sub.add_parser("certify", parents=[common], help="LP certificates")
    c.add_argument("--mode", choices=["stability", "dissipativity", "network"], default="stability")
    c.add_argument("--verify-only", action="store_true",
                   help="re-substitute the file's 'certificate' instead of solving")
    c.add_argument("--symmetric", action="store_true",
                   help="share one certificate across identical network nodes")
    s = sub.add_parser("synthesize", parents=[common], help="state-feedback design")
    s.add_argument("--mode", choices=["single", "ring"], default="single")
    m = sub.add_parser("simulate", parents=[common], help="trajectories and phase-portrait CSV")
    m.add_argument("--grid", type=int, help="K for a KxK grid of initial states over [-1,1]^2")
    m.add_argument("--t-end", type=float, default=10.0)
    m.add_argument("--dt", type=float, default=1e-2)
    m.add_argument("--out", help="CSV path (a second '<stem>_cone.csv' holds the cone rays)")
    sub.add_parser("validate-cone", parents=[common], help="pointedness, solidity and dual")
    return p


def _command_echo(args) -> dict:
    echo = {k: v for k, v in sorted(vars(args).items()) if v is not None and k != "report"}
    return _clean(echo)


def render(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def run(argv=None) -> tuple[int, dict, Optional[str]]:
    """Parse ``argv`` and execute; returns ``(exit_code, report, report_path)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
        return code, {}, None
    start = time.perf_counter()
    tol: Tolerances = default_tolerances().with_overrides(
        feas_tol=args.feas_tol, strict_tol=args.strict_tol, box=args.box)
    report = {"command": _command_echo(args), "payload": {}, "residuals": {}}
    try:
        doc = _load(args.problem)
        status, payload, residuals = COMMANDS[args.command](doc, args, tol)
        code = EXIT_OK if status == "certified" else EXIT_FAIL
    except PreconditionError as exc:
        status, payload, residuals = "violated", {"message": str(exc)}, exc.violations
        code = EXIT_FAIL
    except (UsageError, UnsupportedDimensionError, ConeCertError, KeyError, TypeError,
            ValueError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}"
        status, payload, residuals = "error", {"message": f"{type(exc).__name__}: {msg}"}, {}
        code = EXIT_USAGE
    report.update(status=status, payload=payload,
                  residuals={k: _values(v) for k, v in (residuals or {}).items()},
                  wall_time=time.perf_counter() - start)
    return code, report, args.report


def main(argv=None) -> int:
    code, report, path = run(argv)
    if report:
        text = render(report)
        sys.stdout.write(text)
        if path:
            write_atomic(path, text)
    return code


if __name__ == "__main__":
    sys.exit(main())

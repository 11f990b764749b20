"""Batch command line: ``iegs simulate|estimate|attack|report``.

Every command reads and writes JSON documents.  Exit codes: 0 ok, 2 input
error, 3 solver failure, 4 infeasible attack.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import documents as docs
from .attack_full import TargetSpec, forge_from_shift, synth_targeted, verify_stealth
from .attack_local import admissible_local_shift, forge_local, partition_model, random_local_shift
from .attack_topo import enumerate_candidates, forge_topo
from .compressor_ext import extended_states, p2g_residual
from .errors import DomainError, IegsError, InfeasibleAttackError, ModelError, SolverError
from .estimator import EPSILON, detect_bad_data, estimate_iegs
from .netmodel import read_model
from .scenario import NoiseModel, sample_measurements, solve_energy_flow

log = logging.getLogger("iegs")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4


class InputError(IegsError):
    pass


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args) -> int:
    model = read_model(args.model)
    dispatch, noise = docs.read_scenario(args.scenario)
    if args.noise is not None or args.seed is not None:
        noise = NoiseModel(args.noise if args.noise is not None else noise.preset,
                           None if args.noise is not None else noise.std,
                           args.seed if args.seed is not None else noise.seed)
    sol = solve_energy_flow(model, dispatch)
    ms = sample_measurements(sol.x, model, noise)
    out = _out(args)
    docs.write_doc(out / "state.json", {
        "state": docs.state_doc(model, sol.x), "mismatch": sol.mismatch,
        "iterations": sol.iterations, "violations": sol.violations,
        "generator_p": sol.generator_p, "well_g": sol.well_g})
    docs.write_doc(out / "measurements.json", docs.measurement_doc(ms, noise))
    log.info("energy flow mismatch %.3e", sol.mismatch)
    return EXIT_OK


def _estimate_doc(model, res, verdict) -> dict:
    ext = extended_states(res.x, model)
    return {
        "mode": res.mode, "state": docs.state_doc(model, res.x),
        "objective": res.objective, "r_norm": res.r_norm, "rc_norm": res.rc_norm,
        "weighted_ss": res.weighted_ss, "iterations": res.iterations,
        "converged": res.converged, "stationarity": res.stationarity,
        "coupling_residual": res.coupling_residual,
        "compressors": {k: (v.to_dict() if hasattr(v, "to_dict") else {"error": v})
                        for k, v in ext.items()},
        "p2g_residual": p2g_residual(res.x, model),
        "verdict": verdict.to_dict(),
    }


def cmd_estimate(args) -> int:
    model = read_model(args.model)
    ms = docs.read_measurements(args.measurements, model)
    res = estimate_iegs(ms.z, model, ms.variances, mode=args.mode)
    verdict = detect_bad_data(ms.z, res, args.tau, args.epsilon)
    out = _out(args)
    docs.write_doc(out / "estimate.json", _estimate_doc(model, res, verdict))
    docs.write_doc(out / "verdict.json", verdict.to_dict())
    return EXIT_OK


def _topology_attack(spec, model, z):
    region = spec.get("region", {})
    nodes = region.get("nodes")
    cands = enumerate_candidates(model, nodes, z)
    for t in spec.get("targets", []):
        kind, elem = t["id"].split(":", 1)
        off = float(t.get("offset", 0.0))
        for c in cands:
            if kind == "c":
                hits = [s for cid, s in c.compressors if cid == elem]
            else:
                hits = [s for m, s in zip(c.meters, c.pattern) if m == (kind, elem)]
            if hits:
                return forge_topo(c, off / hits[0], z, model), c
    raise InfeasibleAttackError("no topology-only candidate touches the requested targets",
                                [t["id"] for t in spec.get("targets", [])])


def _local_attack(spec, model, x_hat, seed):
    region = spec.get("region", {})
    part = partition_model(model, region.get("buses", ()), region.get("nodes", ()))
    xa, xb = x_hat[part.x_A], x_hat[part.x_B]
    if "shift" in spec:
        labels = model.state_labels()
        pos = {labels[i]: k for k, i in enumerate(part.x_A)}
        dx_A = np.zeros(part.x_A.size)
        for ident, val in spec["shift"].items():
            if ident not in pos:
                raise InfeasibleAttackError(f"{ident} is not a free state of the attacking region", [ident])
            dx_A[pos[ident]] = float(val)
        dx_A = admissible_local_shift(xa, xb, dx_A, part, model)
    else:
        rng = np.random.default_rng(seed)
        dx_A = random_local_shift(xa, xb, part, model, rng, float(spec.get("scale", 1e-3)))
    att = forge_local(xa, xb, dx_A, part, model)
    att.certificate["partition"] = part.to_dict(model)
    return att


def cmd_attack(args) -> int:
    model = read_model(args.model)
    ms = docs.read_measurements(args.measurements, model)
    spec = docs.read_doc(args.attack_spec) if args.attack_spec else {}
    base = estimate_iegs(ms.z, model, ms.variances, mode=args.mode)
    targets = [t["id"] for t in spec.get("targets", [])]
    if args.knowledge == "complete":
        att = synth_targeted(base.x, TargetSpec.from_dict(spec), model, args.epsilon)
    elif args.knowledge == "local":
        att = _local_attack(spec, model, base.x, args.seed or 0)
    else:
        att, cand = _topology_attack(spec, model, ms.z)
        att.certificate["candidate"] = cand.to_dict()
    if not np.any(att.dz):
        att = forge_from_shift(base.x, np.zeros(model.n_state), model, args.epsilon, att.provenance)
    rep = verify_stealth(ms.z, att, model, args.tau, args.epsilon, ms.variances, args.mode)
    out = _out(args)
    docs.write_doc(out / "attack.json", att.to_dict(model))
    labels = model.state_labels()
    affected = [] if att.dx is None else [labels[i] for i in np.flatnonzero(np.abs(att.dx) > 1e-12)]
    docs.write_doc(out / "verification.json", {
        "scenario": args.label or Path(args.measurements).stem,
        "knowledge": args.knowledge, "targets": targets, "affected_states": affected,
        "r_before": rep.r_before, "r_after": rep.r_after,
        "rc_before": rep.before.rc_norm, "rc_after": rep.after.rc_norm,
        "before": rep.before.to_dict(), "after": rep.after.to_dict(),
        "stealthy": rep.after.clean,
    })
    return EXIT_OK


_COLUMNS = ("scenario", "knowledge", "targets", "affected_states", "r_before", "r_after",
            "rc_before", "rc_after")


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        d = docs.read_doc(path)
        missing = [c for c in _COLUMNS if c not in d]
        if missing:
            raise InputError(f"{path}: not a verification document (missing {missing})")
        rows.append({c: d[c] for c in _COLUMNS} | {"flags": {
            "global_bad_data": d["after"]["global_bad_data"],
            "coupling_inconsistency": d["after"]["coupling_inconsistency"]}})
    out = Path(args.out)
    docs.write_doc(out if out.suffix == ".json" else out / "report.json", {"rows": rows})
    head = f"{'scenario':<14}{'knowledge':<10}{'target':<18}{'affected':>9}{'r before':>12}{'r after':>12}{'rc after':>12}"
    print(head)
    for r in rows:
        tgt = ",".join(r["targets"]) or "-"
        print(f"{r['scenario']:<14}{r['knowledge']:<10}{tgt[:17]:<18}{len(r['affected_states']):>9}"
              f"{r['r_before']:>12.4e}{r['r_after']:>12.4e}{r['rc_after']:>12.4e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iegs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="solve the energy flow and sample measurements")
    s.add_argument("--model", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", choices=("none", "low", "high"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    def common(q):
        q.add_argument("--model", required=True)
        q.add_argument("--measurements", required=True)
        q.add_argument("--mode", choices=("pse", "ose"), default="pse")
        q.add_argument("--tau", type=float, help="residual-norm threshold; chi-square test when omitted")
        q.add_argument("--epsilon", type=float, default=EPSILON)
        q.add_argument("--out", required=True)

    e = sub.add_parser("estimate", help="state estimation and bad-data detection")
    common(e)
    e.set_defaults(func=cmd_estimate)

    a = sub.add_parser("attack", help="build an attack and verify it against the detector")
    common(a)
    a.add_argument("--knowledge", choices=("complete", "local", "topology"), default="complete")
    a.add_argument("--attack-spec")
    a.add_argument("--seed", type=int)
    a.add_argument("--label")
    a.set_defaults(func=cmd_attack)

    r = sub.add_parser("report", help="tabulate verification documents")
    r.add_argument("inputs", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    level = os.environ.get("IEGS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleAttackError as exc:
        print(f"iegs: no feasible FDIA: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, DomainError) as exc:
        print(f"iegs: solver failure: {exc}", file=sys.stderr)
        for row in getattr(exc, "trace", None) or []:
            print(f"  {row}", file=sys.stderr)
        return EXIT_SOLVER
    except (ModelError, InputError, KeyError, ValueError, OSError) as exc:
        print(f"iegs: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

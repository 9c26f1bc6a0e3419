"""Command-line entry point.

Exit status: 0 on success, 1 on invalid input (config, parameters, files),
2 when a run diverges.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ack, logistic
from .config import parse_config
from .errors import BasisDynError, DivergenceError, InputError
from .io import atomic_write, finite_or_none, read_basis, read_csv, read_matrix, write_basis
from .runner import run_experiment

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=finite_or_none) + "\n"


def _load_params(path, keys):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read parameters: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("parameters must be a JSON object")
    unknown = set(doc) - set(keys)
    missing = set(keys) - set(doc)
    if unknown:
        raise InputError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    if missing:
        raise InputError(f"missing parameter(s): {', '.join(sorted(missing))}")
    for k, v in doc.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InputError(f"{k}: expected a number")
    return doc


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if cfg.kind != args.kind:
        raise InputError(f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
    _, summary = run_experiment(cfg, out=args.out, svg=args.svg)
    sys.stdout.write(summary.to_json())
    return EXIT_OK


def cmd_logistic(args) -> int:
    if args.which == "bound":
        p = _load_params(args.params, ("alpha", "eps", "sigma", "eta"))
        out = {"T": logistic.lemma3_iteration_bound(p["alpha"], p["eps"], p["sigma"], p["eta"])}
    elif args.which == "separation":
        p = _load_params(args.params, ("sigma1", "sigma2", "eta", "alpha", "eps"))
        T, y = logistic.lemma4_separation(p["sigma1"], p["sigma2"], p["eta"], p["alpha"], p["eps"])
        out = {"T": T, "y_bound": y}
    else:
        p = _load_params(args.params, ("sigma", "eta", "alpha", "T"))
        if not float(p["T"]).is_integer():
            raise InputError("T must be an integer")
        x = logistic.logistic_iterate(logistic.LogisticConfig(p["sigma"], p["eta"], p["alpha"]), int(p["T"]))
        out = {"x": x.tolist()}
    sys.stdout.write(_dump(out))
    return EXIT_OK


def cmd_ack(args) -> int:
    snap = ack.FeatureSnapshot(read_matrix(args.w), read_matrix(args.psi))
    if args.which == "build":
        basis = ack.build_ack_basis(snap, args.rank_tol)
        write_basis(basis, args.out)
        sys.stdout.write(_dump({"rank": basis.rank, "singular_values": basis.singular_values.tolist()}))
    else:
        if not args.basis:
            raise InputError("ack project needs --basis")
        basis = read_basis(args.basis)
        out = {
            "coefficients": ack.project_snapshot(snap, basis).tolist(),
            "remainder": ack.projection_remainder(snap, basis),
        }
        atomic_write(args.out, _dump(out))
        sys.stdout.write(_dump(out))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    traj = read_csv(args.traj)
    cols = {}
    for i, label in enumerate(traj.labels):
        c = traj.coefficients[:, i]
        d = np.diff(c)
        cols[label] = {
            "initial": float(c[0]),
            "final": float(c[-1]),
            "non_decreasing": bool(np.all(d >= 0)),
            "non_increasing": bool(np.all(d <= 0)),
        }
    out = {
        "rows": len(traj),
        "last_step": int(traj.steps[-1]),
        "final_loss": traj.final_loss,
        "final_error": traj.final_error,
        "loss_non_increasing": bool(np.all(np.diff(traj.loss) <= 0)),
        "columns": cols,
    }
    sys.stdout.write(_dump(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="basisdyn", description="Basis-coefficient trajectories of gradient descent.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("kind", choices=["kr", "smf", "ostd", "ack-synthetic", "logistic"])
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="trajectory CSV (overrides output_path)")
    r.add_argument("--svg", help="optional line plot")
    r.set_defaults(func=cmd_run)

    lg = sub.add_parser("logistic", help="logistic-map bounds and simulation")
    lg.add_argument("which", choices=["bound", "separation", "simulate"])
    lg.add_argument("--params", required=True)
    lg.set_defaults(func=cmd_logistic)

    a = sub.add_parser("ack", help="build or project onto an after-kernel basis")
    a.add_argument("which", choices=["build", "project"])
    a.add_argument("--w", required=True)
    a.add_argument("--psi", required=True)
    a.add_argument("--basis")
    a.add_argument("--out", required=True)
    a.add_argument("--rank-tol", type=float, default=1e-12)
    a.set_defaults(func=cmd_ack)

    dg = sub.add_parser("diagnose", help="summarize a trajectory CSV")
    dg.add_argument("--traj", required=True)
    dg.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (BasisDynError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

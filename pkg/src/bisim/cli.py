"""Command-line surface.

Subcommands: exact, sample, train, eval, aggregate, gridworld. Directory
commands write delimited/JSON outputs plus companion PNG figures and exactly
one manifest.json recording arguments, input digests, and duration. Exit
codes: 0 ok, 2 user error (bad flags or malformed inputs), 3 output
invariant violation. Everything is deterministic given flags and seeds;
repeated runs produce byte-identical outputs apart from the manifest's
duration field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plots
from .approx import (
    build_representation,
    load_net,
    load_train_config,
    net_metric_matrix,
    save_net,
    train,
)
from .envs import GridLayout, build_gridworld, default_layout, load_layout
from .evaluation import (
    aggregate,
    metric_errors,
    write_clustering_csv,
    write_error_curve_csv,
    write_training_log_csv,
)
from .exact import (
    metric_violations,
    read_metric_csv,
    solve_fixed_point,
    write_metric_csv,
)
from .mdp import load_mdp, load_policy, save_mdp, validate, validate_policy
from .sampled import PairSampler, run_sampled

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_INVARIANT = 3


class UserError(Exception):
    """Bad flags or malformed input files; maps to exit code 2."""


class InvariantError(Exception):
    """An output failed its own contract; maps to exit code 3."""


def _load(loader, path, kind: str):
    try:
        return loader(path)
    except FileNotFoundError:
        raise UserError(f"{kind} file not found: {path}")
    except ValueError as exc:
        raise UserError(f"malformed {kind} file {path}: {exc}")


def _load_mdp(path):
    mdp = _load(load_mdp, path, "mdp")
    problems = validate(mdp)
    if problems:
        raise UserError(f"invalid mdp file {path}: " + "; ".join(problems))
    return mdp


def _load_policy(path, mdp):
    policy = _load(load_policy, path, "policy")
    problems = validate_policy(policy, mdp)
    if problems:
        raise UserError(
            f"invalid policy file {path}: " + "; ".join(problems))
    return policy


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(data: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(data, f, indent=1)
        f.write("\n")


def _prepare_out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, argv, seed,
                    inputs, outputs, started: float) -> None:
    _write_json({
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(outputs),
        "duration_seconds": round(time.monotonic() - started, 6),
    }, out_dir / "manifest.json")


def _check_metric_output(metric: np.ndarray,
                         require_triangle: bool = True) -> None:
    report = metric_violations(metric)
    checks = ["diagonal", "asymmetry", "negativity"]
    if require_triangle:
        checks.append("triangle")
    for name in checks:
        if report[name] > report["tol"]:
            raise InvariantError(
                f"metric {name} violation of {report[name]:.3g} "
                f"exceeds {report['tol']:.3g}")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_exact(args, argv, started) -> None:
    mdp = _load_mdp(args.mdp)
    inputs = [args.mdp]
    policy = None
    if args.mode == "pi-bisim":
        if args.policy is None:
            raise UserError("mode pi-bisim requires --policy")
        policy = _load_policy(args.policy, mdp)
        inputs.append(args.policy)
    elif args.policy is not None:
        raise UserError("--policy is only valid with mode pi-bisim")
    try:
        metric, report = solve_fixed_point(mdp, args.mode, policy=policy,
                                           tol=args.tol)
    except ValueError as exc:
        raise UserError(str(exc))
    _check_metric_output(metric, require_triangle=True)
    out = _prepare_out_dir(args)
    write_metric_csv(metric, out / "metric.csv")
    _write_json(report.to_dict(), out / "report.json")
    plots.save_metric_heatmap(metric, out / "metric.png",
                              title=f"{args.mode} metric",
                              labels=mdp.labels)
    _write_manifest(out, "exact", argv, None, inputs,
                    ["metric.csv", "report.json", "metric.png"], started)


def cmd_sample(args, argv, started) -> None:
    mdp = _load_mdp(args.mdp)
    inputs = [args.mdp]
    policy = None
    if args.policy is not None:
        policy = _load_policy(args.policy, mdp)
        inputs.append(args.policy)
    sampler = PairSampler(seed=args.seed)
    trace = [] if args.trace else None
    try:
        est, report = run_sampled(
            mdp, sampler, policy=policy, budget=args.budget,
            stall_window=args.stall_window, tol=args.tol,
            trace_out=trace, mode=args.mode)
    except ValueError as exc:
        raise UserError(str(exc))
    # sampled estimates grow toward the fixed point and may pass through
    # triangle-violating intermediates; only the always-true invariants gate
    _check_metric_output(est.metric, require_triangle=False)
    out = _prepare_out_dir(args)
    outputs = ["metric.csv", "report.json", "metric.png"]
    write_metric_csv(est.metric, out / "metric.csv")
    _write_json(report.to_dict(), out / "report.json")
    if trace is not None:
        with open(out / "trace.jsonl", "w") as f:
            for record in trace:
                f.write(json.dumps(record) + "\n")
        outputs.append("trace.jsonl")
    plots.save_metric_heatmap(est.metric, out / "metric.png",
                              title="sampled metric", labels=mdp.labels)
    _write_manifest(out, "sample", argv, args.seed, inputs, outputs, started)


def _resolve_layout(extras) -> tuple[GridLayout, list]:
    name = extras.get("layout", "default")
    if name == "default":
        return default_layout(), []
    return _load(load_layout, name, "layout"), [name]


def cmd_train(args, argv, started) -> None:
    try:
        config, extras = load_train_config(args.config)
    except FileNotFoundError:
        raise UserError(f"config file not found: {args.config}")
    except ValueError as exc:
        raise UserError(str(exc))
    inputs = [args.config]
    layout, layout_inputs = _resolve_layout(extras)
    inputs.extend(layout_inputs)
    try:
        mdp = build_gridworld(layout, config.gamma)
        rep = build_representation(config.representation, layout=layout,
                                   num_states=mdp.num_states)
    except ValueError as exc:
        raise UserError(str(exc))

    policy = None
    if config.mode == "on-policy":
        if "policy" not in extras:
            raise UserError(
                "config key 'policy' is required for mode 'on-policy'")
        policy = _load_policy(extras["policy"], mdp)
        inputs.append(extras["policy"])
    elif "policy" in extras:
        raise UserError(
            "config key 'policy' is only valid for mode 'on-policy'")

    oracle = None
    if "oracle_metric" in extras:
        oracle = _load(read_metric_csv, extras["oracle_metric"],
                       "oracle metric")
        inputs.append(extras["oracle_metric"])
        if oracle.shape[0] != mdp.num_states:
            raise UserError(
                f"oracle metric covers {oracle.shape[0]} states, "
                f"layout has {mdp.num_states}")

    try:
        net, log = train(mdp, rep, config, policy=policy,
                         oracle_metric=oracle)
    except ValueError as exc:
        raise UserError(str(exc))

    out = _prepare_out_dir(args)
    outputs = ["net.json", "training_log.csv", "training_curves.png"]
    save_net(net, out / "net.json", rep=rep, layout=layout)
    write_training_log_csv(log.loss_rows, out / "training_log.csv")
    plots.save_training_curves(log.loss_rows, out / "training_curves.png")
    if oracle is not None:
        write_error_curve_csv(log.error_rows, out / "error_curve.csv")
        plots.save_error_curves(log.error_rows, out / "error_curves.png")
        outputs.extend(["error_curve.csv", "error_curves.png"])
    _write_manifest(out, "train", argv, config.seed, inputs, outputs,
                    started)


def _approx_metric_from_file(path: str, mdp) -> np.ndarray:
    if Path(path).suffix == ".json":
        net, meta = _load(load_net, path, "net")
        spec = meta.get("representation")
        if spec is None:
            raise UserError(
                f"net file {path} lacks representation metadata; "
                f"evaluate via a metric CSV instead")
        layout = None
        if spec.get("type") in ("xy", "xy_noisy"):
            rows = meta.get("layout_rows")
            if rows is None:
                raise UserError(
                    f"net file {path} lacks layout_rows metadata")
            try:
                layout = GridLayout(rows)
            except ValueError as exc:
                raise UserError(f"malformed net file {path}: {exc}")
        try:
            rep = build_representation(spec, layout=layout,
                                       num_states=mdp.num_states)
        except ValueError as exc:
            raise UserError(f"malformed net file {path}: {exc}")
        if rep.num_states != mdp.num_states:
            raise UserError(
                f"net covers {rep.num_states} states, "
                f"mdp has {mdp.num_states}")
        return net_metric_matrix(net, rep)
    return _load(read_metric_csv, path, "approx metric")


def cmd_eval(args, argv, started) -> None:
    oracle = _load(read_metric_csv, args.oracle, "oracle metric")
    mdp = _load_mdp(args.mdp)
    if oracle.shape[0] != mdp.num_states:
        raise UserError(
            f"oracle metric covers {oracle.shape[0]} states, "
            f"mdp has {mdp.num_states}")
    approx = _approx_metric_from_file(args.approx, mdp)
    if approx.shape != oracle.shape:
        raise UserError(
            f"approx metric shape {approx.shape} != {oracle.shape}")
    report = metric_errors(oracle, approx)
    out = _prepare_out_dir(args)
    _write_json(report.to_dict(), out / "error_report.json")
    plots.save_error_report(report.to_dict(), out / "error_report.png")
    _write_manifest(out, "eval", argv, None,
                    [args.oracle, args.mdp, args.approx],
                    ["error_report.json", "error_report.png"], started)


def cmd_aggregate(args, argv, started) -> None:
    metric = _load(read_metric_csv, args.metric, "metric")
    try:
        clustering = aggregate(metric, args.epsilon)
    except ValueError as exc:
        raise UserError(str(exc))
    for cid in range(clustering.num_clusters):
        group = np.flatnonzero(clustering.labels == cid)
        worst = metric[np.ix_(group, group)].max()
        if worst > args.epsilon:
            raise InvariantError(
                f"cluster {cid} has intra-cluster distance {worst:.6g} "
                f"above epsilon {args.epsilon:.6g}")
    out = _prepare_out_dir(args)
    write_clustering_csv(clustering, out / "clustering.csv")
    _write_json(clustering.to_dict(), out / "clustering.json")
    plots.save_cluster_sizes(clustering.labels, clustering.epsilon,
                             out / "cluster_sizes.png")
    _write_manifest(out, "aggregate", argv, None, [args.metric],
                    ["clustering.csv", "clustering.json",
                     "cluster_sizes.png"], started)


def cmd_gridworld(args, argv, started) -> None:
    if args.layout == "default":
        layout = default_layout()
    else:
        layout = _load(load_layout, args.layout, "layout")
    try:
        mdp = build_gridworld(layout, args.gamma)
    except ValueError as exc:
        raise UserError(str(exc))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mdp(mdp, out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bisim",
        description="behavioral metrics for tabular decision processes: "
                    "exact solves, sampled estimation, learned nets")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="solve a metric fixed point exactly")
    p.add_argument("--mdp", required=True, help="MDP JSON file")
    p.add_argument("--mode", required=True,
                   choices=["bisim", "pi-bisim", "lax"])
    p.add_argument("--policy", help="policy JSON (pi-bisim only)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="guaranteed sup-norm accuracy (default 1e-6)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_exact)

    p = sub.add_parser("sample",
                       help="estimate the metric from sampled pair updates")
    p.add_argument("--mdp", required=True)
    p.add_argument("--mode", default="off", choices=["off", "on"],
                   help="action pairing: off-policy or on-policy")
    p.add_argument("--policy", help="policy JSON (on-policy only)")
    p.add_argument("--budget", type=int, default=100_000,
                   help="max samples to draw (default 100000)")
    p.add_argument("--stall-window", type=int, default=0,
                   help="stop after this many samples without an "
                        "improvement above tol (0 disables)")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true",
                   help="also write trace.jsonl of applied updates")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("train", help="fit the neural approximant")
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval",
                       help="compare an approximation against an oracle "
                            "metric")
    p.add_argument("--oracle", required=True, help="oracle metric CSV")
    p.add_argument("--approx", required=True,
                   help="net JSON (by .json suffix) or metric CSV")
    p.add_argument("--mdp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("aggregate",
                       help="cluster states by distance threshold")
    p.add_argument("--metric", required=True, help="metric CSV")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser("gridworld", help="emit a grid MDP as JSON")
    p.add_argument("--layout", default="default",
                   help="layout text file, or 'default'")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--out", required=True, help="output MDP JSON path")
    p.set_defaults(handler=cmd_gridworld)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        args.handler(args, argv, started)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except InvariantError as exc:
        print(f"output invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

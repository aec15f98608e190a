"""Command-line entry point.

Subcommands: ``classify``, ``simulate``, ``moments``, ``sde``, ``identities``,
``converge``.  Every output artifact carries a provenance header (package
version, seed, hash of the resolved configuration); reruns with the same seed
are byte-identical except for the ``timestamp`` field of JSON reports, which
is excluded from the determinism contract.

Exit codes: 0 success, 2 validation/configuration error (single-line message
on stderr), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GwiError, ValidationError
from .harness import DEFAULT_N_LIST, DEFAULT_T_POINTS, run_convergence_experiment
from .model import classify_criticality, detect_case, is_strongly_critical, load_model
from .moments import growth_exponents, mean_vector, moment_growth_targets, variance_matrix
from .sde import LimitSystem, make_grid, simulate_limit_system
from .simulate import (
    simulate_replicas,
    weighted_sum_identity_1,
    weighted_sum_identity_2,
    weighted_sum_identity_3,
)

IDENTITY_GRID_SCALES = (1, 2, 3, 7, 64)


def _config_hash(options: dict) -> str:
    canonical = json.dumps(options, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_NON_SEMANTIC_KEYS = {"func", "out", "config", "threads"}


def _provenance(args: argparse.Namespace, *, timestamp: bool = False) -> dict:
    options = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in _NON_SEMANTIC_KEYS and v is not None
    }
    out = {
        "version": __version__,
        "seed": args.seed,
        "config_sha256": _config_hash(options),
    }
    if timestamp:
        out["timestamp"] = datetime.now(timezone.utc).isoformat()
    return out


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_csv(path, provenance: dict, fieldnames, rows, extra_comments=()) -> None:
    handle, close = _open_out(path)
    try:
        for key in ("version", "seed", "config_sha256"):
            handle.write(f"# {key}={provenance[key]}\n")
        for line in extra_comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    finally:
        if close:
            handle.close()


def _write_json(path, payload: dict) -> None:
    handle, close = _open_out(path)
    try:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    finally:
        if close:
            handle.close()


def _threads(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("threads must be an integer or 'auto'")
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def cmd_classify(args) -> int:
    model = load_model(args.model)
    cid = detect_case(model.A)
    exps = growth_exponents(model.A, model.b)
    record = {
        "case": cid.value,
        "permutation": [p + 1 for p in cid.permutation],
        "growth_degrees": list(exps.degrees),
        "criticality": classify_criticality(model.A),
        "strongly_critical": is_strongly_critical(model.A),
    }
    perm_note = "" if cid.is_identity else f", normalizing permutation {record['permutation']}"
    print(f"case {cid.value}{perm_note}, exponents {tuple(exps.degrees)}, {record['criticality']}")
    if args.out:
        if args.format == "json":
            _write_json(args.out, {"provenance": _provenance(args, timestamp=True), **record})
        else:
            _write_csv(
                args.out,
                _provenance(args),
                ["case", "permutation", "growth_degrees", "criticality", "strongly_critical"],
                [[
                    record["case"],
                    " ".join(map(str, record["permutation"])),
                    " ".join(map(str, record["growth_degrees"])),
                    record["criticality"],
                    record["strongly_critical"],
                ]],
            )
    return 0


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    trajectories = simulate_replicas(
        model, args.steps, args.seed, args.replicas, workers=args.threads
    )
    header = [f"X_{i + 1}" for i in range(model.p)]
    if args.split_files:
        if not args.out:
            raise ValidationError("--split-files requires --out")
        base = Path(args.out)
        base.mkdir(parents=True, exist_ok=True)
        for traj in trajectories:
            rows = [[k, *traj.states[k]] for k in range(traj.steps + 1)]
            _write_csv(
                str(base / f"replica_{traj.replica:05d}.csv"),
                _provenance(args),
                ["k", *header],
                rows,
                extra_comments=[f"replica={traj.replica}"],
            )
        print(f"wrote {len(trajectories)} trajectory files to {base}")
        return 0
    rows = [
        [traj.replica, k, *traj.states[k]]
        for traj in trajectories
        for k in range(traj.steps + 1)
    ]
    _write_csv(args.out, _provenance(args), ["replica", "k", *header], rows)
    return 0


def cmd_moments(args) -> int:
    model = load_model(args.model)
    rows = []
    for k in range(args.max_k + 1):
        mean = mean_vector(model, k)
        var_diag = np.diag(variance_matrix(model, k)) if k >= 1 else np.zeros(model.p)
        rows.append([k, *(f"{x:.12g}" for x in mean), *(f"{x:.12g}" for x in var_diag)])
    exponents = (
        moment_growth_targets(model) if model.is_lower_unipotent() else None
    )
    fields = (
        ["k"]
        + [f"EX_{i + 1}" for i in range(model.p)]
        + [f"VarX_{i + 1}{i + 1}" for i in range(model.p)]
    )
    if args.format == "json":
        _write_json(
            args.out,
            {
                "provenance": _provenance(args, timestamp=True),
                "fields": fields,
                "table": rows,
                "exponents": exponents,
            },
        )
    else:
        comments = []
        if exponents is not None:
            comments.append(f"exponents={json.dumps(exponents, sort_keys=True)}")
        _write_csv(args.out, _provenance(args), fields, rows, extra_comments=comments)
    return 0


def cmd_sde(args) -> int:
    system = LimitSystem(
        case=args.case,
        b=(args.b1, args.b2, args.b3),
        v=(args.v1, args.v2, args.v3),
        a21=args.a21,
        a31=args.a31,
        a32=args.a32,
    )
    grid = make_grid(args.horizon, args.dt)
    path = simulate_limit_system(system, grid, args.seed, n_paths=args.paths)
    rows = (
        [p, f"{grid[m]:.12g}", *(f"{x:.12g}" for x in path.values[p, m])]
        for p in range(args.paths)
        for m in range(grid.size)
    )
    _write_csv(args.out, _provenance(args), ["path", "t", "X1", "X2", "X3"], rows)
    return 0


def cmd_identities(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    for _ in range(args.trials):
        k = int(rng.integers(1, args.max_k + 1))
        n = int(rng.choice(IDENTITY_GRID_SCALES))
        table = rng.integers(-9, 10, size=k + 2)
        f = lambda l: int(table[l])  # noqa: E731
        for identity in (
            weighted_sum_identity_1,
            weighted_sum_identity_2,
            weighted_sum_identity_3,
        ):
            lhs, rhs = identity(f, k, n)
            if lhs != rhs:
                failures += 1
    print(f"identities: {args.trials} trials x 3 identities, {failures} failures")
    if args.out:
        _write_json(
            args.out,
            {
                "provenance": _provenance(args, timestamp=True),
                "trials": args.trials,
                "max_k": args.max_k,
                "scales": list(IDENTITY_GRID_SCALES),
                "failures": failures,
            },
        )
    return 0 if failures == 0 else 1


def cmd_converge(args) -> int:
    if not args.config:
        raise ValidationError("converge requires --config")
    cfg = _load_config(args.config)
    required = {"model", "case", "out_dir"}
    missing = required - set(cfg)
    if missing:
        raise ValidationError(f"config missing keys: {sorted(missing)}")
    model = load_model(cfg["model"])
    seed = int(cfg.get("seed", args.seed))
    report = run_convergence_experiment(
        model,
        int(cfg["case"]),
        [int(n) for n in cfg.get("n_list", DEFAULT_N_LIST)],
        int(cfg.get("replicas", 2000)),
        [float(t) for t in cfg.get("t_points", DEFAULT_T_POINTS)],
        int(cfg.get("sde_paths", 2000)),
        seed,
        dt=float(cfg.get("dt", 1e-3)),
        ci_level=float(cfg.get("ci_level", 0.95)),
    )
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    args.seed = seed
    _write_json(
        str(out_dir / "report.json"),
        {"provenance": _provenance(args, timestamp=True), **report.to_dict()},
    )
    _write_csv(
        str(out_dir / "report.csv"),
        _provenance(args),
        list(report.CSV_FIELDS),
        report.rows(),
    )
    improved = sum(1 for tr in report.trends if tr["improved"])
    print(
        f"case {report.case}: {len(report.entries)} cells, "
        f"{improved}/{len(report.trends)} distance trends improved; reports in {out_dir}"
    )
    return 0


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwi",
        description="Simulate and verify critical multi-type branching processes with immigration.",
    )
    parser.add_argument("--config", help="JSON file whose keys override matching flags")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="JSON file whose keys override matching flags"
    )
    common.add_argument("--seed", type=int, default=0, help="64-bit RNG seed (default 0)")
    common.add_argument("--threads", type=_threads, default=1, help="worker count or 'auto'")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="pattern, exponents, criticality")
    p.add_argument("--model", required=True, help="model JSON file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", parents=[common], help="simulate trajectories to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument(
        "--split-files", action="store_true", help="one CSV per replica under --out directory"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("moments", parents=[common], help="exact mean/variance tables")
    p.add_argument("--model", required=True)
    p.add_argument("--max-k", type=int, default=20)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("sde", parents=[common], help="simulate a limit system")
    p.add_argument("--case", type=int, required=True, choices=(1, 2, 3, 4))
    for name in ("b1", "b2", "b3", "v1", "v2", "v3", "a21", "a31", "a32"):
        p.add_argument(f"--{name}", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=1)
    p.set_defaults(func=cmd_sde)

    p = sub.add_parser("identities", parents=[common], help="randomized exact-identity battery")
    p.add_argument("--max-k", type=int, default=100)
    p.add_argument("--trials", type=int, default=500)
    p.set_defaults(func=cmd_identities)

    p = sub.add_parser("converge", parents=[common], help="convergence experiment from config")
    p.set_defaults(func=cmd_converge)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config or args.command == "converge":
        return
    cfg = _load_config(args.config)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ValidationError(f"config key {key!r} is not a flag of {args.command}")
        setattr(args, dest, value)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(args)
    return args.func(args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GwiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``traceext <subcommand> [--config FILE] [--seed N] [--out DIR] [--format csv|json]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import (
    SUITES,
    ConfigError,
    ExperimentConfig,
    NoAdmissibleShift,
    boundary_map,
    condition_iii_scan,
    density_table,
    emit_report,
    energy_table,
    gamma_table,
    reconstruct_from_scan,
    verify_suite,
)
from .simplicial import ComplexError

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_CONFIG = 3

log = logging.getLogger("traceext")


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traceext", description="trace extension experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("scan", help="normalized minimal skeleton energies over shifts and scales"))
    _add_common(sub.add_parser("reconstruct", help="scan, then build the extension from an admissible shift"))

    p = sub.add_parser("verify", help="seeded inequality and identity suites")
    _add_common(p, config_required=False)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--count", type=int, default=20)

    p = sub.add_parser("density", help="extension energy density of the homogeneous extension")
    _add_common(p)
    p.add_argument("--kernel", choices=("trace_kernel", "qual_kernel"), default="trace_kernel")

    p = sub.add_parser("gamma", help="codimension-one regularity ratio of a complex")
    _add_common(p, config_required=False)
    p.add_argument("--complex", required=True, help="JSON complex file with simplices and subcomplex faces")
    p.add_argument("--lam", type=float, nargs="+", default=[2.0])

    _add_common(sub.add_parser("energy", help="p-energy of the boundary datum and its vertical extension"))
    return parser


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    data.setdefault("scenario", args.command)
    return ExperimentConfig.from_dict(data)


def run(args) -> int:
    if args.command == "verify":
        seed = 0 if args.seed is None else args.seed
        out = args.out or "out"
        names = SUITES if args.suite == "all" else (args.suite,)
        status = EXIT_OK
        for name in names:
            rep = verify_suite(name, seed, args.count)
            path = emit_report(rep, args.format, out)
            bad = sum(not i["ok"] for i in rep.instances)
            print(f"{name}: {'pass' if rep.passed else 'FAIL'} ({bad} of {len(rep.instances)} violated) -> {path}")
            if not rep.passed:
                status = EXIT_VERIFY
        return status

    if args.command == "gamma":
        if any(lam <= 1 for lam in args.lam):
            raise ConfigError("lambda must exceed 1")
        try:
            rep = gamma_table(args.complex, args.lam, 0 if args.seed is None else args.seed)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load complex {args.complex}: {exc}") from exc
        for lam, val in rep.rows:
            print(f"lambda={lam:g} gamma={val:.10g}")
        print(emit_report(rep, args.format, args.out or "out"))
        return EXIT_OK

    cfg = load_config(args)
    u = boundary_map(cfg)
    if args.command == "scan":
        res = condition_iii_scan(u, cfg)
        for k, fr in res.fractions().items():
            print(f"kappa={k:g} admissible_fraction={fr:.4f} mean_normalized_energy={res.mean_energy(k):.6g}")
        print(emit_report(res, args.format, cfg.out))
        return EXIT_OK
    if args.command == "reconstruct":
        res = condition_iii_scan(u, cfg)
        try:
            rep = reconstruct_from_scan(u, res, cfg)
        except NoAdmissibleShift as exc:
            print(f"no admissible shift: {exc}", file=sys.stderr)
            emit_report(res, args.format, cfg.out)
            return EXIT_VERIFY
        for r in rep.rows:
            print(f"kappa={r.kappa:g} energy_U={r.energy_u:.6g} bound={r.bound:.6g} "
                  f"trace_error={r.trace_error_quarter:.4g},{r.trace_error_eighth:.4g}")
        print(emit_report(rep, args.format, cfg.out))
        return EXIT_OK if rep.ok else EXIT_VERIFY
    if args.command == "density":
        rep = density_table(u, cfg, args.kernel, cfg.out)
        print(emit_report(rep, args.format, cfg.out))
        return EXIT_OK if rep.ok else EXIT_VERIFY
    rep = energy_table(u, cfg)
    for row in rep.rows:
        print(f"kappa={row[0]:g} extension_energy={row[2]:.6g} boundary_energy={row[3]:.6g}")
    print(emit_report(rep, args.format, cfg.out))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except (ConfigError, ComplexError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

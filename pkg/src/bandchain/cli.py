"""Command-line entry point.

Exit codes: 0 pass, 1 comparison or acceptance failure, 2 invalid config,
3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .exact import DimensionCapError, NormDriftError
from .model import SpecError
from .mps import GateTooLargeError
from .runs import (
    PRESETS,
    ConfigError,
    RunConfig,
    run_compare,
    run_exact,
    run_mps,
    run_reproduction_suite,
    run_transform,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3

log = logging.getLogger("bandchain")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed for random spec generators")
    common.add_argument("--nf", type=int, help="Fock cutoff per mode")
    common.add_argument("--dt", type=float, help="time step in 1/omega_a1")
    common.add_argument("--steps", type=int, help="number of time steps")
    common.add_argument("--chi-max", type=int, help="maximum MPS bond dimension")
    common.add_argument("--cutoff", type=float, help="discarded-weight cutoff per bond")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    p = argparse.ArgumentParser(prog="bandchain", description="Band-reduced Dicke model toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("transform", parents=[common], help="band-reduce a spec, write M_D, M_B, Q")
    sub.add_parser("exact", parents=[common], help="exact state-vector evolution")
    sub.add_parser("mps", parents=[common], help="TEBD evolution of the band Hamiltonian")
    sub.add_parser("compare", parents=[common], help="run two configs and compare observables")
    rp = sub.add_parser("repro", parents=[common], help="reproduce a named figure preset")
    rp.add_argument("preset", choices=sorted(PRESETS))
    return p


def _overrides(args) -> dict:
    ov = {"nf": args.nf, "dt": args.dt, "steps": args.steps, "seed": args.seed}
    if args.out:
        ov["output_dir"] = args.out
    return {k: v for k, v in ov.items() if v is not None}


def _apply(cfg: RunConfig, args) -> RunConfig:
    cfg = cfg.replace(**_overrides(args))
    if args.chi_max is not None:
        cfg.truncation.chi_max = args.chi_max
    if args.cutoff is not None:
        cfg.truncation.cutoff = args.cutoff
    if cfg.mode == "compare":
        # flags apply to both sub-runs
        for sub in cfg.runs:
            for key in ("nf", "dt", "steps"):
                if getattr(args, key) is not None:
                    sub[key] = getattr(args, key)
    cfg.check()
    return cfg


def _dispatch(args) -> int:
    if args.command == "repro":
        ov = _overrides(args)
        trunc = {}
        if args.chi_max is not None:
            trunc["chi_max"] = args.chi_max
        if args.cutoff is not None:
            trunc["cutoff"] = args.cutoff
        if trunc:
            base = dict(PRESETS[args.preset].get("truncation", {}))
            base.update(trunc)
            ov["truncation"] = base
        out = ov.pop("output_dir", None)

        def progress(n, rec):
            if n % 500 == 0:
                log.info("step %d  t/(2pi)=%.3f  max bond %d", n, rec["time_periods"], rec["max_bond"])

        rep = run_reproduction_suite(args.preset, out, progress=progress, **ov)
        for c in rep.checks:
            log.info("%s %s: %.6g (%s)", "PASS" if c.passed else "FAIL", c.name, c.value, c.detail)
        log.info("%s %s -> %s", "PASS" if rep.passed else "FAIL", args.preset, rep.out_dir)
        return EXIT_OK if rep.passed else EXIT_FAIL

    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = RunConfig.from_json(args.config)
    cfg = _apply(cfg.replace(mode=args.command), args)
    if args.command == "transform":
        res = run_transform(cfg)
        rep = res.extra["report"]
        log.info("band check %s, orthogonality %.2e, spectrum deviation %.2e -> %s",
                 "ok" if rep["band_check"]["passed"] else "FAILED", rep["orthogonality_residual"],
                 rep["spectrum_deviation"], res.out_dir)
        return EXIT_OK if res.passed else EXIT_FAIL
    if args.command == "exact":
        res = run_exact(cfg)
        log.info("%d samples -> %s", len(res.records), res.out_dir / "timeseries.csv")
        return EXIT_OK
    if args.command == "mps":
        res = run_mps(cfg)
        log.info("%d samples, max bond %d, discarded %.2e -> %s", len(res.records),
                 res.manifest["max_bond"], res.manifest["discarded_weight"], res.out_dir)
        return EXIT_OK
    report, _ = run_compare(cfg)
    log.info(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, SpecError) as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except (DimensionCapError, GateTooLargeError) as exc:
        log.error("resource cap: %s", exc)
        return EXIT_CAP
    except NormDriftError as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

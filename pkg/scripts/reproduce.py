"""Run one or more figure presets and print their reports.

    python scripts/reproduce.py fig4 fig5 --out results
"""
import argparse
import json
import logging

from bandchain.runs import PRESETS, run_reproduction_suite


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("presets", nargs="+", choices=sorted(PRESETS))
    p.add_argument("--out", default="results")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    failed = 0
    for name in args.presets:
        rep = run_reproduction_suite(name, f"{args.out}/{name}")
        print(json.dumps(rep.to_dict(), indent=2, default=str))
        failed += not rep.passed
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()

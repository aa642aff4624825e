"""Command-line entry point: ``track``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .association import enumerate_hypotheses, hypothesis_count, m2t_from_t2m
from .config import FILTERS, bundled_scenarios, load_experiment, with_overrides
from .errors import ConfigError, InvalidArgumentError, TrackingError
from .runner import run_monte_carlo, write_outputs

log = logging.getLogger("pftrack")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="track", description="Particle-filter tracking experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", required=True, help="scenario file or bundled scenario name")
    run.add_argument("--filter", choices=FILTERS, help="override the scenario's default filter")
    run.add_argument("--particles", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    sc = sub.add_parser("scenarios", help="bundled scenarios")
    sc_sub = sc.add_subparsers(dest="action", required=True)
    sc_sub.add_parser("list", help="list bundled scenario names")

    orc = sub.add_parser("oracle", help="exhaustive reference computations")
    orc_sub = orc.add_subparsers(dest="action", required=True)
    assoc = orc_sub.add_parser("assoc", help="dump every association hypothesis")
    assoc.add_argument("--k", type=int, required=True, help="number of targets")
    assoc.add_argument("--m", type=int, required=True, help="number of measurements")
    return p


def _cmd_run(args) -> int:
    exp = with_overrides(load_experiment(args.config), particles=args.particles, runs=args.runs,
                         seed=args.seed, kind=args.filter)
    report, traces = run_monte_carlo(exp, args.filter, workers=args.workers)
    out = write_outputs(report, traces, args.out)
    print(f"{report.scenario} / {report.filter}: {report.n_runs} runs, "
          f"divergences {report.divergence_count}, swaps {report.swap_count}, "
          f"mean RMSE {sum(report.rmse_time_avg) / len(report.rmse_time_avg):.3f} m -> {out}")
    return EXIT_OK


def _cmd_oracle_assoc(args) -> int:
    if args.k < 0 or args.m < 0:
        raise ConfigError("--k and --m must be non-negative")
    hyps = enumerate_hypotheses(args.k, args.m)
    doc = {
        "K": args.k,
        "M": args.m,
        "count": hypothesis_count(args.k, args.m),
        "hypotheses": [
            {"target_to_meas": list(h.r_tilde),
             "meas_to_target": list(m2t_from_t2m(h).r),
             "m_target": h.m_target,
             "m_clutter": h.m_clutter}
            for h in hyps
        ],
    }
    json.dump(doc, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "scenarios":
            for name in bundled_scenarios():
                print(name)
            return EXIT_OK
        return _cmd_oracle_assoc(args)
    except (ConfigError, InvalidArgumentError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except TrackingError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

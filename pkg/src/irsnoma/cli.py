"""Command line entry point: ``irsnoma {order,solve,sweep,oracle}``."""
from __future__ import annotations

import argparse
import csv
import sys
from contextlib import contextmanager
from dataclasses import replace

from . import harness
from .channels import sample_channels
from .errors import ConfigError
from .ordering import order_users

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not partial failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="number of channel drops")
    common.add_argument("--mode", choices=["siso", "miso"])
    common.add_argument("--scheme", type=_csv_list, help="comma list of schemes")
    common.add_argument("--param", choices=harness.SWEEP_PARAMS, help="sweep parameter")
    common.add_argument("--values", type=_csv_list, help="comma list of sweep values")
    common.add_argument("--bits", help="phase resolution in bits, or 'continuous'")
    common.add_argument("--out", help="CSV path (default: stdout)")
    common.add_argument("--oma-per-slot-phases", action="store_true", default=None,
                        help="let each OMA slot use its own IRS phases")
    common.add_argument("--workers", type=int, help="parallel worker processes")

    parser = _Parser(prog="irsnoma",
                     description="IRS-assisted NOMA max-min rate experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("order", parents=[common], help="CCS user ordering per drop")
    sub.add_parser("solve", parents=[common], help="solve every scheme at the base scenario")
    sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    sub.add_parser("oracle", parents=[common], help="compare against brute-force oracles")
    return parser


def _sweep_value(param: str, text: str):
    if param == "bits":
        return None if text == "continuous" else int(text)
    if param == "power_dbm":
        return float(text)
    return int(text)


def resolve_config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.scheme is not None:
        changes["schemes"] = tuple(args.scheme)
    if args.bits is not None:
        changes["bits"] = harness._parse_bits(args.bits)
    if args.oma_per_slot_phases:
        changes["oma_per_slot_phases"] = True
    if args.workers is not None:
        changes["workers"] = args.workers
    param = args.param or cfg.sweep_param
    if args.values is not None:
        try:
            changes["sweep_values"] = tuple(_sweep_value(param, v) for v in args.values)
        except ValueError as exc:
            raise ConfigError(f"bad --values: {exc}") from exc
        changes["sweep_param"] = param
    elif args.param is not None and args.param != cfg.sweep_param:
        raise ConfigError("--param needs --values")
    if args.command in ("solve", "order", "oracle"):
        # a single point: the base scenario
        changes["sweep_param"] = "power_dbm"
        changes["sweep_values"] = (cfg.scenario.power_dbm,)
    try:
        cfg = replace(cfg, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    harness.validate_config(cfg)
    return cfg


@contextmanager
def _output(path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _cmd_order(cfg, fh) -> int:
    sc = cfg.scenario
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["trial", "rank", "user_index", "strength", "seed"])
    for trial in range(cfg.trials):
        chan_ss, order_ss, _, _, seed_int = harness._streams(cfg.master_seed, trial)
        ch = sample_channels(sc.geometry(), sc.channel_params(), sc.users, sc.antennas,
                             harness._child(chan_ss, 0))
        res = order_users(ch, cfg.solver.randomization, harness._child(order_ss, 0))
        for rank, k in enumerate(res.permutation):
            writer.writerow([trial, rank, int(k), repr(float(res.strengths[k])), seed_int])
    return EXIT_OK


def _cmd_run(cfg, fh) -> int:
    rows = harness.run_experiment(cfg)
    harness.write_csv(rows, fh)
    return EXIT_PARTIAL if any(r.status != "ok" for r in rows) else EXIT_OK


def _cmd_oracle(cfg, fh) -> int:
    sc = cfg.scenario
    mode = cfg.mode_for(sc)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["trial", "q_ccs", "q_order_oracle", "oracle_permutation", "q_grid_oracle",
                     "seed", "status"])
    partial = False
    for trial in range(cfg.trials):
        chan_ss, order_ss, solver_ss, _, seed_int = harness._streams(cfg.master_seed, trial)
        ch = sample_channels(sc.geometry(), sc.channel_params(), sc.users, sc.antennas,
                             harness._child(chan_ss, 0))
        try:
            ordering = order_users(ch, cfg.solver.randomization, harness._child(order_ss, 0))
            solver = harness._solver_for(mode)
            seed = harness._child(solver_ss, 1)
            q = solver(ch, ordering, sc.power, cfg.solver, seed).q_star
            perm, q_ord = harness.exhaustive_order_oracle(ch, sc.power, mode, cfg.solver, seed,
                                                          ordering)
            q_grid = ""
            if mode == "siso" and ch.M <= harness.MAX_GRID_ELEMENTS:
                q_grid = repr(harness.grid_phase_oracle(ch.reorder(ordering.permutation), 64,
                                                        power=sc.power)[0])
            writer.writerow([trial, repr(q), repr(q_ord), " ".join(map(str, perm)), q_grid,
                             seed_int, "ok"])
        except Exception as exc:  # per-row failure, keep going
            partial = True
            writer.writerow([trial, "", "", "", "", seed_int, f"error:{type(exc).__name__}"])
    return EXIT_PARTIAL if partial else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"order": _cmd_order, "solve": _cmd_run, "sweep": _cmd_run,
               "oracle": _cmd_oracle}[args.command]
    with _output(args.out) as fh:
        return handler(cfg, fh)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: run, sweep, replay, invariants, explore build|certify,
graph gen|validate.  Exit codes: 0 ok, 1 gathering failed (or replay
mismatch), 2 invariant violation, 3 config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import harness, invariants
from .explore import certify, load_plan, save_plan
from .graph import GraphParseError, generate
from .graph import load as load_graph
from .graph import save as save_graph
from .graph import validate as validate_graph
from .sim import ConfigError

EXIT_OK = 0
EXIT_NOT_GATHERED = 1
EXIT_INVARIANT = 2
EXIT_CONFIG = 3


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file with a [run] section")
    p.add_argument("--corpus", help="built-in corpus name")
    p.add_argument("--graph", help="graph name within the corpus")
    p.add_argument("-k", type=int, help="total agent count")
    p.add_argument("-f", type=int, help="Byzantine agent count")
    p.add_argument("--strategies",
                   help="comma-separated strategy names (1 or f of them)")
    p.add_argument("--ids", help="comma-separated explicit agent IDs")
    p.add_argument("--id-lo", type=int, help="ID pool lower bound (inclusive)")
    p.add_argument("--id-hi", type=int, help="ID pool upper bound (exclusive)")
    p.add_argument("--t-ini", type=int, help="initial cycle length (0 = auto)")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--max-rounds", type=int, default=0,
                   help="round cap (0 = auto)")
    p.add_argument("--pbc-mode", choices=("oracle", "distributed"),
                   default="distributed", help="consensus mode")
    p.add_argument("--rotations", type=int, help="consensus king rotations")
    p.add_argument("--rel-scale", type=int,
                   help="rendezvous bound scale factor")
    p.add_argument("--no-bound-check", action="store_true",
                   help="allow k below the 9f+8 bound")


def _run_config(args) -> harness.RunConfig:
    overrides = {}
    for flag, key in (("corpus", "corpus"), ("graph", "graph"), ("k", "k"),
                      ("f", "f"), ("id_lo", "id_lo"), ("id_hi", "id_hi"),
                      ("t_ini", "t_ini"), ("rotations", "rotations"),
                      ("rel_scale", "rel_scale")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "strategies", None):
        overrides["strategies"] = tuple(
            s.strip() for s in args.strategies.split(","))
    if getattr(args, "ids", None):
        try:
            overrides["ids"] = tuple(int(x) for x in args.ids.split(","))
        except ValueError:
            raise ConfigError("ids: expected comma-separated integers")
    overrides["seed"] = args.seed
    overrides["max_rounds"] = args.max_rounds
    overrides["pbc_mode"] = args.pbc_mode
    if args.no_bound_check:
        overrides["bound_check"] = False
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return harness.load_run_config(fh.read(), overrides)
    base = {f.name: getattr(harness.RunConfig(), f.name)
            for f in fields(harness.RunConfig)}
    base.update(overrides)
    return harness.RunConfig(**base)


def cmd_run(args) -> int:
    cfg = _run_config(args)
    cfg.collect_trace = bool(args.trace_out)
    outcome = harness.perform_run(cfg)
    res = outcome.result
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            harness.write_trace(fh, cfg, outcome.meta, res)
    print(f"graph {outcome.meta.graph_name} k {cfg.k} f {cfg.f} "
          f"seed {cfg.seed} mode {cfg.pbc_mode}")
    print(f"gathered {res.gathered} rounds {res.rounds} "
          f"t_rel {outcome.meta.t_rel_max} phases {outcome.phases} "
          f"fingerprint {res.fingerprint:016x}")
    return EXIT_OK if res.gathered else EXIT_NOT_GATHERED


def _int_list(raw: str, path: str) -> list:
    try:
        return [int(x) for x in raw.split(",")]
    except ValueError:
        raise ConfigError(f"{path}: expected comma-separated integers")


def cmd_sweep(args) -> int:
    base = _run_config(args)
    k_list = _int_list(args.k_list, "k-list") if args.k_list else [base.k]
    f_list = _int_list(args.f_list, "f-list") if args.f_list else [base.f]
    graphs = (list(harness.corpus_graphs(base.corpus))
              if args.all_graphs else [base.graph])
    cells = []
    for k in k_list:
        for f in f_list:
            for graph in graphs:
                for s in range(args.seeds):
                    cfg = harness.RunConfig(
                        **{fld.name: getattr(base, fld.name)
                           for fld in fields(harness.RunConfig)})
                    cfg.k, cfg.f, cfg.graph = k, f, graph
                    cfg.seed = base.seed + s
                    cells.append(cfg)
    report = harness.sweep(cells)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            harness.write_csv(report, fh)
    print(harness.summarize(report))
    if report.errors and report.errors == len(report.rows):
        return EXIT_CONFIG
    return EXIT_OK if report.failures == 0 else EXIT_NOT_GATHERED


def cmd_replay(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        tf = harness.parse_trace(fh.read())
    report = harness.replay(tf)
    if report.verified:
        print(f"verified {report.checked_rows} rows"
              + (f" ({report.note})" if report.note else ""))
        return EXIT_OK
    idx, recorded, replayed = report.divergence
    print(f"divergence at row {idx}: recorded {recorded} replayed {replayed}")
    return EXIT_NOT_GATHERED


def cmd_invariants(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        tf = harness.parse_trace(fh.read())
    meta = harness.trace_invariant_meta(tf)
    report = invariants.evaluate(tf.rows, tf.events, meta)
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        extra = f" ({c.detail})" if c.detail else ""
        if not c.passed and c.first_violation_round >= 0:
            extra += f" [round {c.first_violation_round}]"
        print(f"{status} {c.name}{extra}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_explore(args) -> int:
    if args.action == "build":
        plan = harness.corpus_plan(args.corpus)
        text = save_plan(plan)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        print(f"corpus {args.corpus} t_ex {plan.t_ex} "
              f"offsets {len(plan.offsets)}")
        return EXIT_OK
    if not args.plan:
        raise ConfigError("certify requires --plan")
    with open(args.plan, encoding="utf-8") as fh:
        plan = load_plan(fh.read())
    corpus = tuple(harness.corpus_graphs(args.corpus).values())
    outcome = certify(plan.offsets, corpus, plan.N)
    if outcome[0] == "ok":
        print(f"certified: covers corpus {args.corpus} within {outcome[1]}")
        return EXIT_OK
    print(f"not certified: graph index {outcome[1]} start {outcome[2]}")
    return EXIT_CONFIG


def cmd_graph(args) -> int:
    if args.action == "gen":
        g = generate(args.kind, args.n, args.seed)
        text = save_graph(g)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if not args.file:
        raise ConfigError("validate requires --file")
    with open(args.file, encoding="utf-8") as fh:
        g = load_graph(fh.read())
    problems = validate_graph(g)
    if not problems:
        print(f"valid: {g.node_count} nodes")
        return EXIT_OK
    for p in problems:
        print(f"invalid: {p}")
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="byzgather",
        description="Byzantine-tolerant gathering simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one simulation")
    _add_run_flags(p)
    p.add_argument("--trace-out", help="write a self-contained trace file")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run a config matrix and fit bounds")
    _add_run_flags(p)
    p.add_argument("--k-list", help="comma-separated k values")
    p.add_argument("--f-list", help="comma-separated f values")
    p.add_argument("--seeds", type=int, default=1,
                   help="seeds per cell (seed, seed+1, ...)")
    p.add_argument("--all-graphs", action="store_true",
                   help="sweep every graph of the corpus")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("replay", help="re-execute a trace and verify it")
    p.add_argument("trace")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("invariants", help="check invariants over a trace")
    p.add_argument("trace")
    p.set_defaults(fn=cmd_invariants)

    p = sub.add_parser("explore", help="exploration plan tools")
    p.add_argument("action", choices=("build", "certify"))
    p.add_argument("--corpus", default="tiny")
    p.add_argument("--plan", help="plan file (certify)")
    p.add_argument("--out", help="plan output path (build)")
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("graph", help="graph generator tools")
    p.add_argument("action", choices=("gen", "validate"))
    p.add_argument("--kind", default="ring",
                   choices=("ring", "complete", "random_tree",
                            "random_connected"))
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (gen)")
    p.add_argument("--file", help="graph file (validate)")
    p.set_defaults(fn=cmd_graph)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, harness.TraceError, GraphParseError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

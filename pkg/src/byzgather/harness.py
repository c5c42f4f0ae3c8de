"""Experiment harness: corpora, run configuration, sweeps, traces, replay.

Ties the simulator to reproducible experiments:

* named graph corpora with certified exploration plans (a simulation graph
  always comes from the corpus that certified its plan);
* ``RunConfig`` -> ``SimConfig`` resolution (seeded ID draw, seeded start
  nodes, automatic T_ini and round caps);
* sweeps over config lists with per-cell error isolation, CSV output, and
  round-bound fitting: the raw constant normalizes rounds by
  max(1,f)*t_rel(max good id); the substituted constant replaces the
  max(1,f) factor with the measured consensus phase count, since the
  reference protocol runs a fixed number of phases rather than O(f);
* self-contained trace files (config, graph, plan, rows, events embedded)
  and replay verification by deterministic re-execution.
"""

from __future__ import annotations

import csv
import io
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, fields
from functools import lru_cache

from . import adversary as adv
from .agent import EV_GID, PBC_DISTRIBUTED, PBC_ORACLE
from .explore import ExplorationPlan, build_plan, load_plan, save_plan
from .graph import PortGraph, generate
from .graph import load as load_graph
from .graph import save as save_graph
from .pbc import DEFAULT_ROTATIONS
from .rendezvous import DEFAULT_REL_SCALE, t_rel
from .engine import run as sim_run
from .sim import ConfigError, SimConfig, SimResult, TRACE_FIELDS
from .util import Rng, hash64

PBC_MODE_NAMES = {"oracle": PBC_ORACLE, "distributed": PBC_DISTRIBUTED}

DEFAULT_ID_LO = 1
DEFAULT_ID_HI = 1 << 16
DEFAULT_T_INI = 4
PLAN_SEARCH_SEEDS = 6
PLAN_BUDGET = 4096

TRACE_MAGIC = "byzgather-trace 1"

CSV_COLUMNS = (
    "corpus", "graph", "n", "k", "f", "strategies", "pbc_mode", "seed",
    "t_ex", "t_rel", "rounds", "gathered", "group_round", "phases",
    "ratio_raw", "ratio_sub", "group_ratio", "fingerprint", "error",
)


def _corpus_recipes() -> dict:
    recipes = {"tiny": (("ring", 3, 1), ("ring", 4, 1))}
    for n in range(3, 9):
        recipes[f"small-n{n}"] = (
            ("ring", n, 1), ("random_tree", n, 1), ("random_connected", n, 1))
    return recipes


CORPUS_RECIPES = _corpus_recipes()


@lru_cache(maxsize=None)
def corpus_graphs(name: str) -> dict:
    """Named graphs of a built-in corpus (graph name -> PortGraph)."""
    if name not in CORPUS_RECIPES:
        raise ConfigError(f"corpus: unknown corpus {name!r}")
    return {f"{kind}-{n}-{seed}": generate(kind, n, seed)
            for kind, n, seed in CORPUS_RECIPES[name]}


@lru_cache(maxsize=None)
def corpus_plan(name: str) -> ExplorationPlan:
    """Certified plan for a built-in corpus (smallest t_ex over a seed search)."""
    graphs = tuple(corpus_graphs(name).values())
    big_n = max(g.node_count for g in graphs)
    best = None
    for seed in range(PLAN_SEARCH_SEEDS):
        try:
            plan = build_plan(big_n, graphs, seed=seed, budget=PLAN_BUDGET,
                              corpus_id=name)
        except RuntimeError:
            continue
        if best is None or plan.t_ex < best.t_ex:
            best = plan
    if best is None:
        raise ConfigError(f"corpus: no certified plan found for {name!r}")
    return best


@dataclass
class RunConfig:
    corpus: str = "tiny"
    graph: str = ""  # graph name within the corpus; "" = first
    k: int = 8
    f: int = 0
    strategies: tuple = ()  # names; one name is broadcast to all f
    ids: tuple = ()  # explicit agent IDs (good first); () = seeded draw
    id_lo: int = DEFAULT_ID_LO
    id_hi: int = DEFAULT_ID_HI
    t_ini: int = DEFAULT_T_INI  # 0 = auto (2*(t_rel(max id)+1))
    pbc_mode: str = "distributed"
    rotations: int = DEFAULT_ROTATIONS
    rel_scale: int = DEFAULT_REL_SCALE
    seed: int = 0
    max_rounds: int = 0  # 0 = auto
    bound_check: bool = True
    collect_trace: bool = False


@dataclass
class RunMeta:
    """Fully resolved ingredients of one simulation run."""
    graph_name: str
    graph: PortGraph
    plan: ExplorationPlan
    good_ids: tuple
    byz_strategies: dict
    start_nodes: dict
    t_ini: int
    max_rounds: int
    t_rel_max: int


def _resolve_strategies(cfg: RunConfig) -> tuple:
    if cfg.f == 0:
        return ()
    names = tuple(cfg.strategies)
    if not names:
        return tuple(adv.STRATEGY_NAMES[i % len(adv.STRATEGY_NAMES)]
                     for i in range(cfg.f))
    if len(names) == 1:
        return names * cfg.f
    return names


def validate_run_config(cfg: RunConfig) -> None:
    if cfg.k < 1:
        raise ConfigError("k: must be >= 1")
    if not (0 <= cfg.f < cfg.k):
        raise ConfigError("f: must satisfy 0 <= f < k")
    if cfg.bound_check and cfg.k < 9 * cfg.f + 8:
        raise ConfigError(
            f"k: bound check requires k >= 9f+8 = {9 * cfg.f + 8}, got {cfg.k}")
    if cfg.corpus not in CORPUS_RECIPES:
        raise ConfigError(f"corpus: unknown corpus {cfg.corpus!r}")
    if cfg.graph and cfg.graph not in corpus_graphs(cfg.corpus):
        known = ", ".join(corpus_graphs(cfg.corpus))
        raise ConfigError(f"graph: {cfg.graph!r} not in corpus ({known})")
    strategies = _resolve_strategies(cfg)
    if len(strategies) != cfg.f:
        raise ConfigError(
            f"strategies: need 1 or f={cfg.f} names, got {len(cfg.strategies)}")
    for s in strategies:
        if s not in adv.STRATEGY_NAMES:
            raise ConfigError(f"strategies: unknown strategy {s!r}")
    if cfg.ids:
        if len(cfg.ids) != cfg.k:
            raise ConfigError(f"ids: need k={cfg.k} IDs, got {len(cfg.ids)}")
        if len(set(cfg.ids)) != cfg.k:
            raise ConfigError("ids: IDs must be unique")
        for i in cfg.ids:
            if not (1 <= i < adv.PHANTOM_BASE):
                raise ConfigError(f"ids: ID {i} out of range")
    else:
        if not (1 <= cfg.id_lo < cfg.id_hi <= adv.PHANTOM_BASE):
            raise ConfigError("id_lo/id_hi: invalid ID range")
        if cfg.id_hi - cfg.id_lo < cfg.k:
            raise ConfigError("id_lo/id_hi: range smaller than k")
    if cfg.t_ini < 0:
        raise ConfigError("t_ini: must be >= 0 (0 = auto)")
    if cfg.pbc_mode not in PBC_MODE_NAMES:
        raise ConfigError(f"pbc_mode: must be one of {sorted(PBC_MODE_NAMES)}")
    if cfg.rotations < 1:
        raise ConfigError("rotations: must be >= 1")
    if cfg.rel_scale < 1:
        raise ConfigError("rel_scale: must be >= 1")
    if cfg.max_rounds < 0:
        raise ConfigError("max_rounds: must be >= 0 (0 = auto)")


def _draw_ids(cfg: RunConfig) -> tuple:
    if cfg.ids:
        return tuple(cfg.ids)
    rng = Rng(hash64(cfg.seed, 13))
    drawn = []
    seen = set()
    while len(drawn) < cfg.k:
        i = cfg.id_lo + rng.randrange(cfg.id_hi - cfg.id_lo)
        if i not in seen:
            seen.add(i)
            drawn.append(i)
    return tuple(drawn)


def auto_t_ini(max_id: int, t_ex: int, rel_scale: int) -> int:
    return 2 * (t_rel(max_id, t_ex, rel_scale) + 1)


def auto_max_rounds(f: int, rotations: int, pbc_mode: int,
                    t_rel_max: int) -> int:
    horizon = 2 + 3 * rotations if pbc_mode == PBC_DISTRIBUTED else 1
    return 24 * (horizon + 8 + 2 * f) * t_rel_max


def build_sim(cfg: RunConfig) -> tuple:
    """Resolve a RunConfig into (SimConfig, RunMeta)."""
    validate_run_config(cfg)
    graphs = corpus_graphs(cfg.corpus)
    graph_name = cfg.graph or next(iter(graphs))
    graph = graphs[graph_name]
    plan = corpus_plan(cfg.corpus)
    ids = _draw_ids(cfg)
    good_ids = tuple(ids[:cfg.k - cfg.f])
    strategies = _resolve_strategies(cfg)
    byz = {i: adv.strategy_code(s)
           for i, s in zip(ids[cfg.k - cfg.f:], strategies)}
    rng = Rng(hash64(cfg.seed, 14))
    start_nodes = {i: rng.randrange(graph.node_count) for i in sorted(ids)}
    t_rel_max = t_rel(max(good_ids), plan.t_ex, cfg.rel_scale)
    t_ini = cfg.t_ini or auto_t_ini(max(ids), plan.t_ex, cfg.rel_scale)
    mode = PBC_MODE_NAMES[cfg.pbc_mode]
    max_rounds = cfg.max_rounds or auto_max_rounds(
        cfg.f, cfg.rotations, mode, t_rel_max)
    sim_cfg = SimConfig(
        graph=graph, plan=plan, good_ids=good_ids, byz_strategies=byz,
        start_nodes=start_nodes, t_ini=t_ini, max_rounds=max_rounds,
        rel_scale=cfg.rel_scale, pbc_mode=mode, rotations=cfg.rotations,
        seed=cfg.seed, collect_trace=cfg.collect_trace)
    meta = RunMeta(
        graph_name=graph_name, graph=graph, plan=plan, good_ids=good_ids,
        byz_strategies=byz, start_nodes=start_nodes, t_ini=t_ini,
        max_rounds=max_rounds, t_rel_max=t_rel_max)
    return sim_cfg, meta


@dataclass
class RunOutcome:
    config: RunConfig
    meta: RunMeta
    result: SimResult

    @property
    def phases(self) -> int:
        return max(self.result.phase_counts.values(), default=0)

    @property
    def group_round(self) -> int:
        rounds = [e[1] for e in self.result.events if e[0] == EV_GID]
        return min(rounds) if rounds else -1

    @property
    def ratio_raw(self) -> float:
        return self.result.rounds / (max(1, self.config.f)
                                     * self.meta.t_rel_max)

    @property
    def ratio_sub(self) -> float:
        return self.result.rounds / (max(1, self.phases)
                                     * self.meta.t_rel_max)

    @property
    def group_ratio(self) -> float:
        if self.group_round < 0:
            return float("inf")
        return self.group_round / (max(1, self.config.f)
                                   * self.meta.t_rel_max)


def perform_run(cfg: RunConfig) -> RunOutcome:
    sim_cfg, meta = build_sim(cfg)
    result = sim_run(sim_cfg)
    return RunOutcome(cfg, meta, result)


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)  # dicts keyed by CSV_COLUMNS
    outcomes: list = field(default_factory=list)
    failures: int = 0
    errors: int = 0
    c_raw_by_f: dict = field(default_factory=dict)
    c_sub_by_f: dict = field(default_factory=dict)
    group_c_by_f: dict = field(default_factory=dict)

    @property
    def c_raw(self) -> float:
        return max(self.c_raw_by_f.values(), default=0.0)

    @property
    def c_sub(self) -> float:
        return max(self.c_sub_by_f.values(), default=0.0)

    @property
    def group_c(self) -> float:
        return max(self.group_c_by_f.values(), default=0.0)

    def stability(self, by_f: dict) -> float:
        """Largest/smallest fitted constant across f values (1.0 = flat)."""
        vals = [v for v in by_f.values() if v > 0]
        if len(vals) < 2:
            return 1.0
        return max(vals) / min(vals)


def _row_for(cfg: RunConfig, outcome, error: str = "") -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(corpus=cfg.corpus, k=cfg.k, f=cfg.f,
               strategies="+".join(_resolve_strategies(cfg)),
               pbc_mode=cfg.pbc_mode, seed=cfg.seed, error=error)
    if outcome is not None:
        row.update(
            graph=outcome.meta.graph_name,
            n=outcome.meta.graph.node_count,
            t_ex=outcome.meta.plan.t_ex,
            t_rel=outcome.meta.t_rel_max,
            rounds=outcome.result.rounds,
            gathered=int(outcome.result.gathered),
            group_round=outcome.group_round,
            phases=outcome.phases,
            ratio_raw=f"{outcome.ratio_raw:.3f}",
            ratio_sub=f"{outcome.ratio_sub:.3f}",
            group_ratio=(f"{outcome.group_ratio:.3f}"
                         if outcome.group_round >= 0 else ""),
            fingerprint=f"{outcome.result.fingerprint:016x}",
        )
    else:
        row.update(graph=cfg.graph)
    return row


def sweep(configs, keep_outcomes: bool = False) -> SweepReport:
    """Run every cell; cell errors are recorded and the sweep continues."""
    report = SweepReport()
    for cfg in configs:
        try:
            outcome = perform_run(cfg)
        except (ConfigError, ValueError, RuntimeError) as exc:
            report.errors += 1
            report.rows.append(_row_for(cfg, None, error=str(exc)))
            continue
        report.rows.append(_row_for(cfg, outcome))
        if keep_outcomes:
            report.outcomes.append(outcome)
        if not outcome.result.gathered:
            report.failures += 1
            continue
        f = cfg.f
        report.c_raw_by_f[f] = max(report.c_raw_by_f.get(f, 0.0),
                                   outcome.ratio_raw)
        report.c_sub_by_f[f] = max(report.c_sub_by_f.get(f, 0.0),
                                   outcome.ratio_sub)
        if outcome.group_round >= 0:
            report.group_c_by_f[f] = max(report.group_c_by_f.get(f, 0.0),
                                         outcome.group_ratio)
    return report


def write_csv(report: SweepReport, fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in report.rows:
        writer.writerow(row)


def summarize(report: SweepReport) -> str:
    lines = [
        f"cells: {len(report.rows)}  failures: {report.failures}  "
        f"errors: {report.errors}",
        f"fitted c (raw, rounds <= c*max(1,f)*t_rel): {report.c_raw:.2f}  "
        f"per f: " + " ".join(f"f={f}:{v:.2f}"
                              for f, v in sorted(report.c_raw_by_f.items())),
        f"fitted c (phase-substituted, rounds <= c*phases*t_rel): "
        f"{report.c_sub:.2f}  per f: "
        + " ".join(f"f={f}:{v:.2f}"
                   for f, v in sorted(report.c_sub_by_f.items())),
        f"stability raw: {report.stability(report.c_raw_by_f):.2f}x  "
        f"substituted: {report.stability(report.c_sub_by_f):.2f}x",
        f"fitted c' (group, round <= c'*max(1,f)*t_rel): "
        f"{report.group_c:.2f}",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# trace files


def _config_lines(cfg: RunConfig, meta: RunMeta) -> list:
    vals = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    vals["strategies"] = ",".join(_resolve_strategies(cfg))
    vals["ids"] = ",".join(
        str(i) for i in tuple(meta.good_ids) + tuple(sorted(
            meta.byz_strategies)))
    vals["byz"] = ",".join(f"{i}:{code}" for i, code in
                           sorted(meta.byz_strategies.items()))
    vals["start_nodes"] = ",".join(
        f"{i}:{v}" for i, v in sorted(meta.start_nodes.items()))
    vals["t_ini"] = meta.t_ini
    vals["max_rounds"] = meta.max_rounds
    vals["graph"] = meta.graph_name
    vals["collect_trace"] = True
    return [f"{k} = {vals[k]}" for k in sorted(vals)]


def write_trace(fh, cfg: RunConfig, meta: RunMeta, result: SimResult) -> None:
    if result.trace is None:
        raise ValueError("run was executed without collect_trace")
    out = [TRACE_MAGIC, "[config]"]
    out.extend(_config_lines(cfg, meta))
    out.append("[graph]")
    out.extend(save_graph(meta.graph).splitlines())
    out.append("[plan]")
    out.extend(save_plan(meta.plan).splitlines())
    out.append("[rows]")
    out.extend(" ".join(str(x) for x in row) for row in result.trace)
    out.append("[events]")
    out.extend(" ".join(str(x) for x in e) for e in result.events)
    out.append("[result]")
    out.append(f"gathered = {int(result.gathered)}")
    out.append(f"rounds = {result.rounds}")
    out.append(f"fingerprint = {result.fingerprint:016x}")
    fh.write("\n".join(out) + "\n")


class TraceError(ValueError):
    pass


@dataclass
class TraceFile:
    config: dict
    graph: PortGraph
    plan: ExplorationPlan
    rows: list
    events: list
    result: dict


def parse_trace(text: str) -> TraceFile:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_MAGIC:
        raise TraceError("line 1: not a trace file")
    sections = {}
    current = None
    for no, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
            sections[current] = []
            continue
        if current is None:
            raise TraceError(f"line {no}: content before first section")
        sections[current].append((no, s))
    for need in ("config", "graph", "plan", "rows", "events", "result"):
        if need not in sections:
            raise TraceError(f"missing [{need}] section")

    def kv(section):
        out = {}
        for no, s in sections[section]:
            if "=" not in s:
                raise TraceError(f"line {no}: expected key = value")
            key, _, val = s.partition("=")
            out[key.strip()] = val.strip()
        return out

    def int_rows(section, width):
        out = []
        for no, s in sections[section]:
            parts = s.split()
            if len(parts) != width:
                raise TraceError(f"line {no}: expected {width} integers")
            try:
                out.append(tuple(int(x) for x in parts))
            except ValueError:
                raise TraceError(f"line {no}: non-integer field") from None
        return out

    graph = load_graph("\n".join(s for _, s in sections["graph"]))
    plan = load_plan("\n".join(s for _, s in sections["plan"]))
    return TraceFile(
        config=kv("config"), graph=graph, plan=plan,
        rows=int_rows("rows", len(TRACE_FIELDS)),
        events=int_rows("events", 6), result=kv("result"))


def _pairs(text: str) -> dict:
    out = {}
    if text:
        for part in text.split(","):
            a, _, b = part.partition(":")
            out[int(a)] = int(b)
    return out


def sim_config_from_trace(tf: TraceFile) -> SimConfig:
    c = tf.config
    try:
        byz = _pairs(c.get("byz", ""))
        ids = tuple(int(x) for x in c["ids"].split(","))
        good = tuple(i for i in ids if i not in byz)
        return SimConfig(
            graph=tf.graph, plan=tf.plan, good_ids=good, byz_strategies=byz,
            start_nodes=_pairs(c["start_nodes"]), t_ini=int(c["t_ini"]),
            max_rounds=int(c["max_rounds"]), rel_scale=int(c["rel_scale"]),
            pbc_mode=PBC_MODE_NAMES[c["pbc_mode"]],
            rotations=int(c["rotations"]), seed=int(c["seed"]),
            collect_trace=True)
    except (KeyError, ValueError) as exc:
        raise TraceError(f"config section incomplete or malformed: {exc}")


@dataclass
class ReplayReport:
    verified: bool
    checked_rows: int
    divergence: tuple = ()  # (row index, recorded row, replayed row)
    note: str = ""


def replay(tf: TraceFile) -> ReplayReport:
    """Re-execute the run deterministically and compare every trace row."""
    result = sim_run(sim_config_from_trace(tf))
    fresh = result.trace
    for idx, row in enumerate(tf.rows):
        if idx >= len(fresh):
            return ReplayReport(False, idx,
                                (idx, row, None),
                                "recorded trace longer than replay")
        if tuple(fresh[idx]) != row:
            return ReplayReport(False, idx, (idx, row, tuple(fresh[idx])))
    if len(tf.rows) < len(fresh):
        return ReplayReport(True, len(tf.rows), (),
                            f"verified prefix ({len(tf.rows)} of "
                            f"{len(fresh)} rows)")
    return ReplayReport(True, len(tf.rows))


def trace_invariant_meta(tf: TraceFile) -> dict:
    byz = _pairs(tf.config.get("byz", ""))
    ids = tuple(int(x) for x in tf.config["ids"].split(","))
    good = tuple(i for i in ids if i not in byz)
    universe = tuple(sorted(ids)) + adv.phantom_ids()
    return {
        "good_ids": good,
        "byz_ids": tuple(sorted(byz)),
        "universe": universe,
        "t_ex": tf.plan.t_ex,
        "rel_scale": int(tf.config["rel_scale"]),
    }


def trace_to_string(cfg: RunConfig, meta: RunMeta, result: SimResult) -> str:
    buf = io.StringIO()
    write_trace(buf, cfg, meta, result)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config text files


_BOOL = {"1": True, "true": True, "yes": True,
         "0": False, "false": False, "no": False}


def _parse_field(name: str, kind, raw: str, path: str):
    try:
        if kind is int:
            return int(raw)
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind is tuple:
            if not raw:
                return ()
            parts = [p.strip() for p in raw.split(",")]
            if name == "ids":
                return tuple(int(p) for p in parts)
            return tuple(parts)
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"{path}: invalid value {raw!r}") from None


def load_run_config(text: str, overrides: dict = None) -> RunConfig:
    """Parse a [run] section of key = value lines into a RunConfig."""
    parser = ConfigParser()
    try:
        parser.read_string(text)
    except ConfigParserError as exc:
        raise ConfigError(f"config: {exc}") from None
    if not parser.has_section("run"):
        raise ConfigError("config: missing [run] section")
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    for key, raw in parser.items("run"):
        if key not in known:
            raise ConfigError(f"run.{key}: unknown field")
        kind = type(getattr(RunConfig(), key))
        values[key] = _parse_field(key, kind, raw, f"run.{key}")
    if overrides:
        values.update(overrides)
    return RunConfig(**values)

"""Deterministic synchronous scheduler: Look, Compute, Move.

Each round:

* Look — snapshot every agent's presented state (Byzantine presentations
  come from the adversary module) and group agents by node, so every
  observer at a node sees the identical ascending-id entry list;
* Compute (two sub-phases) — non-following agents commit their actions
  first; agents executing FOLLOW then mirror the strict-majority committed
  action of the group they recognized, within the same round;
* Move — all moves apply simultaneously; two agents crossing one edge in
  opposite directions pass without meeting.

Byzantine agents with shadow-driven strategies run the honest step
function on an internal core; the strategy then overrides movement or
consensus payloads.  The trace is one 15-integer record per (round, agent)
folded into an FNV-1a fingerprint; full record retention is optional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import adversary as adv
from .agent import (A_MOVE, A_STAY, A_TERM, EV_PCONS_DONE, EV_TERM, GID_INF,
                    PBC_DISTRIBUTED, PBC_ORACLE, AgentCore, Observation,
                    StepContext, follow, new_core, step)
from .explore import START, ExplorationPlan
from .graph import PortGraph
from .pbc import DEFAULT_ROTATIONS, oracle_decide
from .rendezvous import DEFAULT_REL_SCALE, t_rel
from .util import FNV_OFFSET, fnv1a_u64, hash64

MAX_AGENTS = 60  # universe (agents + phantom IDs) must fit in a 64-bit mask

# trace action codes
ACT_STAY = 0
ACT_TERMINATE = 1
ACT_FOLLOW_STAY = 2
ACT_FOLLOW_TERMINATE = 3
ACT_MOVE_BASE = 16
ACT_FOLLOW_MOVE_BASE = 64

TRACE_FIELDS = ("round", "agent_id", "node", "stage", "length", "elapsed",
                "count", "ready", "endMC", "gid", "action", "sp_size",
                "pp_size", "pc_size", "d_size")


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    graph: PortGraph
    plan: ExplorationPlan
    good_ids: tuple
    byz_strategies: dict  # byz agent id -> strategy code
    start_nodes: dict  # agent id -> node index
    t_ini: int
    max_rounds: int
    rel_scale: int = DEFAULT_REL_SCALE
    pbc_mode: int = PBC_DISTRIBUTED
    rotations: int = DEFAULT_ROTATIONS
    seed: int = 0
    collect_trace: bool = False


@dataclass
class SimResult:
    gathered: bool
    final_node: object
    rounds: int
    fingerprint: int
    term_rounds: dict
    nodes: dict
    events: list
    trace: list
    phase_counts: dict
    max_good_id: int
    t_rel_max: int


def validate_config(cfg: SimConfig) -> None:
    ids = tuple(cfg.good_ids) + tuple(cfg.byz_strategies)
    if not cfg.good_ids:
        raise ConfigError("at least one good agent required")
    if len(set(ids)) != len(ids):
        raise ConfigError("agent ids must be unique")
    if len(ids) > MAX_AGENTS:
        raise ConfigError(f"at most {MAX_AGENTS} agents supported")
    for i in ids:
        if not (1 <= i < adv.PHANTOM_BASE):
            raise ConfigError(f"agent id {i} out of range")
        if i not in cfg.start_nodes:
            raise ConfigError(f"agent {i} has no start node")
        if not (0 <= cfg.start_nodes[i] < cfg.graph.node_count):
            raise ConfigError(f"agent {i} start node out of range")
    for s in cfg.byz_strategies.values():
        if not (0 <= s < len(adv.STRATEGY_NAMES)):
            raise ConfigError(f"unknown strategy code {s}")
    if cfg.t_ini < 1:
        raise ConfigError("t_ini must be >= 1")
    if cfg.max_rounds < 1:
        raise ConfigError("max_rounds must be >= 1")


class _OracleReferee:
    """Engine-side PBC referee: one common output per AgreeID cohort."""

    def __init__(self, good_cores, uindex, seed):
        self.good_cores = good_cores
        self.uindex = uindex
        self.seed = seed
        self.cache = {}

    def _decide(self, inputs, salt):
        sets = list(inputs.values())
        union = frozenset().union(*sets)
        inter = sets[0]
        for s in sets[1:]:
            inter = inter & s
        choice = frozenset(
            p for p in union - inter
            if hash64(self.seed, 9, salt, self.uindex[p[0]]) & 1)
        out = oracle_decide(inputs, choice)
        return next(iter(out.values()))

    def lookup(self, core):
        key = (core.aid_entry_round, core.length)
        if key not in self.cache:
            members = [
                c for c in self.good_cores
                if c.awaiting_oracle and c.aid_entry_round == key[0]
                and c.length == key[1]
            ]
            if not members:
                self.cache[key] = None
            else:
                s_in = {c.id: frozenset((i, 1) for i in c.S_p) for c in members}
                p_in = {c.id: frozenset((i, 1) for i in c.P_p) for c in members}
                s_out = frozenset(i for (i, v) in self._decide(s_in, 0) if v == 1)
                p_out = frozenset(i for (i, v) in self._decide(p_in, 1) if v == 1)
                self.cache[key] = (s_out, p_out)
        got = self.cache[key]
        if got is None:
            # a Byzantine shadow outside every good cohort decides alone
            return frozenset(core.S_p), frozenset(core.P_p)
        return got


def _action_code(act, followed: bool) -> int:
    kind = act[0]
    if kind == A_TERM:
        return ACT_FOLLOW_TERMINATE if followed else ACT_TERMINATE
    if kind == A_MOVE:
        base = ACT_FOLLOW_MOVE_BASE if followed else ACT_MOVE_BASE
        return base + act[1]
    return ACT_FOLLOW_STAY if followed else ACT_STAY


def run(cfg: SimConfig) -> SimResult:
    validate_config(cfg)
    g = cfg.graph
    good_ids = tuple(sorted(cfg.good_ids))
    byz = dict(cfg.byz_strategies)
    all_ids = sorted(tuple(good_ids) + tuple(byz))
    universe = tuple(all_ids) + adv.phantom_ids()
    uindex = {i: j for j, i in enumerate(universe)}
    universe_pairs = universe

    cores = {i: new_core(i, cfg.t_ini) for i in good_ids}
    shadows = {b: adv.make_shadow(s, b, cfg.t_ini) for b, s in byz.items()}
    node = {i: cfg.start_nodes[i] for i in all_ids}
    inport = {i: START for i in all_ids}

    events = []
    ctx = StepContext(cfg.plan, cfg.rel_scale, cfg.pbc_mode,
                      events=events, rotations=cfg.rotations)
    ctx.uindex = uindex
    shadow_ctx = StepContext(cfg.plan, cfg.rel_scale, cfg.pbc_mode,
                             events=[], rotations=cfg.rotations)
    shadow_ctx.uindex = uindex
    if cfg.pbc_mode == PBC_ORACLE:
        referee = _OracleReferee(
            [cores[i] for i in good_ids], uindex, cfg.seed)
        ctx.oracle_lookup = referee.lookup
        shadow_ctx.oracle_lookup = referee.lookup

    fingerprint = FNV_OFFSET
    trace = [] if cfg.collect_trace else None
    term_rounds = {}
    gathered = False
    rounds = 0
    equiv_ids = frozenset(
        b for b, s in byz.items() if s == adv.EQUIVOCATOR)

    for rnd in range(cfg.max_rounds):
        ctx.round = rnd
        shadow_ctx.round = rnd

        # Look: presented-state snapshot and co-location
        max_good_length = max(cores[i].length for i in good_ids)
        env = adv.AdvEnv(tuple(all_ids), max_good_length, len(all_ids))
        presented = {}
        for i in all_ids:
            if i in cores:
                presented[i] = cores[i].presented()
            else:
                presented[i] = adv.presented(
                    byz[i], cfg.seed, i, rnd, cfg.t_ini, env, shadows[i])
        occupants = {}
        for i in all_ids:
            occupants.setdefault(node[i], []).append(i)
        entries_at = {
            v: tuple(presented[i] for i in ids) for v, ids in occupants.items()
        }

        # Compute, sub-phase 1: everyone but followers commits
        committed = {}
        intents = {}
        for i in all_ids:
            v = node[i]
            deg = g.degree(v)
            if i in cores:
                core = cores[i]
                if core.terminated:
                    committed[i] = (A_STAY,)
                    continue
                overrides = {}
                if equiv_ids and core.pcons_s is not None \
                        and not core.pcons_s.finished:
                    for e in entries_at[v]:
                        if e.id in equiv_ids:
                            overrides[e.id] = (
                                adv.payload_override(
                                    adv.EQUIVOCATOR, cfg.seed, e.id, i, 0,
                                    core.pcons_s.current_phase, universe_pairs),
                                adv.payload_override(
                                    adv.EQUIVOCATOR, cfg.seed, e.id, i, 1,
                                    core.pcons_p.current_phase, universe_pairs),
                            )
                obs = Observation(deg, inport[i], entries_at[v], overrides)
                act = step(core, obs, ctx)
                if act[0] == "follow":
                    intents[i] = act[1]
                else:
                    committed[i] = act
            else:
                strat = byz[i]
                shadow = shadows[i]
                sact = (A_STAY,)
                if shadow is not None and not shadow.terminated:
                    obs = Observation(deg, inport[i], entries_at[v], {})
                    sact = step(shadow, obs, shadow_ctx)
                    if sact[0] == "follow":
                        sact = (A_STAY,)
                    if sact[0] == A_TERM:
                        shadow.terminated = True
                if strat in (adv.SILENT, adv.LIAR, adv.IMPOSTOR):
                    act = (A_STAY,)
                elif adv.disrupts_movement(strat, shadow) \
                        and not shadow.terminated:
                    h = hash64(cfg.seed, 5, i, rnd)
                    if (h & 1) or deg == 0:
                        act = (A_STAY,)
                    else:
                        act = (A_MOVE, 1 + (h >> 1) % deg)
                else:
                    act = sact
                committed[i] = act

        # Compute, sub-phase 2: followers mirror the group's majority
        followed = set()
        for i in sorted(intents, key=lambda j: (cores[j].min_gid, j)):
            s_rg = intents[i]
            votes = {}
            for m in s_rg:
                if presented[m].terminated:
                    votes[m] = (A_TERM,)
                else:
                    c = committed.get(m)
                    votes[m] = c if c is not None else (A_STAY,)
            committed[i] = follow(s_rg, votes)
            followed.add(i)

        # Trace records (state after Compute, positions before Move)
        for i in all_ids:
            code = _action_code(committed[i], i in followed)
            if i in cores:
                c = cores[i]
                row = (rnd, i, node[i], c.stage, c.length, c.elapsed, c.count,
                       int(c.ready), int(c.end_mc),
                       0 if c.gid == GID_INF else c.gid, code, len(c.S_p),
                       len(c.P_p), len(c.P_c) if c.P_c is not None else 0,
                       len(c.D))
            else:
                p = presented[i]
                sh = shadows[i]
                row = (rnd, i, node[i], p.stage, p.length,
                       sh.elapsed if sh is not None else 0,
                       sh.count if sh is not None else 0, int(p.ready),
                       int(sh.end_mc) if sh is not None else 0,
                       0 if p.gid == GID_INF else p.gid, code, p.sp_size,
                       len(sh.P_p) if sh is not None else 0,
                       len(sh.P_c) if sh is not None and sh.P_c is not None
                       else 0,
                       len(sh.D) if sh is not None else 0)
            for x in row:
                fingerprint = fnv1a_u64(fingerprint, x)
            if trace is not None:
                trace.append(row)

        # Move
        for i in all_ids:
            act = committed[i]
            if act[0] == A_MOVE:
                node[i], inport[i] = g.neighbor(node[i], act[1])
            elif act[0] == A_TERM and i in cores:
                core = cores[i]
                if not core.terminated:
                    core.terminated = True
                    term_rounds[i] = rnd
                    ctx.emit(EV_TERM, i, node[i])

        rounds = rnd + 1
        if all(cores[i].terminated for i in good_ids):
            final_nodes = {node[i] for i in good_ids}
            gathered = len(final_nodes) == 1
            break

    final_nodes = {node[i] for i in good_ids}
    gathered = (all(cores[i].terminated for i in good_ids)
                and len(final_nodes) == 1)
    phase_counts = {
        e[2]: e[5] for e in events if e[0] == EV_PCONS_DONE
    }
    max_good_id = max(good_ids)
    return SimResult(
        gathered=gathered,
        final_node=next(iter(final_nodes)) if gathered else None,
        rounds=rounds,
        fingerprint=fingerprint,
        term_rounds=term_rounds,
        nodes=dict(node),
        events=events,
        trace=trace,
        phase_counts=phase_counts,
        max_good_id=max_good_id,
        t_rel_max=t_rel(max_good_id, cfg.plan.t_ex, cfg.rel_scale),
    )


def check_gathered(cores: dict, nodes: dict) -> bool:
    """True iff every good agent terminated and all share one node."""
    if not cores:
        return False
    if not all(c.terminated for c in cores.values()):
        return False
    return len({nodes[i] for i in cores}) == 1

"""Per-agent protocol state machine as pure step functions.

One agent-round maps (state, observation) to (state, action).  The stages:

* CollectID   — wait out short cycles, then run one full REL(id) cycle to
                collect every good agent's ID into S_p;
* MakeCandidate — spread/collect the ready flag until two thirds of S_p is
                known ready, then move to AgreeID;
* AgreeID     — first cycle collects same-candidate IDs into P_p, then each
                cycle simulates one consensus phase for PCONS(S_p) and
                PCONS(P_p) via meetings;
* MakeGroup   — hunt the target P_c[count mod |P_c|]; at cycle ends build D
                from consistent co-located candidates and adopt
                gid = min(D) when D is large enough.

Once gid is set the agent runs REL(gid) for one more cycle and terminates;
any agent seeing a recognized group with a smaller gid mirrors the
majority's committed action (FOLLOW, resolved by the scheduler).

All fractional thresholds are evaluated in exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .pbc import DEFAULT_ROTATIONS, PconsInstance
from .rendezvous import STAY, rel_step, t_rel
from .util import ceil_div

# stage codes
CID, MC, AID, MG = 0, 1, 2, 3
STAGE_NAMES = ("CollectID", "MakeCandidate", "AgreeID", "MakeGroup")

GID_INF = (1 << 63) - 1  # larger than any permitted ID

# action kinds
A_STAY = "stay"
A_MOVE = "move"
A_TERM = "terminate"
A_FOLLOW = "follow"

# event kinds
EV_STAGE = 0
EV_READY = 1
EV_ENDMC = 2
EV_PCONS_INIT = 3
EV_PCONS_DONE = 4
EV_GID = 5
EV_TERM = 6

PBC_ORACLE = 0
PBC_DISTRIBUTED = 1


class ProtocolError(RuntimeError):
    pass


class Presented(NamedTuple):
    """An agent's public state as seen in Look (Byzantine fields arbitrary
    except id)."""

    id: int
    stage: int
    length: int
    ready: bool
    gid: int
    s_c: frozenset
    sp_size: int
    terminated: bool
    payload_s: object
    payload_p: object


class Observation(NamedTuple):
    degree: int
    inport: int
    entries: tuple  # Presented tuples for all co-located agents, ascending id
    overrides: dict  # per-recipient consensus payloads, id -> (ps, pp)


@dataclass
class AgentCore:
    id: int
    stage: int = CID
    length: int = 0
    elapsed: int = 0
    count: int = 0
    ready: bool = False
    end_mc: bool = False
    gid: int = GID_INF
    R: set = field(default_factory=set)
    S_p: set = field(default_factory=set)
    S_c: frozenset = None
    P_p: set = field(default_factory=set)
    P_c: list = None
    D: set = field(default_factory=set)
    min_gid: int = GID_INF
    S_gid: frozenset = frozenset()
    S_rg: frozenset = frozenset()
    terminated: bool = False
    # execution cursors
    pcons_s: PconsInstance = None
    pcons_p: PconsInstance = None
    inbox_s: dict = field(default_factory=dict)
    inbox_p: dict = field(default_factory=dict)
    recv: set = field(default_factory=set)
    aid_entry_round: int = -1
    awaiting_oracle: bool = False
    lure: bool = False  # adversarial shadow flag: never stop as the target

    def __post_init__(self):
        self.S_p.add(self.id)

    def presented(self) -> Presented:
        ps = self.pcons_s.payload if self.pcons_s is not None else None
        pp = self.pcons_p.payload if self.pcons_p is not None else None
        return Presented(
            self.id, self.stage, self.length, self.ready, self.gid,
            self.S_c if self.S_c is not None else frozenset(),
            len(self.S_p), self.terminated, ps, pp,
        )


def new_core(ident: int, t_ini: int) -> AgentCore:
    return AgentCore(id=ident, length=t_ini)


class StepContext:
    """Per-run protocol environment shared by all agents."""

    def __init__(self, plan, rel_scale, pbc_mode=PBC_DISTRIBUTED,
                 oracle_lookup=None, events=None,
                 rotations=DEFAULT_ROTATIONS):
        self.plan = plan
        self.rel_scale = rel_scale
        self.pbc_mode = pbc_mode
        self.rotations = rotations
        self.oracle_lookup = oracle_lookup
        self.events = events if events is not None else []
        self.round = 0
        self.emit_for = None  # id whose events are recorded (None = record all)

    def t_rel(self, ident: int) -> int:
        return t_rel(ident, self.plan.t_ex, self.rel_scale)

    def emit(self, kind, agent_id, a=0, b=0, c=0):
        self.events.append((kind, self.round, agent_id, a, b, c))


def _rel_action(core: AgentCore, obs: Observation, ctx: StepContext, ident: int):
    port = rel_step(ident, core.elapsed, ctx.plan, obs.degree, obs.inport)
    return (A_STAY,) if port == STAY else (A_MOVE, port)


def detect_reliable_groups(entries, sp_size: int):
    """S_gid = gid values presented by at least ceil(sp_size/8) co-located
    agents; minGID = min or GID_INF."""
    counts = {}
    for e in entries:
        if e.gid != GID_INF:
            counts[e.gid] = counts.get(e.gid, 0) + 1
    threshold = ceil_div(sp_size, 8)
    s_gid = frozenset(x for x, c in counts.items() if c >= threshold)
    return s_gid, (min(s_gid) if s_gid else GID_INF)


def step(core: AgentCore, obs: Observation, ctx: StepContext):
    """One Compute for the full gathering algorithm."""
    if core.terminated:
        raise ProtocolError("step on terminated agent")
    if core.stage != CID:
        core.S_gid, mg = detect_reliable_groups(obs.entries, len(core.S_p))
        if core.S_gid:
            core.min_gid = mg
        if core.S_gid and core.gid > core.min_gid:
            core.S_rg = frozenset(
                e.id for e in obs.entries if e.gid == core.min_gid)
            return (A_FOLLOW, core.S_rg)
        if core.gid != GID_INF:
            core.elapsed += 1
            if core.length == core.elapsed:
                return (A_TERM,)
            return _rel_action(core, obs, ctx, core.gid)
    return make_reliable_group_step(core, obs, ctx)


def make_reliable_group_step(core: AgentCore, obs: Observation, ctx: StepContext):
    core.elapsed += 1
    if core.stage == CID:
        return collect_id_step(core, obs, ctx)
    if core.stage == MC:
        return make_candidate_step(core, obs, ctx)
    if core.stage == AID:
        return agree_id_step(core, obs, ctx)
    return make_group_step(core, obs, ctx)


def _absorb_ready(core: AgentCore, obs: Observation):
    for e in obs.entries:
        if e.ready:
            core.R.add(e.id)


def collect_id_step(core: AgentCore, obs: Observation, ctx: StepContext):
    _absorb_ready(core, obs)
    if 2 * (ctx.t_rel(core.id) + 1) > core.length:
        if core.length == core.elapsed:
            core.elapsed = 0
            core.length *= 2
        return (A_STAY,)
    for e in obs.entries:
        core.S_p.add(e.id)
    if core.length > core.elapsed:
        return _rel_action(core, obs, ctx, core.id)
    core.elapsed = 0
    core.length *= 2
    core.stage = MC
    ctx.emit(EV_STAGE, core.id, MC, core.length, _mask(ctx, core.S_p))
    return (A_STAY,)


def make_candidate_step(core: AgentCore, obs: Observation, ctx: StepContext):
    _absorb_ready(core, obs)
    if core.elapsed == 1 and not core.ready:
        qualified = sum(
            1 for i in core.S_p if core.length >= 4 * (ctx.t_rel(i) + 1))
        cond1 = 9 * qualified >= 8 * len(core.S_p)
        cond2 = 9 * len(core.R) >= 4 * len(core.S_p)
        if cond1 or cond2:
            core.ready = True
            core.R.add(core.id)
            ctx.emit(EV_READY, core.id)
    if core.elapsed == 1 and 9 * len(core.R) >= 6 * len(core.S_p):
        if not core.end_mc:
            core.end_mc = True
            ctx.emit(EV_ENDMC, core.id)
    if core.length > core.elapsed:
        return _rel_action(core, obs, ctx, core.id)
    core.elapsed = 0
    core.length *= 2
    if core.end_mc:
        core.stage = AID
        core.aid_entry_round = ctx.round
        ctx.emit(EV_STAGE, core.id, AID, core.length, _mask(ctx, core.S_p))
    return (A_STAY,)


def _same_candidate(core: AgentCore, e: Presented) -> bool:
    return e.length == core.length and e.stage == AID


def _collect_pcons(core: AgentCore, obs: Observation):
    for e in obs.entries:
        if e.id == core.id or e.id in core.recv:
            continue
        if e.length != core.length or e.stage not in (AID, MG):
            continue
        ps, pp = obs.overrides.get(e.id, (e.payload_s, e.payload_p))
        if ps is None and pp is None:
            continue
        core.recv.add(e.id)
        if ps is not None:
            core.inbox_s[e.id] = ps
        if pp is not None:
            core.inbox_p[e.id] = pp


def agree_id_step(core: AgentCore, obs: Observation, ctx: StepContext):
    if core.count == 0:
        for e in obs.entries:
            if _same_candidate(core, e):
                core.P_p.add(e.id)
    elif not core.awaiting_oracle and not core.pcons_s.finished \
            and core.length > core.elapsed:
        _collect_pcons(core, obs)
    if core.length > core.elapsed:
        return _rel_action(core, obs, ctx, core.id)
    # last round of the cycle
    core.elapsed = 0
    if core.count == 0:
        if ctx.pbc_mode == PBC_ORACLE:
            core.awaiting_oracle = True
        else:
            core.pcons_s = PconsInstance(
                frozenset((i, 1) for i in core.S_p), owner=core.id,
                tag="S", rotations=ctx.rotations)
            core.pcons_p = PconsInstance(
                frozenset((i, 1) for i in core.P_p), owner=core.id,
                tag="P", rotations=ctx.rotations)
        ctx.emit(EV_PCONS_INIT, core.id,
                 _mask(ctx, core.S_p), _mask(ctx, core.P_p))
    elif core.awaiting_oracle:
        s_out, p_out = ctx.oracle_lookup(core)
        core.awaiting_oracle = False
        _finish_consensus(core, ctx, s_out, p_out, 1)
    elif not core.pcons_s.finished:
        core.pcons_s.on_phase_end(core.inbox_s)
        core.pcons_p.on_phase_end(core.inbox_p)
        core.inbox_s = {}
        core.inbox_p = {}
        core.recv = set()
        if core.pcons_s.finished and core.pcons_p.finished:
            s_out = frozenset(i for (i, v) in core.pcons_s.output if v == 1)
            p_out = frozenset(i for (i, v) in core.pcons_p.output if v == 1)
            _finish_consensus(core, ctx, s_out, p_out,
                              core.pcons_s.phase_count())
    core.count += 1
    return (A_STAY,)


def _finish_consensus(core, ctx, s_out, p_out, phases):
    core.S_c = frozenset(s_out)
    core.P_c = sorted(p_out)
    core.stage = MG
    if not core.P_c:
        raise ProtocolError("consensus produced an empty common ID set")
    ctx.emit(EV_PCONS_DONE, core.id,
             _mask(ctx, core.S_c), _mask(ctx, core.P_c), phases)
    ctx.emit(EV_STAGE, core.id, MG, core.length, _mask(ctx, core.S_p))


def make_group_step(core: AgentCore, obs: Observation, ctx: StepContext):
    if 2 * core.elapsed <= core.length:
        return _rel_action(core, obs, ctx, core.id)
    if core.length > core.elapsed:
        target = core.P_c[core.count % len(core.P_c)]
        for e in obs.entries:
            if e.id == target and not (core.lure and target == core.id):
                return (A_STAY,)
        return _rel_action(core, obs, ctx, core.id)
    core.elapsed = 0
    core.count += 1
    core.D = {
        e.id for e in obs.entries
        if 9 * len(e.s_c) >= 8 * e.sp_size
        and e.length == core.length
        and e.s_c == core.S_c
        and e.stage == MG
    }
    if 9 * len(core.S_c) >= 8 * len(core.S_p) and 3 * len(core.D) >= len(core.S_c):
        core.gid = min(core.D)
        ctx.emit(EV_GID, core.id, core.gid, _mask(ctx, core.D))
    return (A_STAY,)


def follow(s_rg, votes):
    """Resolve FOLLOW: mirror a strict-majority committed action of S_rg.

    ``votes`` maps member id -> ("terminate",) | ("move", port) | ("stay",).
    No strict majority (possible only under presented-state forgery) means
    Stay.
    """
    if not s_rg:
        raise ProtocolError("follow with empty S_rg")
    counts = {}
    for i in s_rg:
        v = votes.get(i, (A_STAY,))
        counts[v] = counts.get(v, 0) + 1
    term = counts.get((A_TERM,), 0)
    if 2 * term > len(s_rg):
        return (A_TERM,)
    best, best_n = (A_STAY,), 0
    for v, c in sorted(counts.items()):
        if v[0] == A_MOVE and c > best_n:
            best, best_n = v, c
    if 2 * best_n > len(s_rg):
        return best
    return (A_STAY,)


def _mask(ctx: StepContext, ids) -> int:
    idx = getattr(ctx, "uindex", None)
    if idx is None:
        return 0
    m = 0
    for i in ids:
        j = idx.get(i)
        if j is not None:
            m |= 1 << j
    return m

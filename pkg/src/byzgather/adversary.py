"""Byzantine agent strategies.

Every strategy is deterministic given (strategy seed, agent id, round);
randomness comes from a stateless keyed hash so the compiled and pure
engines reproduce identical adversarial behavior.  Byzantine agents cannot
forge IDs; everything else they present or send is attacker-controlled.

Strategies:

* SILENT        — presents a fresh initial state forever and never moves.
* LIAR          — presents hash-randomized fields each round; lengths are
                  drawn from the same doubling sequence good agents use, so
                  length collisions (and thus message acceptance) occur.
* IMPOSTOR      — advertises a fake reliable group with gid 0, a huge
                  claimed S_p and an all-inclusive S_c, hoping to divert
                  followers; group detection needs ceil(|S_p|/8) co-located
                  presenters, more than f, so it is never recognized.
* LURE          — runs the honest protocol but, when it is the hunted
                  target of MakeGroup, keeps relocating instead of waiting.
* EQUIVOCATOR   — honest movement, but consensus payloads are forged per
                  recipient: inflated inputs in phase 1 (including IDs no
                  good agent holds) and hash-masked sets afterwards.
* DISRUPTOR     — honest protocol until it obtains a gid, then moves
                  erratically while still presenting the gid, trying to
                  scatter agents that mirror the group.
"""

from __future__ import annotations

from dataclasses import dataclass

from .agent import AID, CID, GID_INF, MC, MG, AgentCore, Presented, new_core
from .util import hash64

SILENT = 0
LIAR = 1
IMPOSTOR = 2
LURE = 3
EQUIVOCATOR = 4
DISRUPTOR = 5

STRATEGY_NAMES = ("silent", "liar", "impostor", "lure", "equivocator", "disruptor")

FAKE_GID = 0  # below every real ID, so it wins any min() it sneaks into

PHANTOM_BASE = 1 << 20
PHANTOM_COUNT = 4


def phantom_ids() -> tuple:
    """IDs held by no agent, used by EQUIVOCATOR to inject foreign values."""
    return tuple(PHANTOM_BASE + i for i in range(1, PHANTOM_COUNT + 1))


def strategy_code(name: str) -> int:
    try:
        return STRATEGY_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown strategy {name!r}") from None


def uses_shadow(strategy: int) -> bool:
    """Whether the strategy tracks honest protocol state internally."""
    return strategy in (LURE, EQUIVOCATOR, DISRUPTOR)


def make_shadow(strategy: int, ident: int, t_ini: int):
    if not uses_shadow(strategy):
        return None
    core = new_core(ident, t_ini)
    if strategy == LURE:
        core.lure = True
    return core


@dataclass(frozen=True)
class AdvEnv:
    """Per-round facts a strategy may use to fabricate plausible state."""

    all_ids: tuple  # every real agent id, ascending
    max_good_length: int
    population: int  # k + f


def presented(strategy: int, seed: int, ident: int, round_no: int,
              t_ini: int, env: AdvEnv, shadow: AgentCore) -> Presented:
    if strategy == SILENT:
        return Presented(ident, CID, t_ini, False, GID_INF,
                         frozenset(), 1, False, None, None)
    if strategy == LIAR:
        h = hash64(seed, 1, ident, round_no)
        stage = (CID, MC, AID, MG)[h % 4]
        length = t_ini << (hash64(seed, 2, ident, round_no) % 10)
        hs = hash64(seed, 3, ident, round_no)
        s_c = frozenset(
            i for j, i in enumerate(env.all_ids) if (hs >> (j % 64)) & 1)
        gid = min(env.all_ids) if (h >> 8) & 1 else GID_INF
        sp_size = 1 + hash64(seed, 4, ident, round_no) % env.population
        return Presented(ident, stage, length, bool((h >> 9) & 1), gid,
                         s_c, sp_size, bool((h >> 10) & 1), None, None)
    if strategy == IMPOSTOR:
        return Presented(ident, MG, env.max_good_length, True, FAKE_GID,
                         frozenset(env.all_ids), env.population, False,
                         None, None)
    # shadow-driven strategies present the shadow's honest state
    return shadow.presented()


def override_action(strategy: int, seed: int, ident: int, round_no: int,
                    shadow_action, degree: int):
    """Final movement for a Byzantine agent given its shadow's intent."""
    if strategy in (SILENT, LIAR, IMPOSTOR):
        return ("stay",)
    if strategy == DISRUPTOR and shadow_action is not None:
        return shadow_action
    if strategy == DISRUPTOR:
        h = hash64(seed, 5, ident, round_no)
        if (h & 1) or degree == 0:
            return ("stay",)
        return ("move", 1 + (h >> 1) % degree)
    return shadow_action if shadow_action is not None else ("stay",)


def disrupts_movement(strategy: int, shadow: AgentCore) -> bool:
    """True when the shadow's intent should be discarded this round."""
    return (strategy == DISRUPTOR and shadow is not None
            and shadow.gid != GID_INF)


def payload_override(strategy: int, seed: int, ident: int, recipient: int,
                     tag_code: int, phase: int, universe: tuple):
    """Forged consensus payload, or None to send the shadow's real one.

    ``universe`` lists every ID the adversary may reference, including
    phantom IDs.  Keyed by phase (not round), so repeated deliveries within
    one phase are consistent while different recipients in the same phase
    can receive contradictory values.
    """
    if strategy != EQUIVOCATOR:
        return None
    if phase == 1:
        return frozenset((i, 1) for i in universe)
    if phase == 2:
        h = hash64(seed, 6, ident, recipient, tag_code, phase)
        echo = {}
        for j, s in enumerate(universe):
            if (h >> (j % 64)) & 1:
                hm = hash64(seed, 7, ident, recipient, tag_code, phase, s)
                echo[s] = frozenset(
                    (i, 1) for m, i in enumerate(universe)
                    if (hm >> (m % 64)) & 1)
        return echo
    h = hash64(seed, 8, ident, recipient, tag_code, phase)
    return frozenset(
        (i, 1) for j, i in enumerate(universe) if (h >> (j % 64)) & 1)

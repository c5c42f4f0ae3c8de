"""Agent state machine unit tests (stages, detection, follow)."""

import pytest

from byzgather.agent import (AID, CID, GID_INF, MC, A_MOVE, A_STAY, A_TERM,
                             AgentCore, Observation, ProtocolError,
                             StepContext, detect_reliable_groups, follow,
                             new_core, step)
from byzgather.explore import build_plan
from byzgather.graph import generate
from byzgather.rendezvous import t_rel


def make_ctx():
    corpus = (generate("ring", 3, 1), generate("ring", 4, 1))
    plan = build_plan(4, corpus, seed=0, budget=256, corpus_id="t")
    return StepContext(plan, rel_scale=2)


def present(core: AgentCore):
    return core.presented()


def obs_for(cores, degree=2, inport=0):
    entries = tuple(c.presented() for c in
                    sorted(cores, key=lambda c: c.id))
    return Observation(degree, inport, entries, {})


def test_step_on_terminated_agent_raises():
    ctx = make_ctx()
    core = new_core(1, 4)
    core.terminated = True
    with pytest.raises(ProtocolError):
        step(core, obs_for([core]), ctx)


def test_collect_id_waits_out_short_cycles_and_doubles():
    ctx = make_ctx()
    core = new_core(5, 4)
    assert 2 * (ctx.t_rel(5) + 1) > 4  # initial cycle too short to explore
    for _ in range(4):
        act = step(core, obs_for([core]), ctx)
        assert act == (A_STAY,)
    assert core.length == 8
    assert core.elapsed == 0
    assert core.stage == CID


def test_collect_id_gathers_ids_once_cycle_long_enough():
    ctx = make_ctx()
    long_enough = 2 * (ctx.t_rel(5) + 1)
    a = new_core(5, long_enough)
    b = new_core(9, long_enough)
    step(a, obs_for([a, b]), ctx)
    assert b.id in a.S_p
    assert a.S_p == {5, 9}


def test_stage_advances_to_make_candidate_at_cycle_end():
    ctx = make_ctx()
    length = 2 * (ctx.t_rel(5) + 1)
    core = new_core(5, length)
    for _ in range(length):
        step(core, obs_for([core]), ctx)
    assert core.stage == MC
    assert core.length == 2 * length


def test_ready_when_every_known_id_qualifies():
    ctx = make_ctx()
    length = 4 * (ctx.t_rel(9) + 1)
    core = new_core(5, length)
    core.stage = MC
    core.S_p = {5, 9}
    step(core, obs_for([core]), ctx)
    assert core.ready
    assert core.id in core.R


def test_not_ready_when_large_id_disqualifies():
    ctx = make_ctx()
    big = 1 << 15
    length = 4 * (t_rel(5, ctx.plan.t_ex, 2) + 1)
    assert length < 4 * (t_rel(big, ctx.plan.t_ex, 2) + 1)
    core = new_core(5, length)
    core.stage = MC
    core.S_p = {5, big}
    step(core, obs_for([core]), ctx)
    assert not core.ready


def test_ready_spreads_through_r_fraction():
    ctx = make_ctx()
    core = new_core(5, 8)
    core.stage = MC
    core.S_p = {5, 9}
    core.R = {9}  # 9|R| = 9 >= 4|S_p| = 8
    step(core, obs_for([core]), ctx)
    assert core.ready


def test_end_mc_needs_two_thirds_ready():
    ctx = make_ctx()
    core = new_core(5, 8)
    core.stage = MC
    core.S_p = {5, 9, 13}
    core.R = {5, 9}  # 9*2 = 18 >= 6*3 = 18
    step(core, obs_for([core]), ctx)
    assert core.end_mc


def test_detect_reliable_groups_threshold():
    cores = [new_core(i, 4) for i in (3, 5, 7, 9)]
    for c in cores[:3]:
        c.gid = 3
    entries = tuple(c.presented() for c in cores)
    s_gid, mg = detect_reliable_groups(entries, sp_size=24)
    assert s_gid == frozenset({3})  # ceil(24/8) = 3 presenters suffice
    assert mg == 3
    s_gid, mg = detect_reliable_groups(entries, sp_size=25)
    assert s_gid == frozenset()
    assert mg == GID_INF


def test_agent_follows_smaller_gid_group():
    ctx = make_ctx()
    group = [new_core(i, 4) for i in (3, 5, 7)]
    for c in group:
        c.gid = 3
        c.stage = 3
    me = new_core(9, 4)
    me.stage = MC
    me.S_p = {9}
    act = step(me, obs_for(group + [me]), ctx)
    assert act[0] == "follow"
    assert act[1] == frozenset({3, 5, 7})


def test_follow_majority_move_and_tie_break():
    votes = {1: (A_MOVE, 2), 2: (A_MOVE, 2), 3: (A_STAY,)}
    assert follow(frozenset({1, 2, 3}), votes) == (A_MOVE, 2)
    votes = {1: (A_MOVE, 1), 2: (A_MOVE, 2), 3: (A_STAY,)}
    assert follow(frozenset({1, 2, 3}), votes) == (A_STAY,)


def test_follow_termination_majority():
    votes = {1: (A_TERM,), 2: (A_TERM,), 3: (A_MOVE, 1)}
    assert follow(frozenset({1, 2, 3}), votes) == (A_TERM,)


def test_follow_missing_votes_default_to_stay():
    assert follow(frozenset({1, 2}), {}) == (A_STAY,)


def test_follow_empty_group_rejected():
    with pytest.raises(ProtocolError):
        follow(frozenset(), {})


def test_agree_id_first_cycle_collects_candidates():
    ctx = make_ctx()
    length = 16
    me = new_core(5, length)
    me.stage = AID
    other = new_core(9, length)
    other.stage = AID
    lagging = new_core(13, length * 2)
    lagging.stage = AID
    for _ in range(length):
        step(me, obs_for([me, other, lagging]), ctx)
    assert me.P_p == {5, 9}  # equal length required; the lagger is excluded
    assert me.count == 1
    assert me.pcons_s is not None

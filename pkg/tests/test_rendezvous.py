"""ID-derived rendezvous schedules and the pairwise meeting property."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzgather.explore import build_plan
from byzgather.graph import generate
from byzgather.rendezvous import (ACTIVE, DEFAULT_REL_SCALE, PASSIVE, STAY,
                                  meeting_time, rel_step, t_rel,
                                  transform_id)

A, P = ACTIVE, PASSIVE


def corpus_and_plan():
    corpus = (generate("ring", 3, 1), generate("ring", 4, 1))
    return corpus, build_plan(4, corpus, seed=0, budget=256, corpus_id="t")


def test_transform_id_examples():
    assert transform_id(1) == (A, A, P, A)
    assert transform_id(2) == (A, A, P, P, P, A)
    assert transform_id(5) == (A, A, P, P, A, A, P, A)


def test_transform_id_rejects_nonpositive():
    with pytest.raises(ValueError):
        transform_id(0)


@settings(max_examples=50, deadline=None)
@given(a=st.integers(1, 1 << 16), b=st.integers(1, 1 << 16))
def test_distinct_ids_give_distinct_schedules(a, b):
    if a == b:
        assert transform_id(a) == transform_id(b)
    else:
        assert transform_id(a) != transform_id(b)


def test_t_rel_values():
    assert t_rel(1, 3, 1) == 18
    assert t_rel(1, 3, 2) == 36
    assert t_rel(21, 3, 2) == 84
    assert t_rel(21, 14, 2) == 392


@settings(max_examples=30, deadline=None)
@given(ident=st.integers(1, 1 << 12), t_ex=st.integers(1, 20))
def test_t_rel_covers_one_schedule_pass(ident, t_ex):
    one_pass = len(transform_id(ident)) * 2 * t_ex
    assert t_rel(ident, t_ex, DEFAULT_REL_SCALE) >= one_pass


def test_rel_step_passive_blocks_stay():
    _, plan = corpus_and_plan()
    t_ex = plan.t_ex
    # id 1 -> blocks (A, A, P, A); third block is passive
    for v in range(2 * t_ex):
        assert rel_step(1, 2 * t_ex * 2 + v + 1, plan, 2, 0) == STAY


def test_rel_backward_retraces_forward():
    corpus, plan = corpus_and_plan()
    g = corpus[1]
    t_ex = plan.t_ex
    node, inport = 0, 0
    path = [node]
    # forward half of the first active block
    for t in range(1, t_ex + 1):
        port = rel_step(3, t, plan, g.degree(node), inport)
        assert port != STAY
        node, inport = g.neighbor(node, port)
        path.append(node)
    # backward half must visit the same nodes in reverse
    for t in range(t_ex + 1, 2 * t_ex + 1):
        port = rel_step(3, t, plan, g.degree(node), inport)
        assert port != STAY
        node, inport = g.neighbor(node, port)
        path.pop()
        assert node == path[-1]


def test_meeting_exhaustive_tiny_corpus():
    corpus, plan = corpus_and_plan()
    ids = (1, 2, 3, 5)
    delays = (0, 1, plan.t_ex, 2 * plan.t_ex + 1)
    for g in corpus:
        for ia in ids:
            for ib in ids:
                if ia == ib:
                    continue
                for sa in range(g.node_count):
                    for sb in range(g.node_count):
                        for d in delays:
                            got = meeting_time(ia, ib, plan, g, sa, sb, d)
                            assert got is not None, (
                                ia, ib, sa, sb, d)


def test_meeting_same_start_no_delay_is_immediate():
    corpus, plan = corpus_and_plan()
    assert meeting_time(1, 2, plan, corpus[0], 2, 2, 0) == 0

"""Adversary strategies: determinism, shadow usage, payload forgery."""

from byzgather.adversary import (DISRUPTOR, EQUIVOCATOR, FAKE_GID, IMPOSTOR,
                                 LIAR, LURE, SILENT, STRATEGY_NAMES, AdvEnv,
                                 disrupts_movement, make_shadow,
                                 payload_override, phantom_ids, presented,
                                 strategy_code, uses_shadow)
from byzgather.agent import CID, GID_INF, MG, new_core

ENV = AdvEnv(all_ids=(3, 5, 9, 12), max_good_length=64, population=4)


def test_strategy_names_round_trip():
    for code, name in enumerate(STRATEGY_NAMES):
        assert strategy_code(name) == code


def test_shadow_usage_split():
    assert not uses_shadow(SILENT)
    assert not uses_shadow(LIAR)
    assert not uses_shadow(IMPOSTOR)
    assert uses_shadow(LURE)
    assert uses_shadow(EQUIVOCATOR)
    assert uses_shadow(DISRUPTOR)
    assert make_shadow(SILENT, 5, 4) is None
    shadow = make_shadow(LURE, 5, 4)
    assert shadow.lure
    assert not make_shadow(DISRUPTOR, 5, 4).lure


def test_silent_presents_initial_state():
    p = presented(SILENT, 1, 5, 100, 4, ENV, None)
    assert p.stage == CID
    assert p.length == 4
    assert p.gid == GID_INF
    assert not p.terminated
    assert p.payload_s is None


def test_liar_is_deterministic_but_varies_by_round():
    a1 = presented(LIAR, 1, 5, 10, 4, ENV, None)
    a2 = presented(LIAR, 1, 5, 10, 4, ENV, None)
    assert a1 == a2
    rounds = {presented(LIAR, 1, 5, r, 4, ENV, None) for r in range(50)}
    assert len(rounds) > 1


def test_liar_cannot_forge_its_id():
    p = presented(LIAR, 1, 5, 10, 4, ENV, None)
    assert p.id == 5


def test_liar_lengths_follow_doubling_sequence():
    for r in range(100):
        p = presented(LIAR, 1, 5, r, 4, ENV, None)
        assert p.length % 4 == 0
        assert (p.length // 4) & (p.length // 4 - 1) == 0  # power of two


def test_impostor_advertises_fake_group():
    p = presented(IMPOSTOR, 1, 5, 10, 4, ENV, None)
    assert p.stage == MG
    assert p.gid == FAKE_GID
    assert p.s_c == frozenset(ENV.all_ids)
    assert p.sp_size == ENV.population
    assert p.ready


def test_shadow_strategies_present_shadow_state():
    shadow = new_core(5, 4)
    p = presented(LURE, 1, 5, 10, 4, ENV, shadow)
    assert p == shadow.presented()


def test_disrupts_movement_only_with_gid():
    shadow = new_core(5, 4)
    assert not disrupts_movement(DISRUPTOR, shadow)
    shadow.gid = 3
    assert disrupts_movement(DISRUPTOR, shadow)
    assert not disrupts_movement(LURE, shadow)


def test_phantom_ids_disjoint_from_agents():
    assert len(phantom_ids()) == 4
    assert min(phantom_ids()) > 1 << 20


def test_equivocator_payloads_differ_per_recipient():
    universe = tuple((i, 1) for i in ENV.all_ids + phantom_ids())
    a = payload_override(EQUIVOCATOR, 1, 5, 3, 0, 4, universe)
    b = payload_override(EQUIVOCATOR, 1, 5, 9, 0, 4, universe)
    assert a != b or a is None  # equivocation across recipients
    again = payload_override(EQUIVOCATOR, 1, 5, 3, 0, 4, universe)
    assert a == again  # stable within one phase


def test_equivocator_phase_one_injects_phantoms():
    universe = tuple(ENV.all_ids) + phantom_ids()
    out = payload_override(EQUIVOCATOR, 1, 5, 3, 0, 1, universe)
    assert out == frozenset((i, 1) for i in universe)


def test_non_equivocators_send_real_payloads():
    assert payload_override(LURE, 1, 5, 3, 0, 4, ()) is None
    assert payload_override(SILENT, 1, 5, 3, 0, 4, ()) is None

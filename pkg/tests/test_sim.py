"""End-to-end simulator behaviour: determinism, validation, gathering."""

import dataclasses

import pytest

from byzgather.harness import RunConfig, build_sim
from byzgather.sim import (ConfigError, check_gathered, run, validate_config)


def oracle_cfg(**kw):
    base = dict(corpus="tiny", graph="ring-3-1", k=8, f=0, id_hi=64,
                pbc_mode="oracle", collect_trace=True)
    base.update(kw)
    return RunConfig(**base)


def test_repeat_runs_are_byte_identical():
    cfg, _ = build_sim(oracle_cfg(seed=11))
    r1 = run(cfg)
    r2 = run(cfg)
    assert r1.fingerprint == r2.fingerprint
    assert r1.rounds == r2.rounds
    assert r1.trace == r2.trace
    assert r1.events == r2.events


def test_seed_changes_the_run():
    a = run(build_sim(oracle_cfg(seed=1, collect_trace=False))[0])
    b = run(build_sim(oracle_cfg(seed=2, collect_trace=False))[0])
    assert a.fingerprint != b.fingerprint


def test_failure_free_run_gathers():
    result = run(build_sim(oracle_cfg(seed=3))[0])
    assert result.gathered
    assert result.final_node is not None
    assert set(result.term_rounds) == set(result.nodes)
    assert len(set(result.nodes.values())) == 1
    assert check_gathered is not None


def test_trace_collected_only_on_request():
    with_trace = run(build_sim(oracle_cfg(seed=4))[0])
    without = run(build_sim(oracle_cfg(seed=4, collect_trace=False))[0])
    assert with_trace.trace
    assert without.trace is None
    assert with_trace.fingerprint == without.fingerprint


def test_max_rounds_cuts_off_without_gathering():
    cfg, _ = build_sim(oracle_cfg(seed=5, collect_trace=False))
    short = dataclasses.replace(cfg, max_rounds=10)
    result = run(short)
    assert not result.gathered
    assert result.rounds == 10


def test_phase_counts_track_consensus():
    result = run(build_sim(oracle_cfg(seed=6, collect_trace=False))[0])
    assert result.phase_counts
    assert all(v >= 1 for v in result.phase_counts.values())


def validate_error(message, **changes):
    cfg, _ = build_sim(oracle_cfg(seed=7, collect_trace=False))
    bad = dataclasses.replace(cfg, **changes)
    with pytest.raises(ConfigError, match=message):
        validate_config(bad)


def test_validate_rejects_bad_configs():
    validate_error("at least one good agent", good_ids=())
    validate_error("unique", good_ids=(5, 5, 9, 10, 11, 12, 13, 14))
    validate_error("out of range", good_ids=(0, 9, 10, 11, 12, 13, 14, 15))
    validate_error("no start node", start_nodes={})
    validate_error("t_ini", t_ini=0)
    validate_error("max_rounds", max_rounds=0)


def test_validate_rejects_unknown_strategy_code():
    cfg, _ = build_sim(oracle_cfg(seed=7, collect_trace=False))
    nodes = dict(cfg.start_nodes)
    nodes[3] = 0
    bad = dataclasses.replace(cfg, byz_strategies={3: 42}, start_nodes=nodes)
    with pytest.raises(ConfigError, match="strategy code"):
        validate_config(bad)


def test_byzantine_run_still_gathers_goods():
    cfg, _ = build_sim(RunConfig(
        corpus="tiny", graph="ring-3-1", k=10, f=1, strategies=("liar",),
        id_hi=64, pbc_mode="oracle", bound_check=False))
    result = run(cfg)
    assert result.gathered
    assert set(result.term_rounds) == set(cfg.good_ids)

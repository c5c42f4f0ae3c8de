"""Run orchestration: config validation, sweeps, trace files, replay."""

import io

import pytest

from byzgather.harness import (CSV_COLUMNS, RunConfig, TraceError,
                               _resolve_strategies, build_sim, corpus_graphs,
                               load_run_config, parse_trace, perform_run,
                               replay, summarize, sweep, trace_invariant_meta,
                               trace_to_string, validate_run_config,
                               write_csv)
from byzgather.invariants import evaluate
from byzgather.sim import ConfigError


def oracle_cfg(**kw):
    base = dict(corpus="tiny", graph="ring-3-1", k=8, f=0, id_hi=64,
                pbc_mode="oracle", seed=21, collect_trace=True)
    base.update(kw)
    return RunConfig(**base)


def expect_error(match, **kw):
    with pytest.raises(ConfigError, match=match):
        validate_run_config(oracle_cfg(collect_trace=False, **kw))


def test_validate_rejects_bad_run_configs():
    expect_error("k: must be", k=0)
    expect_error("f: must satisfy", k=8, f=8)
    expect_error("k >= 9f\\+8", k=10, f=1)
    expect_error("unknown corpus", corpus="nowhere")
    expect_error("not in corpus", graph="ring-99-0")
    expect_error("unknown strategy", k=17, f=1, strategies=("gremlin",))
    expect_error("1 or f=2 names", k=26, f=2,
                 strategies=("liar", "liar", "liar"))
    expect_error("need k=8 IDs", ids=(1, 2, 3))
    expect_error("must be unique", ids=(1, 1, 2, 3, 4, 5, 6, 7))
    expect_error("out of range", ids=(0, 1, 2, 3, 4, 5, 6, 7))
    expect_error("invalid ID range", id_lo=10, id_hi=10)
    expect_error("range smaller than k", id_lo=1, id_hi=5)
    expect_error("t_ini", t_ini=-1)
    expect_error("pbc_mode", pbc_mode="psychic")
    expect_error("rotations", rotations=0)
    expect_error("rel_scale", rel_scale=0)
    expect_error("max_rounds", max_rounds=-5)


def test_single_strategy_broadcasts_to_all_byzantine():
    cfg = oracle_cfg(k=26, f=2, strategies=("lure",), bound_check=False)
    assert _resolve_strategies(cfg) == ("lure", "lure")
    assert _resolve_strategies(oracle_cfg(f=0)) == ()


def test_build_sim_is_deterministic():
    a, meta_a = build_sim(oracle_cfg())
    b, meta_b = build_sim(oracle_cfg())
    assert a.good_ids == b.good_ids
    assert a.start_nodes == b.start_nodes
    assert meta_a.t_rel_max == meta_b.t_rel_max


def test_corpus_graphs_known():
    assert set(corpus_graphs("tiny")) == {"ring-3-1", "ring-4-1"}


def test_trace_round_trip_and_replay():
    out = perform_run(oracle_cfg())
    text = trace_to_string(out.config, out.meta, out.result)
    again = trace_to_string(out.config, out.meta, out.result)
    assert text == again  # serialization itself is deterministic
    tf = parse_trace(text)
    assert int(tf.result["rounds"]) == out.result.rounds
    report = replay(tf)
    assert report.verified
    assert report.checked_rows == len(tf.rows)
    assert report.note == ""


def test_replay_flags_doctored_row():
    out = perform_run(oracle_cfg(seed=22))
    tf = parse_trace(trace_to_string(out.config, out.meta, out.result))
    row = list(tf.rows[100])
    row[4] += 1  # corrupt the recorded cycle length
    tf.rows[100] = tuple(row)
    report = replay(tf)
    assert not report.verified
    assert report.divergence[0] == 100


def test_replay_accepts_truncated_prefix():
    out = perform_run(oracle_cfg(seed=23))
    tf = parse_trace(trace_to_string(out.config, out.meta, out.result))
    full = len(tf.rows)
    tf.rows = tf.rows[: full // 2]
    report = replay(tf)
    assert report.verified
    assert "prefix" in report.note


def test_parse_trace_errors():
    with pytest.raises(TraceError, match="not a trace file"):
        parse_trace("hello\n")
    out = perform_run(oracle_cfg(seed=24))
    text = trace_to_string(out.config, out.meta, out.result)
    with pytest.raises(TraceError, match="missing \\[events\\]"):
        parse_trace(text.replace("[events]", "[other]"))
    bad = text.replace("[rows]", "[rows]\n1 2 3")
    with pytest.raises(TraceError, match="expected 15 integers"):
        parse_trace(bad)


def test_trace_invariants_pass_on_real_run():
    out = perform_run(oracle_cfg(seed=25))
    tf = parse_trace(trace_to_string(out.config, out.meta, out.result))
    meta = trace_invariant_meta(tf)
    assert set(meta) == {"good_ids", "byz_ids", "universe", "t_ex",
                         "rel_scale"}
    report = evaluate(tf.rows, tf.events, meta)
    assert report.passed, [c.name for c in report.checks if not c.passed]


def test_sweep_reports_and_csv():
    configs = [oracle_cfg(seed=s, collect_trace=False) for s in (31, 32)]
    report = sweep(configs, keep_outcomes=True)
    assert report.failures == 0
    assert len(report.rows) == 2
    assert len(report.outcomes) == 2
    assert report.c_raw > 0
    assert report.c_sub > 0
    buf = io.StringIO()
    write_csv(report, buf)
    header = buf.getvalue().splitlines()[0]
    assert tuple(header.split(",")) == CSV_COLUMNS
    text = summarize(report)
    assert "cells: 2" in text


def test_load_run_config():
    cfg = load_run_config(
        "[run]\ncorpus = tiny\nk = 9\nf = 1\nstrategies = liar\n"
        "bound_check = no\nseed = 7\n")
    assert cfg.k == 9
    assert cfg.strategies == ("liar",)
    assert cfg.bound_check is False
    over = load_run_config("[run]\nk = 9\n", overrides={"seed": 3})
    assert over.seed == 3


def test_load_run_config_errors():
    with pytest.raises(ConfigError, match="missing \\[run\\]"):
        load_run_config("[other]\nk = 9\n")
    with pytest.raises(ConfigError, match="unknown field"):
        load_run_config("[run]\nturbo = 1\n")
    with pytest.raises(ConfigError, match="invalid value"):
        load_run_config("[run]\nk = lots\n")

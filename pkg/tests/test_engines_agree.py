"""The compiled engine must reproduce the pure engine bit for bit."""

import pytest

from byzgather import engine
from byzgather.harness import RunConfig, build_sim

CASES = [
    RunConfig(corpus="tiny", graph="ring-3-1", k=8, f=0, seed=1, id_hi=64,
              pbc_mode="oracle", collect_trace=True),
    RunConfig(corpus="tiny", graph="ring-4-1", k=8, f=0, seed=2, id_hi=64,
              pbc_mode="oracle", collect_trace=True),
    RunConfig(corpus="tiny", graph="ring-4-1", k=10, f=1,
              strategies=("equivocator",), seed=3, id_hi=64,
              bound_check=False, pbc_mode="oracle", collect_trace=True),
    RunConfig(corpus="tiny", graph="ring-3-1", k=10, f=2,
              strategies=("liar", "disruptor"), seed=4, id_hi=64,
              bound_check=False, pbc_mode="oracle", collect_trace=True),
]

needs_fast = pytest.mark.skipif(
    "fast" not in engine.available_engines(),
    reason="compiled engine not built")


@needs_fast
@pytest.mark.parametrize("cfg", CASES, ids=lambda c: f"f{c.f}-s{c.seed}")
def test_engines_produce_identical_runs(cfg):
    sim_cfg, _ = build_sim(cfg)
    py = engine.run_with("python", sim_cfg)
    fast = engine.run_with("fast", sim_cfg)
    assert py.fingerprint == fast.fingerprint
    assert py.rounds == fast.rounds
    assert py.gathered == fast.gathered
    assert py.final_node == fast.final_node
    assert py.term_rounds == fast.term_rounds
    assert py.nodes == fast.nodes
    assert list(map(tuple, py.trace)) == list(map(tuple, fast.trace))
    assert list(map(tuple, py.events)) == list(map(tuple, fast.events))
    assert py.phase_counts == fast.phase_counts


@needs_fast
def test_distributed_consensus_agrees_across_engines():
    cfg = RunConfig(corpus="tiny", graph="ring-3-1", k=9, f=1,
                    strategies=("equivocator",), seed=5, id_hi=64,
                    bound_check=False, collect_trace=True)
    sim_cfg, _ = build_sim(cfg)
    py = engine.run_with("python", sim_cfg)
    fast = engine.run_with("fast", sim_cfg)
    assert py.fingerprint == fast.fingerprint
    assert list(map(tuple, py.trace)) == list(map(tuple, fast.trace))


def test_engine_env_override_rejects_unknown(monkeypatch):
    monkeypatch.setenv(engine.ENV_VAR, "turbo")
    with pytest.raises(ValueError):
        engine._select()


def test_engine_env_override_python(monkeypatch):
    monkeypatch.setenv(engine.ENV_VAR, "python")
    run, name = engine._select()
    assert name == "python"
    assert callable(run)

"""Port-numbered graph generation, validation, and serialization."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzgather.graph import (GraphParseError, PortGraph, generate, load,
                             save, validate)

KINDS = ("ring", "complete", "random_tree", "random_connected")


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(3, 10),
       seed=st.integers(0, 1000))
def test_generated_graphs_are_valid(kind, n, seed):
    g = generate(kind, n, seed)
    assert g.node_count == n
    assert validate(g) == []


def test_generation_is_deterministic():
    a = generate("random_connected", 7, 42)
    b = generate("random_connected", 7, 42)
    assert a == b
    c = generate("random_connected", 7, 43)
    assert a != c


def test_ring_structure():
    g = generate("ring", 5, 0)
    for v in range(5):
        assert g.degree(v) == 2
        assert g.neighbor(v, 1) == ((v + 1) % 5, 2)
        assert g.neighbor(v, 2) == ((v - 1) % 5, 1)


def test_complete_structure():
    g = generate("complete", 4, 0)
    for v in range(4):
        assert g.degree(v) == 3
        neighbors = {g.neighbor(v, p)[0] for p in range(1, 4)}
        assert neighbors == set(range(4)) - {v}


def test_edge_symmetry_via_round_trip_walk():
    g = generate("random_connected", 8, 9)
    for v in range(g.node_count):
        for p in range(1, g.degree(v) + 1):
            u, q = g.neighbor(v, p)
            assert g.neighbor(u, q) == (v, p)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(3, 8),
       seed=st.integers(0, 200))
def test_save_load_round_trip(kind, n, seed):
    g = generate(kind, n, seed)
    assert load(save(g)) == g


def test_load_rejects_garbage():
    with pytest.raises(GraphParseError):
        load("")
    with pytest.raises(GraphParseError):
        load("not-a-number\n")
    with pytest.raises(GraphParseError):
        load("3\n2 1 1 2 2\n")  # truncated


def test_load_rejects_asymmetric_graph():
    text = "2\n1 1 1\n1 0 2\n"  # node 1 answers on port 2 which it lacks
    with pytest.raises(ValueError):
        load(text)


def test_validate_flags_disconnected():
    g = PortGraph(4, (((1, 1),), ((0, 1),), ((3, 1),), ((2, 1),)))
    assert any("disconnected" in p for p in validate(g))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        generate("torus", 4, 0)

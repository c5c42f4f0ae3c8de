"""Exploration plans: offset sequences certified to cover a graph corpus.

A plan stands in for a universal exploration sequence: instead of a
constructive universality proof, :func:`certify` checks by simulation that
walking the offsets from every (graph, start) pair of a declared corpus
visits all nodes within ``t_ex`` steps.  Simulation runs must use graphs
from the certifying corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import PortGraph
from .util import Rng

START = 0  # sentinel inport for "no previous move"; treated as port 1


@dataclass(frozen=True)
class ExplorationPlan:
    N: int
    t_ex: int
    corpus_id: str
    offsets: tuple

    def __post_init__(self):
        if len(self.offsets) < self.t_ex:
            raise ValueError("offsets shorter than certified bound t_ex")


def step(offsets, t: int, degree: int, inport: int) -> int:
    """Outport for step t (0-based) of the walk; inport START means port 1."""
    if t >= len(offsets):
        raise IndexError("step index beyond plan offsets")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    p0 = 1 if inport == START else inport
    return ((p0 + offsets[t] - 1) % degree) + 1


def plan_step(plan: ExplorationPlan, t: int, degree: int, inport: int) -> int:
    return step(plan.offsets, t, degree, inport)


def walk_cover_time(offsets, g: PortGraph, start: int, limit: int):
    """Steps needed to visit all nodes from start, or None if not within limit."""
    n = g.node_count
    if n == 1:
        return 0
    visited = 1 << start
    full = (1 << n) - 1
    node = start
    inport = START
    for t in range(min(limit, len(offsets))):
        d = g.degree(node)
        node, inport = g.neighbor(node, step(offsets, t, d, inport))
        visited |= 1 << node
        if visited == full:
            return t + 1
    return None


def certify(offsets, corpus, N: int):
    """Smallest t covering every (graph, start) of the corpus, or a failure.

    Returns ("ok", t_ex) or ("fail", graph_index, start).
    """
    worst = 0
    for gi, g in enumerate(corpus):
        if g.node_count > N:
            raise ValueError(f"corpus graph {gi} exceeds N={N}")
        for start in range(g.node_count):
            t = walk_cover_time(offsets, g, start, len(offsets))
            if t is None:
                return ("fail", gi, start)
            worst = max(worst, t)
    return ("ok", worst)


def build_plan(N: int, corpus, seed: int, budget: int, corpus_id: str = "") -> ExplorationPlan:
    """Seeded search for a certified plan; budget caps the offset length."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not corpus:
        return ExplorationPlan(N, 0, corpus_id, ())
    rng = Rng(seed)
    offsets = []
    chunk = max(4, 2 * N)
    while len(offsets) < budget:
        offsets.extend(rng.randrange(max(2, N)) for _ in range(chunk))
        del offsets[budget:]
        result = certify(offsets, corpus, N)
        if result[0] == "ok":
            t_ex = result[1]
            return ExplorationPlan(N, t_ex, corpus_id, tuple(offsets[:t_ex]))
        if len(offsets) >= budget:
            break
    raise RuntimeError(f"exploration search budget {budget} exhausted")


def save_plan(plan: ExplorationPlan) -> str:
    head = f"{plan.N} {plan.t_ex} {plan.corpus_id or '-'} {len(plan.offsets)}"
    return "\n".join([head] + [str(o) for o in plan.offsets]) + "\n"


def load_plan(text: str) -> ExplorationPlan:
    lines = text.split()
    if len(lines) < 4:
        raise ValueError("malformed plan file")
    n, t_ex, corpus_id, length = lines[0], lines[1], lines[2], lines[3]
    offsets = tuple(int(x) for x in lines[4:])
    if len(offsets) != int(length):
        raise ValueError("plan offset count does not match header")
    return ExplorationPlan(int(n), int(t_ex), "" if corpus_id == "-" else corpus_id, offsets)

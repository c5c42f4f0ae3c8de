"""REL(id): rendezvous by ID-derived activity schedules over an exploration plan.

The binary digits of the ID are doubled and the suffix 0,1 is appended;
digit 1 maps to an ACTIVE block (explore forward for t_ex rounds, then
retrace backward for t_ex rounds) and digit 0 to a PASSIVE block (stay for
2*t_ex rounds).  Two agents running the schedules of distinct IDs overlap
an ACTIVE block of one with a PASSIVE block of the other, which forces a
meeting because exploration covers all nodes of the certified corpus.

``t_rel(id)`` is the round bound (2*floor(log2 id) + 6) * t_ex, multiplied
by an empirically validated scale factor.  The schedule length of one full
pass exceeds the unscaled bound, so the default scale is 2; the factor is
part of run metadata and all protocol thresholds are derived from the
scaled value.
"""

from __future__ import annotations

from functools import lru_cache

from .explore import START, ExplorationPlan

ACTIVE = True
PASSIVE = False

DEFAULT_REL_SCALE = 2

STAY = 0  # rel_step return value meaning "do not move"


@lru_cache(maxsize=4096)
def transform_id(ident: int) -> tuple:
    """Block sequence for an ID: each binary digit doubled, then 0,1 appended."""
    if ident < 1:
        raise ValueError("id must be >= 1")
    blocks = []
    for bit in bin(ident)[2:]:
        b = bit == "1"
        blocks.append(b)
        blocks.append(b)
    blocks.append(PASSIVE)
    blocks.append(ACTIVE)
    return tuple(blocks)


def t_rel(ident: int, t_ex: int, scale: int = DEFAULT_REL_SCALE) -> int:
    """Scaled round bound for REL(id)."""
    if ident < 1:
        raise ValueError("id must be >= 1")
    return scale * (2 * (ident.bit_length() - 1) + 6) * t_ex


def rel_step(ident: int, t: int, plan: ExplorationPlan, degree: int, inport: int) -> int:
    """Action for round t (1-based within one REL execution): STAY or a port.

    ACTIVE blocks walk the plan forward for t_ex rounds and then retrace it
    backward; the walk state is fully captured by (t, inport), so the
    function is pure.  The block sequence repeats cyclically when t exceeds
    one pass.
    """
    t_ex = plan.t_ex
    if t_ex == 0 or degree == 0:
        return STAY
    u = t - 1
    blocks = transform_id(ident)
    if not blocks[(u // (2 * t_ex)) % len(blocks)]:
        return STAY
    v = u % (2 * t_ex)
    offsets = plan.offsets
    if v < t_ex:
        # forward: each block restarts the certified walk from scratch
        p0 = 1 if (v == 0 or inport == START) else inport
        return ((p0 + offsets[v] - 1) % degree) + 1
    if v == t_ex:
        # first backward round undoes the last forward move
        return inport if inport != START else 1
    # undoing forward move j needs the entry port of move j, recovered by
    # inverting the rotation applied at move j+1 = 2*t_ex - v
    p = inport if inport != START else 1
    return ((p - 1 - offsets[2 * t_ex - v]) % degree) + 1


def meeting_time(id_a: int, id_b: int, plan: ExplorationPlan, graph,
                 start_a: int, start_b: int, delay: int,
                 scale: int = DEFAULT_REL_SCALE, limit: int = None):
    """Rounds after the later start until the two walkers co-locate.

    Both agents run their REL schedules; agent B begins ``delay`` rounds
    after agent A.  Co-location is checked at the start of each round (the
    same instant the simulator's Look phase observes).  Returns None if no
    meeting happens within ``limit`` rounds of the later start (default:
    the scaled bound for the smaller ID).
    """
    if limit is None:
        limit = t_rel(min(id_a, id_b), plan.t_ex, scale)
    node = [start_a, start_b]
    inport = [START, START]
    idents = (id_a, id_b)
    starts = (0, delay)
    for t in range(delay + limit + 1):
        if t >= delay and node[0] == node[1]:
            return t - delay
        for i in range(2):
            if t < starts[i]:
                continue
            deg = graph.degree(node[i])
            port = rel_step(idents[i], t - starts[i] + 1, plan, deg,
                            inport[i])
            if port != STAY:
                node[i], inport[i] = graph.neighbor(node[i], port)
    return None

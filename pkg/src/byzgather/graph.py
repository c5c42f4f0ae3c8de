"""Port-numbered anonymous graphs.

A :class:`PortGraph` is a connected undirected graph where every node labels
its incident edges with locally-unique ports 1..d(v).  Node indices exist
only inside the simulator; agents never observe them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .util import Rng


@dataclass(frozen=True)
class PortGraph:
    """adjacency[v][p-1] = (neighbor, remote_port) for local port p."""

    node_count: int
    adjacency: tuple = field(default=())

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbor(self, v: int, port: int):
        """Follow local port (1-based); returns (next node, arrival port)."""
        return self.adjacency[v][port - 1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PortGraph)
            and self.node_count == other.node_count
            and self.adjacency == other.adjacency
        )

    def __hash__(self):
        return hash((self.node_count, self.adjacency))


def _freeze(adj) -> tuple:
    return tuple(tuple((u, q) for (u, q) in row) for row in adj)


def validate(g: PortGraph) -> list:
    """Return a list of invariant violations; empty list means the graph is ok."""
    problems = []
    n = g.node_count
    if n < 1:
        return ["node_count must be >= 1"]
    if len(g.adjacency) != n:
        return [f"adjacency has {len(g.adjacency)} rows for {n} nodes"]
    for v in range(n):
        for p, (u, q) in enumerate(g.adjacency[v], start=1):
            if not (0 <= u < n):
                problems.append(f"node {v} port {p}: neighbor {u} out of range")
                continue
            if not (1 <= q <= len(g.adjacency[u])):
                problems.append(f"node {v} port {p}: remote port {q} out of range")
                continue
            if g.adjacency[u][q - 1] != (v, p):
                problems.append(f"asymmetric edge: node {v} port {p} -> ({u},{q})")
    # port sets are contiguous by construction (list index = port), but a
    # node may not have duplicate neighbors on one edge pair in multigraph
    # terms; parallel edges are allowed as long as they are symmetric.
    if not problems and n > 1:
        seen = [False] * n
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for (u, _q) in g.adjacency[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        if not all(seen):
            problems.append("disconnected")
    if n > 1:
        for v in range(n):
            if len(g.adjacency[v]) == 0:
                problems.append(f"node {v} has degree 0 in a multi-node graph")
    return problems


def _ring(n: int) -> PortGraph:
    if n < 3:
        raise ValueError("ring needs n >= 3")
    adj = [[((v + 1) % n, 2), ((v - 1) % n, 1)] for v in range(n)]
    return PortGraph(n, _freeze(adj))


def _complete(n: int) -> PortGraph:
    adj = [[] for _ in range(n)]
    order = [[u for u in range(n) if u != v] for v in range(n)]
    for v in range(n):
        for u in order[v]:
            adj[v].append((u, order[u].index(v) + 1))
    return PortGraph(n, _freeze(adj))


def _random_tree(n: int, rng: Rng) -> list:
    adj = [[] for _ in range(n)]
    for v in range(1, n):
        u = rng.randrange(v)
        adj[u].append(v)
        adj[v].append(u)
    return adj


def _with_ports(edges_adj, n: int) -> list:
    """Turn a plain neighbor-list adjacency into a ported one (ports in list order)."""
    slots = {}
    for v in range(n):
        for i, u in enumerate(edges_adj[v]):
            slots.setdefault(frozenset((v, u)) if v != u else (v,), []).append((v, i))
    adj = [[None] * len(edges_adj[v]) for v in range(n)]
    for _key, occ in slots.items():
        # occurrences alternate between the two endpoints; pair them greedily
        by_node = {}
        for (v, i) in occ:
            by_node.setdefault(v, []).append(i)
        nodes = sorted(by_node)
        if len(nodes) == 1:
            raise ValueError("self loops not supported")
        a, b = nodes
        for ia, ib in zip(by_node[a], by_node[b]):
            adj[a][ia] = (b, ib + 1)
            adj[b][ib] = (a, ia + 1)
    return adj


def _permute_ports(adj, n: int, rng: Rng) -> list:
    """Apply a seeded per-node port permutation, preserving symmetry."""
    perms = []
    for v in range(n):
        p = list(range(len(adj[v])))
        rng.shuffle(p)
        perms.append(p)  # perms[v][old_index] = new_index
    out = [[None] * len(adj[v]) for v in range(n)]
    for v in range(n):
        for old_i, (u, q) in enumerate(adj[v]):
            out[v][perms[v][old_i]] = (u, perms[u][q - 1] + 1)
    return out


def generate(kind: str, n: int, seed: int) -> PortGraph:
    """Deterministically generate a valid PortGraph."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = Rng((seed << 4) ^ sum(map(ord, kind)))
    if kind == "ring":
        return _ring(n)
    if kind == "complete":
        return _complete(n)
    if kind == "random_tree":
        if n == 1:
            return PortGraph(1, ((),))
        adj = _with_ports(_random_tree(n, rng), n)
        return PortGraph(n, _freeze(adj))
    if kind == "random_connected":
        if n == 1:
            return PortGraph(1, ((),))
        base = _random_tree(n, rng)
        present = {frozenset((u, v)) for v in range(n) for u in base[v]}
        extra = rng.randrange(n) if n > 2 else 0
        for _ in range(extra):
            v = rng.randrange(n)
            u = rng.randrange(n)
            if u == v or frozenset((u, v)) in present:
                continue
            present.add(frozenset((u, v)))
            base[v].append(u)
            base[u].append(v)
        adj = _permute_ports(_with_ports(base, n), n, rng)
        return PortGraph(n, _freeze(adj))
    raise ValueError(f"unknown graph kind {kind!r}")


def save(g: PortGraph) -> str:
    """Plain-text form: line 1 is n; then per node: degree followed by
    (neighbor, remote_port) pairs."""
    lines = [str(g.node_count)]
    for v in range(g.node_count):
        row = [str(len(g.adjacency[v]))]
        for (u, q) in g.adjacency[v]:
            row.append(str(u))
            row.append(str(q))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


class GraphParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def load(text: str) -> PortGraph:
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise GraphParseError(1, "empty file")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise GraphParseError(1, "expected node count") from None
    adj = []
    for v in range(n):
        line_no = v + 2
        if v + 1 >= len(lines):
            raise GraphParseError(line_no, "truncated file")
        parts = lines[v + 1].split()
        if not parts:
            raise GraphParseError(line_no, "missing adjacency row")
        try:
            vals = [int(x) for x in parts]
        except ValueError:
            raise GraphParseError(line_no, "non-integer token") from None
        d = vals[0]
        if len(vals) != 1 + 2 * d:
            raise GraphParseError(line_no, f"expected {2 * d} values after degree")
        row = [(vals[1 + 2 * i], vals[2 + 2 * i]) for i in range(d)]
        adj.append(tuple(row))
    g = PortGraph(n, tuple(adj))
    problems = validate(g)
    if problems:
        raise ValueError("invalid graph: " + "; ".join(problems))
    return g

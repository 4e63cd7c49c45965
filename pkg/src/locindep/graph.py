"""Direct-influence graphs, reachability and the pairwise influence taxonomy."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .model import ProcessSpec, is_wcli

__all__ = [
    "DIRECT", "INDIRECT", "NONE", "CLASSES",
    "InfluenceGraph", "syntactic_graph", "classify_pair", "pair_taxonomy",
    "ancestors", "reachable", "taxonomy_matrix", "nine_way_table",
]

DIRECT = "direct"
INDIRECT = "indirect"
NONE = "none"
CLASSES = (DIRECT, INDIRECT, NONE)


@dataclass(frozen=True)
class InfluenceGraph:
    """Directed graph on components ``1..m``; edge (j, k) means j directly influences k.

    ``provenance`` maps each edge to ``("syntactic", None)`` or
    ``("statistical", p_value)``.  ``undecided`` lists pairs whose test
    failed; they are treated as non-edges by the queries.
    """

    m: int
    edges: frozenset[tuple[int, int]]
    names: tuple[str, ...] = ()
    provenance: dict[tuple[int, int], tuple[str, float | None]] = field(default_factory=dict, compare=False)
    undecided: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        for j, k in self.edges:
            if j == k:
                raise ValueError(f"self-loop on node {j}")
            if not (1 <= j <= self.m and 1 <= k <= self.m):
                raise ValueError(f"edge ({j}, {k}) outside 1..{self.m}")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"X{i}" for i in range(1, self.m + 1)))

    def children(self, j: int) -> list[int]:
        return sorted(k for a, k in self.edges if a == j)

    def parents(self, k: int) -> list[int]:
        return sorted(j for j, b in self.edges if b == k)

    def subgraph(self, nodes: Iterable[int]) -> "InfluenceGraph":
        keep = set(nodes)
        edges = frozenset(e for e in self.edges if e[0] in keep and e[1] in keep)
        prov = {e: p for e, p in self.provenance.items() if e in edges}
        return InfluenceGraph(self.m, edges, self.names, prov)

    def to_json(self) -> str:
        doc = {
            "m": self.m,
            "names": list(self.names),
            "edges": [list(e) for e in sorted(self.edges)],
        }
        if self.undecided:
            doc["undecided"] = [list(e) for e in sorted(self.undecided)]
        pvals = {f"{j},{k}": p for (j, k), (kind, p) in sorted(self.provenance.items())
                 if kind == "statistical"}
        if pvals:
            doc["p_values"] = pvals
        return json.dumps(doc, indent=2) + "\n"

    def to_dot(self) -> str:
        """Solid edges are syntactic, dashed edges are statistical (labelled with p)."""
        lines = ["digraph influence {"]
        for name in self.names:
            lines.append(f'  "{name}";')
        for j, k in sorted(self.edges):
            kind, p = self.provenance.get((j, k), ("syntactic", None))
            attrs = ""
            if kind == "statistical":
                attrs = f' [style=dashed, label="p={p:.3g}"]' if p is not None else " [style=dashed]"
            lines.append(f'  "{self.names[j - 1]}" -> "{self.names[k - 1]}"{attrs};')
        lines.append("}")
        return "\n".join(lines) + "\n"


def syntactic_graph(spec: ProcessSpec) -> InfluenceGraph:
    """Edge (j, k) exactly when k is not WCLI of j in the declared system."""
    edges = frozenset(
        (j, k) for k in range(1, spec.m + 1) for j in range(1, spec.m + 1)
        if j != k and not is_wcli(spec, j, k)
    )
    return InfluenceGraph(spec.m, edges, tuple(spec.names),
                          {e: ("syntactic", None) for e in edges})


def reachable(g: InfluenceGraph, j: int) -> set[int]:
    """Nodes reachable from ``j`` by a directed path of length >= 1 (BFS)."""
    adj: dict[int, list[int]] = {}
    for a, b in g.edges:
        adj.setdefault(a, []).append(b)
    seen: set[int] = set()
    queue = deque(adj.get(j, ()))
    while queue:
        n = queue.popleft()
        if n in seen:
            continue
        seen.add(n)
        queue.extend(adj.get(n, ()))
    return seen


def _check_pair(g: InfluenceGraph, j: int, k: int) -> None:
    if j == k:
        raise ValueError("pair classification needs j != k")
    if not (1 <= j <= g.m and 1 <= k <= g.m):
        raise ValueError(f"pair ({j}, {k}) outside 1..{g.m}")


def classify_pair(g: InfluenceGraph, j: int, k: int) -> str:
    _check_pair(g, j, k)
    if (j, k) in g.edges:
        return DIRECT
    if k in reachable(g, j):
        return INDIRECT
    return NONE


def pair_taxonomy(g: InfluenceGraph, j: int, k: int) -> tuple[str, str]:
    """(class of j -> k, class of k -> j): one of the nine cells."""
    return classify_pair(g, j, k), classify_pair(g, k, j)


def ancestors(g: InfluenceGraph, k: int) -> frozenset[int]:
    """All nodes with a directed path into ``k``, plus ``k`` itself."""
    radj: dict[int, list[int]] = {}
    for a, b in g.edges:
        radj.setdefault(b, []).append(a)
    seen = {k}
    queue = deque(radj.get(k, ()))
    while queue:
        n = queue.popleft()
        if n in seen:
            continue
        seen.add(n)
        queue.extend(radj.get(n, ()))
    return frozenset(seen)


def taxonomy_matrix(g: InfluenceGraph) -> str:
    """Text matrix: row j, column k holds the class of j -> k."""
    short = {DIRECT: "direct", INDIRECT: "indirect", NONE: "none"}
    width = max(8, *(len(n) for n in g.names))
    head = " " * width + " " + " ".join(n.rjust(width) for n in g.names)
    rows = [head]
    for j in range(1, g.m + 1):
        cells = []
        for k in range(1, g.m + 1):
            cells.append("-".rjust(width) if j == k else short[classify_pair(g, j, k)].rjust(width))
        rows.append(g.names[j - 1].rjust(width) + " " + " ".join(cells))
    return "\n".join(rows)


def nine_way_table(g: InfluenceGraph) -> dict[tuple[str, str], list[tuple[int, int]]]:
    """Every ordered pair j < k filed under its (j -> k, k -> j) cell."""
    table: dict[tuple[str, str], list[tuple[int, int]]] = {(a, b): [] for a in CLASSES for b in CLASSES}
    for j in range(1, g.m + 1):
        for k in range(j + 1, g.m + 1):
            table[pair_taxonomy(g, j, k)].append((j, k))
    return table

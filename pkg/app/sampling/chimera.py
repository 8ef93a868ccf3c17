"""
Chimera graph construction.

Node numbering is cell-major: node k of cell (r, c) in an m x n grid has id
8 * (r * n + c) + k. Within a cell, ids 0-3 form the vertically linked
partition and ids 4-7 the horizontally linked one; the two partitions are
fully connected to each other (K4,4).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from ..core.errors import TopologyError

CELL_SIZE = 8
SHORE = 4


@dataclass(frozen=True)
class ChimeraGraph:
    """
    Undirected Chimera graph (or a node-prefix restriction of one).

    ``edges`` is an (E, 2) int array with u < v in every row, sorted
    lexicographically, so that per-edge parameter vectors have a stable order.
    """
    rows: int
    cols: int
    nodes: Tuple[int, ...]
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}

    def cell_of(self, node: int) -> Tuple[int, int, int]:
        """(row, col, in-cell index) of a node id."""
        cell, k = divmod(node, CELL_SIZE)
        r, c = divmod(cell, self.cols)
        return r, c, k

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency over the node list."""
        index = {node: i for i, node in enumerate(self.nodes)}
        adj = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        for u, v in self.edges:
            adj[index[int(u)], index[int(v)]] = 1
            adj[index[int(v)], index[int(u)]] = 1
        return adj

    def to_spec(self) -> dict:
        """Compact description used in checkpoints."""
        return {"rows": self.rows, "cols": self.cols, "hidden": self.node_count}


def build(m: int, n: int) -> ChimeraGraph:
    """
    Build the full m x n Chimera graph.

    Edge count is 16mn (intra-cell) + 4m(n-1) (horizontal) + 4(m-1)n (vertical).
    """
    if m < 1 or n < 1:
        raise TopologyError(f"Chimera dimensions must be positive, got {m}x{n}")

    def node(r: int, c: int, k: int) -> int:
        return CELL_SIZE * (r * n + c) + k

    edges = []
    for r in range(m):
        for c in range(n):
            for a in range(SHORE):
                for b in range(SHORE, CELL_SIZE):
                    edges.append((node(r, c, a), node(r, c, b)))
            if r + 1 < m:
                for k in range(SHORE):
                    edges.append((node(r, c, k), node(r + 1, c, k)))
            if c + 1 < n:
                for k in range(SHORE, CELL_SIZE):
                    edges.append((node(r, c, k), node(r, c + 1, k)))
    edges.sort()
    return ChimeraGraph(m, n, tuple(range(CELL_SIZE * m * n)), np.array(edges, dtype=np.int64))


def hidden_subgraph(g: ChimeraGraph, h: int) -> ChimeraGraph:
    """Induced subgraph on node ids 0..h-1 (the first ceil(h/8) cells)."""
    total = CELL_SIZE * g.rows * g.cols
    if not 1 <= h <= total or h > g.node_count:
        raise TopologyError(f"hidden size {h} outside [1, {min(total, g.node_count)}]")
    if h == g.node_count:
        return g
    keep = (g.edges[:, 0] < h) & (g.edges[:, 1] < h)
    return ChimeraGraph(g.rows, g.cols, tuple(range(h)), g.edges[keep])


def graph_for_hidden(h: int, rows: int | None = None, cols: int | None = None) -> ChimeraGraph:
    """Smallest square Chimera grid (unless dimensions are given) holding ``h`` nodes."""
    if rows is None or cols is None:
        side = 1
        while CELL_SIZE * side * side < h:
            side += 1
        rows = cols = side
    return hidden_subgraph(build(rows, cols), h)


def to_edge_list(g: ChimeraGraph) -> str:
    """One "u v" pair per line."""
    return "".join(f"{int(u)} {int(v)}\n" for u, v in g.edges)


def write_edge_list(g: ChimeraGraph, path: str | Path):
    Path(path).write_text(to_edge_list(g))

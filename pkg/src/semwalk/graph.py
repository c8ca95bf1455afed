"""The semantic-visual graph over labelled training videos.

Nodes are training videos.  An undirected edge links two nodes when
their annotations are semantically related under the active mode, and
additional "visual ambiguity" edges link semantically unrelated nodes
that look alike:

* the m globally closest unrelated pairs, ranked over all such pairs,
* plus, for every node, its single closest unrelated node.

Each undirected edge carries the visual distance between its endpoints
(epsilon-floored so duplicates stay normalizable) and is stored as two
directed edges of equal weight.  Row-normalizing reciprocal weights
yields the transition matrix: short edges get high traversal
probability, and rows sum to one.  The matrix is asymmetric in general
because the two endpoints normalize over different neighborhoods.

Built graphs and their transition matrices are immutable; share them
freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_array

from . import semantics
from .dataset import atomic_write_text
from .encoding import DISTANCE_EPSILON, EncodedVector

SEMANTIC = "semantic"
VISUAL = "visual"


@dataclass(frozen=True, eq=False)
class SvgNode:
    segment_id: str
    annotation: str
    vector: EncodedVector | None


@dataclass(frozen=True, eq=False)
class SvgGraph:
    """Directed graph with symmetric edges and per-edge weight + tag.

    `edges` maps (i, j) to (weight, tag) and contains (j, i) with the
    same entry for every (i, j); weights are strictly positive and tags
    are "semantic" or "visual".
    """

    nodes: list[SvgNode]
    edges: dict[tuple[int, int], tuple[float, str]]
    mode: str
    m: int

    def __len__(self) -> int:
        return len(self.nodes)

    def out_edges(self, i: int) -> list[tuple[int, float]]:
        """(target, weight) pairs leaving node i, in target order."""
        return sorted(
            (j, w) for (src, j), (w, _tag) in self.edges.items() if src == i
        )

    def undirected_pairs(self) -> list[tuple[int, int, float, str]]:
        """Each edge once as (i, j, weight, tag) with i < j, sorted."""
        return sorted(
            (i, j, w, tag) for (i, j), (w, tag) in self.edges.items() if i < j
        )

    def vector_matrix(self) -> np.ndarray:
        """Node vectors stacked row-wise; requires vectors to be attached."""
        if any(node.vector is None for node in self.nodes):
            raise ValueError("graph nodes carry no vectors")
        return np.vstack([node.vector.values for node in self.nodes])


def distance_matrix(vectors: Sequence[EncodedVector]) -> np.ndarray:
    """Symmetric pairwise Euclidean distances with a zero diagonal."""
    if len(vectors) < 2:
        raise ValueError("need at least 2 vectors")
    kinds = {v.kind for v in vectors}
    if len(kinds) != 1:
        raise ValueError(f"mixed encoding kinds: {sorted(kinds)}")
    lengths = {v.values.shape[0] for v in vectors}
    if len(lengths) != 1:
        raise ValueError(f"mixed encoding lengths: {sorted(lengths)}")
    stacked = np.vstack([v.values for v in vectors])
    sq = (
        np.sum(stacked**2, axis=1)[:, None]
        - 2.0 * stacked @ stacked.T
        + np.sum(stacked**2, axis=1)[None, :]
    )
    dist = np.sqrt(np.maximum(sq, 0.0))
    np.fill_diagonal(dist, 0.0)
    return (dist + dist.T) / 2.0


def rank_global(
    distances: np.ndarray, related_pair: np.ndarray
) -> list[tuple[int, int]]:
    """All semantically unrelated pairs, closest first.

    Pairs are (i, j) with i < j, sorted by ascending distance with ties
    broken by (i, j).  Related pairs never appear; if every pair is
    related the ranking is empty.
    """
    n = distances.shape[0]
    pairs = [
        (float(distances[i, j]), i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if not related_pair[i, j]
    ]
    pairs.sort()
    return [(i, j) for _, i, j in pairs]


def rank_local(
    distances: np.ndarray, related_pair: np.ndarray, i: int
) -> int | None:
    """Index of node i's closest semantically unrelated node, if any.

    Ties go to the lowest index; returns None when every other node is
    related to i (no local visual edge is needed then).
    """
    best: tuple[float, int] | None = None
    for j in range(distances.shape[0]):
        if j == i or related_pair[i, j]:
            continue
        candidate = (float(distances[i, j]), j)
        if best is None or candidate < best:
            best = candidate
    return None if best is None else best[1]


def _related_matrix(
    annotations: Sequence[str], taxonomy: semantics.Taxonomy | None, mode: str
) -> np.ndarray:
    """Pairwise relation table, computed once per distinct label pair."""
    unique = sorted(set(annotations))
    rel: dict[tuple[str, str], bool] = {}
    for a in unique:
        for b in unique:
            if a <= b:
                rel[(a, b)] = semantics.related(taxonomy, mode, a, b)
    n = len(annotations)
    table = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            a, b = annotations[i], annotations[j]
            table[i, j] = rel[(a, b) if a <= b else (b, a)]
    return table


def build_svg(
    nodes: Sequence[SvgNode],
    taxonomy: semantics.Taxonomy | None,
    mode: str,
    m: int,
) -> SvgGraph:
    """Construct the semantic-visual graph over training nodes.

    The undirected edge set is the union of all related pairs, the top
    m unrelated pairs by global distance rank, and each node's closest
    unrelated node.  Edge weights are the pairwise distances plus a
    floor epsilon, and every undirected edge is stored as two directed
    edges.
    """
    if len(nodes) < 2:
        raise ValueError(f"graph needs at least 2 training videos, got {len(nodes)}")
    if m < 0:
        raise ValueError(f"visual edge budget m must be >= 0, got {m}")
    annotations = [node.annotation for node in nodes]
    vectors = [node.vector for node in nodes]
    if any(v is None for v in vectors):
        raise ValueError("all nodes must carry encoded vectors")
    distances = distance_matrix(vectors)
    related_pair = _related_matrix(annotations, taxonomy, mode)

    undirected: dict[tuple[int, int], str] = {}
    n = len(nodes)
    for i in range(n):
        for j in range(i + 1, n):
            if related_pair[i, j]:
                undirected[(i, j)] = SEMANTIC
    for i, j in rank_global(distances, related_pair)[:m]:
        undirected[(i, j)] = VISUAL
    for i in range(n):
        j = rank_local(distances, related_pair, i)
        if j is not None:
            undirected[(min(i, j), max(i, j))] = VISUAL

    edges: dict[tuple[int, int], tuple[float, str]] = {}
    for (i, j), tag in undirected.items():
        weight = float(distances[i, j]) + DISTANCE_EPSILON
        edges[(i, j)] = (weight, tag)
        edges[(j, i)] = (weight, tag)
    return SvgGraph(nodes=list(nodes), edges=edges, mode=mode, m=m)


def normalize_transitions(graph: SvgGraph) -> csr_array:
    """Row-stochastic transition matrix from reciprocal edge weights.

    A[i, j] = (1 / w_ij) / sum_k (1 / w_ik): the shortest edge out of a
    node gets the largest probability, and each row sums to one.
    """
    n = len(graph.nodes)
    rows, cols, vals = [], [], []
    recip_sums = np.zeros(n)
    # Sorted accumulation keeps the float results identical whether the
    # graph was just built or reloaded from a dump.
    ordered = sorted(graph.edges.items())
    for (i, _j), (w, _tag) in ordered:
        if w <= 0.0:
            raise ValueError(f"non-positive edge weight {w} out of node {i}")
        recip_sums[i] += 1.0 / w
    if np.any(recip_sums == 0.0):
        missing = int(np.argmax(recip_sums == 0.0))
        raise ValueError(f"node {missing} has no outgoing edges")
    for (i, j), (w, _tag) in ordered:
        rows.append(i)
        cols.append(j)
        vals.append((1.0 / w) / recip_sums[i])
    return csr_array((vals, (rows, cols)), shape=(n, n))


def save_graph(graph: SvgGraph, path: str | Path) -> None:
    """Dump the graph as text: a node section then an edge section.

    Nodes are written as `index segment_id annotation` in index order;
    undirected edges as `i j weight tag` sorted by (i, j).  The dump is
    deterministic, diffable, and sufficient to rebuild the structure
    (vectors are not stored; re-encode to re-attach them).
    """
    lines = [f"nodes {len(graph.nodes)} mode {graph.mode} m {graph.m}"]
    for idx, node in enumerate(graph.nodes):
        lines.append(f"{idx} {node.segment_id} {node.annotation}")
    pairs = graph.undirected_pairs()
    lines.append(f"edges {len(pairs)}")
    for i, j, w, tag in pairs:
        lines.append(f"{i} {j} {w!r} {tag}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_graph(path: str | Path) -> SvgGraph:
    """Rebuild graph structure from a save_graph dump (vectors are None)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "nodes" or header[2] != "mode" or header[4] != "m":
        raise ValueError(f"{path}: bad graph header {lines[0]!r}")
    count, mode, m = int(header[1]), header[3], int(header[5])
    nodes: list[SvgNode] = []
    for line in lines[1 : 1 + count]:
        # Annotation comes last and may contain spaces (e.g. "wash up.v.3").
        idx, segment_id, annotation = line.split(" ", 2)
        if int(idx) != len(nodes):
            raise ValueError(f"{path}: node indexes out of order at {line!r}")
        nodes.append(SvgNode(segment_id=segment_id, annotation=annotation, vector=None))
    edge_header = lines[1 + count].split()
    if len(edge_header) != 2 or edge_header[0] != "edges":
        raise ValueError(f"{path}: bad edge header {lines[1 + count]!r}")
    edges: dict[tuple[int, int], tuple[float, str]] = {}
    for line in lines[2 + count : 2 + count + int(edge_header[1])]:
        i_s, j_s, w_s, tag = line.split()
        i, j, w = int(i_s), int(j_s), float(w_s)
        edges[(i, j)] = (w, tag)
        edges[(j, i)] = (w, tag)
    return SvgGraph(nodes=nodes, edges=edges, mode=mode, m=m)


def with_vectors(graph: SvgGraph, vectors: dict[str, EncodedVector]) -> SvgGraph:
    """Attach encoded vectors to a structure-only graph by segment id."""
    nodes = []
    for node in graph.nodes:
        if node.segment_id not in vectors:
            raise ValueError(f"no encoded vector for segment {node.segment_id!r}")
        nodes.append(
            SvgNode(
                segment_id=node.segment_id,
                annotation=node.annotation,
                vector=vectors[node.segment_id],
            )
        )
    return SvgGraph(nodes=nodes, edges=graph.edges, mode=graph.mode, m=graph.m)

"""Embedding a query into the graph and walking to a label distribution.

A query video is never inserted into the transition matrix.  Instead,
its distances to all training nodes seed a start vector q: the z
visually closest nodes receive reciprocal-distance-normalized mass and
everything else zero.  Multiplying q by the transition matrix t times
gives the probability of standing on each training node after t steps;
summing node mass per semantic class gives the label distribution, and
the argmax is the predicted class.

With t = 0 the pipeline degenerates to reciprocal-distance-weighted
z-nearest-neighbor voting over classes.

Everything here is a pure function of immutable inputs; queries may be
classified concurrently without coordination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_array

from . import semantics
from .encoding import DISTANCE_EPSILON, EncodedVector, distance
from .graph import SvgGraph


@dataclass(frozen=True)
class WalkConfig:
    """Walk knobs: z start neighbors, t steps."""

    z: int = 4
    t: int = 8

    def __post_init__(self) -> None:
        if self.z < 1:
            raise ValueError(f"z must be >= 1, got {self.z}")
        if self.t < 0:
            raise ValueError(f"t must be >= 0, got {self.t}")


@dataclass(frozen=True, eq=False)
class QueryEmbedding:
    """Start vector over nodes: positive exactly on the chosen neighbors."""

    q: np.ndarray
    neighbors: tuple[int, ...]


def embed_query(
    graph: SvgGraph, distances_to_nodes: np.ndarray, z: int
) -> QueryEmbedding:
    """Build the start vector from query-to-node distances.

    The z smallest distances pick the neighbor set (ties to the lowest
    node index, z clamped to the node count); their mass is the same
    reciprocal normalization the transition matrix uses, over
    epsilon-floored distances.
    """
    distances_to_nodes = np.asarray(distances_to_nodes, dtype=np.float64)
    n = distances_to_nodes.shape[0]
    if n == 0:
        raise ValueError("cannot embed a query into an empty graph")
    if len(graph.nodes) != n:
        raise ValueError(
            f"distance vector length {n} != node count {len(graph.nodes)}"
        )
    if not np.all(np.isfinite(distances_to_nodes)):
        raise ValueError("query distances must be finite")
    z = min(z, n)
    order = np.argsort(distances_to_nodes, kind="stable")
    neighbors = tuple(int(i) for i in order[:z])
    recip = 1.0 / (distances_to_nodes[list(neighbors)] + DISTANCE_EPSILON)
    q = np.zeros(n)
    q[list(neighbors)] = recip / recip.sum()
    return QueryEmbedding(q=q, neighbors=neighbors)


def markov_walk(A: csr_array, q: np.ndarray, t: int) -> np.ndarray:
    """Distribution over nodes after t steps: q multiplied by A t times.

    t = 0 returns q itself; the output sums to one whenever q does.
    """
    q = np.asarray(q, dtype=np.float64)
    if t < 0:
        raise ValueError(f"step count must be >= 0, got {t}")
    if A.shape[0] != A.shape[1] or A.shape[0] != q.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, q has {q.shape[0]}")
    out = q.copy()
    for _ in range(t):
        out = A.T @ out
    return out


def class_distribution(
    node_dist: np.ndarray,
    graph: SvgGraph,
    classes: list[tuple[str, ...]],
) -> dict[str, float]:
    """Accumulate node mass into semantic classes.

    Every class in the partition appears in the output (possibly with
    zero mass); probabilities sum to one when the node distribution
    does.
    """
    node_dist = np.asarray(node_dist, dtype=np.float64)
    mapping = semantics.class_map(classes)
    out = {component[0]: 0.0 for component in classes}
    for idx, node in enumerate(graph.nodes):
        name = mapping.get(node.annotation)
        if name is None:
            raise ValueError(
                f"node annotation {node.annotation!r} missing from class partition"
            )
        out[name] += float(node_dist[idx])
    return out


def argmax_class(distribution: dict[str, float]) -> str:
    """Highest-probability class; exact ties go to the smallest name."""
    if not distribution:
        raise ValueError("empty class distribution")
    best = max(distribution.values())
    return min(name for name, p in distribution.items() if p == best)


def query_distances(graph: SvgGraph, query_vector: EncodedVector) -> np.ndarray:
    """Distances from a query encoding to every node vector."""
    dists = np.empty(len(graph.nodes))
    for idx, node in enumerate(graph.nodes):
        if node.vector is None:
            raise ValueError("graph nodes carry no vectors")
        dists[idx] = distance(query_vector, node.vector)
    return dists


def classify(
    graph: SvgGraph,
    A: csr_array,
    taxonomy: semantics.Taxonomy | None,
    mode: str,
    query_vector: EncodedVector,
    config: WalkConfig,
    classes: list[tuple[str, ...]] | None = None,
) -> tuple[str, dict[str, float]]:
    """Embed, walk, aggregate, argmax.

    `classes` defaults to the partition of the graph's own annotations;
    an evaluation harness may pass a wider partition (for example one
    covering annotations that only occur in test data) as long as it
    covers every node annotation.
    """
    if classes is None:
        classes = semantics.semantic_classes(
            taxonomy, {node.annotation for node in graph.nodes}, mode
        )
    dists = query_distances(graph, query_vector)
    embedding = embed_query(graph, dists, config.z)
    node_dist = markov_walk(A, embedding.q, config.t)
    dist = class_distribution(node_dist, graph, classes)
    return argmax_class(dist), dist

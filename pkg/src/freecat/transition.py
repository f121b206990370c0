"""Arrow-graph transform and the biased-walk transition matrix.

The declared multigraph (objects as vertices, arrows as edges) is rewritten
so every arrow becomes its own vertex with one in-edge from its domain and
one out-edge to its codomain.  Parallel arrows therefore stay
distinguishable.  On that graph the transition matrix is the row softmax of
``(exp(A) + A @ W) / beta``: the communicability term ``exp(A)`` biases the
walk toward arrows lying on many multi-step paths, while the learned
nonnegative weights ``W`` encode preferences among arrows.

``exp(A)`` is computed once per graph and cached read-only; it is never
differentiated.  Letting gradients flow through it makes tiny adjacency
perturbations dominate the walk and the approximate posterior degenerates
to a single program, so it is deliberately treated as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics

LOGIT_CLAMP = 80.0


@dataclass(frozen=True, eq=False)
class ArrowGraph:
    """Vertices = objects then generators, with 0/1 adjacency."""

    vertices: tuple  # vertex names, deterministic order
    n_objects: int
    index: dict  # name -> position
    adjacency: np.ndarray
    communicability: np.ndarray  # cached exp(adjacency), read-only
    object_of: dict  # object name -> TypeObject
    generator_of: dict  # generator name -> Generator

    def out_arrows(self, obj_name):
        """Generator vertices reachable in one step from an object vertex."""
        row = self.adjacency[self.index[obj_name]]
        return [self.vertices[j] for j in np.nonzero(row)[0]]

    def is_object_vertex(self, name):
        return self.index[name] < self.n_objects


def arrow_graph(spec):
    """Build the arrow graph of a validated DSL declaration."""
    names = [o.name for o in spec.objects] + [g.name for g in spec.generators]
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    adj = np.zeros((n, n))
    for g in spec.generators:
        adj[index[g.dom.name], index[g.name]] = 1.0
        adj[index[g.name], index[g.cod.name]] = 1.0
    comm = numerics.mat_exp(adj)
    adj.setflags(write=False)
    comm.setflags(write=False)
    return ArrowGraph(
        vertices=tuple(names),
        n_objects=len(spec.objects),
        index=index,
        adjacency=adj,
        communicability=comm,
        object_of={o.name: o for o in spec.objects},
        generator_of={g.name: g for g in spec.generators},
    )


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """A materialized biased walk: the graph plus row-stochastic ``probs``."""

    graph: ArrowGraph
    edge_weights: np.ndarray
    beta: float
    probs: np.ndarray


def transition_logits(graph, edge_weights, beta):
    """``(exp(A) + A @ W) / beta`` with overflow clamping."""
    logits = (graph.communicability + graph.adjacency @ edge_weights) / beta
    return np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)


def transition_matrix(graph, edge_weights, beta):
    """Materialize the walk's transition probabilities for ``(W, beta)``."""
    w = np.asarray(edge_weights, dtype=np.float64)
    if w.shape != graph.adjacency.shape:
        raise ValueError(
            f"weight shape {w.shape} != adjacency shape {graph.adjacency.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("edge weights must be finite")
    if np.any(w < 0):
        raise ValueError("edge weights must be nonnegative")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    probs = numerics.softmax_rows(transition_logits(graph, w, beta), 1.0)
    w = w.copy()
    w.setflags(write=False)
    probs.setflags(write=False)
    return TransitionModel(graph=graph, edge_weights=w, beta=float(beta),
                           probs=probs)


def intuitive_distance(tm, dst):
    """Soft distance-to-destination: ``-log P[., dst]`` as a vector.

    ``dst`` must name an object vertex.  Entries whose transition
    probability underflows to zero come back as +inf.
    """
    name = getattr(dst, "name", dst)
    if name not in tm.graph.index:
        raise KeyError(f"unknown vertex {name!r}")
    if not tm.graph.is_object_vertex(name):
        raise ValueError(f"{name} is not an object vertex")
    col = tm.probs[:, tm.graph.index[name]]
    with np.errstate(divide="ignore"):
        return np.where(col > 0.0, -np.log(col), np.inf)

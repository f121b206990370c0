"""Biased random-walk sampling of well-typed program terms.

A walk starts at a source object, repeatedly scores the outgoing arrows of
its current location by their transition probability toward the
destination column, renormalizes over those candidates, draws one, and
composes it onto the term so far.  Arrival at the destination ends the
walk, so every sampled term type-checks by construction; there is no
rejection or restart anywhere in this module.

Minimum-length enforcement removes destination-entering arrows from the
candidate set while the arrow count is still below the minimum.  A walk
that would strand (a reachable vertex from which the destination cannot be
reached) is rejected up front by a reachability check, and a hard step
bound turns any residual nontermination into an error instead of a retry.

Macro arrows participate in the walk as ordinary vertices; when drawn they
expand recursively (pair macros into two unit-sourced sub-walks, arrow
macros into one inner walk) with the minimum length lifted inside the
expansion and a recursion-depth bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .category import (UNIT, Generator, NestedEntry, compose, expansion,
                       generator_chain, gen_morphism, identity, product)


class SamplerError(Exception):
    """Walk could not proceed under the given configuration."""


class MacroDepthError(SamplerError):
    """Macro expansion exceeded the recursion-depth bound."""


class ReplayError(SamplerError):
    """Term is not expressible as a walk under the configuration."""


class UnreachableError(SamplerError):
    """Some vertex reachable from the source cannot reach the destination."""


class CyclicGraphError(SamplerError):
    """Enumeration requires an acyclic arrow graph."""


class PathExplosionError(SamplerError):
    """Enumeration aborted: too many distinct walks."""


@dataclass(frozen=True)
class WalkConfig:
    """Walk settings: minimum arrows, step bound, macro recursion bound."""

    min_generators: int = 2
    max_steps: int = 64
    max_macro_depth: int = 3

    def __post_init__(self):
        if self.min_generators < 0:
            raise ValueError("min_generators must be nonnegative")
        if self.max_steps < max(1, self.min_generators):
            raise ValueError("max_steps must be >= min_generators")
        if self.max_macro_depth < 1:
            raise ValueError("max_macro_depth must be >= 1")


@dataclass
class ChoiceRecord:
    location: str
    candidates: tuple
    chosen: str
    logprob: float
    dst: str = ""  # destination object the scores were conditioned on


@dataclass
class LatentRecord:
    generator: str
    value: np.ndarray
    log_density: float


@dataclass
class Trace:
    """Replayable record of one program draw: arrow choices plus latents."""

    choices: list = field(default_factory=list)
    latents: list = field(default_factory=list)

    @property
    def total_path_logprob(self):
        return sum(c.logprob for c in self.choices)


def choice_logprob(scores, k):
    """Log-probability of candidate ``k`` after renormalizing ``scores``.

    Sampling and replay both go through this helper so their accumulated
    log-probabilities agree bit for bit.
    """
    p = scores / scores.sum()
    return float(np.log(p[k]))


def _draw(scores, rng):
    p = scores / scores.sum()
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, len(p) - 1)


@lru_cache(maxsize=4096)
def _object_reach(graph):
    """Transitive object-level reachability as {name: frozenset(names)}."""
    succ = {o: set() for o in graph.object_of}
    for g in graph.generator_of.values():
        succ[g.dom.name].add(g.cod.name)
    out = {}
    for start in succ:
        seen = {start}
        frontier = [start]
        while frontier:
            cur = frontier.pop()
            for nxt in succ[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        out[start] = frozenset(seen)
    return out


def check_reachable(graph, src_name, dst_name):
    """The destination must be reachable from the source at all."""
    reach = _object_reach(graph)
    if dst_name not in reach[src_name]:
        raise UnreachableError(f"{dst_name} is unreachable from {src_name}")


def _candidates(graph, loc, dst, count, cfg):
    """Admissible arrows at ``loc``: those whose codomain can still reach
    the destination (walking into a dead end would strand, and there is no
    rejection), minus destination-entering arrows while the walk is still
    below its minimum length."""
    reach = _object_reach(graph)
    cands = [a for a in graph.out_arrows(loc.name)
             if dst.name in reach[graph.generator_of[a].cod.name]]
    if count + 1 < cfg.min_generators:
        cands = [a for a in cands if graph.generator_of[a].cod != dst]
    return cands


def _scores(tm, cands, dst_idx):
    idx = [tm.graph.index[a] for a in cands]
    return tm.probs[idx, dst_idx]


def path_between(tm, src, dst, cfg, rng):
    """Sample a well-typed ``src -> dst`` term and its trace."""
    trace = Trace()
    m = _walk(tm, src, dst, cfg, rng, depth=0, trace=trace)
    return m, trace


def _walk(tm, src, dst, cfg, rng, depth, trace):
    graph = tm.graph
    for obj in (src, dst):
        if obj.name not in graph.object_of:
            raise SamplerError(f"{obj.name} is not an object vertex")
    check_reachable(graph, src.name, dst.name)
    dst_idx = graph.index[dst.name]
    loc = src
    f = identity(src)
    count = 0
    steps = 0
    while loc != dst:
        steps += 1
        if steps > cfg.max_steps:
            raise SamplerError(
                f"walk from {src.name} to {dst.name} exceeded {cfg.max_steps} steps")
        cands = _candidates(graph, loc, dst, count, cfg)
        if not cands:
            raise SamplerError(
                f"no admissible arrows at {loc.name} with "
                f"{cfg.min_generators - count - 1} more arrows required before "
                f"{dst.name}")
        scores = _scores(tm, cands, dst_idx)
        k = _draw(scores, rng)
        trace.choices.append(ChoiceRecord(
            location=loc.name, candidates=tuple(cands), chosen=cands[k],
            logprob=choice_logprob(scores, k), dst=dst.name))
        g = graph.generator_of[cands[k]]
        if g.is_macro:
            step = _expand(tm, g, cfg, rng, depth, trace)
        else:
            step = gen_morphism(g)
        f = compose(f, step)
        count += 1
        loc = g.cod
    if count < cfg.min_generators:
        raise SamplerError(
            f"walk from {src.name} to {dst.name} has {count} arrows, "
            f"below the minimum {cfg.min_generators}")
    return f


def _expand(tm, macro, cfg, rng, depth, trace):
    if depth >= cfg.max_macro_depth:
        raise MacroDepthError(
            f"macro {macro.name} at depth {depth} exceeds bound {cfg.max_macro_depth}")
    sub_cfg = replace(cfg, min_generators=0)
    target = macro.cod
    if target.kind == "product":
        left = _walk(tm, UNIT, target.factors[0], sub_cfg, rng, depth + 1, trace)
        right = _walk(tm, UNIT, target.factors[1], sub_cfg, rng, depth + 1, trace)
        body = product(left, right)
    else:
        body = _walk(tm, target.arg, target.out, sub_cfg, rng, depth + 1, trace)
    return expansion(macro, body)


def expand_macro(tm, macro, cfg, rng):
    """Expand a macro arrow into a term, returning it with its own trace."""
    if not macro.is_macro:
        raise SamplerError(f"{macro.name} is not a macro arrow")
    trace = Trace()
    m = _expand(tm, macro, cfg, rng, depth=0, trace=trace)
    return m, trace


# ── replay scoring ───────────────────────────────────────────────────────────

def path_logprob(tm, m, src, dst, cfg):
    """Log-probability of drawing ``m`` from ``path_between(src, dst)``.

    Replays the term's arrow chain through the same candidate filtering and
    renormalization as sampling, so a freshly sampled term scores exactly
    its trace's accumulated log-probability.
    """
    if m.dom != src or m.cod != dst:
        raise ReplayError(
            f"term is {m.dom.name}->{m.cod.name}, expected {src.name}->{dst.name}")
    parts = []
    _replay(tm, generator_chain(m), src, dst, cfg, 0, parts)
    return sum(parts)


def _replay(tm, entries, src, dst, cfg, depth, parts):
    graph = tm.graph
    dst_idx = graph.index[dst.name]
    loc = src
    count = 0
    for entry in entries:
        if loc == dst:
            raise ReplayError(f"walk would already have stopped at {dst.name}")
        if isinstance(entry, NestedEntry):
            if entry.macro is None:
                raise ReplayError("bare pairing is not a walk step")
            g = entry.macro
        else:
            g = entry
        cands = _candidates(graph, loc, dst, count, cfg)
        if g.name not in cands:
            raise ReplayError(
                f"arrow {g.name} is not admissible at {loc.name}")
        scores = _scores(tm, cands, dst_idx)
        parts.append(choice_logprob(scores, cands.index(g.name)))
        if isinstance(entry, NestedEntry):
            if depth >= cfg.max_macro_depth:
                raise ReplayError(
                    f"macro {g.name} exceeds depth bound {cfg.max_macro_depth}")
            sub_cfg = replace(cfg, min_generators=0)
            target = g.cod
            if target.kind == "product":
                if len(entry.branches) != 2:
                    raise ReplayError(f"macro {g.name} needs two branches")
                _replay(tm, list(entry.branches[0]), UNIT, target.factors[0],
                        sub_cfg, depth + 1, parts)
                _replay(tm, list(entry.branches[1]), UNIT, target.factors[1],
                        sub_cfg, depth + 1, parts)
            else:
                _replay(tm, list(entry.branches[0]), target.arg, target.out,
                        sub_cfg, depth + 1, parts)
        loc = g.cod
        count += 1
    if loc != dst:
        raise ReplayError(f"chain ends at {loc.name}, not {dst.name}")
    if count < cfg.min_generators:
        raise ReplayError(
            f"chain has {count} arrows, below the minimum {cfg.min_generators}")


# ── exhaustive enumeration (test oracle) ─────────────────────────────────────

def _check_acyclic(adj):
    n = adj.shape[0]
    indeg = (adj > 0).sum(axis=0)
    queue = [i for i in range(n) if indeg[i] == 0]
    removed = 0
    while queue:
        i = queue.pop()
        removed += 1
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
    if removed != n:
        raise CyclicGraphError("arrow graph contains a cycle")


def enumerate_paths(tm, src, dst, cfg, cap=100_000):
    """All walks from ``src`` to ``dst`` with their exact probabilities.

    Feasible only on acyclic graphs with modest path counts; used as the
    distribution oracle for ``path_between``.
    """
    _check_acyclic(tm.graph.adjacency)
    budget = [cap]
    out = _enum(tm, src, dst, cfg, count=0, depth=0, steps=0, budget=budget)
    return out


def _enum(tm, loc, dst, cfg, count, depth, steps, budget):
    if loc == dst:
        if count < cfg.min_generators:
            return []
        return [(identity(loc), 1.0)]
    if steps >= cfg.max_steps:
        return []
    graph = tm.graph
    dst_idx = graph.index[dst.name]
    cands = _candidates(graph, loc, dst, count, cfg)
    if not cands:
        return []
    scores = _scores(tm, cands, dst_idx)
    total = scores.sum()
    out = []
    for k, name in enumerate(cands):
        p_choice = float(scores[k] / total)
        g = graph.generator_of[name]
        if g.is_macro:
            if depth >= cfg.max_macro_depth:
                continue
            steps_opts = _enum_macro(tm, g, cfg, depth, budget)
        else:
            steps_opts = [(gen_morphism(g), 1.0)]
        tails = _enum(tm, g.cod, dst, cfg, count + 1, depth, steps + 1, budget)
        for sm, sp in steps_opts:
            for tail, tp in tails:
                budget[0] -= 1
                if budget[0] < 0:
                    raise PathExplosionError("too many walks to enumerate")
                out.append((compose(sm, tail), p_choice * sp * tp))
    return out


def _enum_macro(tm, macro, cfg, depth, budget):
    sub_cfg = replace(cfg, min_generators=0)
    target = macro.cod
    if target.kind == "product":
        lefts = _enum(tm, UNIT, target.factors[0], sub_cfg, 0, depth + 1, 0, budget)
        rights = _enum(tm, UNIT, target.factors[1], sub_cfg, 0, depth + 1, 0, budget)
        return [(expansion(macro, product(lm, rm)), lp * rp)
                for lm, lp in lefts for rm, rp in rights]
    inners = _enum(tm, target.arg, target.out, sub_cfg, 0, depth + 1, 0, budget)
    return [(expansion(macro, im), ip) for im, ip in inners]

"""Executing sampled terms as generative programs.

Three primitive kinds cover the repertoire: unit-sourced Gaussian priors,
one-hidden-layer affine maps with Gaussian output noise, and affine maps
squashed into per-coordinate continuous-Bernoulli rates (the likelihood
head for data on [0, 1]).  Scales are parameterized through softplus so
they stay strictly positive; activations are tanh or identity per arrow.

Every arrow also owns an independently parameterized reverse-direction
conditional (its stochastic inverse) of affine-Gaussian shape, used by
inference to propose latents from observed data.  Forward and reverse
parameters share nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json

import numpy as np

from . import numerics, tape
from .category import (UNIT, Compose, Gen, Generator, Identity,
                       MacroExpansion, Morphism, Product, Split,
                       dagger_generator, gen_morphism)
from .numerics import DistParams, cbernoulli_params, gaussian_params
from .sampler import LatentRecord, Trace, path_logprob

HYPER_KEY = "~hyper"

CB_RATE_EPS = 1e-6
OBS_CLAMP = 1e-6


class ExecutionError(Exception):
    """Term cannot be run as a generative program."""


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    return np.log(np.expm1(y))


# ── parameter blocks ─────────────────────────────────────────────────────────

def init_generator_params(gen, rng):
    """Fresh forward parameter blocks for one arrow."""
    prim = gen.primitive
    if prim.kind == "macro":
        return {}
    n = gen.cod.flat_dim
    if prim.kind == "gaussian-prior":
        return {
            "mean": np.zeros(n),
            "raw_scale": np.full(n, inv_softplus(prim.init_scale)),
        }
    m = gen.dom.flat_dim
    h = prim.hidden
    blocks = {
        "w1": rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, h)),
        "b1": np.zeros(h),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, n)),
        "b2": np.zeros(n),
    }
    if prim.kind == "affine-gaussian":
        blocks["raw_scale"] = np.full(n, inv_softplus(prim.init_scale))
    return blocks


def init_dagger_params(gen, rng):
    """Fresh reverse-direction blocks: an affine-Gaussian cod -> dom."""
    if gen.primitive.kind == "macro":
        return {}
    if gen.dom.kind in ("unit", "exponential"):
        return {}
    d_in = gen.cod.flat_dim
    d_out = gen.dom.flat_dim
    h = gen.primitive.hidden
    return {
        "w1": rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, h)),
        "b1": np.zeros(h),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, d_out)),
        "b2": np.zeros(d_out),
        "raw_scale": np.full(d_out, inv_softplus(1.0)),
    }


@dataclass
class ParamStore:
    """Named forward (theta) and inference (phi) parameter vectors."""

    theta: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)

    def trainable_keys(self, spec):
        """(side, generator, block) triples the optimizer may update."""
        keys = []
        for g in spec.generators:
            for block in self.theta.get(g.name, {}):
                if block == "raw_scale" and not g.primitive.train_scale:
                    continue
                keys.append(("theta", g.name, block))
            for block in self.phi.get(g.name, {}):
                keys.append(("phi", g.name, block))
        for block in self.phi.get(HYPER_KEY, {}):
            keys.append(("phi", HYPER_KEY, block))
        return keys

    def get(self, side, name, block):
        return (self.theta if side == "theta" else self.phi)[name][block]

    def set(self, side, name, block, value):
        (self.theta if side == "theta" else self.phi)[name][block] = value


# ── forward distributions ────────────────────────────────────────────────────

def _affine_np(blocks, x, activation):
    h = x @ blocks["w1"] + blocks["b1"]
    if activation == "tanh":
        h = np.tanh(h)
    return h @ blocks["w2"] + blocks["b2"]


def forward_dist_np(gen, blocks, x):
    """The output distribution of one arrow applied to input ``x``."""
    prim = gen.primitive
    if prim.kind == "gaussian-prior":
        return gaussian_params(blocks["mean"], softplus(blocks["raw_scale"]))
    if prim.kind == "affine-gaussian":
        mean = _affine_np(blocks, x, prim.activation)
        return gaussian_params(mean, softplus(blocks["raw_scale"]))
    if prim.kind == "affine-cbernoulli":
        lam = 1.0 / (1.0 + np.exp(-_affine_np(blocks, x, prim.activation)))
        return cbernoulli_params(lam)
    raise ExecutionError(f"arrow {gen.name} has no executable primitive")


def affine_tape(blocks, x, activation):
    """Tape version of the affine body; ``x`` is (rows, d_in)."""
    h = tape.add(tape.matmul(x, blocks["w1"]), blocks["b1"])
    if activation == "tanh":
        h = tape.tanh(h)
    return tape.add(tape.matmul(h, blocks["w2"]), blocks["b2"])


def forward_dist_tape(gen, blocks, x):
    """Tape version of ``forward_dist_np``: returns (kind, mean/rate, scale)."""
    prim = gen.primitive
    if prim.kind == "gaussian-prior":
        return "gaussian", blocks["mean"], tape.softplus(blocks["raw_scale"])
    if prim.kind == "affine-gaussian":
        mean = affine_tape(blocks, x, prim.activation)
        return "gaussian", mean, tape.softplus(blocks["raw_scale"])
    if prim.kind == "affine-cbernoulli":
        lam = tape.sigmoid(affine_tape(blocks, x, prim.activation))
        return "cbernoulli", tape.clip(lam, CB_RATE_EPS, 1.0 - CB_RATE_EPS), None
    raise ExecutionError(f"arrow {gen.name} has no executable primitive")


# ── forward execution ────────────────────────────────────────────────────────

def execute(m, theta, rng, trace=None):
    """Run a unit-sourced program: sample every intermediate latent and
    return the (unevaluated) observation distribution of the final arrow.

    Each non-final arrow draws its output and appends a latent record; the
    two branches of a pairing run on split, independent streams.
    """
    if m.dom.kind != "unit":
        raise ExecutionError("programs start at the unit object")
    trace = Trace() if trace is None else trace
    out = _exec(m, np.zeros(0), theta, rng, trace, final=True)
    if not isinstance(out, DistParams):
        raise ExecutionError("program has no observation arrow")
    return trace, out


def _exec(term, value, theta, rng, trace, final):
    if isinstance(term, Identity):
        if final:
            raise ExecutionError("identity program has no observation arrow")
        return value
    if isinstance(term, Gen):
        g = term.gen
        if g.name not in theta:
            raise ExecutionError(f"arrow {g.name} has no parameters")
        dist = forward_dist_np(g, theta[g.name], value)
        if final:
            return dist
        x, logp = numerics.sample(dist, rng)
        trace.latents.append(LatentRecord(g.name, x, logp))
        return x
    if isinstance(term, Compose):
        mid = _exec(term.first, value, theta, rng, trace, final=False)
        return _exec(term.then, mid, theta, rng, trace, final)
    if isinstance(term, Product):
        rl, rr = numerics.split_rng(rng, 2)
        vl = _exec(term.left, np.zeros(0), theta, rl, trace, final=False)
        vr = _exec(term.right, np.zeros(0), theta, rr, trace, final=False)
        return np.concatenate([vl, vr])
    if isinstance(term, MacroExpansion):
        if term.macro.cod.kind == "exponential":
            raise ExecutionError(
                f"macro {term.macro.name} yields an arrow-valued result; "
                f"no consuming arrow is declared, so it cannot be executed")
        if final:
            raise ExecutionError("observation object cannot be a pairing")
        return _exec(term.body, value, theta, rng, trace, final=False)
    if isinstance(term, Split):
        raise ExecutionError("inverse plans do not execute forward")
    raise TypeError(f"not a morphism term: {term!r}")


# ── joint density ────────────────────────────────────────────────────────────

@dataclass
class JointParts:
    """The separately retrievable addends of the joint log-density."""

    likelihood: float
    latent_prior: float
    path: float
    hyper_beta: float
    hyper_weights: float

    @property
    def total(self):
        return (self.likelihood + self.latent_prior + self.path
                + self.hyper_beta + self.hyper_weights)


def joint_logprob(x, trace, m, beta, edge_weights, theta, graph, cfg):
    """Joint log-density of (x, latents, term, beta, W) under the model.

    Latent values are read back from ``trace`` in execution order and
    rescored under the current forward parameters, so the result is a pure
    function of its arguments.
    """
    from .transition import transition_matrix

    x = np.asarray(x, dtype=np.float64)
    it = iter(trace.latents)
    prior_parts = []

    def run(term, value, final):
        if isinstance(term, Identity):
            if final:
                raise ExecutionError("identity program has no observation arrow")
            return value
        if isinstance(term, Gen):
            g = term.gen
            dist = forward_dist_np(g, theta[g.name], value)
            if final:
                return dist
            rec = next(it, None)
            if rec is None or rec.generator != g.name:
                raise ExecutionError(f"trace is missing a latent for {g.name}")
            prior_parts.append(numerics.log_density(dist, rec.value))
            return rec.value
        if isinstance(term, Compose):
            mid = run(term.first, value, final=False)
            return run(term.then, mid, final)
        if isinstance(term, Product):
            vl = run(term.left, np.zeros(0), final=False)
            vr = run(term.right, np.zeros(0), final=False)
            return np.concatenate([vl, vr])
        if isinstance(term, MacroExpansion):
            if term.macro.cod.kind == "exponential":
                raise ExecutionError(
                    f"macro {term.macro.name} yields an arrow-valued result")
            return run(term.body, value, final)
        raise ExecutionError("term is not a forward program")

    obs_dist = run(m, np.zeros(0), final=True)
    data = x
    if obs_dist.kind == "cbernoulli":
        data = np.clip(x, OBS_CLAMP, 1.0 - OBS_CLAMP)
    likelihood = numerics.log_density(obs_dist, data)

    tmodel = transition_matrix(graph, edge_weights, beta)
    path = path_logprob(tmodel, m, m.dom, m.cod, cfg)

    hyper_beta = numerics.log_density(numerics.gamma_params(1.0, 1.0), [beta])
    w_flat = np.asarray(edge_weights, dtype=np.float64).reshape(-1)
    hyper_weights = numerics.log_density(
        numerics.gamma_params(np.ones_like(w_flat), np.ones_like(w_flat)), w_flat)

    return JointParts(likelihood=likelihood,
                      latent_prior=float(sum(prior_parts)),
                      path=path, hyper_beta=hyper_beta,
                      hyper_weights=hyper_weights)


# ── inverse plans ────────────────────────────────────────────────────────────

def dagger(m):
    """Structural reverse of a term: composition flips, each arrow becomes
    its paired stochastic inverse, pairings become splits.  An involution."""
    if isinstance(m, Identity):
        return m
    if isinstance(m, Gen):
        return gen_morphism(dagger_generator(m.gen))
    if isinstance(m, Compose):
        from .category import compose

        return compose(dagger(m.then), dagger(m.first))
    if isinstance(m, Product):
        left, right = dagger(m.left), dagger(m.right)
        return Split(dom=m.cod, cod=UNIT, left=left, right=right)
    if isinstance(m, Split):
        from .category import product

        return product(dagger(m.left), dagger(m.right))
    if isinstance(m, MacroExpansion):
        return MacroExpansion(dom=m.cod, cod=m.dom,
                              macro=dagger_generator(m.macro),
                              body=dagger(m.body))
    raise TypeError(f"not a morphism term: {m!r}")


# ── checkpoints ──────────────────────────────────────────────────────────────

def save_checkpoint(path, store, spec_hash, seed, step):
    """Write parameters as JSON; floats round-trip exactly."""
    doc = {
        "spec_hash": spec_hash,
        "seed": int(seed),
        "step": int(step),
        "theta": {g: {b: v.tolist() for b, v in blocks.items()}
                  for g, blocks in sorted(store.theta.items())},
        "phi": {g: {b: v.tolist() for b, v in blocks.items()}
                for g, blocks in sorted(store.phi.items())},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    store = ParamStore(
        theta={g: {b: np.asarray(v, dtype=np.float64) for b, v in blocks.items()}
               for g, blocks in doc["theta"].items()},
        phi={g: {b: np.asarray(v, dtype=np.float64) for b, v in blocks.items()}
             for g, blocks in doc["phi"].items()},
    )
    return store, doc["spec_hash"], doc["seed"], doc["step"]

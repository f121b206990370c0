"""Amortized variational inference over programs, latents and walk biases.

The proposal factorizes as: data-driven distributions over the walk's
inverse temperature and edge weights, the walk's own program distribution
under those draws, and per-arrow stochastic inverses proposing latents
from the data in reverse program order.  The resulting bound is estimated
by Monte Carlo and maximized with a mixed estimator: reparameterized
(pathwise) gradients for Gaussian latents and, in the log-normal family,
for the hyper draws; a score-function term with a scalar running baseline
for the discrete arrow choices (and for the hyper draws in the gamma
family, which is not reparameterized).

The program log-probability appears identically in the joint and in the
proposal, so it cancels out of the bound; the builder asserts this on
every sample instead of trusting it.

Two hyper-proposal families are supported.  ``lognormal`` is the default:
reparameterized, strictly positive, low-variance.  ``gamma`` can represent
the hyperpriors exactly (and is initialized to them), which matters when a
bound must be compared against an analytic evidence with sub-0.1-nat
slack; its draws get score-function gradients instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, tape
from .category import UNIT, NestedEntry, generator_chain, signature
from .model import (HYPER_KEY, ExecutionError, ParamStore, affine_tape,
                    forward_dist_tape, init_dagger_params,
                    init_generator_params)
from .numerics import LOG_2PI, make_rng
from .sampler import LatentRecord, Trace, path_between
from .transition import LOGIT_CLAMP, TransitionModel

HEAD_CLAMP = 8.0
LOG_DRAW_CLAMP = 40.0
PATH_CANCEL_TOL = 1e-12
OBS_CLAMP = 1e-6

FAMILIES = ("lognormal", "gamma")


class InferenceError(Exception):
    """Inconsistent inputs or a violated internal identity."""


class NumericalAbort(RuntimeError):
    """A gradient went non-finite; names the offending parameter block."""


# ── parameter store construction ─────────────────────────────────────────────

def init_store(spec, graph, seed):
    """Fresh forward and inference parameters for every arrow, plus the
    data-driven hyper-proposal heads (zero-initialized so the initial
    hyper proposals coincide with sensible reference points)."""
    rng = make_rng(seed, 0xA11C)
    theta = {g.name: init_generator_params(g, rng) for g in spec.generators}
    phi = {g.name: init_dagger_params(g, rng) for g in spec.generators}
    d = spec.data_object.flat_dim
    nv = len(graph.vertices)
    phi[HYPER_KEY] = {
        "beta_w": np.zeros((d, 2)),
        "beta_b": np.zeros(2),
        "weights_w": np.zeros((d, 2 * nv * nv)),
        "weights_b": np.zeros(2 * nv * nv),
    }
    return ParamStore(theta=theta, phi=phi)


# ── per-row sample records ───────────────────────────────────────────────────

@dataclass
class SampleRecord:
    """Everything needed to rebuild one proposal sample deterministically."""

    x: np.ndarray
    summary: np.ndarray
    stream: object = None  # per-row generator; unused on replay
    eps_beta: float = 0.0
    eps_weights: np.ndarray | None = None
    beta: float = 1.0
    weights: np.ndarray | None = None
    morphism: object = None
    trace: Trace | None = None
    sig: str = ""
    latent_eps: list = field(default_factory=list)  # filled by the builder


@dataclass
class SampleTerms:
    """Surrogate ingredients for a batch of samples sharing one tape slice."""

    signals: np.ndarray  # learning signals, held constant in the coefficient
    score_var: tape.Var  # per-sample sum of non-reparameterized log q
    pathwise_var: tape.Var  # per-sample bound value as a tape expression


@dataclass
class Baseline:
    """Scalar running mean of the learning signal."""

    value: float = 0.0
    decay: float = 0.95

    def update(self, signal_mean):
        self.value = self.decay * self.value + (1.0 - self.decay) * float(signal_mean)


@dataclass
class ElboEstimate:
    """Monte-Carlo bound estimate plus its differentiable surrogate."""

    value: float
    surrogate: float
    parts: dict
    baseline: float
    path_logprob: float
    surrogate_var: tape.Var = field(repr=False, default=None)
    records: list = field(repr=False, default_factory=list)


def surrogate_loss(samples, baseline):
    """Mean surrogate whose gradient estimates the bound gradient.

    Per sample: ``(signal - b) * score + pathwise``, with the signal held
    constant inside the coefficient.  Updates the baseline toward the mean
    signal afterwards.
    """
    total = None
    count = 0
    all_signals = []
    b = baseline.value
    for s in samples:
        signals = np.atleast_1d(np.asarray(s.signals, dtype=np.float64))
        count += signals.size
        all_signals.append(signals)
        term = tape.add(tape.sum_(tape.mul(signals - b, s.score_var)),
                        tape.sum_(s.pathwise_var))
        total = term if total is None else tape.add(total, term)
    if total is None:
        raise InferenceError("surrogate_loss needs at least one sample")
    baseline.update(np.concatenate(all_signals).mean())
    return tape.mul(total, 1.0 / count)


# ── sampling phase ───────────────────────────────────────────────────────────

def _hyper_head_values(store, summary_rows, nv):
    hp = store.phi[HYPER_KEY]
    hb = summary_rows @ hp["beta_w"] + hp["beta_b"]  # (n, 2)
    hw = summary_rows @ hp["weights_w"] + hp["weights_b"]  # (n, 2*nv*nv)
    return np.clip(hb, -HEAD_CLAMP, HEAD_CLAMP), np.clip(hw, -HEAD_CLAMP, HEAD_CLAMP)


def draw_records(x_rows, summary_rows, streams, store, spec, graph, cfg, family):
    """Draw hyper values and walk one program per row; latents come later."""
    if family not in FAMILIES:
        raise InferenceError(f"unknown hyper-proposal family {family!r}")
    n = x_rows.shape[0]
    nv = len(graph.vertices)
    hb, hw = _hyper_head_values(store, summary_rows, nv)
    records = []
    for i in range(n):
        rec = SampleRecord(x=x_rows[i], summary=summary_rows[i], stream=streams[i])
        if family == "lognormal":
            rec.eps_beta = float(streams[i].standard_normal())
            rec.eps_weights = streams[i].standard_normal(nv * nv)
            lnb = np.clip(hb[i, 0] + np.exp(hb[i, 1]) * rec.eps_beta,
                          -LOG_DRAW_CLAMP, LOG_DRAW_CLAMP)
            lnw = np.clip(hw[i, :nv * nv] + np.exp(hw[i, nv * nv:]) * rec.eps_weights,
                          -LOG_DRAW_CLAMP, LOG_DRAW_CLAMP)
            rec.beta = float(np.exp(lnb))
            rec.weights = np.exp(lnw).reshape(nv, nv)
        else:
            a_b, r_b = np.exp(hb[i, 0]), np.exp(hb[i, 1])
            a_w = np.exp(hw[i, :nv * nv])
            r_w = np.exp(hw[i, nv * nv:])
            rec.beta = float(max(streams[i].gamma(a_b, 1.0 / r_b), 1e-300))
            rec.weights = np.maximum(
                streams[i].gamma(a_w, 1.0 / r_w), 1e-300).reshape(nv, nv)
        records.append(rec)

    # One vectorized transition build for the whole batch, then the walks.
    w_all = np.stack([r.weights for r in records])
    beta_all = np.array([r.beta for r in records])
    logits = (graph.communicability[None, :, :]
              + np.einsum("ij,njk->nik", graph.adjacency, w_all)) \
        / beta_all[:, None, None]
    logits = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    probs_all = kernels.row_softmax(
        np.ascontiguousarray(logits.reshape(n * nv, nv))).reshape(n, nv, nv)
    for i, rec in enumerate(records):
        tmodel = TransitionModel(graph=graph, edge_weights=rec.weights,
                                 beta=rec.beta, probs=probs_all[i])
        rec.morphism, rec.trace = path_between(
            tmodel, UNIT, spec.data_object, cfg, streams[i])
        rec.sig = signature(rec.morphism)
    return records


# ── tape build ───────────────────────────────────────────────────────────────

def _leaves(store):
    leaves = {}
    for side, blocks_by_name in (("theta", store.theta), ("phi", store.phi)):
        for name, blocks in blocks_by_name.items():
            for block, arr in blocks.items():
                leaves[(side, name, block)] = tape.Var(arr)
    return leaves


def _hyper_vars(leaves, summary_rows, records, family, nv):
    """Tape expressions for the hyper draws and their log-densities."""
    s = summary_rows  # constant
    hb = tape.clip(tape.add(tape.matmul(s, leaves[("phi", HYPER_KEY, "beta_w")]),
                            leaves[("phi", HYPER_KEY, "beta_b")]),
                   -HEAD_CLAMP, HEAD_CLAMP)
    hw = tape.clip(tape.add(tape.matmul(s, leaves[("phi", HYPER_KEY, "weights_w")]),
                            leaves[("phi", HYPER_KEY, "weights_b")]),
                   -HEAD_CLAMP, HEAD_CLAMP)
    n = s.shape[0]
    v2 = nv * nv
    if family == "lognormal":
        eps_b = np.array([r.eps_beta for r in records])
        eps_w = np.stack([r.eps_weights for r in records])
        mu_b = tape.index(hb, (slice(None), 0))
        sig_b = tape.exp(tape.index(hb, (slice(None), 1)))
        lnb = tape.clip(tape.add(mu_b, tape.mul(sig_b, eps_b)),
                        -LOG_DRAW_CLAMP, LOG_DRAW_CLAMP)
        beta_var = tape.exp(lnb)
        logq_beta = tape.sub(tape.neg(tape.add(lnb, tape.log(sig_b))),
                             0.5 * LOG_2PI + 0.5 * eps_b * eps_b)
        mu_w = tape.index(hw, (slice(None), slice(0, v2)))
        sig_w = tape.exp(tape.index(hw, (slice(None), slice(v2, 2 * v2))))
        lnw = tape.clip(tape.add(mu_w, tape.mul(sig_w, eps_w)),
                        -LOG_DRAW_CLAMP, LOG_DRAW_CLAMP)
        w_var = tape.reshape(tape.exp(lnw), (n, nv, nv))
        logq_w = tape.sum_(tape.sub(tape.neg(tape.add(lnw, tape.log(sig_w))),
                                    0.5 * LOG_2PI + 0.5 * eps_w * eps_w), axis=1)
        score_hyper = None  # reparameterized: no score term
    else:
        beta_const = np.array([r.beta for r in records])
        w_const = np.stack([r.weights.reshape(-1) for r in records])
        a_b = tape.exp(tape.index(hb, (slice(None), 0)))
        r_b = tape.exp(tape.index(hb, (slice(None), 1)))
        logq_beta = tape.sub(
            tape.add(tape.mul(a_b, tape.log(r_b)),
                     tape.mul(tape.sub(a_b, 1.0), np.log(beta_const))),
            tape.add(tape.gammaln(a_b), tape.mul(r_b, beta_const)))
        a_w = tape.exp(tape.index(hw, (slice(None), slice(0, v2))))
        r_w = tape.exp(tape.index(hw, (slice(None), slice(v2, 2 * v2))))
        logq_w = tape.sum_(tape.sub(
            tape.add(tape.mul(a_w, tape.log(r_w)),
                     tape.mul(tape.sub(a_w, 1.0), np.log(w_const))),
            tape.add(tape.gammaln(a_w), tape.mul(r_w, w_const))), axis=1)
        beta_var = tape.Var(beta_const)  # constants: no reparam path
        w_var = tape.Var(w_const.reshape(n, nv, nv))
        score_hyper = tape.add(logq_beta, logq_w)
    logp_beta = tape.neg(beta_var)  # Gamma(1,1) log-density is -x
    logp_w = tape.neg(tape.sum_(w_var, axis=(1, 2)))
    return {"beta": beta_var, "weights": w_var,
            "logq_beta": logq_beta, "logq_w": logq_w,
            "logp_beta": logp_beta, "logp_w": logp_w,
            "score_hyper": score_hyper}


def _choice_logprob_var(graph, logits_g, choices, n_rows):
    """Sum of renormalized arrow-choice log-probabilities, batched."""
    total = None
    for ch in choices:
        cand_idx = np.array([graph.index[a] for a in ch.candidates])
        dst_idx = graph.index[ch.dst]
        j = ch.candidates.index(ch.chosen)
        rows = tape.index(logits_g, (slice(None), cand_idx, slice(None)))
        log_scores = tape.sub(
            tape.index(logits_g, (slice(None), cand_idx, dst_idx)),
            tape.logsumexp(rows, axis=2))
        step = tape.sub(tape.index(log_scores, (slice(None), j)),
                        tape.logsumexp(log_scores, axis=1))
        total = step if total is None else tape.add(total, step)
    if total is None:
        total = tape.Var(np.zeros(n_rows))
    return total


@dataclass
class _SlotDraw:
    name: str
    z: tape.Var
    logq_rows: tape.Var  # (rows,) per-slot proposal log-density


def _dagger_draw(gen, out_var, leaves, eps, rows):
    """Propose ``gen``'s input from its output via the arrow's inverse."""
    blocks = {b: leaves[("phi", gen.name, b)] for b in
              ("w1", "b1", "w2", "b2", "raw_scale")}
    mean = affine_tape(blocks, out_var, gen.primitive.activation)
    scale = tape.softplus(blocks["raw_scale"])
    z = tape.add(mean, tape.mul(scale, eps))
    logq_pc = tape.sub(tape.neg(tape.log(scale)),
                       0.5 * LOG_2PI + 0.5 * eps * eps)
    return z, logq_pc


def _propose_pass(entries, out_var, out_logq_pc, observed, leaves, group, exec_eps):
    """Walk a chain backward, proposing every arrow's input from its output.

    Returns the slot draws in execution order.  ``out_var`` is the output
    value of the final entry; when not observed it is recorded as that
    entry's latent (split across branches for pair macros).
    """
    e = entries[-1]
    if isinstance(e, NestedEntry):
        if e.macro is None:
            raise InferenceError("bare pairings are not executable programs")
        target = e.macro.cod
        if target.kind == "exponential":
            raise ExecutionError(
                f"macro {e.macro.name} yields an arrow-valued result; "
                f"its latents cannot be proposed")
        if len(entries) != 1:
            raise InferenceError("pair macros start their chain")
        if observed:
            raise InferenceError("observation object cannot be a pairing")
        da = target.factors[0].flat_dim
        va = tape.index(out_var, (slice(None), slice(0, da)))
        vb = tape.index(out_var, (slice(None), slice(da, None)))
        qa = tape.index(out_logq_pc, (slice(None), slice(0, da)))
        qb = tape.index(out_logq_pc, (slice(None), slice(da, None)))
        slots = _propose_pass(list(e.branches[0]), va, qa, False, leaves, group, exec_eps)
        slots += _propose_pass(list(e.branches[1]), vb, qb, False, leaves, group, exec_eps)
        return slots
    before = []
    if len(entries) > 1:
        d_in = e.dom.flat_dim
        if exec_eps is not None:
            eps = exec_eps.pop(0)
        else:
            eps = np.stack([r.stream.standard_normal(d_in) for r in group])
            for r, row_eps in zip(group, eps):
                r.latent_eps.append(row_eps)
        u, logq_pc = _dagger_draw(e, out_var, leaves, eps, len(group))
        before = _propose_pass(entries[:-1], u, logq_pc, False, leaves, group, exec_eps)
    elif e.dom.kind != "unit":
        raise InferenceError(f"chain starts at {e.dom.name}, not unit")
    if observed:
        return before
    return before + [_SlotDraw(name=e.name, z=out_var,
                               logq_rows=tape.sum_(out_logq_pc, axis=1))]


def _theta_pass(entries, cur, slots, leaves, final_tail):
    """Score proposed latents under the forward model, in execution order.

    Returns (per-slot prior log-density Vars, observation head or None,
    output value Var of the chain)."""
    logps = []
    obs = None
    for i, e in enumerate(entries):
        is_last = i == len(entries) - 1
        if isinstance(e, NestedEntry):
            target = e.macro.cod if e.macro is not None else None
            if target is None or target.kind == "exponential":
                raise ExecutionError("term is not an executable program")
            lpa, _, va = _theta_pass(list(e.branches[0]), None, slots, leaves, False)
            lpb, _, vb = _theta_pass(list(e.branches[1]), None, slots, leaves, False)
            logps.extend(lpa)
            logps.extend(lpb)
            cur = tape.concat([va, vb], axis=1)
            continue
        blocks = {b: leaves[("theta", e.name, b)]
                  for b in ("mean", "raw_scale", "w1", "b1", "w2", "b2")
                  if ("theta", e.name, b) in leaves}
        kind, p1, p2 = forward_dist_tape(e, blocks, cur)
        if is_last and final_tail:
            obs = (kind, p1, p2)
            cur = None
        else:
            slot = slots.pop(0)
            if slot.name != e.name:
                raise InferenceError(
                    f"latent slot mismatch: {slot.name} vs {e.name}")
            if kind != "gaussian":
                raise ExecutionError(
                    f"arrow {e.name} cannot emit an intermediate latent")
            logps.append(tape.gauss_logpdf(slot.z, p1, p2))
            cur = slot.z
    return logps, obs, cur


def build_objective(records, summary_rows, store, spec, graph, cfg, family,
                    baseline, signal_override=None, replay=False):
    """Assemble the bound and its surrogate for a batch of sample records.

    With ``replay=True`` the stored noise is reused, making the result a
    deterministic function of the parameters (used by the gradient checks
    and by common-random-number comparisons).
    """
    n = len(records)
    nv = len(graph.vertices)
    leaves = _leaves(store)
    hyper = _hyper_vars(leaves, summary_rows, records, family, nv)

    # Group rows by program signature so the tape is built once per shape.
    order = {}
    for i, rec in enumerate(records):
        order.setdefault(rec.sig, []).append(i)

    l_values = np.zeros(n)
    path_values = np.zeros(n)
    part_sums = {k: 0.0 for k in ("likelihood", "latent_prior",
                                  "latent_proposal", "hyper_prior",
                                  "hyper_proposal")}
    sample_terms = []

    for sig, idx_list in order.items():
        idx = np.array(idx_list)
        group = [records[i] for i in idx_list]
        rec0 = group[0]
        entries = generator_chain(rec0.morphism)

        w_g = tape.index(hyper["weights"], (idx,))
        beta_g = tape.index(hyper["beta"], (idx,))
        logits_g = tape.clip(
            tape.div(tape.add(graph.communicability,
                              tape.fixed_matmul_batch(graph.adjacency, w_g)),
                     tape.reshape(beta_g, (len(idx), 1, 1))),
            -LOGIT_CLAMP, LOGIT_CLAMP)
        path_var = _choice_logprob_var(graph, logits_g, rec0.trace.choices, len(idx))

        # The program term appears in both the joint and the proposal with
        # the same draw, so it cancels; verify rather than assume.
        path_q = np.array([r.trace.total_path_logprob for r in group])
        if np.abs(path_var.value - path_q).max() >= PATH_CANCEL_TOL:
            raise InferenceError(
                f"program log-probability failed to cancel: "
                f"{np.abs(path_var.value - path_q).max():.3e}")

        x_g = np.stack([r.x for r in group])
        exec_eps = None
        if replay:
            exec_eps = [np.stack([r.latent_eps[k] for r in group])
                        for k in range(len(rec0.latent_eps))]
        else:
            for r in group:
                r.latent_eps = []
        slots = _propose_pass(entries, x_g, None, True, leaves, group, exec_eps)
        slot_list = list(slots)
        logq_rows = [s.logq_rows for s in slot_list]
        logp_rows, obs, _ = _theta_pass(entries, None, list(slot_list), leaves, True)
        if obs is None:
            raise ExecutionError("program has no observation arrow")

        kind, p1, p2 = obs
        if kind == "gaussian":
            obs_logp = tape.gauss_logpdf(x_g, p1, p2)
        else:
            obs_logp = tape.cb_logpdf(np.clip(x_g, OBS_CLAMP, 1.0 - OBS_CLAMP), p1)

        def vsum(vs, size=len(idx)):
            total = tape.Var(np.zeros(size))
            for v in vs:
                total = tape.add(total, v)
            return total

        latent_prior = vsum(logp_rows)
        latent_prop = vsum(logq_rows)
        logp_beta_g = tape.index(hyper["logp_beta"], (idx,))
        logp_w_g = tape.index(hyper["logp_w"], (idx,))
        logq_beta_g = tape.index(hyper["logq_beta"], (idx,))
        logq_w_g = tape.index(hyper["logq_w"], (idx,))
        hyper_prior = tape.add(logp_beta_g, logp_w_g)
        hyper_prop = tape.add(logq_beta_g, logq_w_g)

        pathwise = tape.sub(tape.add(tape.add(obs_logp, latent_prior), hyper_prior),
                            tape.add(latent_prop, hyper_prop))
        if family == "lognormal":
            score = path_var
        else:
            score = tape.add(path_var, tape.index(hyper["score_hyper"], (idx,)))

        l_values[idx] = pathwise.value
        path_values[idx] = path_q
        part_sums["likelihood"] += float(obs_logp.value.sum())
        part_sums["latent_prior"] += float(latent_prior.value.sum())
        part_sums["latent_proposal"] += float(latent_prop.value.sum())
        part_sums["hyper_prior"] += float(hyper_prior.value.sum())
        part_sums["hyper_proposal"] += float(hyper_prop.value.sum())

        signals = l_values[idx] if signal_override is None else signal_override[idx]
        sample_terms.append(SampleTerms(signals=signals, score_var=score,
                                        pathwise_var=pathwise))

        # Record proposal latents in the traces (execution order).
        if not replay:
            for s_i, slot in enumerate(slot_list):
                zv = slot.z.value
                qv = slot.logq_rows.value
                for r_i, r in enumerate(group):
                    r.trace.latents.append(
                        LatentRecord(slot.name, zv[r_i].copy(), float(qv[r_i])))

    surrogate = surrogate_loss(sample_terms, baseline)
    parts = {
        "likelihood": part_sums["likelihood"] / n,
        "latent_prior": part_sums["latent_prior"] / n,
        "latent_proposal": -part_sums["latent_proposal"] / n,
        "hyper_prior": part_sums["hyper_prior"] / n,
        "hyper_proposal": -part_sums["hyper_proposal"] / n,
    }
    return ElboEstimate(value=float(l_values.mean()),
                        surrogate=float(surrogate.value),
                        parts=parts, baseline=baseline.value,
                        path_logprob=float(path_values.mean()),
                        surrogate_var=surrogate, records=records), leaves


# ── public operations ────────────────────────────────────────────────────────

def propose(x, store, spec, graph, cfg, rng, family="lognormal"):
    """One amortized proposal for a single data vector.

    Returns ``(morphism, trace, beta, weights, logq_total)`` where the
    total covers the hyper draws, the program choices and every latent.
    """
    x = np.asarray(x, dtype=np.float64)
    records = draw_records(x[None, :], x[None, :], [rng], store, spec, graph,
                           cfg, family)
    baseline = Baseline()
    est, _ = build_objective(records, x[None, :], store, spec, graph, cfg,
                             family, baseline)
    rec = records[0]
    logq_latents = sum(l.log_density for l in rec.trace.latents)
    logq_hyper = -(est.parts["hyper_proposal"])  # stored negated
    logq_total = logq_hyper + rec.trace.total_path_logprob + logq_latents
    return rec.morphism, rec.trace, rec.beta, rec.weights, logq_total


def elbo(x, store, spec, graph, cfg, n_samples, rng, family="lognormal",
         baseline=None):
    """Monte-Carlo bound for one data vector over ``n_samples`` proposals."""
    if n_samples < 1:
        raise InferenceError("n_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    rows = np.tile(x, (n_samples, 1))
    streams = rng.spawn(n_samples)
    records = draw_records(rows, rows, streams, store, spec, graph, cfg, family)
    baseline = baseline if baseline is not None else Baseline()
    est, _ = build_objective(records, rows, store, spec, graph, cfg, family,
                             baseline)
    return est


# ── training ─────────────────────────────────────────────────────────────────

@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    step_size: float = 1e-3
    n_elbo_samples: int = 1
    momentum: float = 0.9
    grad_clip: float = 10.0
    family: str = "lognormal"
    seed: int = 0


def _collect_grads(leaves, keys):
    grads = {}
    for key in keys:
        leaf = leaves[key]
        g = leaf.grad
        if g is None:
            g = np.zeros_like(leaf.value)
        if not np.all(np.isfinite(g)):
            raise NumericalAbort(
                f"non-finite gradient in {key[0]}/{key[1]}/{key[2]}")
        grads[key] = g
    return grads


def train(rows, spec, graph, cfg, tcfg, store=None, baseline=None):
    """Minibatch stochastic-gradient training of all parameters.

    One step: sample proposals for the batch, assemble the surrogate, take
    a momentum step on its gradient (ascent) with global norm clipping.
    Returns the store, per-epoch metric lines (epoch, mean bound, mean
    program log-probability, baseline) and the step count.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if store is None:
        store = init_store(spec, graph, tcfg.seed)
    baseline = baseline if baseline is not None else Baseline()
    keys = store.trainable_keys(spec)
    velocity = {k: np.zeros_like(store.get(*k)) for k in keys}
    metrics = []
    step = 0
    n = len(rows)
    for epoch in range(tcfg.epochs):
        order = make_rng(tcfg.seed, 0xE0, epoch).permutation(n)
        epoch_l = []
        epoch_path = []
        for start in range(0, n, tcfg.batch_size):
            batch_ids = order[start:start + tcfg.batch_size]
            x_batch = rows[batch_ids]
            summary = x_batch.mean(axis=0)
            rep_ids = np.repeat(batch_ids, tcfg.n_elbo_samples)
            x_rep = rows[rep_ids]
            summary_rows = np.tile(summary, (len(rep_ids), 1))
            streams = [make_rng(tcfg.seed, int(rid), epoch, s)
                       for rid in batch_ids
                       for s in range(tcfg.n_elbo_samples)]
            records = draw_records(x_rep, summary_rows, streams, store, spec,
                                   graph, cfg, tcfg.family)
            est, leaves = build_objective(records, summary_rows, store, spec,
                                          graph, cfg, tcfg.family, baseline)
            tape.backward(est.surrogate_var)
            grads = _collect_grads(leaves, keys)
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            scale = 1.0 if norm <= tcfg.grad_clip else tcfg.grad_clip / norm
            for k in keys:
                velocity[k] = tcfg.momentum * velocity[k] + scale * grads[k]
                store.set(*k, store.get(*k) + tcfg.step_size * velocity[k])
            epoch_l.append(est.value)
            epoch_path.append(est.path_logprob)
            step += 1
        metrics.append(
            f"{epoch}\t{np.mean(epoch_l):.6f}\t{np.mean(epoch_path):.6f}"
            f"\t{baseline.value:.6f}")
    return store, metrics, step


def structure_posterior(rows, store, spec, graph, cfg, n_samples, seed,
                        family="lognormal"):
    """Frequencies of program signatures under the amortized proposal."""
    rows = np.asarray(rows, dtype=np.float64)
    ids = np.arange(n_samples) % len(rows)
    x = rows[ids]
    streams = [make_rng(seed, 0x57, i) for i in range(n_samples)]
    records = draw_records(x, x, streams, store, spec, graph, cfg, family)
    counts = {}
    for rec in records:
        counts[rec.sig] = counts.get(rec.sig, 0) + 1
    return {sig: c / n_samples for sig, c in sorted(counts.items())}

"""Reversible-jump chain driver.

Between-model moves add or drop one covariate. The coefficients of the
candidate model are drawn from their joint Gaussian conditional given the
current latent outcomes, and the move is accepted with the usual
Metropolis-Hastings ratio (likelihood x prior x reverse proposal over the
same for the current state). Every iteration then runs one Gibbs sweep.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptySelection, NotPositiveDefinite
from .model import (
    Dataset,
    Hyperparams,
    ModelState,
    gibbs_sweep,
    gibbs_update_latent,
    initial_state,
    joint_conditional,
    log_likelihood,
    log_posterior,
    log_prior,
)
from .proposals import (
    BIRTH,
    DATA_DRIVEN,
    DEATH,
    ROI,
    SNP,
    UNIFORM,
    AssociationCache,
    MoveChoice,
    draw_move,
    kind_prob,
    log_selection_prob,
)
from .numerics import make_rng

log = logging.getLogger(__name__)

MOVE_TYPES = ("roi_birth", "roi_death", "snp_birth", "snp_death")


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 35000
    burn_in: int = 5000
    thin: int = 10
    seed: int = 0
    mode: str = DATA_DRIVEN
    pre_selection_threshold: float | None = None
    subsample_fraction: float = 1.0
    chains: int = 1
    space_prob_override: float | None = None
    jitter_init: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1:
            raise ConfigError("iterations and thin must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must be in [0, iterations)")
        if self.mode not in (DATA_DRIVEN, UNIFORM):
            raise ConfigError(f"mode must be {DATA_DRIVEN!r} or {UNIFORM!r}")
        if not 0 < self.subsample_fraction <= 1:
            raise ConfigError("subsample_fraction must be in (0, 1]")
        if self.chains < 1:
            raise ConfigError("chains must be at least 1")
        if self.space_prob_override is not None and not 0 <= self.space_prob_override <= 1:
            raise ConfigError("space_prob_override must be a probability")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class Sample:
    iteration: int
    active_rois: tuple[int, ...]
    active_snps: tuple[int, ...]
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    log_posterior: float

    def signature(self):
        return tuple(sorted(self.active_rois)), tuple(sorted(self.active_snps))


@dataclass
class ChainTrace:
    samples: list[Sample] = field(default_factory=list)
    log_posterior: np.ndarray = field(default_factory=lambda: np.zeros(0))
    attempts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVE_TYPES, 0))
    accepts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVE_TYPES, 0))

    def acceptance_rates(self) -> dict[str, float]:
        return {k: (self.accepts[k] / self.attempts[k] if self.attempts[k] else math.nan) for k in MOVE_TYPES}


@dataclass(frozen=True)
class JumpProposal:
    move: MoveChoice
    candidate_state: ModelState
    log_forward: float
    log_reverse: float


def _enlarged(state: ModelState, space: str, j: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if space == ROI:
        return state.active_rois + (j,), state.active_snps
    return state.active_rois, state.active_snps + (j,)


def _reduced(state: ModelState, space: str, j: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if space == ROI:
        return tuple(a for a in state.active_rois if a != j), state.active_snps
    return state.active_rois, tuple(a for a in state.active_snps if a != j)


def _drop_coefficients(state: ModelState, space: str, j: int) -> np.ndarray:
    """Current coefficients with covariate j removed (used for matched moves)."""
    if space == ROI:
        pos = state.active_rois.index(j)
        beta = np.delete(state.beta, pos + 1)
        return np.concatenate([beta, state.alpha, state.delta])
    pos = state.active_snps.index(j)
    return np.concatenate([state.beta, np.delete(state.alpha, pos), np.delete(state.delta, pos)])


def matched_proposal(
    state: ModelState,
    candidate_state: ModelState,
    move: MoveChoice,
    data: Dataset,
    hyper: Hyperparams,
    mode: str = DATA_DRIVEN,
    cache: AssociationCache | None = None,
    forward_selection: float | None = None,
    q_cand=None,
) -> JumpProposal:
    """Proposal densities for a given (current, candidate) pair.

    The forward density is p(kind) * p(candidate) * q(candidate coefs); the
    reverse density is the same three factors for the opposite move from the
    candidate state back to the current one.
    """
    rev_kind = DEATH if move.kind == BIRTH else BIRTH
    if q_cand is None:
        q_cand = joint_conditional(
            candidate_state.active_rois, candidate_state.active_snps, state.latent, data, hyper
        )
    if forward_selection is None:
        forward_selection = log_selection_prob(state, data, move.space, move.kind, move.candidate, mode, cache)
    q_curr = joint_conditional(state.active_rois, state.active_snps, state.latent, data, hyper)
    log_forward = (
        math.log(kind_prob(state, data, move.space, move.kind))
        + forward_selection
        + q_cand.logpdf(candidate_state.coefficients())
    )
    log_reverse = (
        math.log(kind_prob(candidate_state, data, move.space, rev_kind))
        + log_selection_prob(candidate_state, data, move.space, rev_kind, move.candidate, mode, cache)
        + q_curr.logpdf(state.coefficients())
    )
    return JumpProposal(move, candidate_state, log_forward, log_reverse)


def _propose(state, data, hyper, move, rng, mode, cache, sets) -> JumpProposal:
    rois, snps = sets
    q = joint_conditional(rois, snps, state.latent, data, hyper)
    gamma = q.sample(rng)
    p1 = len(rois) + 1
    k = len(snps)
    cand = ModelState(rois, snps, gamma[:p1], gamma[p1:p1 + k], gamma[p1 + k:], state.latent)
    return matched_proposal(state, cand, move, data, hyper, mode, cache, move.log_selection_prob, q)


def propose_birth(
    state: ModelState,
    data: Dataset,
    hyper: Hyperparams,
    move: MoveChoice,
    rng: np.random.Generator,
    mode: str = DATA_DRIVEN,
    cache: AssociationCache | None = None,
) -> JumpProposal:
    if move.kind != BIRTH:
        raise ValueError("expected a birth move")
    active = state.active_rois if move.space == ROI else state.active_snps
    if move.candidate in active:
        raise ValueError("candidate already active")
    return _propose(state, data, hyper, move, rng, mode, cache, _enlarged(state, move.space, move.candidate))


def propose_death(
    state: ModelState,
    data: Dataset,
    hyper: Hyperparams,
    move: MoveChoice,
    rng: np.random.Generator,
    mode: str = DATA_DRIVEN,
    cache: AssociationCache | None = None,
) -> JumpProposal:
    if move.kind != DEATH:
        raise ValueError("expected a death move")
    active = state.active_rois if move.space == ROI else state.active_snps
    if move.candidate not in active:
        raise ValueError("candidate is not active")
    return _propose(state, data, hyper, move, rng, mode, cache, _reduced(state, move.space, move.candidate))


def log_acceptance(current: ModelState, proposal: JumpProposal, data: Dataset, hyper: Hyperparams) -> float:
    cand = proposal.candidate_state
    top = log_likelihood(cand, data) + log_prior(cand, hyper, data)
    bottom = log_likelihood(current, data) + log_prior(current, hyper, data)
    if top == -math.inf:
        return -math.inf
    return top - bottom + proposal.log_reverse - proposal.log_forward


def acceptance_probability(log_a: float) -> float:
    return 1.0 if log_a >= 0 else math.exp(log_a)


def ddrj_step(
    state: ModelState,
    data: Dataset,
    hyper: Hyperparams,
    rng: np.random.Generator,
    mode: str = DATA_DRIVEN,
    space_prob: float | None = None,
    cache: AssociationCache | None = None,
) -> tuple[ModelState, bool, MoveChoice]:
    """One jump attempt followed by one Gibbs sweep of the resulting model."""
    move = draw_move(state, data, rng, mode, space_prob, cache)
    u = rng.random()
    accepted = False
    try:
        if move.kind == BIRTH:
            prop = propose_birth(state, data, hyper, move, rng, mode, cache)
        else:
            prop = propose_death(state, data, hyper, move, rng, mode, cache)
        log_a = log_acceptance(state, prop, data, hyper)
        if log_a >= 0 or u < math.exp(log_a):
            state = prop.candidate_state
            accepted = True
    except NotPositiveDefinite:
        log.warning("singular conditional for %s %s of covariate %d; move rejected",
                    move.space, move.kind, move.candidate)
    state = gibbs_sweep(state, data, hyper, rng)
    return state, accepted, move


def run_chain(
    data: Dataset,
    hyper: Hyperparams,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> ChainTrace:
    rng = make_rng(config.seed) if rng is None else rng
    if data.g + data.m == 0:
        raise ConfigError("dataset has no covariates")
    rows = None
    if config.subsample_fraction < 1.0:
        size = max(2, int(round(config.subsample_fraction * data.n)))
        rows = rng.choice(data.n, size=size, replace=False)
    cache = AssociationCache(data, rows)

    state = initial_state(data, rng, jitter=config.jitter_init)
    state = replace(state, latent=gibbs_update_latent(state, data, rng))

    trace = ChainTrace(log_posterior=np.empty(config.iterations))
    for it in range(1, config.iterations + 1):
        state, accepted, move = ddrj_step(
            state, data, hyper, rng, config.mode, config.space_prob_override, cache
        )
        key = f"{move.space}_{move.kind}"
        trace.attempts[key] += 1
        trace.accepts[key] += accepted
        lp = log_posterior(state, data, hyper)
        trace.log_posterior[it - 1] = lp
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            trace.samples.append(Sample(
                it, state.active_rois, state.active_snps,
                state.beta.copy(), state.alpha.copy(), state.delta.copy(), lp,
            ))
    return trace


def chain_seeds(seed: int, chains: int) -> list[np.random.SeedSequence]:
    if chains == 1:
        return [np.random.SeedSequence(seed)]
    return np.random.SeedSequence(seed).spawn(chains)


def _run_one(args):
    data, hyper, config, seq = args
    return run_chain(data, hyper, config, make_rng(seq))


def run_chains(data: Dataset, hyper: Hyperparams, config: RunConfig, jobs: int = 1) -> list[ChainTrace]:
    """``config.chains`` independent chains; results do not depend on ``jobs``."""
    tasks = [(data, hyper, config, s) for s in chain_seeds(config.seed, config.chains)]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_one, tasks))


def inclusion_frequencies(traces: list[ChainTrace], g: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    roi = np.zeros(g)
    snp = np.zeros(m)
    total = 0
    for tr in traces:
        for s in tr.samples:
            roi[list(s.active_rois)] += 1
            snp[list(s.active_snps)] += 1
            total += 1
    if total == 0:
        return roi, snp
    return roi / total, snp / total


@dataclass(frozen=True)
class PreSelection:
    data: Dataset
    roi_index: np.ndarray
    snp_index: np.ndarray


def pre_select(data: Dataset, hyper: Hyperparams, config: RunConfig, jobs: int = 1) -> PreSelection:
    """Screen each covariate class with its own chain, keep mppi >= threshold.

    The ROI-only and SNP-only chains use the same run settings as the main
    run. ``roi_index``/``snp_index`` map reduced columns back to ``data``.
    """
    threshold = config.pre_selection_threshold
    if threshold is None:
        raise ConfigError("pre_selection_threshold is not set")
    sub = replace(config, pre_selection_threshold=None)
    keep_roi = np.zeros(0, dtype=int)
    keep_snp = np.zeros(0, dtype=int)
    if data.g:
        traces = run_chains(data.roi_only(), hyper, replace(sub, seed=config.seed + 1), jobs)
        mppi, _ = inclusion_frequencies(traces, data.g, 0)
        keep_roi = np.flatnonzero(mppi >= threshold)
    if data.m:
        traces = run_chains(data.snp_only(), hyper, replace(sub, seed=config.seed + 2), jobs)
        _, mppi = inclusion_frequencies(traces, 0, data.m)
        keep_snp = np.flatnonzero(mppi >= threshold)
    if keep_roi.size + keep_snp.size == 0:
        raise EmptySelection(f"no covariate reached mppi {threshold}")
    return PreSelection(data.select_columns(keep_roi, keep_snp), keep_roi, keep_snp)


@dataclass(frozen=True)
class FitResult:
    """Chains fitted on ``data``; ``roi_index``/``snp_index`` map its columns
    back to the dataset the fit was requested on."""

    traces: list[ChainTrace]
    data: Dataset
    roi_index: np.ndarray
    snp_index: np.ndarray

    @property
    def samples(self) -> list[Sample]:
        return [s for tr in self.traces for s in tr.samples]


def fit_model(data: Dataset, hyper: Hyperparams, config: RunConfig, jobs: int = 1) -> FitResult:
    """Optional pre-selection, then ``config.chains`` chains on the kept columns.

    If nothing passes the pre-selection threshold the full covariate set is
    used instead.
    """
    roi_index = np.arange(data.g)
    snp_index = np.arange(data.m)
    work = data
    if config.pre_selection_threshold is not None:
        try:
            sel = pre_select(data, hyper, config, jobs)
        except EmptySelection:
            log.warning("pre-selection kept nothing; falling back to all covariates")
        else:
            work, roi_index, snp_index = sel.data, sel.roi_index, sel.snp_index
    traces = run_chains(work, hyper, config, jobs)
    return FitResult(traces, work, roi_index, snp_index)

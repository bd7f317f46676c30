"""Candidate-selection distributions for birth and death moves.

Births favour inactive covariates that look associated with the current
residuals (|Pearson correlation| for ROIs, Kruskal-Wallis H for SNPs);
deaths favour active covariates with small coefficients. Every weight is
floored at ``WEIGHT_FLOOR`` before normalization so each legal move keeps
positive probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset, ModelState, residuals
from .numerics import abs_correlations, kruskal_wallis_columns

WEIGHT_FLOOR = 1e-8

ROI = "roi"
SNP = "snp"
BIRTH = "birth"
DEATH = "death"

DATA_DRIVEN = "ddrj"
UNIFORM = "rj"


@dataclass(frozen=True)
class MoveChoice:
    space: str
    kind: str
    candidate: int
    log_selection_prob: float
    log_kind_prob: float


def jump_space_prob(g: int, m: int) -> float:
    if g + m < 1:
        raise ValueError("no covariates to select from")
    return g / (g + m)


def move_kind_probs(active: int, max_active: int) -> tuple[float, float]:
    if not 0 <= active <= max_active:
        raise ValueError("active count out of range")
    if active == 0:
        return 1.0, 0.0
    if active == max_active:
        return 0.0, 1.0
    return 0.5, 0.5


def _normalize(raw: np.ndarray) -> np.ndarray:
    raw = np.where(np.isfinite(raw), raw, 0.0)
    w = np.maximum(raw, WEIGHT_FLOOR)
    return w / w.sum()


class AssociationCache:
    """Per-dataset precomputation for the birth weights.

    ``rows`` restricts the association measures to a fixed subsample of
    observations; ``None`` uses every row.
    """

    def __init__(self, data: Dataset, rows: np.ndarray | None = None):
        self.rows = None if rows is None else np.sort(np.asarray(rows))
        x = data.x if rows is None else data.x[self.rows]
        z = data.z if rows is None else data.z[self.rows]
        self.x_centered = x - x.mean(axis=0)
        self.x_norms = np.sqrt(np.sum(self.x_centered**2, axis=0))
        # indicators of levels -1 and 0 side by side; level 1 is implied
        self.levels = np.hstack([(z == -1.0), (z == 0.0)]).astype(float)
        self.level_counts = np.stack([(z == lev).sum(axis=0) for lev in (-1.0, 0.0, 1.0)]).astype(float)

    def restrict(self, xi: np.ndarray) -> np.ndarray:
        return xi if self.rows is None else xi[self.rows]


def roi_birth_weights(xi, data: Dataset, inactive, cache: AssociationCache | None = None) -> np.ndarray:
    inactive = np.asarray(inactive, dtype=int)
    cache = cache or AssociationCache(data)
    # scoring every column and subsetting is cheaper than gathering columns
    r = abs_correlations(cache.x_centered, cache.x_norms, cache.restrict(xi))
    return _normalize(r[inactive])


def roi_death_weights(beta) -> np.ndarray:
    """Inverse-magnitude weights over active ROI coefficients (no intercept)."""
    b = np.abs(np.asarray(beta, dtype=float))
    return _normalize(1.0 / np.maximum(b, WEIGHT_FLOOR))


def snp_birth_weights(xi, data: Dataset, inactive, cache: AssociationCache | None = None) -> np.ndarray:
    inactive = np.asarray(inactive, dtype=int)
    cache = cache or AssociationCache(data)
    h = kruskal_wallis_columns(cache.restrict(xi), cache.levels, cache.level_counts)
    return _normalize(h[inactive])


def snp_death_weights(alpha, delta) -> np.ndarray:
    size = np.abs(np.asarray(alpha, dtype=float)) + np.abs(np.asarray(delta, dtype=float))
    return _normalize(1.0 / np.maximum(size, WEIGHT_FLOOR))


def legal_candidates(state: ModelState, data: Dataset, space: str, kind: str) -> np.ndarray:
    if kind == DEATH:
        return np.asarray(state.active_rois if space == ROI else state.active_snps, dtype=int)
    total, active = (data.g, state.active_rois) if space == ROI else (data.m, state.active_snps)
    mask = np.ones(total, dtype=bool)
    mask[list(active)] = False
    return np.flatnonzero(mask)


def selection_weights(
    state: ModelState,
    data: Dataset,
    space: str,
    kind: str,
    mode: str = DATA_DRIVEN,
    cache: AssociationCache | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Legal candidates for (space, kind) and their selection probabilities."""
    cand = legal_candidates(state, data, space, kind)
    if cand.size == 0:
        return cand, np.zeros(0)
    if mode == UNIFORM:
        return cand, np.full(cand.size, 1.0 / cand.size)
    if mode != DATA_DRIVEN:
        raise ValueError(f"unknown proposal mode {mode!r}")
    if kind == BIRTH:
        xi = residuals(state, data)
        if space == ROI:
            return cand, roi_birth_weights(xi, data, cand, cache)
        return cand, snp_birth_weights(xi, data, cand, cache)
    if space == ROI:
        return cand, roi_death_weights(state.beta[1:])
    return cand, snp_death_weights(state.alpha, state.delta)


def kind_prob(state: ModelState, data: Dataset, space: str, kind: str) -> float:
    if space == ROI:
        pb, pd = move_kind_probs(state.P, data.g)
    else:
        pb, pd = move_kind_probs(state.K, data.m)
    return pb if kind == BIRTH else pd


def log_selection_prob(
    state: ModelState,
    data: Dataset,
    space: str,
    kind: str,
    candidate: int,
    mode: str = DATA_DRIVEN,
    cache: AssociationCache | None = None,
) -> float:
    cand, w = selection_weights(state, data, space, kind, mode, cache)
    hit = np.flatnonzero(cand == candidate)
    if hit.size == 0:
        return -math.inf
    return math.log(w[hit[0]])


def draw_move(
    state: ModelState,
    data: Dataset,
    rng: np.random.Generator,
    mode: str = DATA_DRIVEN,
    space_prob: float | None = None,
    cache: AssociationCache | None = None,
) -> MoveChoice:
    """Pick a space, a move kind and a candidate covariate.

    Exactly three uniforms are consumed per call regardless of mode, so
    data-driven and uniform runs share their random stream.
    """
    s = jump_space_prob(data.g, data.m) if space_prob is None else space_prob
    if data.g == 0:
        s = 0.0
    elif data.m == 0:
        s = 1.0
    u_space, u_kind, u_cand = rng.random(3)
    space = ROI if u_space < s else SNP
    pb = kind_prob(state, data, space, BIRTH)
    kind = BIRTH if u_kind < pb else DEATH
    cand, w = selection_weights(state, data, space, kind, mode, cache)
    j = int(np.searchsorted(np.cumsum(w), u_cand * w.sum(), side="right"))
    j = min(j, cand.size - 1)
    return MoveChoice(
        space=space,
        kind=kind,
        candidate=int(cand[j]),
        log_selection_prob=math.log(w[j]),
        log_kind_prob=math.log(pb if kind == BIRTH else 1.0 - pb),
    )

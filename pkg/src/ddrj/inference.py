"""Posterior summaries, model-averaged prediction and predictive metrics."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import DimensionMismatch, EmptyTrace, FoldDegenerate, LengthMismatch, SingleClass, UnknownColumn
from .model import Dataset, Hyperparams
from .numerics import make_rng
from .sampler import ChainTrace, FitResult, RunConfig, Sample, fit_model

log = logging.getLogger(__name__)

Signature = tuple[tuple[int, ...], tuple[int, ...]]


def collect_samples(trace) -> list[Sample]:
    """Flatten a ChainTrace, FitResult, or a sequence of either / of Samples.

    FitResult samples are translated back to the columns of the dataset the
    fit was requested on, undoing any pre-selection.
    """
    if isinstance(trace, FitResult):
        return remap_samples(trace.samples, trace.roi_index, trace.snp_index)
    if isinstance(trace, ChainTrace):
        return list(trace.samples)
    out: list[Sample] = []
    for item in trace:
        if isinstance(item, Sample):
            out.append(item)
        else:
            out.extend(collect_samples(item))
    return out


def _aligned(sample: Sample) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients reordered to sorted covariate indices (intercept first)."""
    ro = np.argsort(sample.active_rois, kind="stable")
    so = np.argsort(sample.active_snps, kind="stable")
    beta = np.concatenate([sample.beta[:1], sample.beta[1:][ro]])
    return beta, sample.alpha[so], sample.delta[so], ro


@dataclass
class PosteriorSummary:
    """Inclusion probabilities, ranked model table and coefficient moments.

    Coefficients are on the input scale of the ROI columns. With
    ``conditional`` set, moments use only the samples in which the
    covariate is active (NaN if it never is); otherwise inactive samples
    count as zeros.
    """

    roi_names: list[str]
    snp_names: list[str]
    mppi_roi: np.ndarray
    mppi_snp: np.ndarray
    model_table: list[tuple[Signature, float]]
    intercept_mean: float
    intercept_sd: float
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    alpha_mean: np.ndarray
    alpha_sd: np.ndarray
    delta_mean: np.ndarray
    delta_sd: np.ndarray
    n_samples: int
    conditional: bool = True

    def signature_labels(self, sig: Signature) -> tuple[list[str], list[str]]:
        return [self.roi_names[j] for j in sig[0]], [self.snp_names[k] for k in sig[1]]

    @property
    def top_model(self) -> tuple[Signature, float]:
        return self.model_table[0]


def original_scale(sample: Sample, data: Dataset) -> tuple[float, np.ndarray]:
    """Intercept and ROI slopes of one sample mapped back to raw ROI units."""
    rois = list(sample.active_rois)
    slopes = sample.beta[1:] / data.x_scale[rois]
    b0 = sample.beta[0] - float(slopes @ data.x_center[rois])
    return b0, slopes


def summarize(trace, data: Dataset, conditional: bool = True) -> PosteriorSummary:
    samples = collect_samples(trace)
    if not samples:
        raise EmptyTrace("trace has no retained samples")
    g, m, n_s = data.g, data.m, len(samples)

    width = 1 + g + 2 * m
    total = np.zeros(width)
    count = np.zeros(width)
    rows = []
    for s in samples:
        b0, slopes = original_scale(s, data)
        idx = np.concatenate([
            [0], 1 + np.asarray(s.active_rois, dtype=int),
            1 + g + np.asarray(s.active_snps, dtype=int),
            1 + g + m + np.asarray(s.active_snps, dtype=int),
        ]).astype(int)
        vals = np.concatenate([[b0], slopes, s.alpha, s.delta])
        rows.append((idx, vals))
        total[idx] += vals
        count[idx] += 1

    mppi = count[1:] / n_s
    denom = count if conditional else np.full(width, float(n_s))
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / denom
    sq = np.zeros(width)
    for idx, vals in rows:
        sq[idx] += (vals - mean[idx]) ** 2
    if not conditional:
        # inactive samples contribute (0 - mean)^2
        sq += (n_s - count) * np.nan_to_num(mean) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.sqrt(sq / (denom - 1))
    sd[denom < 2] = np.nan

    counts = Counter(s.signature() for s in samples)
    table = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    model_table = [(sig, c / n_s) for sig, c in table]

    r = slice(1, 1 + g)
    a = slice(1 + g, 1 + g + m)
    d = slice(1 + g + m, width)
    return PosteriorSummary(
        roi_names=list(data.roi_names),
        snp_names=list(data.snp_names),
        mppi_roi=mppi[:g].copy(),
        mppi_snp=mppi[g:g + m].copy(),
        model_table=model_table,
        intercept_mean=float(mean[0]),
        intercept_sd=float(sd[0]),
        beta_mean=mean[r].copy(),
        beta_sd=sd[r].copy(),
        alpha_mean=mean[a].copy(),
        alpha_sd=sd[a].copy(),
        delta_mean=mean[d].copy(),
        delta_sd=sd[d].copy(),
        n_samples=n_s,
        conditional=conditional,
    )


def select(summary: PosteriorSummary, threshold: float = 0.5) -> list[str]:
    """Labels whose mppi is strictly above ``threshold``, ROIs first."""
    if not 0 <= threshold < 1:
        raise ValueError("threshold must be in [0, 1)")
    rois = [nm for nm, p in zip(summary.roi_names, summary.mppi_roi) if p > threshold]
    snps = [nm for nm, p in zip(summary.snp_names, summary.mppi_snp) if p > threshold]
    return rois + snps


@dataclass(frozen=True)
class AveragedModel:
    signature: Signature
    weight: float
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray

    def predictor(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        rois, snps = self.signature
        rois, snps = list(rois), list(snps)
        eta = self.beta[0] + x[:, rois] @ self.beta[1:]
        return eta + z[:, snps] @ self.alpha + (1.0 - np.abs(z[:, snps])) @ self.delta


def model_average(trace) -> list[AveragedModel]:
    """Visited models with visit-frequency weights and posterior-mean coefficients."""
    samples = collect_samples(trace)
    if not samples:
        raise EmptyTrace("trace has no retained samples")
    groups: dict[Signature, list[Sample]] = defaultdict(list)
    for s in samples:
        groups[s.signature()].append(s)
    out = []
    for sig in sorted(groups, key=lambda k: (-len(groups[k]), k)):
        members = groups[sig]
        parts = [_aligned(s)[:3] for s in members]
        out.append(AveragedModel(
            sig,
            len(members) / len(samples),
            np.mean([p[0] for p in parts], axis=0),
            np.mean([p[1] for p in parts], axis=0),
            np.mean([p[2] for p in parts], axis=0),
        ))
    return out


def bma_predict(trace, x_new, z_new=None) -> tuple[np.ndarray, np.ndarray]:
    """Model-averaged latent prediction and P(y = 1) for new rows.

    ``x_new`` must be on the same scale as the coefficients in ``trace``
    (standardized with the training transform for raw chain output).
    """
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    z_new = np.zeros((x_new.shape[0], 0)) if z_new is None else np.atleast_2d(np.asarray(z_new, dtype=float))
    if x_new.shape[0] != z_new.shape[0]:
        raise DimensionMismatch("x_new and z_new must have the same number of rows")
    models = model_average(trace)
    ystar = np.zeros(x_new.shape[0])
    for mod in models:
        rois, snps = mod.signature
        if rois and max(rois) >= x_new.shape[1]:
            raise UnknownColumn(f"ROI column {max(rois)} missing from new data")
        if snps and max(snps) >= z_new.shape[1]:
            raise UnknownColumn(f"SNP column {max(snps)} missing from new data")
        ystar += mod.weight * mod.predictor(x_new, z_new)
    return ystar, ndtr(ystar)


def classify(probability):
    """1 where probability > 0.5 (strict), else 0."""
    p = np.asarray(probability, dtype=float)
    out = (p > 0.5).astype(int)
    return int(out) if out.ndim == 0 else out


def mce(predicted, actual) -> float:
    predicted = np.asarray(predicted).ravel()
    actual = np.asarray(actual).ravel()
    if predicted.size != actual.size or predicted.size == 0:
        raise LengthMismatch("predicted and actual must have equal, nonzero length")
    return float(np.mean(predicted != actual))


def auc(scores, actual) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=float).ravel()
    actual = np.asarray(actual).ravel()
    if scores.size != actual.size:
        raise LengthMismatch("scores and actual must have equal length")
    pos = actual == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def stratified_folds(y, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise FoldDegenerate("need at least two folds")
    order = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise FoldDegenerate(f"class {cls} has {idx.size} rows, fewer than k={k}")
        order.append(rng.permutation(idx))
    order = np.concatenate(order)
    folds = np.empty(y.size, dtype=int)
    folds[order] = np.arange(order.size) % k
    return folds


@dataclass
class PredictionReport:
    """Held-out predictions for every row plus per-fold metrics.

    Spread across folds is the sample standard deviation (``*_sd``), not
    divided by the square root of the fold count.
    """

    ystar: np.ndarray
    probability: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray
    fold: np.ndarray
    fold_mce: np.ndarray
    fold_auc: np.ndarray

    @property
    def mce_mean(self) -> float:
        return float(np.mean(self.fold_mce))

    @property
    def mce_sd(self) -> float:
        return float(np.std(self.fold_mce, ddof=1)) if self.fold_mce.size > 1 else math.nan

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.fold_auc))

    @property
    def auc_sd(self) -> float:
        return float(np.std(self.fold_auc, ddof=1)) if self.fold_auc.size > 1 else math.nan


def predict_rows(fit: FitResult, x_raw: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """BMA prediction for raw rows using the fit's standardization and columns."""
    x = fit.data.transform(np.asarray(x_raw, dtype=float)[:, fit.roi_index])
    return bma_predict(fit.samples, x, np.asarray(z, dtype=float)[:, fit.snp_index])


def _run_fold(args):
    data, hyper, config, train, test, seed = args
    train_data = data.subset_rows(train)
    fit = fit_model(train_data, hyper, replace(config, seed=seed), jobs=1)
    return predict_rows(fit, data.x_raw[test], data.z[test])


def cross_validate(
    data: Dataset, hyper: Hyperparams, config: RunConfig, k: int = 5, jobs: int = 1
) -> PredictionReport:
    """Seeded stratified k-fold evaluation; ROI scaling is fit on training rows only."""
    seeds = np.random.SeedSequence(config.seed).spawn(k + 1)
    folds = stratified_folds(data.y, k, make_rng(seeds[0]))
    tasks = []
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        if np.unique(data.y[train]).size < 2:
            raise FoldDegenerate(f"training rows of fold {f} hold a single class")
        tasks.append((data, hyper, config, train, test, int(seeds[f + 1].generate_state(1)[0])))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, k)) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    ystar = np.empty(data.n)
    prob = np.empty(data.n)
    fold_mce = np.empty(k)
    fold_auc = np.empty(k)
    for f, ((ys, pr), task) in enumerate(zip(results, tasks)):
        test = task[4]
        ystar[test] = ys
        prob[test] = pr
        fold_mce[f] = mce(classify(pr), data.y[test])
        fold_auc[f] = auc(pr, data.y[test])
        log.info("fold %d: MCE %.3f AUC %.3f", f + 1, fold_mce[f], fold_auc[f])
    return PredictionReport(ystar, prob, classify(prob), data.y.astype(int), folds, fold_mce, fold_auc)


def inclusion_from_table(summary: PosteriorSummary) -> tuple[np.ndarray, np.ndarray]:
    """mppi recomputed from the model table (sum of probabilities of models containing each covariate)."""
    roi = np.zeros(len(summary.roi_names))
    snp = np.zeros(len(summary.snp_names))
    for (rois, snps), p in summary.model_table:
        roi[list(rois)] += p
        snp[list(snps)] += p
    return roi, snp


def remap_samples(samples: Iterable[Sample], roi_index: Sequence[int], snp_index: Sequence[int]) -> list[Sample]:
    """Translate sample covariate indices through column index maps."""
    out = []
    for s in samples:
        out.append(replace(
            s,
            active_rois=tuple(int(roi_index[j]) for j in s.active_rois),
            active_snps=tuple(int(snp_index[k]) for k in s.active_snps),
        ))
    return out

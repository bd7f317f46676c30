"""Probit data-augmentation model with numeric and 3-level categorical covariates.

The latent outcome is

    y*_i = b0 + sum_{p in G} b_p x_ip + sum_{k in M} (a_k z_ik + d_k (1 - |z_ik|)) + e_i

with e_i ~ N(0, 1) and y_i = 1{y*_i > 0}. Numeric covariates are stored
standardized; the centering and scaling used are kept on the dataset so
coefficients can be mapped back to the input scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionMismatch
from .numerics import (
    LOG_2PI,
    chol_solve,
    chol_spd,
    mvn_logpdf_precision,
    sample_mvn_precision,
    truncated_normal_at_zero,
)


@dataclass(frozen=True)
class Hyperparams:
    var_beta: float = 25.0
    var_alpha: float = 25.0
    var_delta: float = 25.0

    def __post_init__(self):
        for name in ("var_beta", "var_alpha", "var_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(eq=False)
class Dataset:
    """Binary outcome with ROI (numeric) and SNP (-1/0/1) covariates.

    ``x`` holds the standardized ROI matrix; ``x_raw`` the values as given.
    ``x_center``/``x_scale`` define the transform, which can be fitted on
    another dataset (e.g. a training fold) and reused via :meth:`transform`.
    """

    y: np.ndarray
    x_raw: np.ndarray
    z: np.ndarray
    roi_names: list[str]
    snp_names: list[str]
    x_center: np.ndarray
    x_scale: np.ndarray
    x: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)
    full: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = (self.x_raw - self.x_center) / self.x_scale
        g, m = x.shape[1], self.z.shape[1]
        # [1 | X | Z | W] in one column-major block; x, z and w are views into
        # it so column gathers stay cheap
        self.full = np.asfortranarray(np.hstack([np.ones((self.n, 1)), x, self.z, 1.0 - np.abs(self.z)]))
        self.x1 = self.full[:, : 1 + g]
        self.x = self.full[:, 1 : 1 + g]
        self.z = self.full[:, 1 + g : 1 + g + m]
        self.w = self.full[:, 1 + g + m :]
        self.positive = self.y == 1

    @classmethod
    def from_arrays(
        cls,
        y,
        x=None,
        z=None,
        roi_names=None,
        snp_names=None,
        standardize: bool = True,
        center=None,
        scale=None,
    ) -> "Dataset":
        y = np.asarray(y)
        n = y.shape[0] if y.ndim == 1 else -1
        if y.ndim != 1:
            raise DataError("y must be a vector")
        if n < 2:
            raise DataError("need at least two observations")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("y entries must be 0 or 1")
        x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float)
        z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float)
        if x.ndim != 2 or x.shape[0] != n or z.ndim != 2 or z.shape[0] != n:
            raise DimensionMismatch("covariate matrices must have one row per outcome")
        if not np.all(np.isfinite(x)):
            raise DataError("ROI values must be finite")
        if not np.all((z == -1) | (z == 0) | (z == 1)):
            raise DataError("SNP entries must be -1, 0 or 1")
        g, m = x.shape[1], z.shape[1]
        roi_names = [f"roi_{j + 1}" for j in range(g)] if roi_names is None else list(roi_names)
        snp_names = [f"snp_{k + 1}" for k in range(m)] if snp_names is None else list(snp_names)
        if len(roi_names) != g or len(snp_names) != m:
            raise DimensionMismatch("label count does not match column count")
        if len(set(roi_names) | set(snp_names)) != g + m:
            raise DataError("column labels must be unique")
        if center is None or scale is None:
            if standardize and g:
                center = x.mean(axis=0)
                scale = x.std(axis=0)
                scale = np.where(scale > 0, scale, 1.0)
            else:
                center, scale = np.zeros(g), np.ones(g)
        return cls(
            y=y.astype(np.int8),
            x_raw=x,
            z=z,
            roi_names=roi_names,
            snp_names=snp_names,
            x_center=np.asarray(center, dtype=float),
            x_scale=np.asarray(scale, dtype=float),
        )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def g(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.z.shape[1]

    def transform(self, x_raw: np.ndarray) -> np.ndarray:
        return (np.asarray(x_raw, dtype=float) - self.x_center) / self.x_scale

    def subset_rows(self, rows, standardize: bool = True) -> "Dataset":
        """Row subset, re-fitting the standardization on those rows."""
        rows = np.asarray(rows)
        return Dataset.from_arrays(
            self.y[rows], self.x_raw[rows], self.z[rows], self.roi_names, self.snp_names,
            standardize=standardize,
        )

    def rows_like(self, rows) -> "Dataset":
        """Row subset keeping this dataset's standardization."""
        rows = np.asarray(rows)
        return Dataset.from_arrays(
            self.y[rows], self.x_raw[rows], self.z[rows], self.roi_names, self.snp_names,
            center=self.x_center, scale=self.x_scale,
        )

    def select_columns(self, rois, snps) -> "Dataset":
        """Column subset; the existing per-column transform is kept."""
        rois = np.asarray(rois, dtype=int)
        snps = np.asarray(snps, dtype=int)
        return Dataset.from_arrays(
            self.y,
            self.x_raw[:, rois],
            self.z[:, snps],
            [self.roi_names[j] for j in rois],
            [self.snp_names[k] for k in snps],
            center=self.x_center[rois],
            scale=self.x_scale[rois],
        )

    def roi_only(self) -> "Dataset":
        return self.select_columns(np.arange(self.g), [])

    def snp_only(self) -> "Dataset":
        return self.select_columns([], np.arange(self.m))


@dataclass(eq=False)
class ModelState:
    """Active covariate sets, coefficients, and latent outcomes.

    ``beta`` has the intercept first followed by one entry per index in
    ``active_rois`` (same order); ``alpha``/``delta`` follow ``active_snps``.
    """

    active_rois: tuple[int, ...]
    active_snps: tuple[int, ...]
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    latent: np.ndarray

    @property
    def P(self) -> int:
        return len(self.active_rois)

    @property
    def K(self) -> int:
        return len(self.active_snps)

    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.beta, self.alpha, self.delta])

    def with_coefficients(self, gamma: np.ndarray) -> "ModelState":
        p1 = self.P + 1
        k = self.K
        return replace(
            self,
            beta=gamma[:p1].copy(),
            alpha=gamma[p1:p1 + k].copy(),
            delta=gamma[p1 + k:].copy(),
        )

    def signature(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(sorted(self.active_rois)), tuple(sorted(self.active_snps))

    def check(self, data: Dataset) -> None:
        if len(self.beta) != self.P + 1 or len(self.alpha) != self.K or len(self.delta) != self.K:
            raise DimensionMismatch("coefficient lengths do not match active sets")
        if self.latent.shape != (data.n,):
            raise DimensionMismatch("latent vector length does not match data")
        if any(not 0 <= j < data.g for j in self.active_rois):
            raise DimensionMismatch("ROI index out of range")
        if any(not 0 <= k < data.m for k in self.active_snps):
            raise DimensionMismatch("SNP index out of range")


def initial_state(data: Dataset, rng: np.random.Generator | None = None, jitter: bool = False) -> ModelState:
    """Intercept-only state with latent outcomes at +/-0.5 by class.

    With ``jitter`` the intercept and latent values get U(0, 1) perturbations
    (sign-preserving for the latent values), for multi-chain diagnostics.
    """
    sign = np.where(data.y == 1, 1.0, -1.0)
    latent = 0.5 * sign
    beta = np.zeros(1)
    if jitter:
        latent = sign * rng.uniform(0.0, 1.0, data.n)
        beta = rng.uniform(-1.0, 1.0, 1)
    return ModelState((), (), beta, np.zeros(0), np.zeros(0), latent)


def design(active_rois, active_snps, data: Dataset) -> np.ndarray:
    """Columns [1 | X_G | Z_M | 1-|Z_M|] for the given active sets."""
    g, m = data.g, data.m
    cols = ((0,) + tuple(j + 1 for j in active_rois)
            + tuple(1 + g + k for k in active_snps) + tuple(1 + g + m + k for k in active_snps))
    return data.full[:, cols]


def prior_variances(P: int, K: int, hyper: Hyperparams) -> np.ndarray:
    return np.concatenate([
        np.full(P + 1, hyper.var_beta),
        np.full(K, hyper.var_alpha),
        np.full(K, hyper.var_delta),
    ])


def _eta(state: ModelState, data: Dataset) -> np.ndarray:
    eta = state.beta[0] + data.x[:, state.active_rois] @ state.beta[1:]
    if state.active_snps:
        snps = state.active_snps
        eta += data.z[:, snps] @ state.alpha + data.w[:, snps] @ state.delta
    return eta


def linear_predictor(state: ModelState, data: Dataset) -> np.ndarray:
    state.check(data)
    return _eta(state, data)


def residuals(state: ModelState, data: Dataset) -> np.ndarray:
    return state.latent - _eta(state, data)


def log_likelihood(state: ModelState, data: Dataset) -> float:
    """Augmented log-likelihood of the latent outcomes; -inf on sign conflict."""
    lat = state.latent
    if not np.array_equal(lat >= 0, data.positive):
        return -math.inf
    xi = lat - _eta(state, data)
    return float(-0.5 * data.n * LOG_2PI - 0.5 * (xi @ xi))


def log_size_prior(P: int, K: int, g: int, m: int) -> float:
    """log pi(P) + log pi(K): uniform on {0..g} and {0..m}."""
    return -math.log(g + 1) - math.log(m + 1)


def log_model_prior(P: int, K: int, g: int, m: int) -> float:
    """Prior mass of one specific covariate set of sizes (P, K).

    Sizes are uniform and, given its size, every set is equally likely, so
    each set carries pi(P) / C(g, P) * pi(K) / C(m, K).
    """
    return (
        log_size_prior(P, K, g, m)
        - math.lgamma(g + 1) + math.lgamma(P + 1) + math.lgamma(g - P + 1)
        - math.lgamma(m + 1) + math.lgamma(K + 1) + math.lgamma(m - K + 1)
    )


def _gaussian_logpdf(v: np.ndarray, var: float) -> float:
    return float(-0.5 * v.size * (LOG_2PI + math.log(var)) - 0.5 * (v @ v) / var)


def log_prior(state: ModelState, hyper: Hyperparams, data: Dataset | None = None) -> float:
    lp = (
        _gaussian_logpdf(state.beta, hyper.var_beta)
        + _gaussian_logpdf(state.alpha, hyper.var_alpha)
        + _gaussian_logpdf(state.delta, hyper.var_delta)
    )
    if data is not None:
        lp += log_model_prior(state.P, state.K, data.g, data.m)
    return lp


def log_posterior(state: ModelState, data: Dataset, hyper: Hyperparams) -> float:
    return log_likelihood(state, data) + log_prior(state, hyper, data)


# Full conditionals. Each block is Gaussian with precision I/var + D'D and
# mean (precision)^-1 D' r, r being the latent vector minus the other blocks.

def _precision(d: np.ndarray, var) -> np.ndarray:
    prec = d.T @ d
    prec.flat[:: prec.shape[0] + 1] += 1.0 / var
    return prec


def _block_conditional(d: np.ndarray, target: np.ndarray, var: float):
    L = chol_spd(_precision(d, var))
    return chol_solve(L, d.T @ target), L


def _cov_from_chol(L: np.ndarray) -> np.ndarray:
    if L.size == 0:
        return np.zeros((0, 0))
    inv_l = np.linalg.solve(L, np.eye(L.shape[0]))
    return inv_l.T @ inv_l


def _beta_block(state: ModelState, data: Dataset):
    snps = state.active_snps
    d = data.x1[:, (0,) + tuple(j + 1 for j in state.active_rois)]
    target = state.latent - data.z[:, snps] @ state.alpha - data.w[:, snps] @ state.delta
    return d, target


def _alpha_block(state: ModelState, data: Dataset):
    snps = state.active_snps
    d = data.z[:, snps]
    target = (state.latent - state.beta[0] - data.x[:, state.active_rois] @ state.beta[1:]
              - data.w[:, snps] @ state.delta)
    return d, target


def _delta_block(state: ModelState, data: Dataset):
    snps = state.active_snps
    d = data.w[:, snps]
    target = (state.latent - state.beta[0] - data.x[:, state.active_rois] @ state.beta[1:]
              - data.z[:, snps] @ state.alpha)
    return d, target


def full_conditional_beta(state: ModelState, data: Dataset, hyper: Hyperparams):
    """Mean and covariance of beta | latent, alpha, delta.

    Covariances come from the Cholesky factor of the precision; nothing is
    inverted directly.
    """
    state.check(data)
    mean, L = _block_conditional(*_beta_block(state, data), hyper.var_beta)
    return mean, _cov_from_chol(L)


def full_conditional_alpha(state: ModelState, data: Dataset, hyper: Hyperparams):
    state.check(data)
    mean, L = _block_conditional(*_alpha_block(state, data), hyper.var_alpha)
    return mean, _cov_from_chol(L)


def full_conditional_delta(state: ModelState, data: Dataset, hyper: Hyperparams):
    state.check(data)
    mean, L = _block_conditional(*_delta_block(state, data), hyper.var_delta)
    return mean, _cov_from_chol(L)


def gibbs_update_latent(state: ModelState, data: Dataset, rng: np.random.Generator) -> np.ndarray:
    return truncated_normal_at_zero(_eta(state, data), data.positive, rng)


def gibbs_sweep(state: ModelState, data: Dataset, hyper: Hyperparams, rng: np.random.Generator) -> ModelState:
    """One intra-model pass: beta, alpha, delta, then the latent outcomes."""
    s = ModelState(state.active_rois, state.active_snps, state.beta, state.alpha, state.delta, state.latent)
    mean, L = _block_conditional(*_beta_block(s, data), hyper.var_beta)
    s.beta = sample_mvn_precision(mean, L, rng)
    if s.K:
        mean, L = _block_conditional(*_alpha_block(s, data), hyper.var_alpha)
        s.alpha = sample_mvn_precision(mean, L, rng)
        mean, L = _block_conditional(*_delta_block(s, data), hyper.var_delta)
        s.delta = sample_mvn_precision(mean, L, rng)
    s.latent = gibbs_update_latent(s, data, rng)
    return s


# Joint conditional of all coefficients given the latent outcomes. Used as
# the parameter proposal for between-model moves; it factorizes as
# p(beta | y*) p(alpha | beta, y*) p(delta | beta, alpha, y*).

@dataclass(frozen=True)
class JointConditional:
    mean: np.ndarray
    prec_chol: np.ndarray

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_mvn_precision(self.mean, self.prec_chol, rng)

    def logpdf(self, gamma: np.ndarray) -> float:
        return mvn_logpdf_precision(gamma, self.mean, self.prec_chol)


def joint_conditional(active_rois, active_snps, latent, data: Dataset, hyper: Hyperparams) -> JointConditional:
    d = design(active_rois, active_snps, data)
    var = prior_variances(len(active_rois), len(active_snps), hyper)
    L = chol_spd(_precision(d, var))
    return JointConditional(chol_solve(L, d.T @ latent), L)

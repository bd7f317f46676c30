"""Synthetic datasets with known sparse effects.

A :class:`Scenario` fixes the design distribution (multivariate normal ROIs,
independent 3-level SNPs) and the true probit coefficients. Effect maps are
keyed by 1-based covariate index, as in the labels ``roi_1``, ``snp_1``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, UnknownScenario
from .model import Dataset
from .numerics import cholesky, make_rng

DEFAULT_SNP_PROBS = (0.25, 0.5, 0.25)


@dataclass
class Scenario:
    name: str
    n: int
    g: int
    m: int
    intercept: float = 0.0
    roi_effects: dict[int, float] = field(default_factory=dict)
    snp_effects: dict[int, tuple[float, float]] = field(default_factory=dict)
    roi_mean: list[float] | None = None
    roi_cov: list[list[float]] | None = None
    # one (P(-1), P(0), P(1)) triple for every SNP, or a list of m triples
    snp_level_probs: tuple | list = DEFAULT_SNP_PROBS
    prior_variance: float = 25.0
    seed: int = 0

    def __post_init__(self):
        self.roi_effects = {int(k): float(v) for k, v in self.roi_effects.items()}
        self.snp_effects = {int(k): (float(v[0]), float(v[1])) for k, v in self.snp_effects.items()}
        self.validate()

    def validate(self) -> None:
        if self.n < 2 or self.g < 0 or self.m < 0:
            raise ConfigError("need n >= 2 and non-negative g, m")
        if any(not 1 <= j <= self.g for j in self.roi_effects):
            raise ConfigError("ROI effect index out of range")
        if any(not 1 <= k <= self.m for k in self.snp_effects):
            raise ConfigError("SNP effect index out of range")
        if self.roi_mean is not None and len(self.roi_mean) != self.g:
            raise ConfigError("roi_mean length must equal g")
        if self.roi_cov is not None and np.shape(self.roi_cov) != (self.g, self.g):
            raise ConfigError("roi_cov must be g x g")
        probs = self.level_probs()
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("SNP level probabilities must be non-negative and sum to 1")
        if not self.prior_variance > 0:
            raise ConfigError("prior_variance must be positive")

    def level_probs(self) -> np.ndarray:
        p = np.asarray(self.snp_level_probs, dtype=float)
        if p.shape == (3,):
            return np.tile(p, (self.m, 1))
        if p.shape != (self.m, 3):
            raise ConfigError("snp_level_probs must be one triple or m triples")
        return p

    def true_beta(self) -> np.ndarray:
        b = np.zeros(self.g)
        for j, v in self.roi_effects.items():
            b[j - 1] = v
        return b

    def true_alpha_delta(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.zeros(self.m)
        d = np.zeros(self.m)
        for k, (av, dv) in self.snp_effects.items():
            a[k - 1] = av
            d[k - 1] = dv
        return a, d

    def true_rois(self) -> tuple[int, ...]:
        """0-based indices of ROIs with non-zero effect."""
        return tuple(sorted(j - 1 for j, v in self.roi_effects.items() if v != 0))

    def true_snps(self) -> tuple[int, ...]:
        return tuple(sorted(k - 1 for k, (a, d) in self.snp_effects.items() if a != 0 or d != 0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snp_effects"] = {k: list(v) for k, v in self.snp_effects.items()}
        p = self.snp_level_probs
        d["snp_level_probs"] = [list(map(float, t)) for t in p] if np.ndim(p) == 2 else [float(v) for v in p]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        if "moments_file" in d:
            d.update(_load_moments(d.pop("moments_file")))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        probs = d.get("snp_level_probs")
        if probs is not None:
            d["snp_level_probs"] = tuple(probs) if np.ndim(probs) == 1 else [tuple(t) for t in probs]
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _load_moments(path) -> dict:
    """Empirical design moments from a ``.npz`` with optional arrays
    ``roi_mean``, ``roi_cov`` and ``snp_level_probs``."""
    with np.load(path) as f:
        return {k: f[k].tolist() for k in ("roi_mean", "roi_cov", "snp_level_probs") if k in f}


def scenario_to_yaml(sc: Scenario) -> str:
    return yaml.safe_dump(sc.to_dict(), sort_keys=False)


def scenario_from_yaml(text: str) -> Scenario:
    d = yaml.safe_load(text)
    if not isinstance(d, dict):
        raise ConfigError("scenario file must hold a mapping")
    return Scenario.from_dict(d)


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_yaml(Path(path).read_text())


def simulate_rois(sc: Scenario, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((sc.n, sc.g))
    if sc.roi_cov is not None:
        u = u @ cholesky(np.asarray(sc.roi_cov, dtype=float)).T
    if sc.roi_mean is not None:
        u = u + np.asarray(sc.roi_mean, dtype=float)
    return u


def simulate_snps(sc: Scenario, rng: np.random.Generator) -> np.ndarray:
    p = sc.level_probs()
    u = rng.random((sc.n, sc.m))
    c0 = p[:, 0]
    c1 = p[:, 0] + p[:, 1]
    return -1.0 + (u >= c0).astype(float) + (u >= c1).astype(float)


def true_predictor(x: np.ndarray, z: np.ndarray, sc: Scenario) -> np.ndarray:
    a, d = sc.true_alpha_delta()
    return sc.intercept + x @ sc.true_beta() + z @ a + (1.0 - np.abs(z)) @ d


def simulate_outcomes(
    x: np.ndarray, z: np.ndarray, sc: Scenario, rng: np.random.Generator | None = None, noise=None
) -> tuple[np.ndarray, np.ndarray]:
    """Outcomes from the probit model at the true coefficients.

    ``noise`` supplies the N(0, 1) errors explicitly; otherwise they are
    drawn from ``rng``. Returns ``(y, ystar)``.
    """
    eta = true_predictor(x, z, sc)
    if noise is None:
        noise = rng.standard_normal(eta.size)
    ystar = eta + np.asarray(noise, dtype=float)
    return (ystar > 0).astype(int), ystar


def simulate(sc: Scenario, seed: int | None = None) -> tuple[Dataset, np.ndarray]:
    """Draw ROIs, SNPs and outcomes (in that order) from one seeded stream."""
    rng = make_rng(sc.seed if seed is None else seed)
    x = simulate_rois(sc, rng)
    z = simulate_snps(sc, rng)
    y, ystar = simulate_outcomes(x, z, sc, rng)
    return Dataset.from_arrays(y, x, z), ystar


def _joint(name, n, g, m, last_roi):
    return Scenario(
        name, n, g, m, intercept=1.0,
        roi_effects={1: 1.3, 3: 1.5, last_roi: 1.0},
        snp_effects={1: (1.3, -1.2), 2: (-1.0, -1.0), 3: (1.5, -1.3), 4: (1.0, -2.0)},
        prior_variance=25.0,
    )


def _snp_only(name, n, m, b0, effects):
    return Scenario(name, n, 0, m, intercept=b0, snp_effects=dict(enumerate(effects, start=1)),
                    prior_variance=100.0)


def builtin_scenarios() -> dict[str, Scenario]:
    """All built-in settings keyed by name (joint-*, roi-*, snp-*)."""
    out = [
        _joint("joint-210", 210, 116, 81, 115),
        _joint("joint-300", 300, 300, 300, 299),
        _joint("joint-500", 300, 500, 500, 499),
        _joint("joint-1000", 300, 1000, 1000, 999),
        Scenario("roi-210", 210, 116, 0, 1.0, {1: -2.0, 3: -2.5, 115: 3.0}, prior_variance=100.0),
        Scenario("roi-300", 300, 300, 0, 1.0, {1: -1.0, 3: -1.5, 299: 2.0}, prior_variance=100.0),
        Scenario("roi-500", 300, 500, 0, 1.0, {1: -1.0, 3: 0.8, 4: -1.5, 486: 0.007, 499: 2.0},
                 prior_variance=100.0),
        Scenario("roi-1000", 300, 1000, 0, 1.0, {1: 1.2, 2: 0.8, 3: -1.5, 4: -1.0, 1000: 2.3},
                 prior_variance=100.0),
        _snp_only("snp-210", 210, 81, 1.7, [(1.3, -1.0), (1.0, -1.4), (-1.5, -1.4), (-1.2, -2.0)]),
        _snp_only("snp-300", 300, 300, 2.0, [(1.3, -1.0), (1.2, -1.4), (-1.0, -1.5), (-1.5, -2.0)]),
        _snp_only("snp-500", 300, 500, 1.3, [(1.3, -1.0), (1.2, -1.4), (-1.0, -1.5), (-0.5, -2.0)]),
        _snp_only("snp-1000", 300, 1000, 1.3, [(1.3, -1.0), (1.2, -1.4), (-1.0, -1.5), (-0.5, -2.0)]),
    ]
    return {sc.name: sc for sc in out}


def get_scenario(name_or_path: str) -> Scenario:
    """Built-in scenario by name, or a scenario YAML file."""
    builtins = builtin_scenarios()
    if name_or_path in builtins:
        return builtins[name_or_path]
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") and p.is_file():
        return load_scenario(p)
    raise UnknownScenario(f"no built-in scenario or scenario file named {name_or_path!r}")

"""Data-driven reversible-jump MCMC for probit variable selection with
numeric (ROI) and 3-level categorical (SNP) covariates."""

__version__ = "0.1.0"

from .errors import DDRJError  # noqa: E402
from .model import Dataset, Hyperparams, ModelState  # noqa: E402
from .sampler import RunConfig, fit_model, run_chain, run_chains  # noqa: E402
from .inference import bma_predict, cross_validate, select, summarize  # noqa: E402
from .datagen import Scenario, builtin_scenarios, simulate  # noqa: E402

__all__ = [
    "DDRJError", "Dataset", "Hyperparams", "ModelState", "RunConfig",
    "fit_model", "run_chain", "run_chains", "bma_predict", "cross_validate",
    "select", "summarize", "Scenario", "builtin_scenarios", "simulate",
]

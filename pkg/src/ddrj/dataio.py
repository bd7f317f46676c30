"""File formats: dataset CSV, run config, chain/summary outputs, manifest.

Dataset CSV: a header row, ``y`` (0/1) as the first column, then columns
whose names start with ``roi_`` (numeric) or ``snp_`` (integers -1/0/1) in
any order. Floats are written with 17 significant digits so a file read
back reproduces the values bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import ConfigError, ParseError, SchemaMismatch
from .inference import original_scale
from .model import Dataset, Hyperparams
from .sampler import ChainTrace, RunConfig, Sample

ROI_PREFIX = "roi_"
SNP_PREFIX = "snp_"


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


# -- dataset -----------------------------------------------------------------

def _parse_cell(text: str, kind: str, line: int, col: int) -> float:
    s = text.strip()
    if kind == "y":
        if s not in ("0", "1"):
            raise ParseError(f"outcome must be 0 or 1, got {s!r}", line, col)
        return float(s)
    if kind == "snp":
        if s not in ("-1", "0", "1"):
            raise ParseError(f"SNP value must be -1, 0 or 1, got {s!r}", line, col)
        return float(s)
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"not a number: {s!r}", line, col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {s!r}", line, col)
    return v


def read_table(path: str | Path, require_y: bool = True) -> tuple[np.ndarray | None, np.ndarray, np.ndarray, list[str], list[str]]:
    """Parse a dataset CSV into ``(y, x, z, roi_names, snp_names)``.

    With ``require_y=False`` the ``y`` column may be absent (``y`` is then
    None), which is the layout of new data fed to prediction.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1, 1)
    header = [h.strip() for h in rows[0]]
    kinds = []
    for c, name in enumerate(header, start=1):
        if name == "y":
            if c != 1:
                raise SchemaMismatch("column 'y' must come first")
            kinds.append("y")
        elif name.startswith(ROI_PREFIX):
            kinds.append("roi")
        elif name.startswith(SNP_PREFIX):
            kinds.append("snp")
        else:
            raise SchemaMismatch(f"column {name!r} has neither a roi_ nor a snp_ prefix")
    if require_y and (not kinds or kinds[0] != "y"):
        raise SchemaMismatch("first column must be 'y'")
    if len(set(header)) != len(header):
        raise SchemaMismatch("duplicate column names")

    parsed = []
    for i, r in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in r):
            continue
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", i, min(len(r), len(header)) + 1)
        parsed.append([_parse_cell(cell, kind, i, c) for c, (cell, kind) in enumerate(zip(r, kinds), start=1)])
    vals = np.array(parsed, dtype=float).reshape(len(parsed), len(header))

    kinds_arr = np.array(kinds)
    y = vals[:, 0].astype(int) if kinds and kinds[0] == "y" else None
    roi_cols = np.flatnonzero(kinds_arr == "roi")
    snp_cols = np.flatnonzero(kinds_arr == "snp")
    return (
        y,
        vals[:, roi_cols],
        vals[:, snp_cols],
        [header[c] for c in roi_cols],
        [header[c] for c in snp_cols],
    )


def read_dataset(path: str | Path) -> Dataset:
    y, x, z, rn, sn = read_table(path)
    return Dataset.from_arrays(y, x, z, rn, sn)


def write_dataset(path: str | Path, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", *data.roi_names, *data.snp_names])
        for i in range(data.n):
            w.writerow(
                [int(data.y[i])]
                + [fmt(v) for v in data.x_raw[i]]
                + [int(v) for v in data.z[i]]
            )


# -- run config ----------------------------------------------------------------

CONFIG_KEYS = (
    "iterations", "burn_in", "thin", "seed", "mode",
    "var_beta", "var_alpha", "var_delta",
    "preselect_threshold", "subsample_fraction", "chains", "space_prob_override",
)


def parse_config(d: dict | None) -> tuple[RunConfig, Hyperparams]:
    """Flat key/value mapping to run settings; unknown keys are errors."""
    d = dict(d or {})
    unknown = sorted(set(d) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        hyper = Hyperparams(
            float(d.pop("var_beta", 25.0)),
            float(d.pop("var_alpha", 25.0)),
            float(d.pop("var_delta", 25.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "preselect_threshold" in d:
        d["pre_selection_threshold"] = d.pop("preselect_threshold")
    for key in ("iterations", "burn_in", "thin", "seed", "chains"):
        if key in d:
            if isinstance(d[key], bool) or not isinstance(d[key], int):
                raise ConfigError(f"{key} must be an integer")
    for key in ("pre_selection_threshold", "subsample_fraction", "space_prob_override"):
        if d.get(key) is not None:
            try:
                d[key] = float(d[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number") from None
    if d.get("chains", 1) > 1:
        d["jitter_init"] = True
    return RunConfig(**d), hyper


def load_config(path: str | Path | None) -> tuple[RunConfig, Hyperparams]:
    if path is None:
        return parse_config({})
    try:
        d = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("config file must be a flat key/value mapping")
    return parse_config(d)


# -- chain outputs -------------------------------------------------------------

def _labels(indices: Iterable[int], names: Sequence[str]) -> str:
    return ";".join(names[j] for j in sorted(indices))


def write_trace(path: str | Path, samples_by_chain: list[list[Sample]], data: Dataset) -> None:
    """One row per retained sample; coefficients on the input ROI scale.

    Coefficient cells are keyed by column label and left empty when the
    covariate is inactive; active sets are semicolon-joined labels.
    """
    g, m = data.g, data.m
    header = (["chain", "iteration", "log_posterior", "active_rois", "active_snps", "intercept"]
              + list(data.roi_names)
              + [f"alpha:{s}" for s in data.snp_names]
              + [f"delta:{s}" for s in data.snp_names])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c, samples in enumerate(samples_by_chain, start=1):
            for s in samples:
                b0, slopes = original_scale(s, data)
                cells = [""] * (g + 2 * m)
                for j, v in zip(s.active_rois, slopes):
                    cells[j] = fmt(v)
                for k, a, d in zip(s.active_snps, s.alpha, s.delta):
                    cells[g + k] = fmt(a)
                    cells[g + m + k] = fmt(d)
                w.writerow([c, s.iteration, fmt(s.log_posterior),
                            _labels(s.active_rois, data.roi_names),
                            _labels(s.active_snps, data.snp_names),
                            fmt(b0), *cells])


def read_trace(path: str | Path) -> tuple[list[Sample], list[str], list[str]]:
    """Samples (input-scale coefficients) and the ROI/SNP labels of a trace file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty trace file", 1, 1)
    header = rows[0]
    try:
        start = header.index("intercept") + 1
    except ValueError:
        raise SchemaMismatch("trace file has no 'intercept' column") from None
    roi_names = [h for h in header[start:] if not h.startswith(("alpha:", "delta:"))]
    snp_names = [h[len("alpha:"):] for h in header[start:] if h.startswith("alpha:")]
    roi_pos = {nm: i for i, nm in enumerate(roi_names)}
    snp_pos = {nm: i for i, nm in enumerate(snp_names)}
    g, m = len(roi_names), len(snp_names)
    col = {h: i for i, h in enumerate(header)}
    samples = []
    for line, r in enumerate(rows[1:], start=2):
        try:
            rois = tuple(roi_pos[nm] for nm in r[col["active_rois"]].split(";") if nm)
            snps = tuple(snp_pos[nm] for nm in r[col["active_snps"]].split(";") if nm)
            beta = [float(r[start - 1])] + [float(r[start + j]) for j in rois]
            alpha = [float(r[start + g + k]) for k in snps]
            delta = [float(r[start + g + m + k]) for k in snps]
            samples.append(Sample(int(r[col["iteration"]]), rois, snps, np.array(beta),
                                  np.array(alpha), np.array(delta), float(r[col["log_posterior"]])))
        except (KeyError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed trace row ({exc})", line) from None
    return samples, roi_names, snp_names


def write_logpost(path: str | Path, traces: list[ChainTrace]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration"] + [f"chain_{c}" for c in range(1, len(traces) + 1)])
        for it in range(len(traces[0].log_posterior)):
            w.writerow([it + 1] + [fmt(tr.log_posterior[it]) for tr in traces])


def write_summary(path: str | Path, summary) -> None:
    """Per-coefficient rows: label, class, term, mppi, post_mean, post_sd."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "class", "term", "mppi", "post_mean", "post_sd"])
        w.writerow(["intercept", "intercept", "beta", fmt(1.0), fmt(summary.intercept_mean), fmt(summary.intercept_sd)])
        for j, nm in enumerate(summary.roi_names):
            w.writerow([nm, "roi", "beta", fmt(summary.mppi_roi[j]), fmt(summary.beta_mean[j]), fmt(summary.beta_sd[j])])
        for k, nm in enumerate(summary.snp_names):
            p = fmt(summary.mppi_snp[k])
            w.writerow([nm, "snp", "alpha", p, fmt(summary.alpha_mean[k]), fmt(summary.alpha_sd[k])])
            w.writerow([nm, "snp", "delta", p, fmt(summary.delta_mean[k]), fmt(summary.delta_sd[k])])


def write_models(path: str | Path, summary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "rois", "snps", "probability"])
        for rank, (sig, p) in enumerate(summary.model_table, start=1):
            w.writerow([rank, _labels(sig[0], summary.roi_names), _labels(sig[1], summary.snp_names), fmt(p)])


def write_predictions(path: str | Path, ystar, prob, cls, actual=None, fold=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["row", "ystar", "probability", "class"]
        if actual is not None:
            head.append("y")
        if fold is not None:
            head.append("fold")
        w.writerow(head)
        for i in range(len(ystar)):
            row = [i + 1, fmt(ystar[i]), fmt(prob[i]), int(cls[i])]
            if actual is not None:
                row.append(int(actual[i]))
            if fold is not None:
                row.append(int(fold[i]) + 1)
            w.writerow(row)


def write_metrics(path: str | Path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "n_test", "mce", "auc"])
        for f in range(report.fold_mce.size):
            w.writerow([f + 1, int(np.sum(report.fold == f)), fmt(report.fold_mce[f]), fmt(report.fold_auc[f])])
        w.writerow(["mean", len(report.fold), fmt(report.mce_mean), fmt(report.auc_mean)])
        w.writerow(["sd_across_folds", "", fmt(report.mce_sd), fmt(report.auc_sd)])


def write_truth(path: str | Path, scenario) -> None:
    """True coefficients: label, class, term, value (non-zero effects only)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "class", "term", "value"])
        w.writerow(["intercept", "intercept", "beta", fmt(scenario.intercept)])
        for j in sorted(scenario.roi_effects):
            w.writerow([f"roi_{j}", "roi", "beta", fmt(scenario.roi_effects[j])])
        for k in sorted(scenario.snp_effects):
            a, d = scenario.snp_effects[k]
            w.writerow([f"snp_{k}", "snp", "alpha", fmt(a)])
            w.writerow([f"snp_{k}", "snp", "delta", fmt(d)])


def write_json_atomic(path: str | Path, obj) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")

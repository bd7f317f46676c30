"""Command-line entry point: simulate, fit, predict, crossval.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import get_scenario, simulate
from .dataio import (
    load_config,
    read_dataset,
    read_table,
    read_trace,
    write_dataset,
    write_json_atomic,
    write_logpost,
    write_metrics,
    write_models,
    write_predictions,
    write_summary,
    write_trace,
    write_truth,
)
from .errors import DDRJError, SchemaMismatch
from .inference import bma_predict, classify, cross_validate, remap_samples, select, summarize
from .sampler import fit_model

log = logging.getLogger("ddrj")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, args, seed, inputs, outputs, started, **extra) -> None:
    for p in outputs:
        if not (out / p).exists():
            raise RuntimeError(f"expected output {p} was not written")
    write_json_atomic(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "config": getattr(args, "config", None),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": list(outputs),
        "seconds": round(time.time() - started, 3),
        **extra,
    })


def _run_settings(args):
    config, hyper = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.mode is not None:
        over["mode"] = args.mode
    return (replace(config, **over) if over else config), hyper


def cmd_simulate(args) -> int:
    started = time.time()
    sc = get_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    data, _ = simulate(sc, seed)
    out = _out_dir(args.out)
    write_dataset(out / "data.csv", data)
    write_truth(out / "truth.csv", sc)
    _manifest(out, "simulate", args, seed, [], ["data.csv", "truth.csv"], started,
              scenario=sc.name, n=data.n, g=data.g, m=data.m, case_fraction=float(data.y.mean()))
    print(f"{sc.name}: n={data.n} g={data.g} m={data.m} cases={int(data.y.sum())} -> {out}")
    return 0


def _print_summary(summary, top: int = 10) -> None:
    rows = [(p, nm) for nm, p in zip(summary.roi_names, summary.mppi_roi)]
    rows += [(p, nm) for nm, p in zip(summary.snp_names, summary.mppi_snp)]
    rows.sort(key=lambda r: -r[0])
    print("covariate        mppi")
    for p, nm in rows[:top]:
        print(f"{nm:<15} {p:6.3f}")
    print("\nmodel probability")
    for sig, p in summary.model_table[:5]:
        rois, snps = summary.signature_labels(sig)
        print(f"{p:6.3f}  {' '.join(rois + snps) or '(empty)'}")
    print("\nselected (mppi > 0.5):", " ".join(select(summary, 0.5)) or "none")


def cmd_fit(args) -> int:
    started = time.time()
    config, hyper = _run_settings(args)
    data = read_dataset(args.data)
    fit = fit_model(data, hyper, config, jobs=args.jobs)
    by_chain = [remap_samples(tr.samples, fit.roi_index, fit.snp_index) for tr in fit.traces]
    summary = summarize([s for ch in by_chain for s in ch], data)

    out = _out_dir(args.out)
    write_trace(out / "trace.csv", by_chain, data)
    write_summary(out / "summary.csv", summary)
    write_models(out / "models.csv", summary)
    write_logpost(out / "logpost.csv", fit.traces)
    _manifest(
        out, "fit", args, config.seed, [args.data],
        ["trace.csv", "summary.csv", "models.csv", "logpost.csv"], started,
        mode=config.mode,
        iterations=config.iterations, burn_in=config.burn_in, thin=config.thin, chains=config.chains,
        prior_variances=[hyper.var_beta, hyper.var_alpha, hyper.var_delta],
        preselected={"rois": [data.roi_names[j] for j in fit.roi_index],
                     "snps": [data.snp_names[k] for k in fit.snp_index]},
        diagnostics=[{"acceptance_rates": tr.acceptance_rates(),
                      "final_log_posterior": float(tr.log_posterior[-1])} for tr in fit.traces],
    )
    _print_summary(summary)
    return 0


def cmd_predict(args) -> int:
    started = time.time()
    run = Path(args.run)
    samples, roi_names, snp_names = read_trace(run / "trace.csv")
    y, x, z, rn, sn = read_table(args.newdata, require_y=False)
    missing = [nm for nm in roi_names if nm not in rn] + [nm for nm in snp_names if nm not in sn]
    if missing:
        raise SchemaMismatch(f"new data lacks trained columns: {', '.join(missing[:5])}")
    x = x[:, [rn.index(nm) for nm in roi_names]] if roi_names else np.zeros((x.shape[0], 0))
    z = z[:, [sn.index(nm) for nm in snp_names]] if snp_names else np.zeros((z.shape[0], 0))
    ystar, prob = bma_predict(samples, x, z)
    out = _out_dir(args.out or run)
    write_predictions(out / "predictions.csv", ystar, prob, classify(prob), actual=y)
    _manifest(out, "predict", args, None, [run / "trace.csv", args.newdata], ["predictions.csv"], started,
              rows=len(ystar))
    print(f"{len(ystar)} predictions -> {out / 'predictions.csv'}")
    return 0


def cmd_crossval(args) -> int:
    started = time.time()
    config, hyper = _run_settings(args)
    data = read_dataset(args.data)
    report = cross_validate(data, hyper, config, k=args.k, jobs=args.jobs)
    out = _out_dir(args.out)
    write_metrics(out / "metrics.csv", report)
    write_predictions(out / "cv_predictions.csv", report.ystar, report.probability, report.predicted,
                      actual=report.actual, fold=report.fold)
    _manifest(out, "crossval", args, config.seed, [args.data], ["metrics.csv", "cv_predictions.csv"], started,
              k=args.k, mode=config.mode,
              mce={"mean": report.mce_mean, "sd_across_folds": report.mce_sd},
              auc={"mean": report.auc_mean, "sd_across_folds": report.auc_sd})
    print(f"MCE {report.mce_mean:.3f} (sd {report.mce_sd:.3f})  AUC {report.auc_mean:.3f} (sd {report.auc_sd:.3f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddrj", description="Data-driven reversible-jump variable selection for probit models.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("scenario", help="built-in scenario name or scenario YAML file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    def run_flags(sp):
        sp.add_argument("data", help="dataset CSV")
        sp.add_argument("--config", help="YAML run config")
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mode", choices=["ddrj", "rj"])
        sp.add_argument("--jobs", type=int, default=1)

    f = sub.add_parser("fit", help="run the sampler and summarize")
    run_flags(f)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("crossval", help="k-fold cross-validated MCE and AUC")
    run_flags(c)
    c.add_argument("-k", type=int, default=5)
    c.set_defaults(func=cmd_crossval)

    r = sub.add_parser("predict", help="model-averaged predictions from a fit directory")
    r.add_argument("run", help="output directory of a previous fit")
    r.add_argument("newdata", help="CSV with the trained roi_/snp_ columns (y optional)")
    r.add_argument("--out", help="output directory (defaults to the fit directory)")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DDRJError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

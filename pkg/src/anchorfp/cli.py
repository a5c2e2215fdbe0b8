"""Command-line entry point: ``python -m anchorfp <subcommand> --config PATH``.

Subcommands
-----------
simulate  write the configured synthetic dataset in manifest format
select    grouped K-fold selection on all models; writes the objective table
fit       subagged fingerprint; writes selection tables, members and fingerprint
test      fit plus hypothesis tests; writes the full artifact directory
run       alias of ``test``
report    regenerate the plot-data files of an artifact directory (``--out``)
validate  print every configuration finding without running

Exit status: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import save_dataset
from .errors import AnchorFPError, ConfigError, DatasetError, PreprocessingError
from .pipeline import (PipelineConfig, _new_run_dir, _Staging, fit_ensemble, load_data, run_pipeline, select_all,
                       simulate, validate_config, write_fit_artifacts, write_json, write_plot_data)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anchorfp", description="Anchor-regression fingerprints and tests.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "select", "test", "run", "report", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "report")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--jobs", type=int, default=1, help="maximum worker threads")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
    return ap


def _load(args) -> PipelineConfig:
    return PipelineConfig.load(args.config).with_overrides(args.seed)


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    if "simulate" not in cfg["data"]:
        raise ConfigError("data.simulate: the config does not describe a simulation")
    out = args.out or cfg.out_dir / "data"
    d, test = simulate(cfg)
    save_dataset(d, out)
    if test is not None:
        save_dataset(test, out / "test")
    print(out)
    return EXIT_OK


def _cmd_select(args) -> int:
    cfg = _load(args)
    d, _ = load_data(cfg)
    table, g, lam = select_all(d, cfg)
    out = args.out or cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / "selection.csv", include_gamma=not cfg.detection, include_anchor=not cfg.detection)
    write_json(out / "selected.json", {"gamma": g, "lambda": lam})
    print(json.dumps({"gamma": g, "lambda": lam}))
    return EXIT_OK


def _cmd_fit(args) -> int:
    cfg = _load(args)
    final = _new_run_dir(args.out or cfg.out_dir)
    with _Staging(final) as tmp:
        d, _ = load_data(cfg)
        write_json(tmp / "config.json", cfg.to_dict())
        ens = fit_ensemble(d, cfg, args.jobs)
        write_fit_artifacts(tmp, ens, cfg)
    print(final)
    return EXIT_OK


def _cmd_test(args) -> int:
    res = run_pipeline(_load(args), args.out, None, args.jobs)
    print(res.directory)
    print(json.dumps({"alpha_bar": res.report.alpha_bar, "kappa_bar": res.report.kappa_bar}))
    return EXIT_OK


def _cmd_report(args) -> int:
    if args.out is None or not (args.out / "test_report.json").exists():
        raise ConfigError("report: --out must name an artifact directory containing test_report.json")
    for p in write_plot_data(args.out):
        print(p)
    return EXIT_OK


def _cmd_validate(args) -> int:
    findings = validate_config(args.config)
    for f in findings:
        print(f)
    return EXIT_CONFIG if findings else EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "select": _cmd_select, "fit": _cmd_fit, "test": _cmd_test,
            "run": _cmd_test, "report": _cmd_report, "validate": _cmd_validate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, PreprocessingError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnchorFPError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

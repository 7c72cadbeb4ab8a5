"""Command-line interface: ``gehan-aft {simulate,train,eval,predict,selfcheck}``.

Options come from three layers, later ones winning: built-in defaults, a
``key = value`` config file (``--config``), and command-line flags. The
resolved options are written as ``config.txt`` in the output directory.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks
from .checkpoint import Checkpoint
from .dataset import (
    ERROR_DISTS,
    DataError,
    SplitSpec,
    apply_standardization,
    fit_standardization,
    load_csv,
    simulate_aft,
    split_dataset,
    write_csv,
)
from .metrics import evaluate, ibs_grid
from .network import NetworkConfig
from .nonparam import censoring_km
from .optim import OptimConfig
from .survpredict import (
    SurvivalCurveSet,
    default_time_grid,
    fit_baseline,
    predict_scores,
    survival_from_scores,
)
from .trainer import TrainConfig, lr_sweep, train

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
THREADS_ENV = "GEHAN_AFT_THREADS"

log = logging.getLogger("gehan_aft")


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# name -> (type, default, help). Booleans become --flag / --no-flag.
COMMON = {
    "out": (str, None, "output directory (default: runs/<timestamp>)"),
    "seed": (int, 0, "random seed"),
}
OPTIONS = {
    "simulate": {
        "n": (int, 4000, "number of records"),
        "beta": (_floats, [1.0, -1.0, 0.5], "coefficients, comma-separated (sets feature count)"),
        "censor": (float, 0.3, "target censoring fraction in [0, 1)"),
        "error_dist": (str, "normal", f"error distribution: {', '.join(ERROR_DISTS)}"),
        "nonlinear": (bool, False, "use g(x) = x1*x2 + sin(x3) instead of beta . x"),
        "noise_scale": (float, 1.0, "multiplier on the error term"),
    },
    "train": {
        "data": (str, None, "training CSV (time,event,features...)"),
        "valid_data": (str, None, "validation CSV; default: split off --valid-fraction"),
        "valid_fraction": (float, 0.2, "validation share when --valid-data is absent"),
        "categorical": (_names, [], "columns to treat as categorical"),
        "layers": (int, 2, "hidden layers (0 = linear predictor)"),
        "nodes": (int, 32, "nodes per hidden layer"),
        "dropout": (float, 0.1, "dropout rate"),
        "batch_norm": (bool, True, "batch normalization in hidden blocks"),
        "batch_size": (int, 1024, "mini-batch size"),
        "lr": (float, 1e-2, "base learning rate"),
        "lr_sweep": (bool, False, "pick the learning rate from a fixed grid by validation loss"),
        "weight_decay": (float, 0.0, "decoupled weight decay"),
        "max_epochs": (int, 63, "maximum epochs"),
        "patience": (int, 2, "restart cycles without validation improvement before stopping"),
        "initial_cycle": (int, 1, "epochs in the first warm-restart cycle"),
        "cycle_multiplier": (int, 2, "cycle length multiplier"),
    },
    "eval": {
        "checkpoint": (str, None, "checkpoint JSON from train"),
        "data": (str, None, "evaluation CSV"),
        "null_model": (bool, False, "score constant S = 0.5 curves instead of the model's"),
        "curves": (str, None, "survival curve CSV to score instead of the model's"),
        "scores": (str, None, "one-column CSV of risk scores (higher = longer survival)"),
        "censoring": (str, "test", "censoring KM for Brier weights: 'test' (the evaluated "
                                   "data) or 'train' (stored in the checkpoint)"),
        "censoring_data": (str, None, "CSV whose censoring KM weights the Brier score "
                                      "(overrides --censoring)"),
        "intervals": (int, 100, "time-grid intervals for the integrated Brier score"),
    },
    "predict": {
        "checkpoint": (str, None, "checkpoint JSON from train"),
        "data": (str, None, "CSV of instances"),
        "grid": (str, None, "time grid: 'start:stop:count' or comma list "
                            "(default: 101 points over the data's times)"),
    },
    "selfcheck": {},
}
REQUIRED = {"train": ("data",), "eval": ("data",), "predict": ("checkpoint", "data")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="gehan-aft", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, options in OPTIONS.items():
        p = sub.add_parser(command, argument_default=argparse.SUPPRESS)
        if command != "selfcheck":
            p.add_argument("--config", help="key = value config file; flags override it")
        for name, (typ, default, help_) in {**COMMON, **options}.items():
            if command == "selfcheck" and name == "out":
                continue
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, action="store_true", help=f"{help_} (default {default})")
                p.add_argument("--no-" + name.replace("_", "-"), dest=name, action="store_false")
            else:
                shown = ",".join(map(str, default)) if isinstance(default, list) else default
                p.add_argument(flag, dest=name, type=typ, help=f"{help_} (default {shown})")
    return parser


def read_config_file(path, command):
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = {**COMMON, **OPTIONS[command]}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for {command}")
        typ = known[key][0]
        try:
            out[key] = _bool(value) if typ is bool else typ(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def resolve_options(args):
    command = args.command
    opts = {k: v[1] for k, v in {**COMMON, **OPTIONS[command]}.items()}
    config_path = getattr(args, "config", None)
    if config_path:
        if not Path(config_path).is_file():
            raise UsageError(f"config file not found: {config_path}")
        opts.update(read_config_file(config_path, command))
    for key in opts:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
    for key in REQUIRED.get(command, ()):
        if opts.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required for {command}")
    return opts


def write_resolved_config(opts, out):
    lines = []
    for key, value in opts.items():
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    (out / "config.txt").write_text("\n".join(lines) + "\n")


def _out_dir(opts):
    out = Path(opts["out"]) if opts.get("out") else Path("runs") / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


# -- commands -------------------------------------------------------------------------


def cmd_simulate(opts, out):
    ds, truth = simulate_aft(opts["n"], opts["beta"], opts["error_dist"], opts["censor"],
                             opts["nonlinear"], opts["seed"], opts["noise_scale"],
                             return_truth=True)
    write_csv(ds, out / "data.csv")
    _dump({**truth.to_dict(), "n": opts["n"], "realized_censoring": ds.censoring_fraction},
          out / "truth.json")
    print(f"wrote {len(ds)} records to {out / 'data.csv'} "
          f"(censored {ds.censoring_fraction:.3f})")


def _train_config(opts):
    net = NetworkConfig(num_layers=opts["layers"], nodes_per_layer=opts["nodes"],
                        dropout_rate=opts["dropout"], use_batch_norm=opts["batch_norm"],
                        seed=opts["seed"])
    optim = OptimConfig(base_learning_rate=opts["lr"], weight_decay=opts["weight_decay"],
                        initial_cycle_epochs=opts["initial_cycle"],
                        cycle_multiplier=opts["cycle_multiplier"])
    return TrainConfig(batch_size=opts["batch_size"], max_epochs=opts["max_epochs"],
                       early_stop_patience=opts["patience"], seed=opts["seed"],
                       optim=optim, network=net)


def cmd_train(opts, out):
    try:
        config = _train_config(opts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    full = load_csv(opts["data"], categorical=opts["categorical"])
    if opts["valid_data"]:
        train_raw = full
        valid_raw = load_csv(opts["valid_data"], schema=full.schema)
    else:
        vf = opts["valid_fraction"]
        train_raw, valid_raw, _ = split_dataset(full, SplitSpec(1.0 - vf, vf, 0.0, opts["seed"]))
    params = fit_standardization(train_raw)
    params.save(out / "train.scaler.json")
    train_ds = apply_standardization(train_raw, params)
    valid_ds = apply_standardization(valid_raw, params)

    if opts["lr_sweep"]:
        best_lr, results = lr_sweep(train_ds, valid_ds, config)
        print("lr sweep: " + ", ".join(f"{lr:g} -> {v:.6f}" for lr, v in results.items()))
        config = replace(config, optim=replace(config.optim, base_learning_rate=best_lr))
        opts["lr"] = best_lr
    model, report = train(train_ds, valid_ds, config)

    baseline = fit_baseline(model, train_ds)
    ck = Checkpoint(model, params, baseline, censoring_km(train_raw.time, train_raw.event),
                    config.to_dict())
    ck.save(out / "checkpoint.json")
    summary = report.to_dict(include_timing=False)
    if config.network.num_layers == 0:
        w = model.params["output.weight"].ravel()
        summary["coefficients"] = [float(v) for v in w]
        summary["coefficients_original_scale"] = [
            float(v) for v in w * params.sigma / params.feature_stds]
    _dump(summary, out / "report.json")
    _dump({"epoch_seconds": report.epoch_seconds}, out / "timing.json")
    print(f"trained {report.epochs_run} epochs; best valid loss {report.best_valid_loss:.6f} "
          f"at epoch {report.best_epoch} ({report.stopped_reason}); wrote {out / 'checkpoint.json'}")
    if report.stopped_reason == "diverged":
        raise NumericalError("training diverged; checkpoint holds the last good parameters")


def _read_column(path):
    rows = Path(path).read_text().split()
    values = []
    for k, row in enumerate(rows):
        cell = row.split(",")[0]
        try:
            values.append(float(cell))
        except ValueError:
            if k == 0:
                continue
            raise DataError(f"cannot parse {cell!r} as a number", k + 1) from None
    return np.asarray(values)


def cmd_eval(opts, out):
    ck = Checkpoint.load(opts["checkpoint"]) if opts["checkpoint"] else None
    if ck is not None:
        raw = load_csv(opts["data"], schema=ck.model.schema)
        test = apply_standardization(raw, ck.standardization)
    else:
        raw = test = load_csv(opts["data"])
    n = len(raw)

    if opts["scores"]:
        scores = _read_column(opts["scores"])
    elif ck is not None:
        scores = predict_scores(ck.model, test)
    else:
        raise UsageError("eval needs --checkpoint or --scores")
    if scores.size != n:
        raise DataError(f"{scores.size} scores for {n} records")

    grid = ibs_grid(raw.time, opts["intervals"])
    td_curves = None
    if opts["null_model"]:
        curves = SurvivalCurveSet.constant(n, grid, 0.5)
    elif opts["curves"]:
        curves = SurvivalCurveSet.from_csv(opts["curves"])
    elif ck is not None and ck.baseline is not None:
        curves = survival_from_scores(scores, ck.baseline, grid)
        td_curves = survival_from_scores(scores, ck.baseline, np.unique(raw.time))
    else:
        raise UsageError("eval needs curves: --checkpoint with a baseline, --curves, or --null-model")
    if len(curves) != n:
        raise DataError(f"{len(curves)} survival curves for {n} records")

    if opts["censoring_data"]:
        cens_src = load_csv(opts["censoring_data"])
        censoring = censoring_km(cens_src.time, cens_src.event)
    elif opts["censoring"] == "test":
        censoring = censoring_km(raw.time, raw.event)
    elif opts["censoring"] == "train":
        if ck is None or ck.censoring is None:
            raise UsageError("--censoring train needs a checkpoint with a stored censoring KM")
        censoring = ck.censoring
    else:
        raise UsageError(f"--censoring must be 'test' or 'train', got {opts['censoring']!r}")

    report = evaluate(raw.time, raw.event, scores, curves, censoring, td_curves,
                      n_intervals=opts["intervals"])
    _dump(report.to_dict(), out / "metrics.json")
    report.bs_curve_to_csv(out / "bs_curve.csv")
    print(f"C-index {report.c_index:.4f}  C-td {report.c_td:.4f}  IBS {report.ibs:.4f}"
          + (f"  (clipped weights: {report.n_clipped})" if report.n_clipped else ""))


def _parse_grid(spec):
    spec = spec.strip()
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            return np.linspace(float(start), float(stop), int(count))
        return np.array(_floats(spec))
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"bad --grid {spec!r}") from None


def cmd_predict(opts, out):
    ck = Checkpoint.load(opts["checkpoint"])
    if ck.baseline is None:
        raise UsageError("checkpoint has no baseline hazard")
    path = Path(opts["data"])
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    header = {h.strip() for h in path.read_text(encoding="utf-8").splitlines()[0].split(",")}
    has_time = {"time", "event"} <= header
    raw = load_csv(path, schema=ck.model.schema, require_target=False)
    inst = apply_standardization(raw, ck.standardization)
    if opts["grid"]:
        grid = _parse_grid(opts["grid"])
    elif has_time:
        grid = default_time_grid(raw.time)
    else:
        raise UsageError("--grid is required when the data has no time/event columns")
    if grid.size == 0 or np.any(grid <= 0) or (grid.size > 1 and np.any(np.diff(grid) <= 0)):
        raise UsageError("grid must be positive and strictly increasing")
    curves = survival_from_scores(predict_scores(ck.model, inst), ck.baseline, grid)
    curves.to_csv(out / "curves.csv")
    curves.to_json(out / "curves.json")
    print(f"wrote {len(curves)} curves on {grid.size} grid points to {out / 'curves.csv'}")


def cmd_selfcheck(opts, out):
    if not checks.run_all():
        raise NumericalError("self-check failed")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "selfcheck": cmd_selfcheck,
}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, n))


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        with _thread_limit():
            out = None
            if args.command != "selfcheck":
                out = _out_dir(opts)
                write_resolved_config(opts, out)
            COMMANDS[args.command](opts, out)
            if out is not None and args.command == "train" and opts["lr_sweep"]:
                write_resolved_config(opts, out)
    except UsageError as exc:
        print(f"gehan-aft: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"gehan-aft: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"gehan-aft: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())

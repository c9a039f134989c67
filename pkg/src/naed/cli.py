"""Command-line front end: ``naed <subcommand> [--config FILE] [flags]``.

Settings come from an INI file with sections [dataset] [model] [train]
[output], overridden by flags.  Every run writes the fully resolved config
(``config.ini``) next to its outputs; feeding it back reproduces the run.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .datagen import DEFAULT_PARAMS, GenerationFailure, GeneratorConfig, generate
from .dictionary import fourier, polynomial
from .gradients import NonFiniteGradient, gradcheck, random_problem
from .integrator import BlowUp
from .portrait import PortraitSpec, UnsupportedHiddenDim, render_portrait
from .stability import stability_check
from .trainer import LAMBDA_GRID, BlowUpDuringTraining, TrainConfig, cross_validate_lambda, evaluate, train

log = logging.getLogger("naed")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(v) for v in str(text).replace(",", " ").split()]


def _strs(text):
    return [v for v in str(text).replace(",", " ").split()]


def _opt_int(text):
    t = str(text).strip().lower()
    return None if t in ("", "full", "none") else int(t)


# section -> key -> parser
SCHEMA = {
    "dataset": {
        "system": str, "n_samples": int, "train_fraction": float, "seed": int,
        "final_time": float, "samples": int, "forcing_terms": int,
        "lv_input_mode": str, "lorenz_form": str, "noise_variance": float,
        "reference_substeps": int, "train": str, "test": str, "data": str,
        "ucr_train": str, "ucr_test": str, "delimiter": str, "sample": str,
    },
    "model": {
        "dictionary": str, "m": int, "k": int, "K": int, "L": float, "checkpoint": str,
        "n": int, "classes": int,
    },
    "train": {
        "learning_rate": float, "max_epochs": int, "batch_size": _opt_int, "substeps": int,
        "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
        "convergence_tol": float, "patience": int, "sparse_lambda": float, "seed": int,
        "scheme": str, "threads": int, "restarts": int, "lambda_grid": _floats, "folds": int,
        "tolerance": float, "perturbations": int, "paths": int,
    },
    "output": {
        "dir": str, "format": str, "window": _floats, "resolution": int, "samples": _strs,
        "per_class": int,
    },
}
# system parameters live in [dataset] as param.<name>
_PARAM_KEYS = {f"param.{k}" for v in DEFAULT_PARAMS.values() for k in v}


def _parse_value(section, key, text):
    if section == "dataset" and key in _PARAM_KEYS:
        return float(text)
    try:
        parser = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown key {key!r} in section [{section}]") from None
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def load_config(path) -> dict:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (k vs K)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, text in cp.items(section):
            out[section][key] = _parse_value(section, key, text)
    return out


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def write_config(cfg: dict, path) -> None:
    lines = []
    for section in SCHEMA:
        items = {k: v for k, v in cfg.get(section, {}).items() if v is not None}
        if not items:
            continue
        lines.append(f"[{section}]")
        for k in sorted(items):
            lines.append(f"{k} = {_format_value(items[k])}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


# flag name -> (section, key)
FLAG_MAP = {
    "system": ("dataset", "system"), "n_samples": ("dataset", "n_samples"),
    "train_fraction": ("dataset", "train_fraction"), "final_time": ("dataset", "final_time"),
    "samples_per_series": ("dataset", "samples"), "lv_input": ("dataset", "lv_input_mode"),
    "lorenz_form": ("dataset", "lorenz_form"), "noise_variance": ("dataset", "noise_variance"),
    "train_path": ("dataset", "train"), "test_path": ("dataset", "test"),
    "data": ("dataset", "data"), "ucr_train": ("dataset", "ucr_train"),
    "ucr_test": ("dataset", "ucr_test"), "delimiter": ("dataset", "delimiter"),
    "sample": ("dataset", "sample"),
    "dict": ("model", "dictionary"), "m": ("model", "m"), "k": ("model", "k"), "K": ("model", "K"),
    "L": ("model", "L"), "checkpoint": ("model", "checkpoint"), "n": ("model", "n"),
    "classes": ("model", "classes"),
    "lr": ("train", "learning_rate"), "epochs": ("train", "max_epochs"),
    "batch_size": ("train", "batch_size"), "substeps": ("train", "substeps"),
    "lam": ("train", "sparse_lambda"), "scheme": ("train", "scheme"),
    "threads": ("train", "threads"), "restarts": ("train", "restarts"),
    "lambdas": ("train", "lambda_grid"), "folds": ("train", "folds"),
    "tolerance": ("train", "tolerance"), "perturbations": ("train", "perturbations"),
    "paths": ("train", "paths"), "patience": ("train", "patience"),
    "out": ("output", "dir"), "format": ("output", "format"), "window": ("output", "window"),
    "resolution": ("output", "resolution"), "portrait_samples": ("output", "samples"),
    "per_class": ("output", "per_class"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add(p, *names):
    # every flag is a plain string; values are parsed against SCHEMA in resolve()
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="naed", description="Dictionary-based dynamical classifiers for time signals.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    model_flags = ("dict", "m", "k", "K", "L")
    train_flags = ("lr", "epochs", "batch_size", "substeps", "lam", "scheme", "threads", "patience")
    cmds = {
        "generate": ("system", "seed", "n_samples", "train_fraction", "final_time",
                     "samples_per_series", "lv_input", "lorenz_form", "noise_variance", "out"),
        "train": ("train_path", "test_path", "ucr_train", "ucr_test", "delimiter", "seed",
                  "restarts", "out") + model_flags + train_flags,
        "evaluate": ("checkpoint", "data", "ucr_test", "delimiter", "substeps", "out"),
        "gradcheck": ("seed", "n", "classes", "substeps", "scheme", "tolerance", "out") + model_flags,
        "cv-lambda": ("train_path", "ucr_train", "delimiter", "seed", "lambdas", "folds", "out")
                     + model_flags + train_flags,
        "portrait": ("checkpoint", "data", "window", "resolution", "portrait_samples", "per_class",
                     "format", "substeps", "out"),
        "stability-check": ("checkpoint", "data", "sample", "seed", "perturbations", "paths",
                            "substeps", "out"),
    }
    for name, flags in cmds.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        _add(p, *flags)
    return parser


def resolve(args) -> dict:
    """Config file values overridden by flags."""
    cfg = load_config(args.config) if args.config else {s: {} for s in SCHEMA}
    for name, text in vars(args).items():
        if text is None or name in ("command", "config", "verbose"):
            continue
        if name == "seed":
            section = "dataset" if args.command == "generate" else "train"
            cfg[section]["seed"] = _parse_value(section, "seed", text)
            continue
        section, key = FLAG_MAP[name]
        cfg[section][key] = _parse_value(section, key, text)
    return cfg


def _get(cfg, section, key, default=None):
    v = cfg[section].get(key)
    return default if v is None else v


def _require(cfg, section, key, what):
    v = cfg[section].get(key)
    if v is None:
        raise UsageError(f"missing {what} (flag or [{section}] {key})")
    return v


def _out_dir(cfg) -> Path:
    out = Path(_get(cfg, "output", "dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    cfg["output"]["dir"] = str(out)
    return out


def _threads(cfg) -> int:
    env = os.environ.get("NAED_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"NAED_THREADS must be an integer, got {env!r}") from None
    else:
        n = _get(cfg, "train", "threads", os.cpu_count() or 1)
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def _spec(cfg, final_time):
    mc = cfg["model"]
    kind = _get(cfg, "model", "dictionary", "poly").lower()
    m = _require(cfg, "model", "m", "hidden dimension --m")
    if kind in ("poly", "polynomial"):
        mc.update(dictionary="poly", k=_get(cfg, "model", "k", 1))
        return polynomial(m, mc["k"])
    if kind == "fourier":
        mc.update(K=_get(cfg, "model", "K", 1), L=float(_get(cfg, "model", "L", final_time)))
        return fourier(m, mc["K"], mc["L"])
    raise ConfigError(f"unknown dictionary {kind!r}; use poly or fourier")


def _load_split(cfg, path_key, ucr_key, label_map=None):
    path = cfg["dataset"].get(path_key)
    ucr = cfg["dataset"].get(ucr_key)
    if path:
        return dataio.read_dataset(path)
    if ucr:
        return dataio.read_ucr(ucr, _get(cfg, "dataset", "delimiter"), label_map)
    return None


def _train_config(cfg, threads) -> TrainConfig:
    t = cfg["train"]
    kw = {k: t[k] for k in ("learning_rate", "max_epochs", "batch_size", "substeps", "adam_beta1",
                            "adam_beta2", "adam_eps", "convergence_tol", "patience",
                            "sparse_lambda", "seed", "scheme") if t.get(k) is not None}
    tc = TrainConfig(threads=threads, **kw)
    for k in ("learning_rate", "max_epochs", "substeps", "adam_beta1", "adam_beta2", "adam_eps",
              "convergence_tol", "patience", "sparse_lambda", "seed", "scheme"):
        t[k] = getattr(tc, k)
    t["batch_size"] = "full" if tc.batch_size is None else tc.batch_size
    return tc


# ----------------------------------------------------------------- commands

def cmd_generate(cfg):
    d = cfg["dataset"]
    if d.get("seed") is None:
        raise UsageError("generate needs a seed (--seed or [dataset] seed)")
    params = {k.split(".", 1)[1]: v for k, v in d.items() if k.startswith("param.")}
    gc = GeneratorConfig(
        system=_require(cfg, "dataset", "system", "--system"),
        N=_get(cfg, "dataset", "n_samples", 10000),
        train_fraction=_get(cfg, "dataset", "train_fraction", 0.8),
        seed=d["seed"],
        final_time=d.get("final_time"),
        samples=_get(cfg, "dataset", "samples", 101),
        forcing_terms=_get(cfg, "dataset", "forcing_terms", 2),
        system_params=params,
        lv_input_mode=_get(cfg, "dataset", "lv_input_mode", "x"),
        lorenz_form=_get(cfg, "dataset", "lorenz_form", "printed"),
        noise_variance=_get(cfg, "dataset", "noise_variance", 0.0),
        reference_substeps=_get(cfg, "dataset", "reference_substeps", 20),
    )
    d.update(system=gc.system, n_samples=gc.N, train_fraction=gc.train_fraction,
             final_time=gc.final_time, samples=gc.samples, forcing_terms=gc.forcing_terms,
             lv_input_mode=gc.lv_input_mode, lorenz_form=gc.lorenz_form,
             noise_variance=gc.noise_variance, reference_substeps=gc.reference_substeps)
    for k, v in gc.params.items():
        d[f"param.{k}"] = float(v)
    train_set, test_set = generate(gc)
    out = _out_dir(cfg)
    dataio.write_dataset(train_set, out / "train.jsonl")
    dataio.write_dataset(test_set, out / "test.jsonl")
    balance = {
        "train": train_set.class_counts().tolist(),
        "test": test_set.class_counts().tolist(),
    }
    (out / "balance.json").write_text(json.dumps(balance, indent=2) + "\n", encoding="utf-8")
    log.info("class counts: train %s, test %s", balance["train"], balance["test"])
    d["train"] = str(out / "train.jsonl")
    d["test"] = str(out / "test.jsonl")
    return EXIT_OK


def _train_with_restarts(train_set, spec, tc, test_set, restarts):
    best = None
    for r in range(restarts):
        cfg_r = TrainConfig(**{**tc.__dict__, "seed": tc.seed + r})
        try:
            params, report = train(train_set, spec, cfg_r, test_set=test_set)
        except BlowUpDuringTraining as exc:
            log.warning("restart %d: %s", r, exc)
            if restarts == 1:
                raise
            continue
        log.info("restart %d (seed %d): loss %.5g, train acc %.4f", r, cfg_r.seed,
                 report.best_loss, report.train_accuracy)
        if best is None or report.best_loss < best[1].best_loss:
            best = (params, report, cfg_r.seed)
    if best is None:
        raise BlowUpDuringTraining(-1, None, float("nan"))
    return best


def cmd_train(cfg):
    if cfg["train"].get("seed") is None:
        raise UsageError("train needs a seed (--seed or [train] seed)")
    train_set = _load_split(cfg, "train", "ucr_train")
    if train_set is None:
        raise UsageError("train needs a dataset (--train-path or --ucr-train)")
    label_map = train_set.metadata.get("label_map")
    test_set = _load_split(cfg, "test", "ucr_test", label_map)
    spec = _spec(cfg, train_set[0].final_time)
    tc = _train_config(cfg, _threads(cfg))
    restarts = _get(cfg, "train", "restarts", 1)
    params, report, seed = _train_with_restarts(train_set, spec, tc, test_set, restarts)
    out = _out_dir(cfg)
    dataio.write_checkpoint(params, spec, out / "checkpoint.json",
                            meta={"seed": seed, "train": train_set.metadata})
    dataio.write_report(report, out / "report.json")
    dataio.write_epoch_log(report, out / "epochs.csv")
    cfg["model"]["checkpoint"] = str(out / "checkpoint.json")
    return EXIT_OK


def _load_checkpoint(cfg):
    path = _require(cfg, "model", "checkpoint", "--checkpoint")
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    return dataio.read_checkpoint(path)


def _load_data(cfg, key="data"):
    data = cfg["dataset"].get(key)
    if data:
        if not Path(data).exists():
            raise UsageError(f"dataset not found: {data}")
        return dataio.read_dataset(data)
    ucr = cfg["dataset"].get("ucr_test")
    if ucr:
        return dataio.read_ucr(ucr, _get(cfg, "dataset", "delimiter"))
    raise UsageError("missing dataset (--data)")


def cmd_evaluate(cfg):
    params, spec, _ = _load_checkpoint(cfg)
    data = _load_data(cfg)
    params.check(spec, data.n, data.num_classes)
    s = _get(cfg, "train", "substeps", 1)
    acc = evaluate(params, spec, data, s)
    out = _out_dir(cfg)
    (out / "accuracy.json").write_text(json.dumps({"accuracy": acc, "samples": len(data)}, indent=2) + "\n",
                                       encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(cfg):
    seed = _get(cfg, "train", "seed", 0)
    spec = _spec(cfg, 10.0)
    n = _get(cfg, "model", "n", 1)
    classes = _get(cfg, "model", "classes", 2)
    s = _get(cfg, "train", "substeps", 8)
    tol = _get(cfg, "train", "tolerance", 1e-3)
    scheme = _get(cfg, "train", "scheme", "rk4")
    params, batch = random_problem(spec, n, classes, seed)
    res = gradcheck(params, spec, batch, (s, 2 * s), scheme=scheme)
    out = _out_dir(cfg)
    (out / "gradcheck.txt").write_text(res.report() + "\n", encoding="utf-8")
    doc = {"substeps": res.substeps, "errors": res.errors, "max_errors": res.max_errors,
           "ratios": res.ratios, "tolerance": tol, "passed": res.max_errors[0] < tol}
    (out / "gradcheck.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if res.max_errors[0] >= tol:
        log.error("max relative error %.3g at s=%d exceeds %.3g", res.max_errors[0], s, tol)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_cv_lambda(cfg):
    if cfg["train"].get("seed") is None:
        raise UsageError("cv-lambda needs a seed (--seed or [train] seed)")
    data = _load_split(cfg, "train", "ucr_train")
    if data is None:
        raise UsageError("cv-lambda needs a dataset (--train-path or --ucr-train)")
    spec = _spec(cfg, data[0].final_time)
    tc = _train_config(cfg, _threads(cfg))
    grid = _get(cfg, "train", "lambda_grid", list(LAMBDA_GRID))
    cfg["train"]["lambda_grid"] = [float(v) for v in grid]
    res = cross_validate_lambda(data, spec, tc, grid, _get(cfg, "train", "folds", 5))
    out = _out_dir(cfg)
    (out / "cv_table.txt").write_text(res.table() + "\n", encoding="utf-8")
    doc = {"chosen": res.chosen, "lambdas": res.lambdas, "fold_scores": res.fold_scores.tolist(),
           "mean_scores": res.mean_scores.tolist()}
    (out / "cv.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_portrait(cfg):
    params, spec, _ = _load_checkpoint(cfg)
    data = _load_data(cfg)
    o = cfg["output"]
    ps = PortraitSpec(
        window=tuple(o.get("window") or (-2.0, 2.0, -2.0, 2.0)),
        resolution=o.get("resolution") or 15,
        sample_ids=tuple(o.get("samples") or ()),
        per_class=o.get("per_class") or 5,
        output_format=(o.get("format") or "svg").lower(),
    )
    body = render_portrait(params, spec, data, ps, _get(cfg, "train", "substeps", 1))
    out = _out_dir(cfg)
    (out / f"portrait.{ps.output_format}").write_bytes(body)
    return EXIT_OK


def cmd_stability(cfg):
    params, spec, _ = _load_checkpoint(cfg)
    data = _load_data(cfg)
    sid = cfg["dataset"].get("sample")
    if sid is None:
        base = data[0]
    else:
        match = [ts for ts in data if ts.id == sid]
        if not match:
            raise ConfigError(f"sample {sid!r} not in dataset")
        base = match[0]
    rep = stability_check(params, spec, base,
                          n_perturbations=_get(cfg, "train", "perturbations", 10000),
                          n_paths=_get(cfg, "train", "paths", 10000),
                          seed=_get(cfg, "train", "seed", 0),
                          substeps=_get(cfg, "train", "substeps", 4))
    out = _out_dir(cfg)
    doc = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in rep.to_dict().items()}
    (out / "stability.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    (out / "stability.txt").write_text(rep.summary() + "\n", encoding="utf-8")
    return EXIT_OK if rep.passed else EXIT_NUMERIC


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "cv-lambda": cmd_cv_lambda,
    "portrait": cmd_portrait,
    "stability-check": cmd_stability,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = resolve(args)
        code = COMMANDS[args.command](cfg)
        out = Path(_get(cfg, "output", "dir", "."))
        write_config(cfg, out / "config.ini")
        return code
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"naed: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BlowUp, BlowUpDuringTraining, NonFiniteGradient, GenerationFailure, FloatingPointError) as exc:
        print(f"naed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, dataio.SchemaError, dataio.ParseError, dataio.RaggedRows,
            UnsupportedHiddenDim, KeyError, ValueError, OSError) as exc:
        print(f"naed: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

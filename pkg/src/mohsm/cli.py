"""
Command-line entry point: ``mohsm {synth,train,evaluate,benchmark}``.

Every command prints a JSON summary on stdout and writes its artifacts under
``--out``.  Exit codes: 0 ok, 2 configuration or usage, 3 training failure,
4 evaluation failure, 5 I/O.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .gp import NotPositiveDefiniteError, posterior
from .kernels import KERNELS, InvalidParameterError, spec_from_dict
from .metrics import POINTWISE, MetricError, MetricReport
from .metrics import nll as nlpd
from .spectral_init import init_spec
from .synth import METHODS, BenchmarkSettings, ConfigError, SynthConfig, generate, run_benchmark
from .train import TrainingError, optimize, wrap_phases

log = logging.getLogger("mohsm")

EXIT_OK, EXIT_CONFIG, EXIT_TRAIN, EXIT_EVAL, EXIT_IO = 0, 2, 3, 4, 5
MODEL_FORMAT = "mohsm-model"
METRICS = tuple(POINTWISE) + ("nll",)


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CommandError(EXIT_CONFIG, f"{path}: invalid JSON ({err})") from err


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def _synth_config(args):
    d = _read_json(args.config) if args.config else {}
    if not isinstance(d, dict):
        raise ConfigError("config", "top level must be an object")
    if args.seed is not None:
        d["seed"] = args.seed
    return SynthConfig.from_dict(d)


def model_to_dict(spec, method, data, train_path, report=None, config=None):
    return {
        "format": MODEL_FORMAT,
        "version": 1,
        "method": method,
        "channels": list(data.channel_names),
        "normalization": {"mean": data.mean.tolist(), "scale": data.scale.tolist()},
        "kernel": spec.to_dict(),
        "train_data": str(train_path),
        "final_nll": None if report is None else float(report.final_nll),
        "config": config,
    }


def load_model(path):
    """Read a model JSON written by ``train``; returns ``(spec, method, train_data)``."""
    path = Path(path)
    d = _read_json(path)
    for key in ("format", "method", "channels", "normalization", "kernel", "train_data"):
        if key not in d:
            raise ConfigError(key, f"{path}: missing field in model file")
    if d["format"] != MODEL_FORMAT:
        raise ConfigError("format", f"{path}: not a model file")
    if d["method"] not in KERNELS:
        raise ConfigError("method", f"unknown method {d['method']!r}")
    spec = spec_from_dict(d["kernel"])
    train_path = Path(d["train_data"])
    if not train_path.is_absolute():
        train_path = path.parent / train_path
    train = dataio.load_csv(train_path, "long", channels=d["channels"])
    norm = d["normalization"]
    train.mean = np.asarray(norm["mean"], dtype=float)
    train.scale = np.asarray(norm["scale"], dtype=float)
    return spec, d["method"], train


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    cfg = _synth_config(args)
    out = _out_dir(args, "synth_out")
    res = generate(cfg)
    paths = {
        "train": dataio.save_csv(res.train, out / "train.csv"),
        "test": dataio.save_csv(res.test, out / "test.csv"),
        "masked": dataio.save_csv(res.masked, out / "masked.csv"),
    }
    gram_path = out / "ground_truth_gram.csv"
    np.savetxt(gram_path, res.train_gram, delimiter=",", fmt="%.17g")
    paths["gram"] = gram_path
    _write_json(out / "synth_config.json", cfg.to_dict())
    return {
        "command": "synth",
        "seed": cfg.seed,
        "counts": {"train": len(res.train), "test": len(res.test), "masked": len(res.masked)},
        "artifacts": {k: str(v) for k, v in paths.items()},
    }


def _experiment(args):
    if not args.config:
        raise ConfigError("config", "--config is required")
    cfg = dataio.ExperimentConfig.load(args.config)
    if args.method:
        cfg.method = args.method
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def cmd_train(args):
    cfg = _experiment(args)
    out = _out_dir(args, cfg.out)
    data = dataio.load_csv(cfg.data_path, cfg.schema, channels=cfg.channels)
    pool, held = dataio.apply_masks(data, cfg.masks)
    train, test = dataio.random_split(pool, cfg.train_fraction, cfg.seed)
    train = train.fit_normalization()
    heldout = test.concat(held).with_normalization(train)
    for c, name in enumerate(train.channel_names):
        if np.sum(train.channel == c) < 4:
            raise ConfigError("data", f"channel {name!r} has fewer than 4 training points")

    periodograms = []
    if args.init:
        init, method, _ = load_model(args.init)
        if method != cfg.method:
            raise ConfigError("method", f"--init model was trained as {method!r}, not {cfg.method!r}")
    else:
        P = 1 if cfg.method == "mosm" else cfg.P
        init = init_spec(train, P, cfg.Q, kernel=cfg.method, periodograms=periodograms)
    opt = cfg.optimizer
    try:
        spec, report = optimize(init, train, kernel=cfg.method, max_iters=opt.max_iters, grad_tol=opt.grad_tol,
                                algorithm=opt.algorithm, lr=opt.lr)
    except (TrainingError, NotPositiveDefiniteError) as err:
        raise CommandError(EXIT_TRAIN, f"training failed: {err}") from err
    if cfg.method in ("mohsm", "mosm"):
        spec = wrap_phases(spec)

    dataio.save_csv(train, out / "train.csv")
    dataio.save_csv(heldout, out / "heldout.csv")
    _write_json(out / "model.json", model_to_dict(spec, cfg.method, train, "train.csv", report, cfg.to_dict()))
    _write_rows(out / "train_report.csv", ["iteration", "nll", "grad_norm"],
                [(k, _fmt(f), _fmt(g)) for k, f, g in report.to_rows()])
    _write_rows(out / "periodograms.csv", ["channel", "window_id", "freq", "power"],
                [(train.channel_names[pg.channel], pg.window_id, _fmt(f), _fmt(p))
                 for pg in periodograms for f, p in zip(pg.freqs, pg.power)])
    return {
        "command": "train",
        "method": cfg.method,
        "final_nll": report.final_nll,
        "iterations": report.iterations,
        "converged": report.converged,
        "n_train": len(train),
        "n_heldout": len(heldout),
        "artifacts": {name: str(out / name) for name in
                      ("model.json", "train_report.csv", "periodograms.csv", "train.csv", "heldout.csv")},
    }


def _parse_metrics(text):
    names = [m.strip().lower() for m in (text or "mape,rmse,nmae,nll").split(",") if m.strip()]
    bad = [m for m in names if m not in METRICS]
    if bad:
        raise ConfigError("metrics", f"unknown metric {bad[0]!r}; expected a subset of {METRICS}")
    return names


def evaluate_model(spec, method, train, test, metrics):
    """Posterior at the test inputs plus a per-channel/overall ``MetricReport``."""
    post = posterior(spec, train, test.inputs, kernel=method)
    # predictive density of an observation includes its noise
    obs_var = post.variance + (spec.noise[test.channel] * train.scale[test.channel]) ** 2
    report = MetricReport()
    for metric in metrics:
        per_channel = []
        for c, name in enumerate(test.channel_names):
            sel = test.channel == c
            if not np.any(sel):
                continue
            if metric == "nll":
                v = nlpd(test.y[sel], post.mean[sel], obs_var[sel])
            else:
                v = POINTWISE[metric](test.y[sel], post.mean[sel])
            report.add(method, metric, name, [v])
            per_channel.append(v)
        if not per_channel:
            raise MetricError(metric, "no held-out points")
        # overall is the mean over channels
        report.add(method, metric, "overall", [float(np.mean(per_channel))])
    return post, report


def cmd_evaluate(args):
    if not args.spec:
        raise ConfigError("spec", "--spec is required")
    metrics = _parse_metrics(args.metrics)
    spec, method, train = load_model(args.spec)
    data_path = Path(args.data) if args.data else Path(args.spec).parent / "heldout.csv"
    test = dataio.load_csv(data_path, "auto", channels=train.channel_names)
    if len(test) == 0:
        raise CommandError(EXIT_EVAL, f"{data_path}: no evaluation points")
    out = _out_dir(args, Path(args.spec).parent)
    try:
        post, report = evaluate_model(spec, method, train, test, metrics)
    except NotPositiveDefiniteError as err:
        raise CommandError(EXIT_EVAL, f"posterior failed: {err}") from err
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    half = 1.96 * np.sqrt(post.variance)
    xcols = ["x"] if test.input_dim == 1 else [f"x{d}" for d in range(test.input_dim)]
    _write_rows(out / "posterior.csv", [*xcols, "channel", "mean", "lower95", "upper95"],
                [(*(_fmt(v) for v in x), test.channel_names[c], _fmt(m), _fmt(m - h), _fmt(m + h))
                 for x, c, m, h in zip(test.x, test.channel, post.mean, half)])
    overall = {r["metric"]: r["mean"] for r in report.records if r["channel"] == "overall"}
    return {"command": "evaluate", "method": method, "n_eval": len(test), "overall": overall,
            "clamped_variances": post.clamped,
            "artifacts": {"metrics": str(out / "metrics.json"), "posterior": str(out / "posterior.csv")}}


def cmd_benchmark(args):
    cfg = _synth_config(args)
    out = _out_dir(args, "benchmark_out")
    methods = [args.method] if args.method else list(METHODS)
    settings = BenchmarkSettings()
    if args.max_iters is not None:
        settings.max_iters = args.max_iters
    rows = []

    def keep_predictions(seed, res, fits):
        train = res.train.fit_normalization()
        ev = res.evaluation
        for m in methods:
            post = posterior(fits[m]["spec"], train, ev.inputs, kernel=m)
            rows.extend((seed, m, _fmt(x[0]), ev.channel_names[c], _fmt(y), _fmt(mu), _fmt(v))
                        for x, c, y, mu, v in zip(ev.x, ev.channel, ev.y, post.mean, post.variance))

    report, per_trial = run_benchmark(cfg, methods=methods, trials=args.trials, settings=settings,
                                      on_trial=keep_predictions)
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    _write_rows(out / "predictions.csv", ["seed", "method", "x", "channel", "y_true", "y_pred", "variance"], rows)
    _write_rows(out / "per_trial.csv", ["seed", *methods],
                [(t["seed"], *(_fmt(t[m]) if m in t else "" for m in methods)) for t in per_trial])
    summary = {m: {"mean": report.get(m, "cmd")["mean"], "std": report.get(m, "cmd")["std"]} for m in methods}
    return {"command": "benchmark", "trials": args.trials, "incomplete": report.incomplete, "cmd": summary,
            "artifacts": {"metrics": str(out / "metrics.json"), "predictions": str(out / "predictions.csv")}}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="mohsm", description="Multi-output harmonizable spectral mixture GPs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help):
        p.add_argument("--config", help=config_help)
        p.add_argument("--seed", type=int, help="override the seed in the config")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate the synthetic derivative/delay dataset")
    common(p, "SynthConfig JSON (defaults if omitted)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="initialize and train a kernel on a CSV dataset")
    common(p, "experiment JSON")
    p.add_argument("--method", choices=KERNELS, help="override the method in the config")
    p.add_argument("--init", help="warm start from a model.json written by an earlier run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="posterior predictions and metrics on held-out data")
    p.add_argument("--spec", help="model.json written by train")
    p.add_argument("--data", help="CSV of evaluation points (default: heldout.csv next to the model)")
    p.add_argument("--metrics", help=f"comma-separated subset of {','.join(METRICS)}")
    p.add_argument("--out", help="output directory (default: the model's directory)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="multi-trial CMD benchmark on the synthetic dataset")
    common(p, "SynthConfig JSON (defaults if omitted)")
    p.add_argument("--method", choices=METHODS, help="run a single method (default: all)")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--max-iters", type=int, help="optimizer iterations per fit")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (ConfigError, InvalidParameterError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MetricError as err:
        print(f"evaluation error: {err}", file=sys.stderr)
        return EXIT_EVAL
    except (TrainingError, NotPositiveDefiniteError) as err:
        print(f"training error: {err}", file=sys.stderr)
        return EXIT_TRAIN
    except (OSError, dataio.DataFormatError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

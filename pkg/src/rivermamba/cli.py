"""Command-line entry point: ``rivermamba <command> [flags]``.

Commands: gen-data, fit-thresholds, train, forecast, evaluate, curve. Each
failure exits nonzero with one diagnostic line on stderr, and files written
by the failed command are removed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from contextlib import nullcontext
from pathlib import Path

from . import workflow as W
from .config import RunConfig
from .curves import CurveKind, curve_tour, encode
from .data import generate_network, load_dataset, save_dataset, simulate
from .hydrology import FloodThresholds
from .metrics import CONTINUOUS
from .model import ModelConfig, RiverMamba
from .nncore.params import ParamStore

CHECKPOINT = "checkpoint.rsnn"
SIDECAR = "model.json"


class Outputs:
    """Files written by one command; all are removed again if the command fails."""

    def __init__(self):
        self.written: list[Path] = []

    def write(self, path, data):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def rollback(self):
        for p in self.written:
            p.unlink(missing_ok=True)


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _echo(cfg: RunConfig, out: Outputs, out_dir=None):
    text = cfg.to_json()
    print(text)
    if out_dir is not None:
        out.write(Path(out_dir) / "resolved_config.json", text + "\n")


def _dataset_path(args, cfg):
    path = getattr(args, "data", None) or cfg.data.path
    if not path:
        raise ValueError("no dataset given (use --data or data.path in the config)")
    return path


def _out_dir(args):
    if not args.out:
        raise ValueError("--out is required")
    return Path(args.out)


def _load_thresholds(args):
    if getattr(args, "thresholds", None):
        return FloodThresholds.from_csv(Path(args.thresholds).read_text())
    return None


# commands -----------------------------------------------------------------------------

def cmd_gen_data(args, out: Outputs):
    cfg = _config(args)
    d = cfg.data
    for key in ("points", "days", "width", "height"):
        if getattr(args, key) is not None:
            setattr(d, key, getattr(args, key))
    if not args.out:
        raise ValueError("--out PATH is required")
    _echo(cfg, out)
    net = generate_network(cfg.seed, d.width, d.height, d.points)
    sim = simulate(net, d.days, cfg.seed, leads=cfg.model.L, history_years=d.history_years, start=d.start)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        save_dataset(sim, tmp)
        os.replace(tmp, path)
    finally:
        Path(tmp).unlink(missing_ok=True)
    out.written.append(path)


def _prepared(args, cfg, model_cfg=None, norms=None):
    sim = load_dataset(_dataset_path(args, cfg))
    return W.Prepared(sim, model_cfg or cfg.model, tuple(cfg.split.fractions), thresholds=_load_thresholds(args),
                      norms=norms, alpha=cfg.loss.alpha)


def cmd_fit_thresholds(args, out: Outputs):
    cfg = _config(args)
    out_dir = _out_dir(args)
    _echo(cfg, out, out_dir)
    prep = _prepared(args, cfg)
    out.write(out_dir / "thresholds.csv", prep.thresholds.to_csv())


def cmd_train(args, out: Outputs):
    cfg = _config(args)
    out_dir = _out_dir(args)
    _echo(cfg, out, out_dir)
    prep = _prepared(args, cfg)
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    model, result = W.train_model(prep, cfg.train_config(), seed=cfg.seed, progress=progress)
    out.write(out_dir / CHECKPOINT, model.params.to_bytes())
    sidecar = {"model": cfg.model.to_dict(), "norms": W.norms_to_dict(prep.norms),
               "best_val_loss": result.best_val_loss, "run": cfg.to_dict()}
    out.write(out_dir / SIDECAR, json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    out.write(out_dir / "loss_trace.csv", result.trace_csv())
    out.write(out_dir / "thresholds.csv", prep.thresholds.to_csv())


def _load_model(args, cfg):
    ckpt = Path(args.checkpoint)
    side = json.loads((ckpt / SIDECAR).read_text())
    model_cfg = ModelConfig.from_dict(side["model"])
    model = RiverMamba(model_cfg, params=ParamStore.load(ckpt / CHECKPOINT))
    return model, model_cfg, W.norms_from_dict(side["norms"])


def cmd_forecast(args, out: Outputs):
    cfg = _config(args)
    out_dir = _out_dir(args)
    _echo(cfg, out, out_dir)
    model, model_cfg, norms = _load_model(args, cfg)
    prep = _prepared(args, cfg, model_cfg, norms)
    days = prep.splits[args.split]
    fc = W.forecast(model, prep, days)
    out.write(out_dir / "forecast.csv", W.forecast_rows(prep, days, fc))


def cmd_evaluate(args, out: Outputs):
    cfg = _config(args)
    out_dir = _out_dir(args)
    _echo(cfg, out, out_dir)
    forecasts = {}
    if args.checkpoint:
        model, model_cfg, norms = _load_model(args, cfg)
        prep = _prepared(args, cfg, model_cfg, norms)
        days = prep.splits[args.split]
        forecasts["rivermamba"] = W.forecast(model, prep, days)
    else:
        prep = _prepared(args, cfg)
        days = prep.splits[args.split]
    if args.oracle:
        forecasts["oracle"] = W.observed(prep, days)
    forecasts.update(W.baseline_forecasts(prep, days))
    _, reports = W.score(prep, forecasts, days)
    for name, rep in reports.items():
        for metric in list(CONTINUOUS) + ["precision", "recall", "F1"]:
            out.write(out_dir / f"metrics_{name}_{metric}.csv", rep.metric_csv(metric))
    table = W.summary_table(reports, prep.cfg.L)
    out.write(out_dir / "summary.csv", table)
    print(table, end="")


def cmd_curve(args, out: Outputs):
    kind = CurveKind.parse(args.kind)
    tour = curve_tour(kind, args.width, args.height)
    codes = encode(kind, tour, args.width, args.height)
    lines = ["position,x,y,code"] + [f"{i},{x},{y},{c}" for i, ((x, y), c) in enumerate(zip(tour, codes))]
    text = "\n".join(lines) + "\n"
    if args.out:
        out.write(Path(args.out) / f"curve_{kind.value}_{args.width}x{args.height}.csv", text)
    else:
        print(text, end="")


# parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rivermamba", description="Synthetic river discharge forecasting runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, help="upper bound on worker threads; 1 gives bit-identical reruns")
        p.add_argument("--out", help="output directory (gen-data: output file)")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "simulate a synthetic network and write a dataset container")
    p.add_argument("--points", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)

    for name, func, help_text in (("fit-thresholds", cmd_fit_thresholds, "fit flood thresholds on the training period"),
                                  ("train", cmd_train, "train a model, write checkpoint and loss trace"),
                                  ("forecast", cmd_forecast, "write discharge forecasts with severity"),
                                  ("evaluate", cmd_evaluate, "score the model and baselines")):
        p = command(name, func, help_text)
        p.add_argument("--data", help="dataset container (overrides data.path)")
        p.add_argument("--thresholds", help="thresholds CSV to use instead of fitting")
        if name == "train":
            p.add_argument("--quiet", action="store_true")
        if name in ("forecast", "evaluate"):
            p.add_argument("--checkpoint", required=(name == "forecast"), help="directory written by train")
            p.add_argument("--split", default="test", choices=("train", "val", "test"))
        if name == "evaluate":
            p.add_argument("--oracle", action="store_true", help="add a row scoring the observed targets")

    p = command("curve", cmd_curve, "print or write the tour of a space-filling curve")
    p.add_argument("--kind", required=True, choices=[k.value for k in CurveKind])
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ValueError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Outputs()
    try:
        with _thread_limit(args.threads):
            args.func(args, out)
    except KeyboardInterrupt:
        out.rollback()
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - every failure becomes one diagnostic line
        out.rollback()
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {args.command}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

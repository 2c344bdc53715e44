"""Command line entry point: ``dedupcount {sweep,train,eval,dump-shapes,gen-samples}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, checkpoint, toygen, trainers
from .toygen import ToyConfig
from .trainers import ModelKind, TrainConfig

DEFAULTS = {
    "vary": "l",
    "fixed": "0",
    "range": "0.1:0.8:0.1",
    "models": "baseline_sum,counting",
    "iters": 1000,
    "batch": 1024,
    "lr": 0.01,
    "seed": "0",
    "confidence": "on",
    "eval_size": 8192,
    "eval_data": "held-out",
    "workers": 1,
    "l": 0.5,
    "q": 0.0,
    "model": "counting",
    "count": 16,
}


def _items(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [v for v in str(value).split(",") if v.strip()]


def _floats(value) -> tuple[float, ...]:
    return tuple(float(v) for v in _items(value))


def _ints(value) -> tuple[int, ...]:
    return tuple(int(v) for v in _items(value))


def _range(text: str) -> tuple[float, float, float]:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ValueError(f"--range must be start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    return start, stop, step


def _settings(args: argparse.Namespace) -> dict:
    """Defaults, then the optional JSON config file, then explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(loaded)
    merged.update({k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS})
    return merged


def _train_config(s: dict, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=float(s["lr"]), batch_size=int(s["batch"]), iterations=int(s["iters"]),
                       seed=seed, use_confidence=s["confidence"] == "on")


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, help="training iterations (default 1000)")
    p.add_argument("--batch", type=int, help="batch size (default 1024)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.01)")
    p.add_argument("--confidence", choices=["on", "off"], help="feed the confidence-scaled output (default on)")
    p.add_argument("--config", help="JSON file with default values; flags override it")


def cmd_sweep(args) -> int:
    s = _settings(args)
    start, stop, step = _range(s["range"])
    if args.fine:
        step = 0.01
    seeds = _ints(s["seed"])
    spec = bench.SweepSpec(vary=s["vary"], fixed=_floats(s["fixed"]), start=start, stop=stop, step=step,
                           models=tuple(str(m).strip() for m in _items(s["models"])),
                           train=_train_config(s, seeds[0]), seeds=seeds, eval_size=int(s["eval_size"]),
                           held_out=s["eval_data"] == "held-out", record_time=args.record_time)
    comment = (f"dedupcount sweep vary={spec.vary} fixed={','.join(f'{v:g}' for v in spec.fixed)} "
               f"range={start:g}:{stop:g}:{step:g} models={','.join(spec.models)} "
               f"iters={spec.train.iterations} batch={spec.train.batch_size} lr={spec.train.learning_rate:g} "
               f"adam=({spec.train.beta1:g},{spec.train.beta2:g},{spec.train.eps:g}) "
               f"seeds={','.join(map(str, seeds))} confidence={s['confidence']} d={spec.train.d} "
               f"eval_size={spec.eval_size} eval_data={s['eval_data']}\n"
               f"rng={toygen.RNG_ALGORITHM}")

    def progress(row):
        acc = "failed" if row.failed else f"{row.accuracy:.4f}"
        print(f"{row.model:>12} l={row.l:<5g} q={row.q:<5g} seed={row.seed} accuracy={acc}", file=sys.stderr)

    rows = bench.run_sweep(spec, workers=int(s["workers"]), progress=progress)
    bench.write_csv(rows, args.out, comment=comment)
    if args.svg:
        bench.render_svg(rows, args.svg, kind="accuracy", vary=spec.vary)
    return 0


def cmd_train(args) -> int:
    s = _settings(args)
    seed = _ints(s["seed"])[0]
    toy = ToyConfig(l=float(s["l"]), q=float(s["q"]), seed=seed)
    ckpt, loss = trainers.train(ModelKind(s["model"]), toy, _train_config(s, seed), log_path=args.log)
    checkpoint.save(ckpt, args.out)
    print(f"final loss {loss:.6f}")
    return 0


def cmd_eval(args) -> int:
    s = _settings(args)
    ckpt = checkpoint.load(args.checkpoint)
    toy = ToyConfig(l=float(s["l"]), q=float(s["q"]), seed=_ints(s["seed"])[0])
    acc = trainers.evaluate(ckpt, toy, int(s["eval_size"]), held_out=s["eval_data"] == "held-out")
    print(f"{acc:.6f}")
    return 0


def cmd_dump_shapes(args) -> int:
    tables = []
    paths = args.checkpoint or []
    ckpts = [checkpoint.load(p) for p in paths] or [trainers.initial_checkpoint("counting", ToyConfig(l=0.5, q=0.0))]
    labels = [Path(p).stem for p in paths] or ["identity"]
    for label, ckpt in zip(labels, ckpts):
        tables.append((label, bench.shape_table(ckpt)))
    bench.dump_shapes(ckpts[0], args.out)
    if args.svg:
        bench.render_svg(tables, args.svg, kind="shapes")
    return 0


def cmd_gen_samples(args) -> int:
    s = _settings(args)
    toy = ToyConfig(l=float(s["l"]), q=float(s["q"]), seed=_ints(s["seed"])[0])
    batch = toygen.batch_for(toy, toygen.DUMP_STREAM, 0, int(s["count"]))
    toygen.dump_samples(batch, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dedupcount", description="Counting-component toy benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="train and evaluate models over a grid of l or q")
    p.add_argument("--vary", choices=["l", "q"])
    p.add_argument("--fixed", help="comma-separated values of the other parameter (default 0)")
    p.add_argument("--range", help="start:stop:step of the varied parameter (default 0.1:0.8:0.1)")
    p.add_argument("--fine", action="store_true", help="use a 0.01 step regardless of --range")
    p.add_argument("--models", help="comma-separated from baseline_sum,nms,counting")
    p.add_argument("--seed", help="comma-separated seeds (default 0)")
    p.add_argument("--eval-size", type=int, dest="eval_size")
    p.add_argument("--eval-data", choices=["held-out", "train"], dest="eval_data")
    p.add_argument("--workers", type=int, help="parallel training jobs (default 1)")
    p.add_argument("--record-time", action="store_true",
                   help="fill the seconds column with wall-clock time (output is then not reproducible)")
    _add_training_flags(p)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--svg", help="accuracy plot output path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    p.add_argument("--model", choices=[k.value for k in ModelKind])
    p.add_argument("--l", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seed")
    p.add_argument("--log", help="append 'iteration loss seconds' lines here")
    _add_training_flags(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on generated data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--l", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seed")
    p.add_argument("--eval-size", type=int, dest="eval_size")
    p.add_argument("--eval-data", choices=["held-out", "train"], dest="eval_data")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-shapes", help="sample the eight activation functions")
    p.add_argument("--checkpoint", action="append",
                   help="checkpoint file; repeat to overlay several in the SVG (CSV uses the first)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--svg", help="shape plot output path")
    p.set_defaults(func=cmd_dump_shapes)

    p = sub.add_parser("gen-samples", help="write toy samples as text")
    p.add_argument("--l", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seed")
    p.add_argument("--count", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_samples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, trainers.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Accuracy sweeps over the toy task, CSV output and activation-shape dumps."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plots
from .checkpoint import Checkpoint
from .plin import N_FUNCTIONS, PlinFunction
from .toygen import ToyConfig
from .trainers import ModelKind, TrainConfig, TrainingDiverged, evaluate, train

log = logging.getLogger(__name__)

CSV_HEADER = ("model", "l", "q", "seed", "accuracy", "loss", "seconds")
SHAPE_HEADER = ("function", "x", "fx")
SHAPE_POINTS = 256


@dataclass(frozen=True)
class SweepSpec:
    vary: str
    fixed: tuple[float, ...]
    start: float
    stop: float
    step: float
    models: tuple[str, ...] = ("baseline_sum", "counting")
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0,)
    eval_size: int = 8192
    held_out: bool = True
    record_time: bool = False

    def __post_init__(self):
        if self.vary not in ("l", "q"):
            raise ValueError(f"can only vary 'l' or 'q', not {self.vary!r}")
        if not (self.start < self.stop and self.step > 0):
            raise ValueError("need start < stop and step > 0")
        if not self.models or not self.seeds or not self.fixed:
            raise ValueError("need at least one model, one seed and one fixed value")
        for m in self.models:
            ModelKind(m)

    def grid(self) -> list[float]:
        """Inclusive grid ``start, start + step, ..., stop`` (rounded to 10 decimals)."""
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(count)]

    def jobs(self) -> list[tuple[str, float, float, int]]:
        out = []
        for other in self.fixed:
            for value in self.grid():
                l, q = (value, other) if self.vary == "l" else (other, value)
                for model in self.models:
                    for seed in self.seeds:
                        out.append((model, l, q, seed))
        return out


@dataclass(frozen=True)
class SweepRow:
    model: str
    l: float
    q: float
    seed: int
    accuracy: float | None
    loss: float | None
    seconds: float | None = None

    @property
    def failed(self) -> bool:
        return self.accuracy is None


def run_job(spec: SweepSpec, job: tuple[str, float, float, int]) -> SweepRow:
    model, l, q, seed = job
    toy = ToyConfig(l=l, q=q, seed=seed)
    cfg = replace(spec.train, seed=seed)
    start = time.perf_counter()
    try:
        ckpt, loss = train(model, toy, cfg)
        acc = evaluate(ckpt, toy, spec.eval_size, held_out=spec.held_out)
    except (TrainingDiverged, FloatingPointError) as exc:
        log.warning("%s at l=%g q=%g seed=%d failed: %s", model, l, q, seed, exc)
        acc = loss = None
    seconds = time.perf_counter() - start if spec.record_time else None
    return SweepRow(model, l, q, seed, acc, loss, seconds)


def run_sweep(spec: SweepSpec, workers: int = 1, progress=None) -> list[SweepRow]:
    """Train and evaluate every (model, grid point, seed); rows come back in grid order."""
    jobs = spec.jobs()
    if workers <= 1:
        rows = []
        for job in jobs:
            rows.append(run_job(spec, job))
            if progress is not None:
                progress(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(run_job, [spec] * len(jobs), jobs))
    if progress is not None:
        for row in rows:
            progress(row)
    return rows


# -- CSV ----------------------------------------------------------------------


def _num(v) -> str:
    return "" if v is None else f"{v:.17g}"


def write_csv(rows: Sequence[SweepRow], path, comment: str | None = None) -> None:
    """Write rows under the header ``model,l,q,seed,accuracy,loss,seconds``.

    Failed rows and unrecorded timings leave their fields empty.  ``comment``
    lines, if given, go above the header prefixed with ``#``.
    """
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow([r.model, _num(r.l), _num(r.q), r.seed, _num(r.accuracy), _num(r.loss),
                                 _num(r.seconds)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[SweepRow]:
    def opt(v: str) -> float | None:
        return float(v) if v != "" else None

    with open(path, encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    return [SweepRow(r["model"], float(r["l"]), float(r["q"]), int(r["seed"]), opt(r["accuracy"]),
                     opt(r["loss"]), opt(r["seconds"])) for r in reader]


# -- plots --------------------------------------------------------------------


def accuracy_series(rows: Sequence[SweepRow], vary: str) -> list[plots.Series]:
    """One series per (model, fixed value), seeds averaged, failed rows skipped."""
    fixed_key = "q" if vary == "l" else "l"
    groups: dict[tuple[str, float], dict[float, list[float]]] = {}
    for r in rows:
        if r.failed:
            continue
        key = (r.model, getattr(r, fixed_key))
        groups.setdefault(key, {}).setdefault(getattr(r, vary), []).append(r.accuracy)
    fixed_values = {k[1] for k in groups}
    series = []
    for (model, other), points in groups.items():
        xs = sorted(points)
        label = model if len(fixed_values) == 1 else f"{model} {fixed_key}={other:g}"
        series.append(plots.Series(label, xs, [float(np.mean(points[x])) for x in xs]))
    return series


def render_svg(data, path, kind: str = "accuracy", vary: str = "l") -> None:
    """Write an SVG.

    ``kind="accuracy"``: ``data`` is a list of :class:`SweepRow`, plotted as
    accuracy against the varied parameter.  ``kind="shapes"``: ``data`` is a
    list of ``(label, shape_rows)`` pairs (see :func:`shape_table`), one curve
    per label in each of the eight activation panels.
    """
    if kind == "accuracy":
        series = accuracy_series(data, vary)
        if not series:
            raise ValueError("no successful rows to plot")
        xs = [x for s in series for x in s.xs]
        text = plots.line_chart(series, "Toy task accuracy", vary, "accuracy", (min(xs), max(xs)))
    elif kind == "shapes":
        if not data:
            raise ValueError("no shape tables to plot")
        panels = []
        for k in range(1, N_FUNCTIONS + 1):
            series = []
            for label, table in data:
                pts = [(x, fx) for fk, x, fx in table if fk == k]
                series.append(plots.Series(label, [p[0] for p in pts], [p[1] for p in pts]))
            panels.append((f"f{k}", series))
        text = plots.panel_grid(panels, "x", "f(x)")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# -- activation shapes --------------------------------------------------------


def shape_table(ckpt: Checkpoint, points: int = SHAPE_POINTS) -> list[tuple[int, float, float]]:
    """``(function, x, f(x))`` for each activation at ``x = 0, 1/points, ..., 1``."""
    xs = np.arange(points + 1) / points
    rows = []
    for k in range(1, N_FUNCTIONS + 1):
        fx = PlinFunction(ckpt.plin[k - 1])(xs)
        rows.extend((k, float(x), float(y)) for x, y in zip(xs, fx))
    return rows


def dump_shapes(ckpt: Checkpoint, path) -> list[tuple[int, float, float]]:
    rows = shape_table(ckpt)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SHAPE_HEADER)
            for k, x, fx in rows:
                writer.writerow([k, f"{x:.17g}", f"{fx:.17g}"])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return rows

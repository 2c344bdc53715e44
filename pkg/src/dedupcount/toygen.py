"""Synthetic counting task: scored square boxes with a known number of true objects.

Each sample places ``n_boxes`` squares of side ``l`` uniformly inside the unit
square, marks ``ĉ ~ U{0..max_count}`` of them as true, scores every box by its
best IoU with a true box and mixes that score with uniform noise:
``weight = (1 - q) * score + q * z``.

Randomness comes from numpy's counter-based Philox bit generator keyed by
``(seed, stream, index)`` through ``SeedSequence`` spawn keys, so any batch
can be regenerated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .counter import iou_matrix

RNG_ALGORITHM = "numpy.random.Philox(SeedSequence(seed, spawn_key=(stream, index)))"

TRAIN_STREAM = 0
EVAL_STREAM = 1
DUMP_STREAM = 2


@dataclass(frozen=True)
class ToyConfig:
    l: float
    q: float
    n_boxes: int = 10
    max_count: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.l <= 1.0:
            raise ValueError(f"side length must be in (0, 1], got {self.l}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"noise must be in [0, 1], got {self.q}")
        if self.n_boxes < 1 or not 0 <= self.max_count <= self.n_boxes:
            raise ValueError("need 0 <= max_count <= n_boxes and n_boxes >= 1")


def stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    """Independent generator for batch ``index`` of substream ``purpose``."""
    ss = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ToySample:
    boxes: np.ndarray
    weights: np.ndarray
    true_flags: np.ndarray
    count: int
    scores: np.ndarray
    l: float
    q: float


@dataclass
class ToyBatch:
    """Arrays for a whole batch; indexing yields :class:`ToySample` objects."""

    boxes: np.ndarray        # (B, n, 4)
    weights: np.ndarray      # (B, n)
    true_flags: np.ndarray   # (B, n) bool
    counts: np.ndarray       # (B,) int
    scores: np.ndarray       # (B, n)
    l: float
    q: float

    def __len__(self) -> int:
        return self.counts.shape[0]

    def __getitem__(self, i: int) -> ToySample:
        return ToySample(self.boxes[i], self.weights[i], self.true_flags[i], int(self.counts[i]),
                         self.scores[i], self.l, self.q)

    def __iter__(self) -> Iterator[ToySample]:
        return (self[i] for i in range(len(self)))


def generate_batch(cfg: ToyConfig, count: int, rng: np.random.Generator) -> ToyBatch:
    if count <= 0:
        raise ValueError("batch size must be positive")
    n, side = cfg.n_boxes, cfg.l
    counts = rng.integers(0, cfg.max_count + 1, size=count)
    corner = rng.uniform(0.0, 1.0 - side, size=(count, n, 2))
    boxes = np.concatenate([corner, corner + side], axis=-1)
    # a random permutation per sample; its first ĉ entries are the true boxes
    order = np.argsort(rng.random((count, n)), axis=-1, kind="stable")
    rank = np.argsort(order, axis=-1, kind="stable")
    true_flags = rank < counts[:, None]
    overlap = iou_matrix(boxes)
    scores = np.where(true_flags[:, None, :], overlap, 0.0).max(axis=-1)
    z = rng.uniform(0.0, 1.0, size=(count, n))
    weights = (1.0 - cfg.q) * scores + cfg.q * z
    return ToyBatch(boxes, weights, true_flags, counts, scores, cfg.l, cfg.q)


def generate_sample(cfg: ToyConfig, rng: np.random.Generator) -> ToySample:
    return generate_batch(cfg, 1, rng)[0]


def batch_for(cfg: ToyConfig, purpose: int, index: int, size: int) -> ToyBatch:
    """The deterministic batch ``index`` of substream ``purpose`` for ``cfg.seed``."""
    return generate_batch(cfg, size, stream(cfg.seed, purpose, index))


SAMPLE_COLUMNS = "sample,box,x1,y1,x2,y2,weight,true,count"


def dump_samples(batch: ToyBatch, path) -> None:
    """Write one row per box: ``sample,box,x1,y1,x2,y2,weight,true,count``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# l={batch.l!r} q={batch.q!r} rng={RNG_ALGORITHM}\n")
        fh.write(SAMPLE_COLUMNS + "\n")
        for i in range(len(batch)):
            for j in range(batch.boxes.shape[1]):
                x1, y1, x2, y2 = (f"{v:.17g}" for v in batch.boxes[i, j])
                fh.write(f"{i},{j},{x1},{y1},{x2},{y2},{batch.weights[i, j]:.17g},"
                         f"{int(batch.true_flags[i, j])},{int(batch.counts[i])}\n")

"""Toy-task models and their training loop.

Three feature extractors share one linear softmax classifier:

* ``baseline_sum``: the summed attention weights, expanded into a soft one-hot;
* ``nms``: one-hot of the number of boxes left after greedy non-maximum
  suppression (not differentiable; only the classifier learns);
* ``counting``: the output of the counting component, trained jointly with
  its activation functions.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import counter, toygen
from .autodiff import Var
from .checkpoint import Checkpoint
from .plin import DEFAULT_SEGMENTS, PlinBank
from .toygen import ToyBatch, ToyConfig, ToySample

NMS_IOU_THRESHOLD = 0.5
EVAL_CHUNK = 1024


class ModelKind(str, enum.Enum):
    BASELINE_SUM = "baseline_sum"
    NMS = "nms"
    COUNTING = "counting"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 1024
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    use_confidence: bool = True
    d: int = DEFAULT_SEGMENTS

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.iterations < 1:
            raise ValueError("learning rate, batch size and iterations must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam hyperparameters")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became {loss!r} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


class ClassifierHead:
    """Linear map from count features to class logits; starts at zero."""

    def __init__(self, n_features: int, n_classes: int):
        self.weight = Var(np.zeros((n_classes, n_features)), name="head.weight")
        self.bias = Var(np.zeros(n_classes), name="head.bias")

    def __call__(self, features) -> Var:
        return ad.linear(features, self.weight, self.bias)


# -- features -----------------------------------------------------------------


def baseline_features(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return counter.expand_count(w.sum(axis=-1), w.shape[-1]).value


def baseline_forward(sample: ToySample) -> np.ndarray:
    return baseline_features(sample.weights)


def nms_counts(boxes, weights, iou_threshold: float = NMS_IOU_THRESHOLD) -> np.ndarray:
    """Boxes kept by greedy NMS, per sample.  No score threshold; weight ties keep the lower index first."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("IoU threshold must be in (0, 1)")
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    b = np.asarray(boxes, dtype=np.float64).reshape(w.shape + (4,))
    overlap = counter.iou_matrix(b)
    order = np.argsort(-w, axis=-1, kind="stable")
    rows = np.arange(w.shape[0])
    kept = np.zeros(w.shape, dtype=bool)
    for rank in range(w.shape[1]):
        cand = order[:, rank]
        clash = (overlap[rows, cand, :] > iou_threshold) & kept
        kept[rows, cand] = ~clash.any(axis=-1)
    return kept.sum(axis=-1)


def nms_features(boxes, weights, iou_threshold: float = NMS_IOU_THRESHOLD) -> np.ndarray:
    counts = nms_counts(boxes, weights, iou_threshold)
    n = np.shape(weights)[-1]
    return np.eye(n + 1)[counts]


def nms_count(sample: ToySample, iou_threshold: float = NMS_IOU_THRESHOLD) -> np.ndarray:
    return nms_features(sample.boxes, sample.weights, iou_threshold)[0]


def counting_forward(sample, bank: PlinBank, head: ClassifierHead, use_confidence: bool = True) -> Var:
    """Logits of the counting model for a sample or a batch."""
    weights = np.asarray(sample.weights, dtype=np.float64)
    boxes = np.asarray(sample.boxes, dtype=np.float64)
    single = weights.ndim == 1
    trace = counter.forward(np.atleast_2d(weights), boxes.reshape((-1,) + boxes.shape[-2:]), bank,
                            use_confidence=use_confidence)
    logits = head(trace.o_scaled)
    return logits[0] if single else logits


def features(kind: ModelKind, batch: ToyBatch, bank: PlinBank | None = None, use_confidence: bool = True):
    kind = ModelKind(kind)
    if kind is ModelKind.BASELINE_SUM:
        return baseline_features(batch.weights)
    if kind is ModelKind.NMS:
        return nms_features(batch.boxes, batch.weights)
    return counter.forward(batch.weights, batch.boxes, bank, use_confidence=use_confidence).o_scaled


# -- loss and optimiser -------------------------------------------------------


def cross_entropy(logits, labels) -> Var:
    """Mean of ``-log softmax(logits)[label]``; a single logit vector gives its own loss."""
    lv = ad.value_of(logits)
    labels = np.asarray(labels, dtype=np.intp)
    onehot = np.zeros(lv.shape)
    if lv.ndim == 1:
        onehot[labels] = 1.0
        return -ad.vsum(ad.log_softmax(logits) * onehot)
    onehot[np.arange(lv.shape[0]), labels] = 1.0
    return -ad.mean(ad.vsum(ad.log_softmax(logits) * onehot, axis=-1))


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.  Inputs are not modified."""
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m.get(name, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(p)) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


# -- training -----------------------------------------------------------------


def config_hash(kind: ModelKind, toy_cfg: ToyConfig, train_cfg: TrainConfig) -> str:
    blob = json.dumps({"kind": ModelKind(kind).value, "toy": dataclasses.asdict(toy_cfg),
                       "train": dataclasses.asdict(train_cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def train(kind: ModelKind, toy_cfg: ToyConfig, train_cfg: TrainConfig, log_path=None) -> tuple[Checkpoint, float]:
    """Train on a fresh generated batch per iteration and return ``(checkpoint, last loss)``.

    ``train_cfg.seed`` is not used for data; batches come from ``toy_cfg.seed``.
    With ``log_path``, one ``iteration loss seconds`` line is appended per iteration.
    """
    kind = ModelKind(kind)
    n = toy_cfg.n_boxes
    bank = PlinBank.identity(train_cfg.d)
    head = ClassifierHead(n + 1, toy_cfg.max_count + 1)
    params: dict[str, Var] = {"head.weight": head.weight, "head.bias": head.bias}
    if kind is ModelKind.COUNTING:
        params["plin"] = bank.weights

    log = open(log_path, "a", encoding="utf-8") if log_path is not None else None
    state = AdamState()
    loss_value = math.nan
    start = time.perf_counter()
    try:
        for it in range(train_cfg.iterations):
            batch = toygen.batch_for(toy_cfg, toygen.TRAIN_STREAM, it, train_cfg.batch_size)
            feats = features(kind, batch, bank, train_cfg.use_confidence)
            loss = cross_entropy(head(feats), batch.counts)
            loss_value = float(loss.value)
            if not math.isfinite(loss_value):
                raise TrainingDiverged(it, loss_value)
            ad.backward(loss)
            new, state = adam_step({k: p.value for k, p in params.items()},
                                   {k: p.grad for k, p in params.items()}, state, train_cfg)
            for k, p in params.items():
                p.value = new[k]
            if log is not None:
                log.write(f"{it} {loss_value!r} {time.perf_counter() - start:.3f}\n")
    finally:
        if log is not None:
            log.close()

    ckpt = Checkpoint(kind=kind.value, plin=bank.weights.value.copy(), head_weight=head.weight.value.copy(),
                      head_bias=head.bias.value.copy(), use_confidence=train_cfg.use_confidence,
                      config_hash=config_hash(kind, toy_cfg, train_cfg))
    return ckpt, loss_value


def predict(ckpt: Checkpoint, batch: ToyBatch) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest class index."""
    bank = PlinBank(ckpt.plin)
    head = ClassifierHead(ckpt.n + 1, ckpt.classes)
    head.weight.value, head.bias.value = ckpt.head_weight, ckpt.head_bias
    feats = features(ckpt.kind, batch, bank, ckpt.use_confidence)
    return np.argmax(head(feats).value, axis=-1)


def evaluate(ckpt: Checkpoint, toy_cfg: ToyConfig, eval_size: int = 8192, held_out: bool = True) -> float:
    """Exact-match accuracy on ``eval_size`` samples.

    Held-out data comes from the evaluation substream; ``held_out=False``
    scores the first training batches instead.
    """
    if ckpt.n != toy_cfg.n_boxes:
        raise ValueError(f"checkpoint expects {ckpt.n} boxes, config has {toy_cfg.n_boxes}")
    purpose = toygen.EVAL_STREAM if held_out else toygen.TRAIN_STREAM
    correct = 0
    done = 0
    chunk = 0
    while done < eval_size:
        size = min(EVAL_CHUNK, eval_size - done)
        batch = toygen.batch_for(toy_cfg, purpose, chunk, size)
        correct += int(np.sum(predict(ckpt, batch) == batch.counts))
        done += size
        chunk += 1
    return correct / eval_size


def initial_checkpoint(kind: ModelKind, toy_cfg: ToyConfig, d: int = DEFAULT_SEGMENTS,
                       use_confidence: bool = True) -> Checkpoint:
    """Identity activations and a zero classifier, i.e. the state before training."""
    return Checkpoint(kind=ModelKind(kind).value, plin=np.ones((8, d)),
                      head_weight=np.zeros((toy_cfg.max_count + 1, toy_cfg.n_boxes + 1)),
                      head_bias=np.zeros(toy_cfg.max_count + 1), use_confidence=use_confidence)


"""Differentiable counting from attention weights and possibly overlapping boxes.

Proposals become a weighted graph through the outer product of their weights.
Edges between overlapping proposals of one object are masked out with the
pairwise box distance, proposals with identical edge patterns are averaged
through per-vertex scales, self-loops are put back, and the count is the
square root of the total edge weight.

All operations accept leading batch dimensions: ``a`` has shape ``(..., n)``
and boxes ``(..., n, 4)`` as ``(x1, y1, x2, y2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .plin import PlinBank, plin_apply


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"box corners out of order: {self}")
        if min(self.x1, self.y1, self.x2, self.y2) < 0 or max(self.x1, self.y1, self.x2, self.y2) > 1:
            raise ValueError(f"box outside the unit square: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2])


def iou(b1, b2) -> float:
    """Intersection over union of two boxes; two zero-area boxes give 0."""
    b1 = b1.as_array() if isinstance(b1, Box) else np.asarray(b1, dtype=np.float64)
    b2 = b2.as_array() if isinstance(b2, Box) else np.asarray(b2, dtype=np.float64)
    return float(_iou(b1[None, :], b2[None, :])[0, 0])


def _area(b: np.ndarray) -> np.ndarray:
    return np.clip(b[..., 2] - b[..., 0], 0, None) * np.clip(b[..., 3] - b[..., 1], 0, None)


def _iou(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    lo = np.maximum(p[..., :, None, :2], r[..., None, :, :2])
    hi = np.minimum(p[..., :, None, 2:], r[..., None, :, 2:])
    wh = np.clip(hi - lo, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = _area(p)[..., :, None] + _area(r)[..., None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return np.clip(out, 0.0, 1.0)


def iou_matrix(boxes) -> np.ndarray:
    """Pairwise IoU over the box axis, shape ``(..., n, n)``."""
    b = np.asarray(boxes, dtype=np.float64)
    return _iou(b, b)


class Activations:
    """Knot table of a bank, computed once per forward pass and shared by every use."""

    def __init__(self, bank: PlinBank):
        self.bank = bank
        self.table = bank.knot_table()
        self._rows: dict[int, Var] = {}

    def __call__(self, k: int, x) -> Var:
        if k not in self._rows:
            self._rows[k] = self.table[k - 1]
        return plin_apply(x, self._rows[k])


def _acts(bank) -> Activations:
    return bank if isinstance(bank, Activations) else Activations(bank)


def attention_matrix(a) -> Var:
    return ad.outer(a)


def distance_matrix(boxes) -> np.ndarray:
    return 1.0 - iou_matrix(boxes)


def dedup_intra(A, D, bank) -> Var:
    """Mask edges between overlapping proposals: ``f1(A) * f2(D)``."""
    f = _acts(bank)
    return f(1, A) * f(2, D)


def _pair_index(n: int):
    # unordered pairs i <= j, plus the map from (i, j) back to its pair slot
    rows, cols = np.triu_indices(n)
    slot = np.empty((n, n), dtype=np.intp)
    slot[rows, cols] = np.arange(rows.size)
    slot[cols, rows] = np.arange(rows.size)
    return rows, cols, slot


def similarity_matrix(a, A, D, bank) -> tuple[Var, Var]:
    """Return ``(X, Sim)`` where ``X = f4(A) * f5(D)`` and

    ``Sim_ij = f3(1 - |a_i - a_j|) * prod_k f3(1 - |X_ik - X_jk|)``.
    The product runs over every column, including ``k = i`` and ``k = j``.
    Sim is symmetric, so each unordered pair (diagonal included) is evaluated once.
    """
    f = _acts(bank)
    X = f(4, A) * f(5, D)
    rows, cols, slot = _pair_index(ad.value_of(a).shape[-1])
    row_diff = ad.absolute(ad.take(X, rows, axis=-2) - ad.take(X, cols, axis=-2))
    row_term = ad.prod(f(3, 1.0 - row_diff), axis=-1)
    att_diff = ad.absolute(ad.take(a, rows, axis=-1) - ad.take(a, cols, axis=-1))
    pairs = f(3, 1.0 - att_diff) * row_term
    return X, ad.take(pairs, slot, axis=-1)


def vertex_scales(sim) -> Var:
    row = ad.vsum(sim, axis=-1)
    if np.any(row.value <= 0):
        raise ArithmeticError("similarity row sum is not positive")
    return ad.reciprocal(row)


def count_matrix(A_dedup, s, a, bank) -> Var:
    """``C = Ã * s s^T + diag(s * f1(a * a))``; self-loops scale with ``s``, not ``s^2``."""
    f = _acts(bank)
    return A_dedup * ad.outer(s) + ad.diag(s * f(1, a * a))


def count_scalar(C) -> Var:
    return ad.sqrt(ad.vsum(C, axis=(-2, -1)))


def expand_count(c, n: int) -> Var:
    """``o_i = max(0, 1 - |c - i|)`` for ``i = 0..n``."""
    c_col = ad.reshape(c, ad.value_of(c).shape + (1,))
    return ad.relu(1.0 - ad.absolute(c_col - np.arange(n + 1, dtype=np.float64)))


def confidence(a, D, o, bank) -> tuple[Var, Var, Var]:
    """Return ``(p_a, p_D, õ)`` with ``õ = f8(p_a + p_D) * o``."""
    f = _acts(bank)
    p_a = ad.mean(ad.absolute(f(6, a) - 0.5), axis=-1)
    p_D = ad.mean(ad.absolute(f(7, D) - 0.5), axis=(-2, -1))
    scale = f(8, p_a + p_D)
    return p_a, p_D, ad.reshape(scale, scale.shape + (1,)) * o


@dataclass
class ComponentTrace:
    """Every intermediate of one forward pass; fields are Vars (use ``.value``)."""

    A: Var
    D: Var
    A_dedup: Var
    X: Var
    Sim: Var
    s: Var
    C: Var
    c: Var
    o: Var
    p_a: Var
    p_D: Var
    o_scaled: Var

    @property
    def output(self) -> Var:
        return self.o_scaled


def forward(a, boxes, bank: PlinBank, use_confidence: bool = True) -> ComponentTrace:
    """Run the counting component on attention ``a`` and ``boxes``.

    With ``use_confidence`` off, ``o_scaled`` is ``o`` itself.
    """
    if not isinstance(a, Var):
        a = np.asarray(a, dtype=np.float64)
    av = ad.value_of(a)
    n = av.shape[-1]
    b = np.asarray(boxes, dtype=np.float64)
    if b.shape[-2:] != (n, 4):
        raise ValueError(f"expected boxes of shape (..., {n}, 4), got {b.shape}")
    if av.size and (av.min() < 0 or av.max() > 1):
        raise ValueError("attention weights must lie in [0, 1]")

    f = Activations(bank)
    A = attention_matrix(a)
    D = Var(distance_matrix(b))
    A_dedup = dedup_intra(A, D, f)
    X, sim = similarity_matrix(a, A, D, f)
    s = vertex_scales(sim)
    C = count_matrix(A_dedup, s, a, f)
    c = count_scalar(C)
    o = expand_count(c, n)
    p_a, p_D, o_conf = confidence(a, D, o, f)
    o_scaled = o_conf if use_confidence else o
    return ComponentTrace(A=A, D=D, A_dedup=A_dedup, X=X, Sim=sim, s=s, C=C, c=c, o=o,
                          p_a=p_a, p_D=p_D, o_scaled=o_scaled)

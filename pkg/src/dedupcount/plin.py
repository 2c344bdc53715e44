"""Learnable monotone piecewise-linear functions on [0, 1].

A function with ``d`` weights splits [0, 1] into ``d`` equal intervals; the
absolute value of weight ``i`` is the slope on interval ``i`` before
normalisation.  Dividing by the total pins ``f(0) = 0`` and ``f(1) = 1`` and the
absolute values make the function non-decreasing.

Evaluation goes through the normalised cumulative sums ("knots"), the values of
``f`` at ``0, 1/d, ..., 1``; between knots ``f`` interpolates linearly.
"""

from __future__ import annotations

import logging

import numpy as np

from .autodiff import Var, backward, make_node

log = logging.getLogger(__name__)

DEFAULT_SEGMENTS = 16
N_FUNCTIONS = 8
_RANGE_SLACK = 1e-12


def knots(weights) -> np.ndarray:
    """Normalised cumulative sums of ``|w|`` with a leading zero, over the last axis."""
    w = np.abs(np.asarray(weights, dtype=np.float64))
    csum = np.cumsum(w, axis=-1)
    total = csum[..., -1:]
    if np.any(total <= 0):
        raise ValueError("piecewise-linear weights are all zero")
    zero = np.zeros(w.shape[:-1] + (1,))
    # dividing by the last cumulative sum makes the final knot exactly 1.0
    return np.concatenate([zero, csum / total], axis=-1)


def plin_knots(weights) -> Var:
    """Differentiable version of :func:`knots`; gradients pass through the normaliser."""
    wv = weights.value if isinstance(weights, Var) else np.asarray(weights, dtype=np.float64)
    out = knots(wv)
    csum = np.cumsum(np.abs(wv), axis=-1)
    total = csum[..., -1:]

    def vjp(g):
        g = g[..., 1:]
        # d knot_k / d|w_j| = [j <= k] / S - C_k / S^2
        tail = np.cumsum(g[..., ::-1], axis=-1)[..., ::-1]
        shared = (g * csum).sum(axis=-1, keepdims=True)
        g_abs = tail / total - shared / (total * total)
        return (g_abs * np.sign(wv),)

    return make_node(out, (weights,), vjp)


def _locate(xv: np.ndarray, d: int):
    lo, hi = (xv.min(), xv.max()) if xv.size else (0.0, 1.0)
    inside = None
    if lo < 0.0 or hi > 1.0:
        if lo < -_RANGE_SLACK or hi > 1.0 + _RANGE_SLACK:
            log.warning("piecewise-linear input outside [0, 1] (min %r, max %r); clamping", lo, hi)
        inside = (xv >= 0.0) & (xv <= 1.0)
        xv = np.clip(xv, 0.0, 1.0)
    y = xv * d
    idx = np.minimum(y.astype(np.intp), d - 1)
    frac = y - idx
    return idx, frac, inside


def plin_apply(x, knot_values) -> Var:
    """Evaluate the function described by ``knot_values`` (shape ``(d + 1,)``) elementwise on ``x``."""
    xv = x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
    kv = knot_values.value if isinstance(knot_values, Var) else np.asarray(knot_values, dtype=np.float64)
    d = kv.shape[-1] - 1
    idx, frac, inside = _locate(xv, d)
    lo = kv[idx]
    hi = kv[idx + 1]
    # convex-combination form keeps f(0) and f(1) exact
    out = lo * (1.0 - frac) + hi * frac

    def vjp(g):
        gx = None
        if isinstance(x, Var):
            gx = g * (d * (hi - lo))
            if inside is not None:
                gx = gx * inside
        gk = None
        if isinstance(knot_values, Var):
            flat_idx = idx.ravel()
            gk = np.bincount(flat_idx, weights=(g * (1.0 - frac)).ravel(), minlength=d + 1)
            gk += np.bincount(flat_idx + 1, weights=(g * frac).ravel(), minlength=d + 1)
        return gx, gk

    return make_node(out, (x, knot_values), vjp)


class PlinFunction:
    """One monotone piecewise-linear function with cached knots.

    The weights are unconstrained; only their absolute values matter.  The
    knot cache is rebuilt whenever :attr:`weights` is assigned.
    """

    def __init__(self, weights):
        self.weights = weights

    @classmethod
    def identity(cls, d: int = DEFAULT_SEGMENTS) -> "PlinFunction":
        return cls(np.ones(d))

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @weights.setter
    def weights(self, value) -> None:
        w = np.array(value, dtype=np.float64).ravel()
        if w.size < 1:
            raise ValueError("need at least one segment")
        self._weights = w
        self._weights.setflags(write=False)
        self._knots = knots(w)

    @property
    def d(self) -> int:
        return self._weights.size

    @property
    def knots(self) -> np.ndarray:
        return self._knots

    def __call__(self, x):
        return plin_eval(self, x)

    def __repr__(self) -> str:
        return f"PlinFunction(d={self.d})"


def plin_eval(f: PlinFunction, x):
    """Evaluate ``f`` at a scalar or array ``x``; inputs outside [0, 1] are clamped."""
    out = plin_apply(np.asarray(x, dtype=np.float64), f.knots).value
    return float(out) if out.ndim == 0 else out


def plin_eval_matrix(f: PlinFunction, m) -> np.ndarray:
    return np.asarray(plin_apply(np.asarray(m, dtype=np.float64), f.knots).value)


def plin_gradients(f: PlinFunction, x: float) -> tuple[float, np.ndarray]:
    """Return ``(df/dx, df/dw)`` at ``x``.  A weight that is exactly zero gets zero gradient."""
    xs = Var(np.float64(x))
    w = Var(f.weights.copy())
    out = plin_apply(xs, plin_knots(w))
    backward(out)
    return float(xs.grad), np.array(w.grad)


class PlinBank:
    """The eight activation functions of the counting component.

    ``weights`` is a ``(8, d)`` Var so the bank can take part in a recorded
    computation; index ``k`` (1-based) is the function used for role ``f_k``:
    1 attention matrix, 2 distance, 3 similarity, 4/5 similarity input,
    6/7 confidence terms, 8 output scale.
    """

    def __init__(self, weights):
        if not isinstance(weights, Var):
            weights = Var(np.array(weights, dtype=np.float64), name="plin")
        if weights.value.ndim != 2 or weights.value.shape[0] != N_FUNCTIONS:
            raise ValueError(f"expected ({N_FUNCTIONS}, d) weights, got {weights.shape}")
        self.weights = weights

    @classmethod
    def identity(cls, d: int = DEFAULT_SEGMENTS) -> "PlinBank":
        return cls(np.ones((N_FUNCTIONS, d)))

    @property
    def d(self) -> int:
        return self.weights.value.shape[1]

    def function(self, k: int) -> PlinFunction:
        if not 1 <= k <= N_FUNCTIONS:
            raise IndexError(f"function index must be in 1..{N_FUNCTIONS}, got {k}")
        return PlinFunction(self.weights.value[k - 1])

    def knot_table(self) -> Var:
        """Knots of all eight functions as one node, shape ``(8, d + 1)``."""
        return plin_knots(self.weights)

    def copy(self) -> "PlinBank":
        return PlinBank(self.weights.value.copy())

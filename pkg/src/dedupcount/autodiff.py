"""Small array-valued reverse-mode differentiation.

Every operation records its parents and a vector-Jacobian product closure on
the output node.  A graph lives only as long as the nodes that reference it, so
each forward pass builds a fresh one.  Values are always float64.

Subgradient conventions: ``d|x|/dx = 0`` and ``d max(0, x)/dx = 0`` at ``x = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

SQRT_GRAD_FLOOR = 1e-8


class Var:
    """An array value plus the adjoint filled in by :func:`backward`."""

    __slots__ = ("value", "grad", "_parents", "_vjp", "name")

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._vjp = vjp
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, reciprocal(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Var":
        return vsum(self, axis=axis, keepdims=keepdims)


def value_of(x) -> np.ndarray:
    """The array behind a Var, or ``x`` itself as a float64 array."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def make_node(value, parents: Sequence, vjp: Callable) -> Var:
    """Create an output node.

    ``parents`` may mix Vars and plain arrays.  ``vjp(g)`` must return one
    gradient per parent (``None`` for parents that need none).  When no parent
    is a Var the result is a fresh leaf and nothing is recorded.
    """
    if not any(isinstance(p, Var) for p in parents):
        return Var(value)
    return Var(value, tuple(parents), vjp)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (undoing numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise -------------------------------------------------------------


def add(x, y) -> Var:
    xv, yv = value_of(x), value_of(y)
    return make_node(xv + yv, (x, y), lambda g: (unbroadcast(g, xv.shape), unbroadcast(g, yv.shape)))


def sub(x, y) -> Var:
    xv, yv = value_of(x), value_of(y)
    return make_node(xv - yv, (x, y), lambda g: (unbroadcast(g, xv.shape), unbroadcast(-g, yv.shape)))


def mul(x, y) -> Var:
    xv, yv = value_of(x), value_of(y)

    def vjp(g):
        gx = unbroadcast(g * yv, xv.shape) if isinstance(x, Var) else None
        gy = unbroadcast(g * xv, yv.shape) if isinstance(y, Var) else None
        return gx, gy

    return make_node(xv * yv, (x, y), vjp)


def absolute(x) -> Var:
    xv = value_of(x)
    return make_node(np.abs(xv), (x,), lambda g: (g * np.sign(xv),))


def relu(x) -> Var:
    xv = value_of(x)
    return make_node(np.maximum(xv, 0.0), (x,), lambda g: (g * (xv > 0.0),))


def sqrt(x, floor: float = SQRT_GRAD_FLOOR) -> Var:
    """Exact square root whose backward divides by ``max(sqrt|x|, floor)``."""
    xv = value_of(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(xv)
    denom = 2.0 * np.maximum(np.sqrt(np.abs(xv)), floor)
    return make_node(out, (x,), lambda g: (g / denom,))


def reciprocal(x) -> Var:
    xv = value_of(x)
    with np.errstate(divide="ignore"):
        out = 1.0 / xv
    return make_node(out, (x,), lambda g: (-g * out * out,))


def exp(x) -> Var:
    out = np.exp(value_of(x))
    return make_node(out, (x,), lambda g: (g * out,))


# -- structural --------------------------------------------------------------


def outer(u, v=None) -> Var:
    """Batched outer product over the last axis: ``out[..., i, j] = u_i v_j``."""
    if v is None:
        v = u
    uv, vv = value_of(u), value_of(v)
    out = uv[..., :, None] * vv[..., None, :]

    def vjp(g):
        gu = np.matmul(g, vv[..., :, None])[..., 0] if isinstance(u, Var) else None
        gv = np.matmul(uv[..., None, :], g)[..., 0, :] if isinstance(v, Var) else None
        if u is v:
            return gu + gv, None
        return gu, gv

    parents = (u, None) if u is v else (u, v)
    return make_node(out, parents, vjp)


def diag(x) -> Var:
    """Embed the last axis of ``x`` as the diagonal of a matrix."""
    xv = value_of(x)
    n = xv.shape[-1]
    out = np.zeros(xv.shape + (n,))
    idx = np.arange(n)
    out[..., idx, idx] = xv
    return make_node(out, (x,), lambda g: (g[..., idx, idx],))


def reshape(x, shape) -> Var:
    xv = value_of(x)
    return make_node(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def getitem(x, index) -> Var:
    """Basic (non-fancy) indexing; the backward writes into a zero array."""
    xv = value_of(x)

    def vjp(g):
        out = np.zeros_like(xv)
        out[index] = g
        return (out,)

    return make_node(xv[index], (x,), vjp)


def take(x, indices, axis: int = -1) -> Var:
    """``np.take`` along one axis; the backward scatter-adds with ``np.bincount``."""
    xv = value_of(x)
    axis = axis % xv.ndim
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(xv, idx, axis=axis)
    m = xv.shape[axis]
    lead = int(np.prod(xv.shape[:axis], dtype=np.intp))
    trail = int(np.prod(xv.shape[axis + 1:], dtype=np.intp))

    def vjp(g):
        g = g.reshape(lead, idx.size, trail)
        # flat target position of every gradient entry in the (lead, m, trail) result
        target = (np.arange(lead)[:, None, None] * m + idx.ravel()[None, :, None]) * trail \
            + np.arange(trail)[None, None, :]
        summed = np.bincount(target.ravel(), weights=g.ravel(), minlength=lead * m * trail)
        return (summed.reshape(xv.shape),)

    return make_node(out, (x,), vjp)


# -- reductions --------------------------------------------------------------


def vsum(x, axis=None, keepdims: bool = False) -> Var:
    xv = value_of(x)
    out = xv.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape),)

    return make_node(out, (x,), vjp)


def mean(x, axis=None) -> Var:
    xv = value_of(x)
    if axis is None:
        count = xv.size
    else:
        count = int(np.prod([xv.shape[ax] for ax in np.atleast_1d(axis)]))
    return mul(vsum(x, axis=axis), 1.0 / count)


def prod(x, axis: int = -1) -> Var:
    """Product reduction.  The backward uses exclusive prefix/suffix products, so zeros are fine."""
    xv = np.moveaxis(value_of(x), axis, -1)
    out = np.prod(xv, axis=-1)

    def vjp(g):
        ones = np.ones(xv.shape[:-1] + (1,))
        left = np.concatenate([ones, np.cumprod(xv[..., :-1], axis=-1)], axis=-1)
        right = np.concatenate([np.cumprod(xv[..., :0:-1], axis=-1)[..., ::-1], ones], axis=-1)
        return (np.moveaxis(g[..., None] * left * right, -1, axis),)

    return make_node(out, (x,), vjp)


def linear(x, weight, bias) -> Var:
    """``x @ weight.T + bias`` for ``x`` of shape (batch, in)."""
    xv, wv, bv = value_of(x), value_of(weight), value_of(bias)

    def vjp(g):
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return make_node(xv @ wv.T + bv, (x, weight, bias), vjp)


def log_softmax(x) -> Var:
    """Log-softmax over the last axis with max subtraction."""
    xv = value_of(x)
    shifted = xv - xv.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)
    return make_node(out, (x,), lambda g: (g - probs * g.sum(axis=-1, keepdims=True),))


# -- engine ------------------------------------------------------------------


def _topological(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if isinstance(parent, Var) and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Var) -> dict[Var, np.ndarray]:
    """Propagate adjoints from a scalar ``output`` into every reachable node.

    Adjoints are recomputed from scratch on each call.  Returns the adjoints of
    the leaf nodes, keyed by node.
    """
    if not isinstance(output, Var):
        raise TypeError("backward needs a Var")
    if output.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    order = _topological(output)
    for node in order:
        node.grad = None
    output.grad = np.ones_like(output.value)
    leaves: dict[Var, np.ndarray] = {}
    for node in reversed(order):
        g = node.grad
        if g is None:
            g = node.grad = np.zeros_like(node.value)
        if node._vjp is None:
            leaves[node] = g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not isinstance(parent, Var) or pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    return leaves


# -- finite-difference verification -------------------------------------------


@dataclass
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    nonfinite: np.ndarray = field(repr=False)

    @property
    def max_rel_error(self) -> float:
        ok = ~self.nonfinite
        return float(self.rel_error[ok].max()) if ok.any() else 0.0

    @property
    def flagged(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.nonfinite)]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn: Callable[[Var], Var], point: Iterable[float], step: float = 1e-6) -> GradReport:
    """Compare ``backward`` against central differences of ``fn`` around ``point``.

    ``fn`` maps a 1-D parameter Var to a scalar Var.  Coordinates where the
    function or either perturbed evaluation is non-finite are flagged and
    left out of the maximum; mismatches never raise.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.array(point, dtype=np.float64).ravel()
    param = Var(x0.copy())
    with np.errstate(all="ignore"):
        out = fn(param)
        backward(out)
    analytic = np.array(param.grad if param.grad is not None else np.zeros_like(x0), dtype=np.float64)
    analytic = analytic.ravel()

    numeric = np.empty_like(x0)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += step
        xm[i] -= step
        with np.errstate(all="ignore"):
            fp = float(value_of(fn(Var(xp))))
            fm = float(value_of(fn(Var(xm))))
        numeric[i] = (fp - fm) / (2.0 * step)

    nonfinite = ~(np.isfinite(numeric) & np.isfinite(analytic) & np.isfinite(out.value))
    with np.errstate(all="ignore"):
        rel = relative_error(analytic, numeric)
    rel[nonfinite] = np.nan
    return GradReport(analytic=analytic, numeric=numeric, rel_error=rel, nonfinite=nonfinite)

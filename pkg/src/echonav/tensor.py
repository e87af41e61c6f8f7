"""Dense float64 tensors with reverse-mode automatic differentiation.

Every network operation in the package is assembled from the kernels here.
The engine is deliberately small: a :class:`Tensor` wraps a NumPy array, each
differentiable op records its parents and a closure mapping the output
gradient to parent gradients, and :func:`backward` walks the recorded graph in
reverse topological order.

Graph policy
------------
Graphs are *reusable*: ``backward`` never frees the recorded closures, and
intermediate gradients live in a scratch dictionary rather than on the nodes.
Only leaf tensors with ``requires_grad=True`` receive gradients, and they
ACCUMULATE.  Calling ``backward`` twice on the same loss therefore doubles every
leaf gradient exactly; callers zero gradients between optimizer steps.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (thread-local)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg})"

    # operator sugar
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
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple, backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _node(out, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _node(np.log(xd), (x,), lambda g: (g / xd,))


def log1p(x: Tensor) -> Tensor:
    xd = x.data
    return _node(np.log1p(xd), (x,), lambda g: (g / (1.0 + xd),))


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def bw(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return _node(out, (a, b), bw)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    # a degenerate interval makes the function constant
    mask = (x.data >= lo) & (x.data <= hi) & (lo < hi)
    return _node(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    inv = tuple(np.argsort(axes))
    return _node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    n = len(tensors)

    def bw(g):
        g = np.moveaxis(g, axis, 0)
        return tuple(g[i] for i in range(n))

    return _node(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    out = x.data[idx]
    return _node(np.array(out, dtype=np.float64), (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ _swap(bd), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(_swap(ad) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _node(ad @ bd, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x`` (fused kernel)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    k, n = w.shape
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        out = out + b.data

    def bw(g):
        g2 = g.reshape(-1, n)
        gx = (g @ wd.T) if x.requires_grad else None
        gw = (xd.reshape(-1, k).T @ g2) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bw)


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------

def softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), bw)


def log_softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _node(y, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape}/beta {beta.shape} vs last dim {d}")
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return _node(xhat * gd + beta.data, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# recurrent cell
# ---------------------------------------------------------------------------

@dataclass
class GRUParams:
    """Gate-stacked GRU weights; column blocks are ordered (reset, update, candidate)."""

    w_x: Tensor  # din x 3dh
    w_h: Tensor  # dh x 3dh
    b_x: Tensor  # 3dh
    b_h: Tensor  # 3dh

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def named(self):
        return [("w_x", self.w_x), ("w_h", self.w_h), ("b_x", self.b_x), ("b_h", self.b_h)]


def gru_cell(x: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """One GRU update ``h' = (1 - z) * n + z * h`` as a single fused node."""
    dh = p.hidden_size
    if x.ndim != 2 or h.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ShapeError(f"gru_cell: x {x.shape} and h {h.shape} must be [B, din] and [B, dh]")
    if x.shape[1] != p.w_x.shape[0] or h.shape[1] != dh or p.w_x.shape[1] != 3 * dh:
        raise ShapeError(f"gru_cell: x {x.shape}, h {h.shape} inconsistent with w_x {p.w_x.shape}, w_h {p.w_h.shape}")
    xd, hd = x.data, h.data
    gx = xd @ p.w_x.data + p.b_x.data
    gh = hd @ p.w_h.data + p.b_h.data
    rz = 0.5 * (np.tanh(0.5 * (gx[:, :2 * dh] + gh[:, :2 * dh])) + 1.0)
    r, z = rz[:, :dh], rz[:, dh:]
    ghn = gh[:, 2 * dh:]
    n = np.tanh(gx[:, 2 * dh:] + r * ghn)
    out = (1.0 - z) * n + z * hd

    def bw(g):
        dz = g * (hd - n)
        dn = g * (1.0 - z) * (1.0 - n * n)
        dr = dn * ghn
        dgx = np.concatenate([dr * r * (1.0 - r), dz * z * (1.0 - z), dn], axis=1)
        dgh = np.concatenate([dgx[:, :2 * dh], dn * r], axis=1)
        return (
            dgx @ p.w_x.data.T,
            g * z + dgh @ p.w_h.data.T,
            xd.T @ dgx,
            hd.T @ dgh,
            dgx.sum(axis=0),
            dgh.sum(axis=0),
        )

    return _node(out, (x, h, p.w_x, p.w_h, p.b_x, p.b_h), bw)


def gru_sequence(x: Tensor, h0: Tensor, p: GRUParams, keep: np.ndarray | None = None) -> Tensor:
    """Run :func:`gru_cell` over ``x[t]`` for ``t < L`` as one fused node.

    ``x`` is ``[L, B, din]``; ``keep[t, b]`` multiplies the incoming hidden
    state before step ``t`` (0 resets it at an episode start).  Returns the
    stacked hidden states ``[L, B, dh]``.
    """
    L, B, din = x.shape
    dh = p.hidden_size
    if h0.shape != (B, dh) or din != p.w_x.shape[0]:
        raise ShapeError(f"gru_sequence: x {x.shape}, h0 {h0.shape} inconsistent with w_x {p.w_x.shape}")
    keep = np.ones((L, B)) if keep is None else np.asarray(keep, dtype=np.float64)
    wx, wh = p.w_x.data, p.w_h.data
    gx_all = (x.data.reshape(L * B, din) @ wx + p.b_x.data).reshape(L, B, 3 * dh)
    hs = np.empty((L, B, dh))
    h_in = np.empty((L, B, dh))
    r_all, z_all, n_all, ghn_all = (np.empty((L, B, dh)) for _ in range(4))
    h = h0.data
    for t in range(L):
        hi = h * keep[t][:, None]
        gh = hi @ wh + p.b_h.data
        gx = gx_all[t]
        rz = 0.5 * (np.tanh(0.5 * (gx[:, :2 * dh] + gh[:, :2 * dh])) + 1.0)
        r, z = rz[:, :dh], rz[:, dh:]
        ghn = gh[:, 2 * dh:]
        n = np.tanh(gx[:, 2 * dh:] + r * ghn)
        h = (1.0 - z) * n + z * hi
        h_in[t], hs[t], r_all[t], z_all[t], n_all[t], ghn_all[t] = hi, h, r, z, n, ghn

    def bw(G):
        dgx_all = np.empty((L, B, 3 * dh))
        dgh_all = np.empty((L, B, 3 * dh))
        carry = np.zeros((B, dh))
        for t in range(L - 1, -1, -1):
            g = G[t] + carry
            r, z, n, hi = r_all[t], z_all[t], n_all[t], h_in[t]
            dn = g * (1.0 - z) * (1.0 - n * n)
            dgx = dgx_all[t]
            dgx[:, :dh] = dn * ghn_all[t] * r * (1.0 - r)
            dgx[:, dh:2 * dh] = g * (hi - n) * z * (1.0 - z)
            dgx[:, 2 * dh:] = dn
            dgh = dgh_all[t]
            dgh[:, :2 * dh] = dgx[:, :2 * dh]
            dgh[:, 2 * dh:] = dn * r
            carry = (g * z + dgh @ wh.T) * keep[t][:, None]
        dgx2 = dgx_all.reshape(L * B, 3 * dh)
        dgh2 = dgh_all.reshape(L * B, 3 * dh)
        return (
            (dgx2 @ wx.T).reshape(L, B, din),
            carry,
            x.data.reshape(L * B, din).T @ dgx2,
            h_in.reshape(L * B, dh).T @ dgh2,
            dgx2.sum(axis=0),
            dgh2.sum(axis=0),
        )

    return _node(hs, (x, h0, p.w_x, p.w_h, p.b_x, p.b_h), bw)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    owned = set()  # scratch buffers safe to update in place
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.array(g, dtype=np.float64).reshape(node.shape)
            else:
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key not in grads:
                grads[key] = pg
            elif key in owned:
                grads[key] += pg
            else:
                grads[key] = grads[key] + pg
                owned.add(key)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_param(cls, param: Tensor) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), 0)


def adam_step(param: Tensor, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place on ``param.data`` and ``state``."""
    if param.grad is None:
        raise ContractError(f"adam_step: parameter {param.name or param.shape} has no gradient")
    if state.m.shape != param.shape:
        raise ShapeError(f"adam_step: state shape {state.m.shape} vs parameter {param.shape}")
    g = param.grad
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class Adam:
    params: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.states:
            self.states = [AdamState.for_param(p) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            adam_step(p, s, self.lr, self.beta1, self.beta2, self.eps)


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    params = [p for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between the analytic and central-difference gradient of ``f`` at ``x``.

    Gradients that ``f`` accumulates on other leaves are left in place.
    """
    saved_rg, saved_grad = x.requires_grad, x.grad
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad, x.grad = True, None
    try:
        backward(f(x))
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        numeric = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = f(x).item()
                flat[i] = orig - eps
                lo = f(x).item()
                flat[i] = orig
                numeric.reshape(-1)[i] = (hi - lo) / (2.0 * eps)
    finally:
        x.requires_grad, x.grad = saved_rg, saved_grad
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float((np.abs(analytic - numeric) / denom).max()) if x.size else 0.0


def grad_check_all(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """:func:`grad_check` over several leaves of one closure; returns the worst error."""
    return max(grad_check(lambda _t: loss_fn(), t, eps) for t in tensors)


def uniform_init(rng: np.random.Generator, shape, fan_in: int | None = None,
                 requires_grad: bool = True, scale: float = 1.0) -> Tensor:
    fan_in = shape[0] if fan_in is None else fan_in
    bound = scale / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=requires_grad)

"""Dense tensors with reverse-mode differentiation.

Every backward rule is written in terms of ``Tensor`` operations, so a
gradient computed with ``create_graph=True`` is itself a graph node and can
be differentiated again. That is what the gradient penalty of the critic
needs: the penalty contains an input-gradient norm, and training needs the
parameter gradient of that penalty.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


_GRAPH_ENABLED = True
_CHECK_FINITE = True


@contextlib.contextmanager
def no_graph():
    """Run operations without recording them."""
    global _GRAPH_ENABLED
    prev = _GRAPH_ENABLED
    _GRAPH_ENABLED = False
    try:
        yield
    finally:
        _GRAPH_ENABLED = prev


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    return data


class Tensor:
    """A float64 array plus the recipe for differentiating through it.

    Leaves are either parameters (``requires_grad=True``) or constants.
    Interior nodes keep their parents and a backward closure mapping the
    upstream gradient to one gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, *, parents=(), backward_fn=None, op: str = "leaf"):
        arr = np.asarray(data, dtype=np.float64)
        self.data = _check(arr, op)
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn: Callable | None = backward_fn
        self.op = op

    # construction helpers ---------------------------------------------------

    @staticmethod
    def _make(data, parents: Sequence["Tensor"], backward_fn, op: str) -> "Tensor":
        if _GRAPH_ENABLED and any(p.requires_grad for p in parents):
            return Tensor(data, True, parents=tuple(parents), backward_fn=backward_fn, op=op)
        return Tensor(data, op=op)

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # arithmetic -------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _if(t: Tensor, fn):
    return fn() if t.requires_grad else None


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``x`` down to ``shape`` (undoes numpy broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = x.data
    lead = data.ndim - len(shape)
    if lead:
        data = data.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and data.shape[i] != 1)
    if axes:
        data = data.sum(axis=axes, keepdims=True)
    src = x.shape
    return Tensor._make(data, (x,), lambda g: (broadcast_to(g, src),), "sum_to")


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    data = np.broadcast_to(x.data, shape).copy()
    return Tensor._make(data, (x,), lambda g: (sum_to(g, src),), "broadcast_to")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b),
                        lambda g: (_if(a, lambda: sum_to(g, sa)), _if(b, lambda: sum_to(g, sb))), "add")


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: (neg(g),), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data * b.data, (a, b),
                        lambda g: (_if(a, lambda: sum_to(g * b, sa)), _if(b, lambda: sum_to(g * a, sb))), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = g / b
        return _if(a, lambda: sum_to(ga, sa)), _if(b, lambda: sum_to(neg(ga * a / b), sb))

    return Tensor._make(a.data / b.data, (a, b), backward, "div")


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    if p == 1.0:
        return a
    return Tensor._make(a.data**p, (a,), lambda g: (g * (p * power(a, p - 1.0)),), "power")


def square(a: Tensor) -> Tensor:
    return Tensor._make(a.data * a.data, (a,), lambda g: (g * (2.0 * a),), "square")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return Tensor._make(a.data @ b.data, (a, b),
                        lambda g: (_if(a, lambda: g @ transpose(b)), _if(b, lambda: transpose(a) @ g)), "matmul")


def transpose(a: Tensor) -> Tensor:
    return Tensor._make(a.data.T.copy(), (a,), lambda g: (transpose(g),), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (reshape(g, src),), "reshape")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.shape
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(ax % len(src) for ax in axes)
            kshape = tuple(1 if i in axes else n for i, n in enumerate(src))
            g = reshape(g, kshape)
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * len(src))
        return (broadcast_to(g, src),)

    return Tensor._make(data, (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        return (g * exp(a),)

    return Tensor._make(out_data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), lambda g: (g / a,), "log")


def tanh(a: Tensor) -> Tensor:
    def backward(g):
        t = tanh(a)
        return (g * (1.0 - square(t)),)

    return Tensor._make(np.tanh(a.data), (a,), backward, "tanh")


def sqrt(a: Tensor) -> Tensor:
    def backward(g):
        return (g * (0.5 / sqrt(a)),)

    return Tensor._make(np.sqrt(a.data), (a,), backward, "sqrt")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    # second derivative is zero almost everywhere, so the mask is a constant
    mask = np.where(a.data > 0, 1.0, slope)
    return Tensor._make(a.data * mask, (a,), lambda g: (g * Tensor(mask),), "leaky_relu")


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), computed stably."""
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return Tensor._make(data, (a,), lambda g: (g * sigmoid(a),), "softplus")


def sigmoid(a: Tensor) -> Tensor:
    data = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        s = sigmoid(a)
        return (g * s * (1.0 - s),)

    return Tensor._make(data, (a,), backward, "sigmoid")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    ndim = tensors[0].ndim

    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = tuple(slice(None) if i != axis else slice(int(lo), int(hi)) for i in range(ndim))
            out.append(getitem(g, idx) if t.requires_grad else None)
        return tuple(out)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._make(data, tuple(tensors), backward, "concat")


def getitem(a: Tensor, idx) -> Tensor:
    src = a.shape
    return Tensor._make(a.data[idx], (a,), lambda g: (scatter(g, idx, src),), "getitem")


def scatter(g: Tensor, idx, shape) -> Tensor:
    """Adjoint of ``getitem``: place ``g`` at ``idx`` in zeros, summing repeats."""
    data = np.zeros(shape)
    np.add.at(data, idx, g.data)
    return Tensor._make(data, (g,), lambda gg: (getitem(gg, idx),), "scatter")


def norm(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm. The gradient at the origin is taken to be zero."""
    n_data = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=keepdims))

    def backward(g):
        n = norm(a, axis=axis, keepdims=True)
        safe = n + Tensor((n.data == 0).astype(np.float64))
        if not keepdims:
            g = reshape(g, n.shape)
        return (a * (g / safe),)

    return Tensor._make(n_data, (a,), backward, "norm")


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    m = Tensor(np.max(a.data, axis=axis, keepdims=True))
    out = log(tsum(exp(a - m), axis=axis, keepdims=True)) + m
    return reshape(out, tuple(n for i, n in enumerate(out.shape) if i != axis % a.ndim))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    m = Tensor(np.max(a.data, axis=axis, keepdims=True))
    shifted = a - m
    return shifted - log(tsum(exp(shifted), axis=axis, keepdims=True))


def hinge(a: Tensor) -> Tensor:
    """[a]_+"""
    return relu(a)


def cosine(a: Tensor, b: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    dot = tsum(a * b, axis=axis)
    na = sqrt(tsum(square(a), axis=axis) + eps)
    nb = sqrt(tsum(square(b), axis=axis) + eps)
    return dot / (na * nb)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, wrt: Sequence[Tensor], *, create_graph: bool = False, allow_unused: bool = False) -> list[Tensor]:
    """Gradients of scalar ``loss`` with respect to each tensor in ``wrt``.

    With ``create_graph`` the returned gradients are graph nodes and can be
    differentiated again.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    wrt = list(wrt)
    order = _topo_order(loss)
    reachable = {id(n) for n in order}
    for w in wrt:
        if id(w) not in reachable and not allow_unused:
            raise ValueError("a requested tensor is not part of the loss graph")

    grads: dict[int, Tensor] = {id(loss): Tensor(np.ones(loss.shape))}
    ctx = contextlib.nullcontext() if create_graph else no_graph()
    with ctx:
        for node in reversed(order):
            g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = grads[key] + pg if key in grads else pg
    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(g if g is not None else Tensor(np.zeros(w.shape)))
    return out


def input_grad_norm(output: Tensor, inputs: Tensor, axis: int | None = None) -> Tensor:
    """||d output / d inputs||, as a node differentiable w.r.t. parameters.

    ``inputs`` must be a leaf created with ``requires_grad=True``. With
    ``axis=1`` one norm per row is returned, which for a row-wise critic
    summed over the batch gives the per-sample input-gradient norms.
    """
    if not inputs.is_leaf:
        raise ValueError("input_grad_norm needs a leaf input")
    if not inputs.requires_grad:
        raise ValueError("input leaf must be created with requires_grad=True")
    (g,) = grad(output, [inputs], create_graph=True)
    return norm(g, axis=axis)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence, state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and state have different lengths")
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        gd = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if gd.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {gd.shape}, state {m.shape}")
        m *= b1
        m += (1.0 - b1) * gd
        v *= b2
        v += (1.0 - b2) * gd * gd
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.state = AdamState.zeros_like(self.params)

    def step(self, grads: Sequence) -> None:
        adam_step(self.params, grads, self.state, self.lr, self.betas, self.eps)

    def minimize(self, loss: Tensor) -> float:
        grads = grad(loss, self.params, allow_unused=True)
        self.step(grads)
        return loss.item()


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return parameter(rng.uniform(-bound, bound, size=shape))


class Linear:
    """y = x W + b"""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bound: float | None = None):
        bound = 1.0 / np.sqrt(n_in) if bound is None else bound
        self.W = uniform_init(rng, (n_in, n_out), bound)
        self.b = parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.W) + self.b

    def params(self) -> list[Tensor]:
        return [self.W, self.b]


def finite_difference(f: Callable[[], float], param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``f`` w.r.t. ``param.data``."""
    out = np.zeros(param.shape)
    flat = param.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return out


def max_relative_error(analytic: Iterable[np.ndarray], numeric: Iterable[np.ndarray], floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst

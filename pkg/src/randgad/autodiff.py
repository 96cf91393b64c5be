"""Small reverse-mode autodiff over dense float64 arrays (at most 2-D).

The op set is closed: matmul, add/sub, mul, tanh, concat_rows,
mean_rows, sqdist_rows, sum, scale, transpose and spmm (a constant
sparse matrix times a tensor). Every op checks its output for NaN/Inf.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim > 2:
            raise ArgumentError(f"tensors are at most 2-D, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _checked(value, op):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite output from {op}")
    return value


def _node(value, op, parents, backward_fn):
    value = _checked(value, op)
    if any(p.requires_grad for p in parents):
        return Tensor(value, True, None, parents, backward_fn)
    return Tensor(value)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ArgumentError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ArgumentError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, "matmul", (a, b), back)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, "add", (a, b), back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _node(a.data - b.data, "sub", (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, "mul", (a, b), back)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - y * y),)

    return _node(y, "tanh", (a,), back)


def concat_rows(parts):
    parts = [as_tensor(p) for p in parts]
    blocks = [p.data if p.data.ndim == 2 else p.data[None, :] for p in parts]
    if len({b.shape[1] for b in blocks}) != 1:
        raise ArgumentError("concat_rows: column counts differ")
    bounds = np.cumsum([0] + [b.shape[0] for b in blocks])

    def back(g):
        return tuple(g[bounds[i]:bounds[i + 1]].reshape(parts[i].shape) for i in range(len(parts)))

    return _node(np.vstack(blocks), "concat_rows", tuple(parts), back)


def mean_rows(a):
    a = as_tensor(a)
    if a.data.ndim != 2 or a.shape[0] == 0:
        raise ArgumentError(f"mean_rows needs a non-empty 2-D tensor, got {a.shape}")
    n = a.shape[0]

    def back(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _node(a.data.mean(axis=0), "mean_rows", (a,), back)


def sqdist_rows(a, b):
    """Per-row squared Euclidean distance; a scalar for 1-D inputs."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ArgumentError(f"sqdist_rows: shapes differ {a.shape} vs {b.shape}")
    diff = a.data - b.data
    axis = -1 if diff.ndim else None

    def back(g):
        ga = 2.0 * diff * (g[..., None] if diff.ndim == 2 else g)
        return ga, -ga

    return _node((diff * diff).sum(axis=axis), "sqdist_rows", (a, b), back)


def sum(a):  # noqa: A001
    a = as_tensor(a)

    def back(g):
        return (np.full(a.shape, float(g)),)

    return _node(np.asarray(a.data.sum()), "sum", (a,), back)


def scale(a, c):
    a = as_tensor(a)
    c = float(c)

    def back(g):
        return (g * c,)

    return _node(a.data * c, "scale", (a,), back)


def transpose(a):
    a = as_tensor(a)

    def back(g):
        return (g.T,)

    return _node(a.data.T, "transpose", (a,), back)


def spmm(m, a):
    """Constant (sparse or dense) matrix times a 2-D tensor; only ``a`` is differentiated."""
    a = as_tensor(a)
    if a.data.ndim != 2 or m.shape[1] != a.shape[0]:
        raise ArgumentError(f"spmm: incompatible shapes {m.shape} and {a.shape}")

    def back(g):
        return (np.asarray(m.T @ g),)

    return _node(np.asarray(m @ a.data), "spmm", (a,), back)


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(loss, params=()):
    """Populate ``.grad`` of every requires-grad leaf reachable from scalar ``loss``.

    Leaves listed in ``params`` start from zero, so unreachable ones end
    with a zero gradient.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        p.zero_grad()
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {node!r}")
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ------------------------------------------------------------ init / optim


def xavier_init(rows, cols, rng, name=None):
    if rows < 1 or cols < 1:
        raise ArgumentError("xavier_init needs positive dimensions")
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True, name=name)


@dataclass
class OptimizerState:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state, lr=None):
    """Bias-corrected Adam update in place; gradients are cleared afterwards."""
    lr = state.lr if lr is None else lr
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for idx, p in enumerate(params):
        if p.grad is None:
            continue
        g = p.grad
        m = state.m.get(idx)
        if m is None:
            m = state.m[idx] = np.zeros_like(p.data)
            state.v[idx] = np.zeros_like(p.data)
        v = state.v[idx]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None
    return params


# ------------------------------------------------------------ checkpoints


def save_checkpoint(directory, named):
    """JSON manifest plus one raw little-endian float64 blob per array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, value in named.items():
        arr = np.ascontiguousarray(value.data if isinstance(value, Tensor) else value, dtype="<f8")
        fname = f"{name}.f64"
        (directory / fname).write_bytes(arr.tobytes())
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "file": fname})
    (directory / "manifest.json").write_text(json.dumps({"tensors": entries}, indent=2))
    return directory / "manifest.json"


def load_checkpoint(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"unreadable checkpoint manifest in {directory}: {exc}") from None
    out = {}
    for e in manifest["tensors"]:
        raw = np.frombuffer((directory / e["file"]).read_bytes(), dtype="<f8")
        if raw.size != int(np.prod(e["shape"])):
            raise FormatError(f"checkpoint blob {e['file']} has wrong length")
        out[e["name"]] = raw.reshape(e["shape"]).astype(np.float64)
    return out


def finite_difference_check(fn, params, step=1e-5, rtol=1e-4, atol=1e-7):
    """Compare reverse-mode gradients with central differences.

    ``fn`` maps the current parameter values to a scalar Tensor. Returns
    the worst violation ratio |g - fd| / (atol + rtol * max(|g|, |fd|));
    values <= 1 pass.
    """
    loss = fn()
    backward(loss, params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        fd = np.empty(flat.size)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + step
            up = float(fn().data)
            flat[k] = keep - step
            down = float(fn().data)
            flat[k] = keep
            fd[k] = (up - down) / (2.0 * step)
        ga = ga.reshape(-1)
        bound = atol + rtol * np.maximum(np.abs(ga), np.abs(fd))
        worst = max(worst, float(np.max(np.abs(ga - fd) / bound, initial=0.0)))
    for p in params:
        p.grad = None
    return worst

"""
Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Every primitive records its parents and a closure mapping the output adjoint
to parent adjoints.  Complex quantities are carried as ``Complex`` pairs of
real tensors; since every loss here is real, ordinary real reverse mode on
the pair is exact.
"""
from __future__ import annotations

import contextlib
import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, NumericalDomainError

__all__ = [
    "Tensor", "Parameter", "Complex", "no_grad", "is_grad_enabled", "backward",
    "tensor", "add", "sub", "mul", "div", "neg", "matmul", "transpose", "mT",
    "reshape", "concat", "getitem", "sum", "mean", "relu", "cos", "sin", "tanh",
    "sqrt", "square", "log", "conv1d", "batch_norm", "hermitian_logdet", "sign_ste",
    "cmatmul", "conj_transpose", "Module", "Linear", "Conv1d", "BatchNorm",
    "save_checkpoint", "load_checkpoint", "finite_difference_check",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A float64 array node in the computation graph."""

    __slots__ = ("values", "grad", "parents", "backward_fn", "requires_grad", "op")

    def __init__(self, values, requires_grad=False, parents=(), backward_fn=None, op=""):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def numpy(self):
        return self.values

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A named leaf tensor owned by a model."""

    __slots__ = ("name", "trainable")

    def __init__(self, values, name="", trainable=True):
        super().__init__(values, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values, parents, backward_fn, op):
    parents = tuple(parents)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(values, True, parents, backward_fn, op)
    return Tensor(values, op=op)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(root: Tensor):
    """Accumulate d(root)/d(node) into ``node.grad`` for every ancestor."""
    if root.values.size != 1:
        raise ValueError("backward() requires a scalar root")
    order, seen = [], set()
    stack = [(root, False)]
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
    root.grad = np.ones_like(root.values) if root.grad is None else root.grad + 1.0
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for p, g in zip(node.parents, grads):
            if g is None or not p.requires_grad:
                continue
            # adjoint arrays are never mutated in place, so sharing is safe
            p.grad = g if p.grad is None else p.grad + g
        if node.parents:
            # interior adjoints are not needed after propagation
            node.grad = None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = tensor(a), tensor(b)
    return _make(a.values * b.values, (a, b),
                 lambda g: (_unbroadcast(g * b.values, a.shape),
                            _unbroadcast(g * a.values, b.shape)), "mul")


def div(a, b):
    a, b = tensor(a), tensor(b)
    out = a.values / b.values
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.values, a.shape),
                            _unbroadcast(-g * out / b.values, b.shape)), "div")


def neg(a):
    a = tensor(a)
    return _make(-a.values, (a,), lambda g: (-g,), "neg")


def square(a):
    a = tensor(a)
    return _make(a.values ** 2, (a,), lambda g: (2 * a.values * g,), "square")


def sqrt(a):
    a = tensor(a)
    out = np.sqrt(a.values)
    return _make(out, (a,), lambda g: (g / (2 * out),), "sqrt")


def log(a):
    a = tensor(a)
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,), "log")


def relu(a):
    a = tensor(a)
    mask = a.values > 0
    return _make(a.values * mask, (a,), lambda g: (g * mask,), "relu")


def cos(a):
    a = tensor(a)
    return _make(np.cos(a.values), (a,), lambda g: (-g * np.sin(a.values),), "cos")


def sin(a):
    a = tensor(a)
    return _make(np.sin(a.values), (a,), lambda g: (g * np.cos(a.values),), "sin")


def tanh(a):
    a = tensor(a)
    out = np.tanh(a.values)
    return _make(out, (a,), lambda g: (g * (1 - out ** 2),), "tanh")


def sign_ste(a, surrogate_forward=False):
    """Binary quantizer: forward ``sign`` (with sign(0)=+1), backward ``1 - tanh^2``.

    With ``surrogate_forward`` the forward pass is ``tanh`` itself, which makes
    the function smooth and its reverse-mode adjoint checkable against finite
    differences.
    """
    a = tensor(a)
    t = np.tanh(a.values)
    out = t if surrogate_forward else np.where(a.values >= 0, 1.0, -1.0)
    return _make(out, (a,), lambda g: (g * (1 - t ** 2),), "sign_ste")


# ---------------------------------------------------------------- structural

def matmul(a, b):
    a, b = tensor(a), tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-d")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make(a.values @ b.values, (a, b), bw, "matmul")


def transpose(a, axes=None):
    a = tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _make(np.transpose(a.values, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def mT(a):
    """Swap the last two axes."""
    a = tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a, shape):
    a = tensor(a)
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(items, axis=0):
    items = [tensor(t) for t in items]
    sizes = [t.shape[axis] for t in items]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))
    return _make(np.concatenate([t.values for t in items], axis=axis), items, bw, "concat")


def getitem(a, idx):
    a = tensor(a)

    def bw(g):
        out = np.zeros_like(a.values)
        np.add.at(out, idx, g)
        return (out,)
    return _make(a.values[idx], (a,), bw, "getitem")


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = tensor(a)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(a.values.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = tensor(a)
    n = a.values.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------- layers as ops

def _same_pad(k):
    left = (k - 1) // 2
    return left, k - 1 - left


def conv1d(x, w, b=None):
    """Stride-1 'same' 1-d convolution (cross-correlation).

    ``x`` is ``(batch, c_in, length)``, ``w`` is ``(c_out, c_in, k)``.  The
    output keeps ``length`` even when ``k`` exceeds it (zero padding).
    """
    x, w = tensor(x), tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv1d shape mismatch x{x.shape} w{w.shape}")
    k = w.shape[2]
    length = x.shape[2]
    left, right = _same_pad(k)
    xp = np.pad(x.values, ((0, 0), (0, 0), (left, right)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)  # (b, c_in, L, k)
    out = np.einsum("bclk,ock->bol", cols, w.values, optimize=True)
    parents = [x, w]
    if b is not None:
        b = tensor(b)
        out = out + b.values[None, :, None]
        parents.append(b)

    def bw(g):
        gw = np.einsum("bclk,bol->ock", cols, g, optimize=True)
        gcols = np.einsum("bol,ock->bclk", g, w.values, optimize=True)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, :, j:j + length] += gcols[..., j]
        gx = gxp[:, :, left:left + length]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)
    return _make(out, parents, bw, "conv1d")


def batch_norm(x, axes, eps=1e-5):
    """Standardize over ``axes`` with batch statistics.

    Returns ``(normalized, batch_mean, batch_var)`` where the statistics are
    plain arrays (biased variance) for running-average bookkeeping.
    """
    x = tensor(x)
    axes = tuple(axes)
    mu = x.values.mean(axis=axes, keepdims=True)
    var = x.values.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.values - mu) * inv_std
    n = np.prod([x.shape[i] for i in axes])

    def bw(g):
        gs = g.sum(axis=axes, keepdims=True)
        gxs = (g * xhat).sum(axis=axes, keepdims=True)
        gx = inv_std / n * (n * g - gs - xhat * gxs)
        return (gx,)
    return _make(xhat, (x,), bw, "batch_norm"), mu, var


def hermitian_logdet(re, im):
    """``log det`` of the Hermitian positive-definite matrix ``re + j im``.

    Works on stacks ``(..., n, n)``.  The input is symmetrized first, so the
    adjoint is ``inv(Z)`` split into real and imaginary parts.
    """
    re, im = tensor(re), tensor(im)
    if re.shape != im.shape or re.ndim < 2 or re.shape[-1] != re.shape[-2]:
        raise DimensionError(f"hermitian_logdet needs square stacks, got {re.shape}/{im.shape}")
    zr = 0.5 * (re.values + np.swapaxes(re.values, -1, -2))
    zi = 0.5 * (im.values - np.swapaxes(im.values, -1, -2))
    z = zr + 1j * zi
    if not np.all(np.isfinite(z)):
        raise NumericalDomainError("non-finite entries in log-det input")
    try:
        chol = np.linalg.cholesky(z)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("log-det input is not positive definite") from exc
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    out = 2.0 * np.log(diag).sum(axis=-1)

    def bw(g):
        inv = np.linalg.inv(z)
        g = g[..., None, None]
        return g * inv.real, g * inv.imag
    return _make(out, (re, im), bw, "hermitian_logdet")


# ---------------------------------------------------------------- complex pairs

class Complex:
    """Complex tensor carried as separate real and imaginary ``Tensor`` parts."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        if im is None and not isinstance(re, Tensor):
            arr = np.asarray(re)
            re, im = arr.real, arr.imag
        self.re = tensor(re)
        self.im = tensor(0.0 * self.re.values if im is None else im)

    @property
    def shape(self):
        return self.re.shape

    def numpy(self):
        return self.re.values + 1j * self.im.values

    def __add__(self, o):
        o = _as_complex(o)
        return Complex(self.re + o.re, self.im + o.im)

    def __mul__(self, o):
        """Elementwise product; a real ``Tensor``/array scales both parts."""
        if isinstance(o, Complex) or np.iscomplexobj(o):
            o = _as_complex(o)
            return Complex(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
        return Complex(self.re * o, self.im * o)

    __rmul__ = __mul__

    def __matmul__(self, o):
        return cmatmul(self, o)

    def __rmatmul__(self, o):
        return cmatmul(o, self)

    def conj(self):
        return Complex(self.re, neg(self.im))

    @property
    def H(self):
        return conj_transpose(self)

    def reshape(self, shape):
        return Complex(reshape(self.re, shape), reshape(self.im, shape))

    def abs2(self):
        return add(square(self.re), square(self.im))


def _as_complex(x):
    return x if isinstance(x, Complex) else Complex(x)


def cmatmul(a, b):
    """Complex matrix product on paired-real encodings (batched, broadcasting)."""
    a, b = _as_complex(a), _as_complex(b)
    return Complex(sub(matmul(a.re, b.re), matmul(a.im, b.im)),
                   add(matmul(a.re, b.im), matmul(a.im, b.re)))


def conj_transpose(a):
    a = _as_complex(a)
    return Complex(mT(a.re), neg(mT(a.im)))


# ---------------------------------------------------------------- modules

def _xavier(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container that discovers parameters and sub-modules from attributes."""

    training = True

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + key + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self, trainable_only=True):
        return [p for _, p in self.named_parameters() if p.trainable or not trainable_only]

    def state_dict(self):
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, arr in state.items():
            if name not in own:
                if strict:
                    raise KeyError(f"unexpected parameter {name!r}")
                continue
            if own[name].shape != np.shape(arr):
                raise DimensionError(f"{name}: shape {np.shape(arr)} != {own[name].shape}")
            own[name].values = np.array(arr, dtype=np.float64)

    def _modules(self):
        for val in vars(self).values():
            if isinstance(val, Module):
                yield val
            elif isinstance(val, (list, tuple)):
                yield from (v for v in val if isinstance(v, Module))

    def train(self, mode=True):
        self.training = mode
        for m in self._modules():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters(trainable_only=False):
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        self.weight = Parameter(_xavier(rng, (n_in, n_out), n_in, n_out))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def forward(self, x):
        y = matmul(x, self.weight)
        return y if self.bias is None else add(y, self.bias)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, rng):
        self.kernel = kernel
        self.weight = Parameter(_xavier(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel))
        self.bias = Parameter(np.zeros(c_out))

    def forward(self, x):
        return conv1d(x, self.weight, self.bias)


class BatchNorm(Module):
    """Batch normalization over every axis except the feature axis 1.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, n_features, momentum=0.9, eps=1e-5):
        self.gamma = Parameter(np.ones(n_features))
        self.beta = Parameter(np.zeros(n_features))
        self.running_mean = Parameter(np.zeros(n_features), trainable=False)
        self.running_var = Parameter(np.ones(n_features), trainable=False)
        self.momentum = momentum
        self.eps = eps

    def _bshape(self, x):
        shape = [1] * x.ndim
        shape[1] = x.shape[1]
        return shape

    def forward(self, x):
        x = tensor(x)
        shape = self._bshape(x)
        if self.training:
            axes = tuple(i for i in range(x.ndim) if i != 1)
            xhat, mu, var = batch_norm(x, axes, self.eps)
            n = x.values.size // x.shape[1]
            unbiased = var.reshape(-1) * (n / max(n - 1, 1))
            mom = self.momentum
            self.running_mean.values = mom * self.running_mean.values + (1 - mom) * mu.reshape(-1)
            self.running_var.values = mom * self.running_var.values + (1 - mom) * unbiased
        else:
            mu = self.running_mean.values.reshape(shape)
            inv = 1.0 / np.sqrt(self.running_var.values.reshape(shape) + self.eps)
            xhat = mul(sub(x, mu), inv)
        return add(mul(xhat, reshape(self.gamma, shape)), reshape(self.beta, shape))


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = b"ADCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays: dict) -> None:
    """Binary little-endian record list: (name length, name, rank, dims, float64 values)."""
    parts = [struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    raw = Path(path).read_bytes()
    magic, version, count = struct.unpack_from("<4sII", raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).astype(np.float64).reshape(dims)
        off += 8 * size
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return out


# ---------------------------------------------------------------- gradient check

def finite_difference_check(f, params, n_coords=20, rel_step=1e-6, abs_step=1e-6,
                            rng=None, floor=1e-8):
    """Compare reverse-mode adjoints of scalar ``f()`` with central differences.

    ``params`` is a list of leaf tensors read by ``f``.  At most ``n_coords``
    randomly chosen coordinates per tensor are perturbed by
    ``max(rel_step*|x|, abs_step)``.  The relative error of a coordinate is
    ``max(|ad - fd| - noise, 0) / max(|ad|, |fd|, floor)`` where
    ``noise = 16 eps max(|f|, 1) / step`` bounds the rounding error of the
    central difference itself.  Without it, coordinates whose true gradient is
    exactly zero (biases feeding a batch norm) would report O(1) errors.

    Returns ``(max_rel_err, records)`` where each record is
    ``(param_index, flat_index, ad, fd, rel_err)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params:
        p.grad = None
    out = f()
    scale = max(abs(float(out.values)), 1.0)
    backward(out)
    adj = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    records = []
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.values.reshape(-1)
        size = flat.size
        picks = np.arange(size) if size <= n_coords else rng.choice(size, n_coords, replace=False)
        for i in picks:
            orig = flat[i]
            h = max(rel_step * abs(orig), abs_step)
            flat[i] = orig + h
            with no_grad():
                fp = float(f().values)
            flat[i] = orig - h
            with no_grad():
                fm = float(f().values)
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            ad = float(adj[k].reshape(-1)[i])
            noise = 16 * np.finfo(float).eps * scale / h
            err = max(abs(ad - fd) - noise, 0.0) / max(abs(ad), abs(fd), floor)
            worst = max(worst, err)
            records.append((k, int(i), ad, fd, err))
    for p in params:
        p.grad = None
    return worst, records

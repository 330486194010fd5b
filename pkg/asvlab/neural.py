# -*- coding: utf-8 -*-
"""Small reverse-mode differentiation core over numpy arrays

Tensors record the operation that produced them when at least one of
their inputs requires a gradient. `backward(loss)` walks the recorded
graph in reverse topological order and accumulates `.grad` on the leaf
tensors (parameters and inputs).

Convolutions are cross-correlations. `conv1d_circular` pads the ring
input by wrapping it around, `cptc1d` is its exact linear adjoint.
"""

import json
import hashlib
import logging
from contextlib import contextmanager
from collections import OrderedDict

import numpy as np

from asvlab.core import AsvLabValidationError, DatasetFormatError, UsageError
from asvlab.utils.filesystem import read_json, write_to_json
from asvlab.utils.records import read_records, write_records

logger = logging.getLogger("asvlab.neural")

CHECKPOINT_MAGIC = b"ASVCKPT\0"
PADDING_MODES = ("circular", "zeros")

_grad_enabled = True


@contextmanager
def no_grad():
    """Do not record operations inside the block"""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


# Tensor ---------------------------------------------------------------


class Tensor:
    """An array with an optional gradient and the recipe to backpropagate it"""

    # let numpy operands defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    shape = property(lambda self: self.data.shape)
    dtype = property(lambda self: self.data.dtype)
    ndim = property(lambda self: self.data.ndim)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return "Tensor(shape=%s, dtype=%s%s)" % (
            self.shape,
            self.dtype,
            ", requires_grad" if self.requires_grad else "",
        )

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)
    __getitem__ = lambda self, index: take(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Tensor(np.asarray(value, dtype=dtype))


def _result(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back to the operand shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# Elementwise and reductions -------------------------------------------


def add(a, b):
    a, b = _pair(a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _pair(a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = _pair(a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b):
    a, b = _pair(a, b)
    return _result(
        a.data / b.data,
        (a, b),
        lambda g: (g / b.data, -g * a.data / (b.data * b.data)),
    )


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def square(a):
    return _result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a):
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a, low, high):
    """Clamp values, the gradient is zero where the bound is active"""
    inside = (a.data >= low) & (a.data <= high)
    return _result(np.clip(a.data, low, high), (a,), lambda g: (g * inside,))


def minimum(a, b):
    a, b = _pair(a, b)
    first = a.data <= b.data
    return _result(
        np.where(first, a.data, b.data),
        (a, b),
        lambda g: (g * first, g * ~first),
    )


def sum_(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(count))


def reshape(a, shape):
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    return _result(a.data.T, (a,), lambda g: (g.T,))


def take(a, index):
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def matmul(a, b):
    a, b = _pair(a, b)
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, W, b=None):
    """Affine map x W^T + b over the last axis"""
    y = matmul(x, transpose(W))
    return y if b is None else add(y, b)


# Convolutions ---------------------------------------------------------


def _gather_index(length, kernel, stride, pad, padding_mode, out_length=None):
    """Input index read by each (output position, tap) pair

    Positions falling in a zero padding read index `length`, which points
    to an extra zero column appended to the input.
    """
    if padding_mode not in PADDING_MODES:
        raise AsvLabValidationError("conv_bad_padding_mode", mode=padding_mode)
    padded = length + 2 * pad
    if padded < kernel:
        raise AsvLabValidationError(
            "conv_shape_mismatch", detail="padded length %d < kernel %d" % (padded, kernel)
        )
    if out_length is None:
        out_length = (padded - kernel) // stride + 1
    taps = (np.arange(out_length) * stride)[:, None] + np.arange(kernel)[None, :] - pad
    if padding_mode == "circular":
        return taps % length
    return np.where((taps < 0) | (taps >= length), length, taps)


def _check_conv(x, w, channels_axis_of_w):
    if x.ndim != 3:
        raise AsvLabValidationError(
            "conv_shape_mismatch", detail="expected (batch, channels, length), got %s" % (x.shape,)
        )
    if w.ndim != 3 or w.shape[channels_axis_of_w] != x.shape[1]:
        raise AsvLabValidationError(
            "conv_shape_mismatch",
            detail="input has %d channels, weights are %s" % (x.shape[1], w.shape),
        )


def conv_output_length(length, kernel, stride, pad):
    return (length + 2 * pad - kernel) // stride + 1


def conv_transpose_output_length(length, kernel, stride, pad, output_padding=0):
    return (length - 1) * stride - 2 * pad + kernel + output_padding


def conv1d_circular(x, w, b=None, stride=1, pad=0, padding_mode="circular"):
    """Strided 1-D cross-correlation over a padded ring

    Keyword arguments:
        - x -- (batch, in_channels, length)
        - w -- (out_channels, in_channels, kernel)
        - b -- (out_channels,) or None
        - stride, pad -- the layer spec
        - padding_mode -- "circular", or "zeros" for the ablation

    """
    x, w = as_tensor(x), as_tensor(w)
    _check_conv(x, w, 1)
    batch, channels, length = x.shape
    index = _gather_index(length, w.shape[2], stride, pad, padding_mode)

    def columns(data):
        extended = np.concatenate([data, np.zeros((batch, channels, 1), dtype=data.dtype)], axis=2)
        return extended[:, :, index]

    cols = columns(x.data)
    out = np.einsum("bclk,ock->bol", cols, w.data)

    def backward(g):
        gcols = np.einsum("bol,ock->bclk", g, w.data)
        gx = np.zeros((batch, channels, length + 1), dtype=g.dtype)
        np.add.at(gx, (slice(None), slice(None), index), gcols)
        gw = np.einsum("bol,bclk->ock", g, cols)
        return gx[:, :, :length], gw

    y = _result(out, (x, w), backward)
    if b is not None:
        y = add(y, reshape(as_tensor(b), (1, -1, 1)))
    return y


def cptc1d(y, w, b=None, stride=1, pad=0, output_padding=0, padding_mode="circular"):
    """Circularly padded transposed 1-D convolution

    The adjoint of conv1d_circular with the same weights and spec: the
    forward layer maps a ring of the returned length onto y.

    Keyword arguments:
        - y -- (batch, in_channels, length_in)
        - w -- (in_channels, out_channels, kernel), the forward layer weights
        - b -- (out_channels,) or None
        - output_padding -- extra output length lost by the forward floor

    """
    y, w = as_tensor(y), as_tensor(w)
    _check_conv(y, w, 0)
    batch, _, length_in = y.shape
    out_channels, kernel = w.shape[1], w.shape[2]
    length = conv_transpose_output_length(length_in, kernel, stride, pad, output_padding)
    if length < 1 or conv_output_length(length, kernel, stride, pad) != length_in:
        raise AsvLabValidationError(
            "conv_shape_mismatch",
            detail="no ring of length %d maps onto %d positions" % (length, length_in),
        )
    index = _gather_index(length, kernel, stride, pad, padding_mode, out_length=length_in)

    def scatter(data):
        cols = np.einsum("bil,iok->bolk", data, w.data)
        out = np.zeros((batch, out_channels, length + 1), dtype=cols.dtype)
        np.add.at(out, (slice(None), slice(None), index), cols)
        return out[:, :, :length]

    def backward(g):
        extended = np.concatenate([g, np.zeros((batch, out_channels, 1), dtype=g.dtype)], axis=2)
        gcols = extended[:, :, index]
        gy = np.einsum("bolk,iok->bil", gcols, w.data)
        gw = np.einsum("bil,bolk->iok", y.data, gcols)
        return gy, gw

    x = _result(scatter(y.data), (y, w), backward)
    if b is not None:
        x = add(x, reshape(as_tensor(b), (1, -1, 1)))
    return x


# Backpropagation ------------------------------------------------------


def _topological(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into the .grad of every leaf tensor

    Raises UsageError when loss carries no recorded graph or is not a
    scalar.
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise UsageError("autodiff_no_graph")
    if loss.data.size != 1:
        raise UsageError("autodiff_non_scalar", shape=loss.shape)

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=parent.dtype), parent.shape)
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


# Parameters -----------------------------------------------------------


def kaiming_uniform(rng, shape, fan_in, dtype=np.float64):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParamStore:
    """Named parameters with their Adam moments

    Keyword arguments:
        - dtype -- np.float32 for training, np.float64 for gradient checks

    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = OrderedDict()
        self.frozen = set()
        self.step = 0
        self._m = {}
        self._v = {}

    def add(self, name, value):
        if name in self.params:
            raise AsvLabValidationError("param_duplicate", name=name)
        tensor = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self, prefix=None, trainable_only=False):
        return [
            n
            for n in self.params
            if (prefix is None or n.startswith(prefix))
            and not (trainable_only and n in self.frozen)
        ]

    def freeze(self, prefix):
        """Exclude parameters starting with prefix from optimization"""
        names = self.names(prefix)
        self.frozen.update(names)
        for name in names:
            self.params[name].requires_grad = False
        return names

    def unfreeze(self, prefix):
        for name in self.names(prefix):
            self.frozen.discard(name)
            self.params[name].requires_grad = True

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.grad = None

    def grad_norm(self, names=None):
        names = self.names(trainable_only=True) if names is None else names
        total = 0.0
        for name in names:
            grad = self.params[name].grad
            if grad is not None:
                total += float(np.sum(grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def scale_grads(self, scale, names=None):
        names = self.names(trainable_only=True) if names is None else names
        for name in names:
            grad = self.params[name].grad
            if grad is not None:
                self.params[name].grad = (grad * scale).astype(grad.dtype)

    def clip_grad_norm(self, max_norm, names=None):
        """Rescale gradients so that their global norm is at most max_norm"""
        norm = self.grad_norm(names)
        if norm > max_norm > 0:
            self.scale_grads(max_norm / (norm + 1e-6), names)
        return norm

    def digest(self, prefix=None):
        """sha256 of the names, shapes and values of the parameters"""
        h = hashlib.sha256()
        for name in self.names(prefix):
            data = np.ascontiguousarray(self.params[name].data)
            h.update(name.encode("utf-8"))
            h.update(str(data.shape).encode("ascii"))
            h.update(data.tobytes())
        return h.hexdigest()

    def state(self):
        return OrderedDict((n, t.data.copy()) for n, t in self.params.items())

    def load_state(self, state, prefix=None, strict=True):
        """Copy arrays into the parameters with the same names"""
        for name in self.names(prefix):
            if name not in state:
                if strict:
                    raise AsvLabValidationError("param_missing", name=name)
                continue
            value = np.asarray(state[name])
            if value.shape != self.params[name].shape:
                raise AsvLabValidationError(
                    "param_shape_mismatch",
                    name=name,
                    found=value.shape,
                    expected=self.params[name].shape,
                )
            self.params[name].data = value.astype(self.dtype)

    def save(self, file_path, meta=None, prefix=None):
        """Write a checkpoint and its JSON manifest (file_path + '.json')"""
        names = self.names(prefix)
        write_records(
            file_path,
            [self.params[n].data.astype(np.float64) for n in names],
            CHECKPOINT_MAGIC,
            "<f8",
        )
        manifest = {
            "version": 1,
            "tensors": [{"name": n, "shape": list(self.params[n].shape)} for n in names],
            "meta": meta or {},
        }
        write_to_json(file_path + ".json", manifest, indent=2)


def read_checkpoint(file_path):
    """Return (OrderedDict of arrays, meta) from a checkpoint file"""
    manifest = read_json(file_path + ".json")
    tensors = manifest.get("tensors", [])
    records = read_records(file_path, CHECKPOINT_MAGIC, "<f8", count=len(tensors))
    state = OrderedDict()
    for entry, record in zip(tensors, records):
        shape = tuple(entry["shape"])
        if int(np.prod(shape)) != record.size:
            raise DatasetFormatError(
                "checkpoint_shape_mismatch", path=file_path, name=entry["name"]
            )
        state[entry["name"]] = record.reshape(shape)
    return state, manifest.get("meta", {})


def manifest_text(file_path):
    """Canonical text of a checkpoint manifest"""
    return json.dumps(read_json(file_path + ".json"), sort_keys=True)


def clip_grad_norm(stores, max_norm):
    """Clip the norm of the trainable gradients of several stores together"""
    norm = float(np.sqrt(sum(store.grad_norm() ** 2 for store in stores)))
    if norm > max_norm > 0:
        for store in stores:
            store.scale_grads(max_norm / (norm + 1e-6))
    return norm


def adam_step(store: ParamStore, lr, beta1=0.9, beta2=0.999, eps=1e-8, names=None):
    """Bias-corrected Adam update of the trainable parameters, in place"""
    names = store.names(trainable_only=True) if names is None else [
        n for n in names if n not in store.frozen
    ]
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in names:
        param = store.params[name]
        if param.grad is None:
            continue
        g = param.grad.astype(store.dtype)
        m = store._m.get(name)
        v = store._v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        store._m[name], store._v[name] = m, v
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        param.data = (param.data - update).astype(store.dtype)


# Layers ---------------------------------------------------------------


class Linear:
    def __init__(self, store, name, in_features, out_features, rng):
        self.weight = store.add(
            name + ".weight",
            kaiming_uniform(rng, (out_features, in_features), in_features),
        )
        self.bias = store.add(name + ".bias", np.zeros(out_features))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class CircularLinear:
    """Square affine map whose weight matrix is circulant

    Row i of the matrix is the kernel rolled by i, so rolling the input by
    k positions rolls the output by k positions. The bias is shared by all
    positions.
    """

    def __init__(self, store, name, features, rng):
        self.weight = store.add(name + ".weight", kaiming_uniform(rng, (features,), features))
        self.bias = store.add(name + ".bias", np.zeros(1))
        positions = np.arange(features)
        self._index = (positions[:, None] - positions[None, :]) % features

    def matrix(self):
        return take(self.weight, self._index)

    def __call__(self, x):
        return linear(x, self.matrix(), self.bias)


class Conv1d:
    def __init__(self, store, name, in_channels, out_channels, kernel, stride=1, pad=0, padding_mode="circular", rng=None):
        self.stride, self.pad, self.padding_mode = stride, pad, padding_mode
        self.weight = store.add(
            name + ".weight",
            kaiming_uniform(rng, (out_channels, in_channels, kernel), in_channels * kernel),
        )
        self.bias = store.add(name + ".bias", np.zeros(out_channels))

    def __call__(self, x):
        return conv1d_circular(x, self.weight, self.bias, self.stride, self.pad, self.padding_mode)


class ConvTranspose1d:
    def __init__(self, store, name, in_channels, out_channels, kernel, stride=1, pad=0, output_padding=0, padding_mode="circular", rng=None):
        self.stride, self.pad, self.padding_mode = stride, pad, padding_mode
        self.output_padding = output_padding
        self.weight = store.add(
            name + ".weight",
            kaiming_uniform(rng, (in_channels, out_channels, kernel), in_channels * kernel),
        )
        self.bias = store.add(name + ".bias", np.zeros(out_channels))

    def __call__(self, y):
        return cptc1d(
            y,
            self.weight,
            self.bias,
            self.stride,
            self.pad,
            self.output_padding,
            self.padding_mode,
        )

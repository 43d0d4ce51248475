"""
Small set of tensor primitives used by the networks and losses.

Tensors are plain numpy arrays laid out channel-first without a batch axis:
``[C, H, W]`` for 2D feature maps and ``[C, D, H, W]`` for 3D ones. Every
function here is pure and allocates its output.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _per_axis(value, dims: int, name: str) -> tuple[int, ...]:
    if np.isscalar(value):
        value = (int(value),) * dims
    value = tuple(int(v) for v in value)
    if len(value) != dims:
        raise ValueError(f"{name} needs {dims} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class ConvSpec:
    """Kernel/stride/padding of a convolution; scalars are broadcast per axis."""

    kernel_size: int | tuple[int, ...]
    stride: int | tuple[int, ...] = 1
    padding: int | tuple[int, ...] = 0

    def axes(self, dims: int) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        k = _per_axis(self.kernel_size, dims, "kernel_size")
        s = _per_axis(self.stride, dims, "stride")
        p = _per_axis(self.padding, dims, "padding")
        if any(v < 1 for v in k) or any(v < 1 for v in s) or any(v < 0 for v in p):
            raise ValueError(f"invalid conv spec {self}")
        return k, s, p

    def out_extent(self, n: int, axis: int = 0, dims: int = 1) -> int:
        k, s, p = (v[axis] for v in self.axes(dims))
        return conv_out_extent(n, k, s, p)

    def transposed_out_extent(self, n: int, axis: int = 0, dims: int = 1) -> int:
        k, s, p = (v[axis] for v in self.axes(dims))
        return (n - 1) * s - 2 * p + k


def conv_out_extent(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def _check_conv_shapes(x, kernel, bias, dims, op):
    if x.ndim != dims + 1:
        raise ValueError(f"{op}: input must be [C,{'D,' if dims == 3 else ''}H,W], got shape {x.shape}")
    if kernel.ndim != dims + 2:
        raise ValueError(f"{op}: kernel must have {dims + 2} axes, got shape {kernel.shape}")
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ValueError(f"{op}: bias shape {bias.shape} does not match {kernel.shape[0]} output channels")


def _conv(x, kernel, bias, spec: ConvSpec, dims: int, op: str) -> np.ndarray:
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    _check_conv_shapes(x, kernel, bias, dims, op)
    if kernel.shape[1] != x.shape[0]:
        raise ValueError(
            f"{op}: channel axis mismatch, input has {x.shape[0]} channels "
            f"but kernel expects {kernel.shape[1]}")
    k, s, p = spec.axes(dims)
    for ax in range(dims):
        if kernel.shape[2 + ax] != k[ax]:
            raise ValueError(f"{op}: kernel spatial axis {ax} is {kernel.shape[2 + ax]}, spec says {k[ax]}")
    out = [conv_out_extent(x.shape[1 + ax], k[ax], s[ax], p[ax]) for ax in range(dims)]
    for ax, n in enumerate(out):
        if n < 1:
            raise ValueError(
                f"{op}: spatial axis {ax} of extent {x.shape[1 + ax]} too small for "
                f"kernel {k[ax]} with padding {p[ax]}")
    dtype = np.result_type(x, kernel)
    xp = np.pad(x, [(0, 0)] + [(pa, pa) for pa in p])
    y = np.zeros((kernel.shape[0], *out), dtype=dtype)
    # one matmul per kernel tap; summation order over taps is fixed
    for off in itertools.product(*(range(kk) for kk in k)):
        window = xp[(slice(None),) + tuple(
            slice(o, o + st * (n - 1) + 1, st) for o, st, n in zip(off, s, out))]
        w = kernel[(slice(None), slice(None)) + off]
        y += np.tensordot(w, window, axes=(1, 0))
    if bias is not None:
        y += np.asarray(bias, dtype=dtype).reshape((-1,) + (1,) * dims)
    return y


def conv2d(x, kernel, bias=None, spec: ConvSpec = ConvSpec(3, 1, 1)) -> np.ndarray:
    """Cross-correlation of ``x[C_in,H,W]`` with ``kernel[C_out,C_in,kh,kw]`` (zero padding)."""
    return _conv(x, kernel, bias, spec, 2, "conv2d")


def conv3d(x, kernel, bias=None, spec: ConvSpec = ConvSpec(3, 1, 1)) -> np.ndarray:
    """3D analogue of :func:`conv2d`; ``kernel`` is ``[C_out,C_in,kd,kh,kw]``."""
    return _conv(x, kernel, bias, spec, 3, "conv3d")


def transposed_conv(x, kernel, bias=None, spec: ConvSpec = ConvSpec(4, 2, 1), dims: int = 3,
                    output_padding: int | Sequence[int] = 0) -> np.ndarray:
    """Gradient of :func:`conv2d`/:func:`conv3d` with respect to its input.

    ``kernel`` has shape ``[C_in, C_out, k...]``, i.e. the same array a forward
    convolution from ``C_out`` to ``C_in`` channels would use. Output extent per
    axis is ``(n - 1) * stride - 2 * padding + kernel + output_padding``.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if dims not in (2, 3):
        raise ValueError(f"dims must be 2 or 3, got {dims}")
    _check_conv_shapes(x, kernel, None, dims, "transposed_conv")
    if kernel.shape[0] != x.shape[0]:
        raise ValueError(
            f"transposed_conv: channel axis mismatch, input has {x.shape[0]} channels "
            f"but kernel expects {kernel.shape[0]}")
    if bias is not None and np.shape(bias) != (kernel.shape[1],):
        raise ValueError(f"transposed_conv: bias shape {np.shape(bias)} does not match {kernel.shape[1]} outputs")
    k, s, p = spec.axes(dims)
    op = _per_axis(output_padding, dims, "output_padding")
    for ax in range(dims):
        if kernel.shape[2 + ax] != k[ax]:
            raise ValueError(f"transposed_conv: kernel spatial axis {ax} is {kernel.shape[2 + ax]}, spec says {k[ax]}")
    n_in = x.shape[1:]
    full = [(n - 1) * st + kk + o for n, st, kk, o in zip(n_in, s, k, op)]
    out = [f - 2 * pa for f, pa in zip(full, p)]
    for ax, n in enumerate(out):
        if n < 1:
            raise ValueError(f"transposed_conv: spatial axis {ax} collapses to extent {n}")
    dtype = np.result_type(x, kernel)
    y = np.zeros((kernel.shape[1], *full), dtype=dtype)
    for off in itertools.product(*(range(kk) for kk in k)):
        w = kernel[(slice(None), slice(None)) + off]
        target = (slice(None),) + tuple(
            slice(o, o + st * (n - 1) + 1, st) for o, st, n in zip(off, s, n_in))
        y[target] += np.tensordot(w, x, axes=(0, 0))
    y = y[(slice(None),) + tuple(slice(pa, pa + n) for pa, n in zip(p, out))]
    y = np.ascontiguousarray(y)
    if bias is not None:
        y += np.asarray(bias, dtype=dtype).reshape((-1,) + (1,) * dims)
    return y


def instance_norm(x, eps: float = 1e-5, scale=None, shift=None) -> np.ndarray:
    """Normalize each channel of ``x[C, ...]`` over its spatial positions.

    Uses the population variance and ``sqrt(var + eps)``. Statistics always come
    from the sample itself, so training and inference behave identically.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"instance_norm needs a channel axis plus spatial axes, got shape {x.shape}")
    axes = tuple(range(1, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
    y = (x - mean) / np.sqrt(var + eps)
    bshape = (-1,) + (1,) * (x.ndim - 1)
    if scale is not None:
        y = y * np.asarray(scale, dtype=y.dtype).reshape(bshape)
    if shift is not None:
        y = y + np.asarray(shift, dtype=y.dtype).reshape(bshape)
    return y


def relu(x) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x)
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fully_connected(x, weight, bias=None) -> np.ndarray:
    """Affine map ``weight @ x.ravel() + bias``; ``weight`` is ``[out, in]``."""
    v = np.asarray(x).reshape(-1)
    weight = np.asarray(weight)
    if weight.ndim != 2 or weight.shape[1] != v.size:
        raise ValueError(
            f"fully_connected: weight shape {weight.shape} does not accept a flattened input of length {v.size}")
    y = weight @ v
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"fully_connected: bias shape {bias.shape} != ({weight.shape[0]},)")
        y = y + bias
    return y


def seeded_init(shape, scheme: str = "normal", seed: int = 0, std: float = 0.02,
                dtype=np.float64) -> np.ndarray:
    """Deterministic weights from a PCG64 stream.

    ``normal`` draws N(0, std); ``uniform_fan_in`` draws U(-b, b) with
    ``b = 1 / sqrt(fan_in)`` where fan_in is the product of all but the first axis.
    """
    shape = tuple(int(v) for v in shape)
    rng = np.random.Generator(np.random.PCG64(seed))
    if scheme == "normal":
        out = rng.standard_normal(shape) * std
    elif scheme == "uniform_fan_in":
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        out = rng.uniform(-bound, bound, size=shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return out.astype(dtype)

"""Feed-forward layers over NHWC batches, each with an explicit backward."""

from __future__ import annotations

import hashlib
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, StateError
from .tensor import Tensor, glorot_uniform


class Layer:
    name = "layer"

    def params(self) -> list[Tensor]:
        return []

    def output_shape(self, input_shape):
        return input_shape

    def _cached(self, attr):
        value = getattr(self, attr, None)
        if value is None:
            raise StateError(f"{self.name}: backward called before forward")
        return value

    def clear(self):
        """Drop forward intermediates."""
        for key in list(vars(self)):
            if key.startswith("_c_"):
                setattr(self, key, None)


def _same_padding(size, k, s):
    out = math.ceil(size / s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


class Conv2D(Layer):
    """2-D cross-correlation with 'same' zero padding, kernel layout (kh, kw, C_in, C_out)."""

    def __init__(self, c_in, c_out, kernel, stride=(1, 1), *, rng=None, dtype=np.float32, name="conv"):
        self.name = name
        self.c_in, self.c_out = c_in, c_out
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        kh, kw = self.kernel
        if kh < 1 or kw < 1 or min(self.stride) < 1:
            raise ShapeError(f"{name}: invalid kernel {kernel} / stride {stride}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Tensor(glorot_uniform(rng, (kh, kw, c_in, c_out), kh * kw * c_in, kh * kw * c_out, dtype), f"{name}.w")
        self.b = Tensor(np.zeros(c_out, dtype=dtype), f"{name}.b")
        self._c_cols = None

    def params(self):
        return [self.w, self.b]

    def output_shape(self, input_shape):
        h, w, _ = input_shape
        return (math.ceil(h / self.stride[0]), math.ceil(w / self.stride[1]), self.c_out)

    @staticmethod
    def _im2col(x, kernel, stride, pads, out_hw):
        B, _, _, C = x.shape
        (kh, kw), (sh, sw) = kernel, stride
        pt, pb, pl, pr = pads
        ho, wo = out_hw
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw][:, :ho, :wo]
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(B * ho * wo, kh * kw * C), xp.shape

    def forward(self, x):
        if x.ndim != 4 or x.shape[-1] != self.c_in:
            raise ShapeError(f"{self.name}: expected (B, H, W, {self.c_in}), got {x.shape}")
        B, H, W, C = x.shape
        (kh, kw), (sh, sw) = self.kernel, self.stride
        ho, pt, pb = _same_padding(H, kh, sh)
        wo, pl, pr = _same_padding(W, kw, sw)
        cols, xp_shape = self._im2col(x, self.kernel, self.stride, (pt, pb, pl, pr), (ho, wo))
        out = cols @ self.w.value.reshape(-1, self.c_out) + self.b.value
        self._c_cols = cols
        self._c_geom = (x.shape, xp_shape, ho, wo, (pt, pb, pl, pr))
        return out.reshape(B, ho, wo, self.c_out)

    def backward(self, dout):
        cols = self._cached("_c_cols")
        (B, H, W, C), xp_shape, ho, wo, (pt, pb, pl, pr) = self._c_geom
        (kh, kw), (sh, sw) = self.kernel, self.stride
        d2 = dout.reshape(-1, self.c_out)
        self.w.accumulate((cols.T @ d2).reshape(self.w.shape))
        self.b.accumulate(d2.sum(axis=0))
        if (sh, sw) == (1, 1):
            # stride-1 'same': dx is a 'same' correlation of dout with the
            # flipped, transposed kernel and mirrored padding
            wf = self.w.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, C)
            dcols, _ = self._im2col(dout, self.kernel, (1, 1), (pb, pt, pr, pl), (H, W))
            return (dcols @ wf).reshape(B, H, W, C)
        dcols = (d2 @ self.w.value.reshape(-1, self.c_out).T).reshape(B, ho, wo, kh, kw, C)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pt:pt + H, pl:pl + W, :]


class ReLU(Layer):
    def __init__(self, name="relu"):
        self.name = name
        self._c_mask = None

    def forward(self, x):
        self._c_mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._cached("_c_mask")


class MaxPool2D(Layer):
    """Non-overlapping max pooling (kernel = stride) with ceil-mode output size.

    Partial edge cells are padded with -inf; ties go to the lowest row-major
    index inside the cell.
    """

    def __init__(self, stride, name="pool"):
        self.name = name
        self.stride = tuple(stride)
        if min(self.stride) < 1:
            raise ShapeError(f"{name}: stride must be >= 1")
        self._c_arg = None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        return (math.ceil(h / self.stride[0]), math.ceil(w / self.stride[1]), c)

    def forward(self, x):
        B, H, W, C = x.shape
        if H == 0 or W == 0:
            raise ShapeError(f"{self.name}: empty input {x.shape}")
        sh, sw = self.stride
        ho, wo = math.ceil(H / sh), math.ceil(W / sw)
        xp = np.full((B, ho * sh, wo * sw, C), -np.inf, dtype=x.dtype)
        xp[:, :H, :W] = x
        cells = xp.reshape(B, ho, sh, wo, sw, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, ho, wo, C, sh * sw)
        arg = cells.argmax(axis=-1)
        self._c_arg = arg
        self._c_shape = x.shape
        return np.take_along_axis(cells, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        arg = self._cached("_c_arg")
        B, H, W, C = self._c_shape
        sh, sw = self.stride
        ho, wo = arg.shape[1], arg.shape[2]
        cells = np.zeros((B, ho, wo, C, sh * sw), dtype=dout.dtype)
        np.put_along_axis(cells, arg[..., None], dout[..., None], axis=-1)
        dxp = cells.reshape(B, ho, wo, C, sh, sw).transpose(0, 1, 4, 2, 5, 3).reshape(B, ho * sh, wo * sw, C)
        return dxp[:, :H, :W]


class ToSequence(Layer):
    """(B, H, W, C) -> (B, W, H*C): the width axis becomes the time axis."""

    name = "to_sequence"

    def __init__(self):
        self._c_shape = None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        return (w, h * c)

    def forward(self, x):
        self._c_shape = x.shape
        B, H, W, C = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(B, W, H * C)

    def backward(self, dout):
        B, H, W, C = self._cached("_c_shape")
        return np.ascontiguousarray(dout.reshape(B, W, H, C).transpose(0, 2, 1, 3))


class TemporalMean(Layer):
    """(B, T, F) -> (B, F)."""

    name = "temporal_mean"

    def __init__(self):
        self._c_steps = None

    def output_shape(self, input_shape):
        return (input_shape[-1],)

    def forward(self, x):
        self._c_steps = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout):
        steps = self._cached("_c_steps")
        return np.repeat(dout[:, None, :] / steps, steps, axis=1).astype(dout.dtype, copy=False)


class Dense(Layer):
    def __init__(self, n_in, n_out, *, rng=None, dtype=np.float32, name="dense"):
        self.name = name
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Tensor(glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype), f"{name}.w")
        self.b = Tensor(np.zeros(n_out, dtype=dtype), f"{name}.b")
        self._c_x = None

    def params(self):
        return [self.w, self.b]

    def output_shape(self, input_shape):
        return (self.w.shape[1],)

    def forward(self, x):
        if x.shape[-1] != self.w.shape[0]:
            raise ShapeError(f"{self.name}: expected {self.w.shape[0]} features, got {x.shape[-1]}")
        self._c_x = x
        return x @ self.w.value + self.b.value

    def backward(self, dout):
        x = self._cached("_c_x")
        self.w.accumulate(x.T @ dout)
        self.b.accumulate(dout.sum(axis=0))
        return dout @ self.w.value.T


class Sequential(Layer):
    def __init__(self, layers, name="sequential"):
        self.name = name
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def output_shape(self, input_shape):
        for layer in self.layers:
            input_shape = layer.output_shape(input_shape)
        return input_shape

    def shapes(self, input_shape):
        """Per-layer output shapes, in order."""
        out = []
        for layer in self.layers:
            input_shape = layer.output_shape(input_shape)
            out.append((layer.name, input_shape))
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def clear(self):
        for layer in self.layers:
            layer.clear()

    def kink_signature(self) -> bytes:
        """Digest of the ReLU masks and pooling winners of the last forward pass.

        Two passes with equal signatures took the same linear pieces of
        every piecewise-linear layer.
        """
        h = hashlib.sha256()
        for layer in self.layers:
            for attr in ("_c_mask", "_c_arg"):
                value = getattr(layer, attr, None)
                if value is not None:
                    h.update(np.ascontiguousarray(value).tobytes())
        return h.digest()

"""Gated recurrent unit and its bidirectional wrapper.

Gate order in the packed matrices is (update z, reset r, candidate h~):

    z  = sigmoid(x Wz + h Uz + bz)
    r  = sigmoid(x Wr + h Ur + br)
    h~ = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * h~
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import Layer
from .tensor import Tensor, glorot_uniform


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class GRU(Layer):
    def __init__(self, n_in, units, *, reverse=False, rng=None, dtype=np.float32, name="gru"):
        self.name = name
        self.units = units
        self.reverse = reverse
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Tensor(glorot_uniform(rng, (n_in, 3 * units), n_in, 3 * units, dtype), f"{name}.w")
        self.u = Tensor(glorot_uniform(rng, (units, 3 * units), units, 3 * units, dtype), f"{name}.u")
        self.b = Tensor(np.zeros(3 * units, dtype=dtype), f"{name}.b")
        self._c_x = None

    def params(self):
        return [self.w, self.b, self.u]

    def output_shape(self, input_shape):
        return (input_shape[0], self.units)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] == 0:
            raise ShapeError(f"{self.name}: expected (B, T>0, F), got {x.shape}")
        if x.shape[2] != self.w.shape[0]:
            raise ShapeError(f"{self.name}: expected {self.w.shape[0]} features, got {x.shape[2]}")
        if self.reverse:
            x = x[:, ::-1]
        x = np.ascontiguousarray(x)
        B, T, F = x.shape
        U = self.units
        u = self.u.value
        xw = (x.reshape(B * T, F) @ self.w.value + self.b.value).reshape(B, T, 3 * U)
        h = np.zeros((B, U), dtype=x.dtype)
        hs = np.empty((B, T, U), dtype=x.dtype)
        z = np.empty_like(hs)
        r = np.empty_like(hs)
        cand = np.empty_like(hs)
        hprev = np.empty_like(hs)
        for t in range(T):
            hprev[:, t] = h
            hu = h @ u[:, :2 * U]
            z[:, t] = sigmoid(xw[:, t, :U] + hu[:, :U])
            r[:, t] = sigmoid(xw[:, t, U:2 * U] + hu[:, U:])
            cand[:, t] = np.tanh(xw[:, t, 2 * U:] + (r[:, t] * h) @ u[:, 2 * U:])
            h = (1 - z[:, t]) * h + z[:, t] * cand[:, t]
            hs[:, t] = h
        self._c_x = x
        self._c_gates = (z, r, cand, hprev)
        return hs[:, ::-1] if self.reverse else hs

    def backward(self, dout):
        x = self._cached("_c_x")
        z, r, cand, hprev = self._c_gates
        if self.reverse:
            dout = dout[:, ::-1]
        B, T, _ = x.shape
        U = self.units
        u = self.u.value
        uz, ur, uh = u[:, :U], u[:, U:2 * U], u[:, 2 * U:]
        da = np.empty((B, T, 3 * U), dtype=dout.dtype)
        du = np.zeros_like(u)
        dh = np.zeros((B, U), dtype=dout.dtype)
        for t in reversed(range(T)):
            dh = dh + dout[:, t]
            zt, rt, ct, hp = z[:, t], r[:, t], cand[:, t], hprev[:, t]
            dz = dh * (ct - hp)
            dc = dh * zt
            dhp = dh * (1 - zt)
            dac = dc * (1 - ct * ct)
            drh = dac @ uh.T
            dr = drh * hp
            dhp += drh * rt
            daz = dz * zt * (1 - zt)
            dar = dr * rt * (1 - rt)
            dhp += daz @ uz.T + dar @ ur.T
            du[:, :U] += hp.T @ daz
            du[:, U:2 * U] += hp.T @ dar
            du[:, 2 * U:] += (rt * hp).T @ dac
            da[:, t, :U] = daz
            da[:, t, U:2 * U] = dar
            da[:, t, 2 * U:] = dac
            dh = dhp
        flat = da.reshape(B * T, 3 * U)
        self.w.accumulate(x.reshape(B * T, -1).T @ flat)
        self.b.accumulate(flat.sum(axis=0))
        self.u.accumulate(du)
        dx = (flat @ self.w.value.T).reshape(B, T, -1)
        return dx[:, ::-1] if self.reverse else dx


class BiGRU(Layer):
    """Forward and backward GRUs over the same sequence, outputs concatenated per step."""

    def __init__(self, n_in, units, *, rng=None, dtype=np.float32, name="bigru"):
        self.name = name
        self.units = units
        self.fwd = GRU(n_in, units, rng=rng, dtype=dtype, name=f"{name}.fwd")
        self.bwd = GRU(n_in, units, reverse=True, rng=rng, dtype=dtype, name=f"{name}.bwd")

    def params(self):
        return self.fwd.params() + self.bwd.params()

    def output_shape(self, input_shape):
        return (input_shape[0], 2 * self.units)

    def forward(self, x):
        return np.concatenate([self.fwd.forward(x), self.bwd.forward(x)], axis=-1)

    def backward(self, dout):
        U = self.units
        return self.fwd.backward(dout[..., :U]) + self.bwd.backward(dout[..., U:])

    def clear(self):
        self.fwd.clear()
        self.bwd.clear()

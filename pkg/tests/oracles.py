"""Slow, obviously-correct reference implementations used by the tests."""

import math

import numpy as np


def naive_stft_energy(x, T=1024, n_frames=60, start_frame=0):
    """Direct-sum DFT of each frame, bins 1..T/2, evaluated with absolute sample indices."""
    x = np.asarray(x, dtype=np.float64)
    hop = T // 2
    m = np.arange(1, T // 2 + 1)[:, None]
    out = np.empty((n_frames, T // 2))
    kernels = {}  # exp(-2 pi i m t / T) only depends on the frame start modulo T
    for n in range(n_frames):
        s = (start_frame + n) * hop
        if s % T not in kernels:
            t = np.arange(s, s + T)[None, :]
            kernels[s % T] = np.exp(-2j * np.pi * m * t / T)  # (T/2, T) direct sum
        out[n] = np.abs(kernels[s % T] @ x[s:s + T]) ** 2
    return out


def naive_logmel(energy, weights, floor=1e-10):
    n_frames, n_bins = energy.shape
    K = weights.shape[0]
    out = np.empty((n_frames, K))
    for n in range(n_frames):
        for k in range(K):
            acc = 0.0
            for m in range(n_bins):
                acc += weights[k, m] * energy[n, m]
            out[n, k] = math.log(acc + floor)
    return out


def naive_delta(x, width=2):
    n = len(x)
    denom = 2 * sum(d * d for d in range(1, width + 1))
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(n):
        for d in range(1, width + 1):
            hi = x[min(i + d, n - 1)]
            lo = x[max(i - d, 0)]
            out[i] += d * (hi - lo)
    return out / denom


def naive_conv2d(x, w, b, stride):
    """'same' convolution (TF padding convention), NHWC / HWIO."""
    B, H, W, C = x.shape
    kh, kw, _, O = w.shape
    sh, sw = stride
    Ho, Wo = -(-H // sh), -(-W // sw)
    ph = max((Ho - 1) * sh + kh - H, 0)
    pw = max((Wo - 1) * sw + kw - W, 0)
    top, left = ph // 2, pw // 2
    out = np.zeros((B, Ho, Wo, O))
    for bi in range(B):
        for i in range(Ho):
            for j in range(Wo):
                for o in range(O):
                    acc = b[o]
                    for di in range(kh):
                        for dj in range(kw):
                            r, c = i * sh + di - top, j * sw + dj - left
                            if 0 <= r < H and 0 <= c < W:
                                acc += float(np.dot(x[bi, r, c], w[di, dj, :, o]))
                    out[bi, i, j, o] = acc
    return out


def naive_maxpool(x, stride):
    B, H, W, C = x.shape
    sh, sw = stride
    Ho, Wo = -(-H // sh), -(-W // sw)
    out = np.empty((B, Ho, Wo, C))
    for bi in range(B):
        for i in range(Ho):
            for j in range(Wo):
                for c in range(C):
                    out[bi, i, j, c] = x[bi, i * sh:(i + 1) * sh, j * sw:(j + 1) * sw, c].max()
    return out


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def naive_gru(xs, w, u, b, reverse=False):
    """Scalar-loop GRU; gate blocks ordered (update, reset, candidate); h' = (1-z) h + z h~."""
    T, n_in = xs.shape
    units = u.shape[0]
    h = [0.0] * units
    order = range(T - 1, -1, -1) if reverse else range(T)
    outs = [None] * T
    for t in order:
        z, r, c = [0.0] * units, [0.0] * units, [0.0] * units
        for j in range(units):
            az = b[j] + sum(xs[t, i] * w[i, j] for i in range(n_in)) + sum(h[k] * u[k, j] for k in range(units))
            ar = b[units + j] + sum(xs[t, i] * w[i, units + j] for i in range(n_in)) + sum(
                h[k] * u[k, units + j] for k in range(units))
            z[j], r[j] = _sig(az), _sig(ar)
        for j in range(units):
            ac = b[2 * units + j] + sum(xs[t, i] * w[i, 2 * units + j] for i in range(n_in)) + sum(
                r[k] * h[k] * u[k, 2 * units + j] for k in range(units))
            c[j] = math.tanh(ac)
        h = [(1 - z[j]) * h[j] + z[j] * c[j] for j in range(units)]
        outs[t] = list(h)
    return np.array(outs)

"""Energy spectrogram, per-band mel filterbanks, log-mel/delta features and
sub-band segmentation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import AudioClip
from .errors import (
    BandError,
    ConfigError,
    DegenerateBandError,
    SampleRateError,
    ShapeError,
    StatsError,
    WindowRangeError,
)

DELTA_WIDTH = 2
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class SpectrogramConfig:
    fft_size: int = 1024
    n_frames: int = 60
    n_mels: int = 60
    sample_rate_hz: int = 44100
    log_floor: float = 1e-10
    window_hop: int = 30
    hann: bool = False
    # "error" raises on filters that cover no FFT bin; "nearest" gives them
    # unit weight on the bin closest to their centre.
    empty_filter: str = "error"

    def __post_init__(self):
        object.__setattr__(self, "log_floor", float(self.log_floor))
        if self.fft_size <= 0 or self.fft_size % 2:
            raise ConfigError(f"fft_size must be a positive even integer, got {self.fft_size}")
        if self.n_frames <= 0 or self.window_hop <= 0:
            raise ConfigError("n_frames and window_hop must be positive")
        if self.n_mels < 2:
            raise ConfigError(f"n_mels must be >= 2, got {self.n_mels}")
        if not self.log_floor > 0:
            raise ConfigError(f"log_floor must be > 0, got {self.log_floor}")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.empty_filter not in ("error", "nearest"):
            raise ConfigError(f"empty_filter must be 'error' or 'nearest', got {self.empty_filter!r}")

    @property
    def hop(self) -> int:
        return self.fft_size // 2

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2

    def bin_freqs(self) -> np.ndarray:
        """Centre frequency (Hz) of each spectrum column; column j holds bin m = j + 1."""
        return np.arange(1, self.n_bins + 1) * (self.sample_rate_hz / self.fft_size)


@dataclass(frozen=True)
class BandScheme:
    cut_points_hz: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) for p in self.cut_points_hz)
        object.__setattr__(self, "cut_points_hz", pts)
        if len(pts) < 2:
            raise BandError("a band scheme needs at least f_L and f_H")
        if pts[0] < 0 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise BandError(f"cut points must be non-negative and strictly increasing: {pts}")

    @classmethod
    def from_khz(cls, low, inner, high) -> "BandScheme":
        return cls(tuple(1000.0 * f for f in (low, *inner, high)))

    @classmethod
    def whole_band(cls, cfg: SpectrogramConfig) -> "BandScheme":
        return cls((0.0, cfg.nyquist_hz))

    @property
    def n_bands(self) -> int:
        return len(self.cut_points_hz) - 1

    @property
    def inner_hz(self) -> tuple[float, ...]:
        return self.cut_points_hz[1:-1]

    def bands(self) -> list[tuple[float, float]]:
        p = self.cut_points_hz
        return list(zip(p[:-1], p[1:]))

    def validate(self, cfg: SpectrogramConfig) -> None:
        if self.cut_points_hz[-1] > cfg.nyquist_hz:
            raise BandError(f"f_H={self.cut_points_hz[-1]} Hz exceeds Nyquist {cfg.nyquist_hz} Hz")


@dataclass(frozen=True)
class EnergySpectrum:
    values: np.ndarray  # (n_frames, fft_size // 2)
    frame_hop: int


@dataclass(frozen=True)
class MelFilterBank:
    band_low_hz: float
    band_high_hz: float
    weights: np.ndarray  # (n_mels, fft_size // 2)
    center_freqs_hz: np.ndarray


@dataclass(frozen=True)
class LogmelTensor:
    data: np.ndarray  # (n_frames, n_mels, 3): logmel, delta, delta-delta
    band_index: int = 0
    clip_id: str = ""
    window_index: int = 0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _samples(clip) -> np.ndarray:
    return np.asarray(clip.samples if isinstance(clip, AudioClip) else clip, dtype=np.float64)


def count_frames(n_samples: int, cfg: SpectrogramConfig) -> int:
    if n_samples < cfg.fft_size:
        return 0
    return (n_samples - cfg.fft_size) // cfg.hop + 1


def count_windows(total_frames: int, cfg: SpectrogramConfig) -> int:
    """Windows of ``n_frames`` at ``window_hop``; a partial tail gets its own zero-padded window."""
    if total_frames <= cfg.n_frames:
        return 1
    span = total_frames - cfg.n_frames
    return span // cfg.window_hop + 1 + (1 if span % cfg.window_hop else 0)


def stft_energy(clip, cfg: SpectrogramConfig, window_index: int = 0) -> EnergySpectrum:
    """|DFT|^2 of ``cfg.n_frames`` frames of length T at hop T/2, bins 1..T/2.

    Frame n of window w starts at sample (w * window_hop + n) * T/2. The
    window is rectangular unless ``cfg.hann`` is set.
    """
    x = _samples(clip)
    T, hop = cfg.fft_size, cfg.hop
    first = window_index * cfg.window_hop
    start = first * hop
    stop = (first + cfg.n_frames - 1) * hop + T
    if window_index < 0 or stop > len(x):
        raise WindowRangeError(
            f"window {window_index} needs samples [{start}, {stop}) but the signal has {len(x)}"
        )
    frames = sliding_window_view(x[start:stop], T)[::hop]
    if cfg.hann:
        frames = frames * np.hanning(T + 1)[:-1]
    spec = np.fft.rfft(frames, axis=1)[:, 1:]
    energy = spec.real ** 2 + spec.imag ** 2
    return EnergySpectrum(values=energy, frame_hop=hop)


def build_mel_filterbank(cfg: SpectrogramConfig, band_low_hz: float, band_high_hz: float) -> MelFilterBank:
    """K triangular filters with mel-equispaced centres over (band_low, band_high).

    Each triangle rises from the previous centre (or the lower band edge),
    peaks with weight 1 on the FFT bin nearest its own centre and falls to
    zero at the next centre (or the upper band edge).
    """
    lo, hi = float(band_low_hz), float(band_high_hz)
    if not (0 <= lo < hi <= cfg.nyquist_hz):
        raise BandError(f"invalid band ({lo}, {hi}) for Nyquist {cfg.nyquist_hz} Hz")
    K = cfg.n_mels
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(lo), hz_to_mel(hi), K + 2))
    df = cfg.sample_rate_hz / cfg.fft_size
    edges = edges_hz / df  # fractional bin positions
    m = np.arange(1, cfg.n_bins + 1, dtype=np.float64)

    weights = np.zeros((K, cfg.n_bins))
    empty = []
    for k in range(K):
        left, centre, right = edges[k], edges[k + 1], edges[k + 2]
        apex = int(np.clip(np.floor(centre + 0.5), 1, cfg.n_bins))
        if not (left < apex < right):
            empty.append(k)
            weights[k, apex - 1] = 1.0
            continue
        rise = (m - left) / (apex - left)
        fall = (right - m) / (right - apex)
        tri = np.clip(np.where(m <= apex, rise, fall), 0.0, 1.0)
        # the mel round trip can land an edge a hair off an integer bin
        tri[(m <= left + 1e-9) | (m >= right - 1e-9)] = 0.0
        weights[k] = tri
    if empty and cfg.empty_filter == "error":
        raise DegenerateBandError(
            f"band ({lo:g}, {hi:g}) Hz is too narrow for {K} filters at T={cfg.fft_size}: "
            f"filters {empty} cover no FFT bin",
            filters=empty,
        )
    return MelFilterBank(lo, hi, weights, edges_hz[1:-1].copy())


def logmel(spec: EnergySpectrum, bank: MelFilterBank, cfg: SpectrogramConfig) -> np.ndarray:
    values = spec.values
    if values.ndim != 2 or values.shape[1] != bank.weights.shape[1]:
        raise ShapeError(f"spectrum {values.shape} does not match filterbank {bank.weights.shape}")
    return np.log(values @ bank.weights.T + cfg.log_floor)


def _delta(x: np.ndarray) -> np.ndarray:
    W = DELTA_WIDTH
    padded = np.concatenate([np.repeat(x[:1], W, axis=0), x, np.repeat(x[-1:], W, axis=0)])
    n = len(x)
    out = np.zeros_like(x)
    for d in range(1, W + 1):
        out += d * (padded[W + d:W + d + n] - padded[W - d:W - d + n])
    return out / (2 * sum(d * d for d in range(1, W + 1)))


def delta_channels(logmel_matrix: np.ndarray, *, band_index=0, clip_id="", window_index=0) -> LogmelTensor:
    x = np.asarray(logmel_matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected an (N, K) matrix, got shape {x.shape}")
    if x.shape[0] < 2 * DELTA_WIDTH + 1:
        raise ShapeError(f"delta needs at least {2 * DELTA_WIDTH + 1} frames, got {x.shape[0]}")
    d1 = _delta(x)
    d2 = _delta(d1)
    return LogmelTensor(np.stack([x, d1, d2], axis=-1), band_index, clip_id, window_index)


class FilterBankSet:
    """Filterbanks for every band of a scheme, built once and shared."""

    def __init__(self, cfg: SpectrogramConfig, scheme: BandScheme):
        scheme.validate(cfg)
        self.cfg = cfg
        self.scheme = scheme
        self.banks = [build_mel_filterbank(cfg, lo, hi) for lo, hi in scheme.bands()]


def padded_samples(clip, cfg: SpectrogramConfig) -> tuple[np.ndarray, int]:
    """Zero-pad a clip so its last (partial) window is complete; returns (samples, n_windows)."""
    x = _samples(clip)
    n_win = count_windows(count_frames(len(x), cfg), cfg)
    need = ((n_win - 1) * cfg.window_hop + cfg.n_frames - 1) * cfg.hop + cfg.fft_size
    if len(x) < need:
        x = np.concatenate([x, np.zeros(need - len(x))])
    return x, n_win


def _check_rate(clip, cfg):
    if isinstance(clip, AudioClip) and clip.sample_rate_hz != cfg.sample_rate_hz:
        raise SampleRateError(
            f"clip {clip.clip_id!r} is {clip.sample_rate_hz} Hz, configuration expects {cfg.sample_rate_hz} Hz"
        )


def extract_features(clip, cfg: SpectrogramConfig, scheme: BandScheme, banks: FilterBankSet | None = None):
    """Log-mel tensors for every (window, band) of a clip, ordered window-major."""
    _check_rate(clip, cfg)
    if banks is None:
        banks = FilterBankSet(cfg, scheme)
    x, n_win = padded_samples(clip, cfg)
    clip_id = getattr(clip, "clip_id", "")
    out = []
    for w in range(n_win):
        spec = stft_energy(x, cfg, w)
        for b, bank in enumerate(banks.banks):
            out.append(delta_channels(logmel(spec, bank, cfg), band_index=b, clip_id=clip_id, window_index=w))
    return out


def baseline_features(clip, cfg: SpectrogramConfig):
    """Whole-band (0, f_s/2) log-mel tensors, one per window."""
    _check_rate(clip, cfg)
    bank = build_mel_filterbank(cfg, 0.0, cfg.nyquist_hz)
    x, n_win = padded_samples(clip, cfg)
    clip_id = getattr(clip, "clip_id", "")
    return [
        delta_channels(logmel(stft_energy(x, cfg, w), bank, cfg), clip_id=clip_id, window_index=w)
        for w in range(n_win)
    ]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)

    def to_text(self) -> str:
        lines = ["# channel mean std"]
        for c, (mu, sd) in enumerate(zip(self.mean, self.std)):
            lines.append(f"{c} {float(mu):.17g} {float(sd):.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NormStats":
        rows = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            c, mu, sd = line.split()
            rows[int(c)] = (float(mu), float(sd))
        if sorted(rows) != list(range(len(rows))) or not rows:
            raise StatsError("malformed normalization stats")
        return cls(np.array([rows[c][0] for c in sorted(rows)]), np.array([rows[c][1] for c in sorted(rows)]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _as_array(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return features
    items = list(features)
    if not items:
        return np.zeros((0, 0, 0, 3))
    return np.stack([f.data if isinstance(f, LogmelTensor) else np.asarray(f) for f in items])


def compute_stats(features) -> NormStats:
    x = _as_array(features)
    if x.size == 0:
        raise StatsError("cannot compute normalization stats from an empty collection")
    flat = x.reshape(-1, x.shape[-1]).astype(np.float64)
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), STD_FLOOR)
    return NormStats(mean, std)


def normalize_features(features, stats: NormStats | None = None):
    """Per-channel standardisation; stats are computed from ``features`` when not given."""
    x = _as_array(features)
    if stats is None:
        stats = compute_stats(x)
    return (x - stats.mean) / stats.std, stats


def denormalize_features(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return x * stats.std + stats.mean


def stack_tensors(tensors: Iterable[LogmelTensor], dtype=np.float32) -> np.ndarray:
    return np.stack([t.data for t in tensors]).astype(dtype)


"""Synthetic "mini-ESC": a small ESC-50-shaped dataset of band-limited tones and noise."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from scipy import signal

N_CLASSES = 5
CLIPS_PER_CLASS = 40
N_FOLDS = 5
SAMPLE_RATE = 44100
DURATION_S = 1.0
BACKGROUND = 0.003


def _bandnoise(rng, n, lo, hi, fs):
    sos = signal.butter(6, [lo, hi], btype="bandpass", fs=fs, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(n))
    return x / (np.max(np.abs(x)) + 1e-12)


def _tone(rng, n, f, fs):
    t = np.arange(n) / fs
    return np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))


def _envelope(rng, n):
    attack = int(rng.uniform(0.01, 0.1) * n)
    decay = rng.uniform(0.5, 3.0)
    env = np.exp(-decay * np.linspace(0, 1, n))
    env[:attack] *= np.linspace(0, 1, attack, endpoint=False) if attack else 1
    return env


def synth_clip(cls: int, rng: np.random.Generator, *, n=None, fs=SAMPLE_RATE, low_only=False) -> np.ndarray:
    """One clip of class ``cls``.

    Default classes: 0 low tone, 1 1-3 kHz noise, 2 modulated 4-6 kHz tone,
    3 12-16 kHz noise, 4 low tone plus 14 kHz tone. With ``low_only`` every
    class lives below 8 kHz and the upper spectrum carries only shared
    background noise.
    """
    n = n or int(DURATION_S * fs)
    if low_only:
        recipes = {
            0: lambda: _tone(rng, n, rng.uniform(300, 600), fs),
            1: lambda: _bandnoise(rng, n, 1000, 3000, fs),
            2: lambda: _tone(rng, n, rng.uniform(4000, 6000), fs) * (0.6 + 0.4 * _tone(rng, n, 8, fs)),
            3: lambda: _tone(rng, n, rng.uniform(1500, 2000), fs) + _tone(rng, n, rng.uniform(6500, 7500), fs),
            4: lambda: _bandnoise(rng, n, 200, 800, fs),
        }
    else:
        recipes = {
            0: lambda: _tone(rng, n, rng.uniform(300, 600), fs),
            1: lambda: _bandnoise(rng, n, 1000, 3000, fs),
            2: lambda: _tone(rng, n, rng.uniform(4000, 6000), fs) * (0.6 + 0.4 * _tone(rng, n, 8, fs)),
            3: lambda: _bandnoise(rng, n, 12000, 16000, fs),
            4: lambda: _tone(rng, n, rng.uniform(700, 900), fs) + _tone(rng, n, rng.uniform(13500, 14500), fs),
        }
    x = recipes[cls]()
    x = x / (np.max(np.abs(x)) + 1e-12) * rng.uniform(0.1, 0.5) * _envelope(rng, n)
    x = x + BACKGROUND * rng.standard_normal(n)
    return np.clip(x, -1.0, 1.0)


def write_pcm16(path, samples: np.ndarray, fs: int) -> None:
    pcm = np.round(np.clip(samples, -1.0, 1.0) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(fs)
        w.writeframes(pcm.tobytes())


def generate_toy_dataset(root, *, seed=0, n_classes=N_CLASSES, clips_per_class=CLIPS_PER_CLASS,
                         n_folds=N_FOLDS, fs=SAMPLE_RATE, duration_s=DURATION_S, low_only=False) -> list[Path]:
    """Write ESC-50-named WAVs (``{fold}-{id}-A-{class}.wav``) with classes spread evenly over folds."""
    if n_classes > 5:
        raise ValueError("the toy generator defines 5 classes")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    paths = []
    for cls in range(n_classes):
        for j in range(clips_per_class):
            fold = j % n_folds + 1
            path = root / f"{fold}-{cls:02d}{j:03d}-A-{cls}.wav"
            write_pcm16(path, synth_clip(cls, rng, n=n, fs=fs, low_only=low_only), fs)
            paths.append(path)
    return paths

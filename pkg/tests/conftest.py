import wave
from pathlib import Path

import numpy as np
import pytest


def write_wav(path, frames, *, rate=44100, width=2, channels=1):
    """Independent writer built on the stdlib ``wave`` module (integer PCM only)."""
    frames = np.asarray(frames)
    dtype = {1: "u1", 2: "<i2", 4: "<i4"}[width]
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(frames.astype(dtype).tobytes())
    return Path(path)


@pytest.fixture
def wav_writer(tmp_path):
    counter = iter(range(10**6))

    def make(frames, name=None, **kw):
        return write_wav(tmp_path / (name or f"clip{next(counter)}.wav"), frames, **kw)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance report -----------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one result line per acceptance criterion: ``acceptance(n, ok, detail)``."""

    def record(number, ok, detail):
        _ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")

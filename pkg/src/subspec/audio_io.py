"""WAV decoding and ESC-50 style dataset scanning."""

from __future__ import annotations

import csv
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDatasetError,
    ManifestError,
    SampleRateError,
    TruncatedDataError,
    UnsupportedFormatError,
    WavFormatError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

ESC50_NAME = re.compile(r"^(?P<fold>\d+)-(?P<id>[^-]+)-(?P<take>[^-]+)-(?P<target>\d+)\.wav$", re.IGNORECASE)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    clip_id: str = ""
    fold: int | None = None
    class_index: int | None = None

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise WavFormatError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if len(self.samples) == 0:
            raise WavFormatError(f"clip {self.clip_id!r} has no samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class ClipRef:
    """A dataset entry; audio is decoded on demand."""

    path: Path
    clip_id: str
    fold: int
    class_index: int

    def load(self, expected_rate: int | None = None) -> AudioClip:
        clip = decode_wav(self.path)
        if expected_rate is not None and clip.sample_rate_hz != expected_rate:
            raise SampleRateError(
                f"{self.path}: sample rate {clip.sample_rate_hz} Hz, expected {expected_rate} Hz "
                "(resampling is not supported)"
            )
        return AudioClip(clip.samples, clip.sample_rate_hz, self.clip_id, self.fold, self.class_index)


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    clips: tuple[ClipRef, ...]
    n_classes: int
    folds: frozenset[int] = field(default_factory=frozenset)

    def by_fold(self) -> dict[int, list[ClipRef]]:
        out: dict[int, list[ClipRef]] = {f: [] for f in sorted(self.folds)}
        for ref in self.clips:
            out[ref.fold].append(ref)
        return out

    def select(self, folds) -> list[ClipRef]:
        folds = set(folds)
        return [ref for ref in self.clips if ref.fold in folds]

    def lookup(self, clip_id: str) -> ClipRef:
        for ref in self.clips:
            if ref.clip_id == clip_id:
                return ref
        raise KeyError(clip_id)


def _read_chunks(data: bytes, path):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16 or len(body) < 16:
                raise WavFormatError(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = body
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedDataError(f"{path}: data chunk declares {size} bytes, file holds {len(body)}")
            payload = body
            if fmt is not None:
                break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavFormatError(f"{path}: missing data chunk")
    return fmt, payload


def decode_wav(path) -> AudioClip:
    """Decode a PCM (8/16/24/32-bit) or float32 WAV file to mono samples in [-1, 1]."""
    path = Path(path)
    data = path.read_bytes()
    fmt, payload = _read_chunks(data, path)
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise WavFormatError(f"{path}: extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if tag not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormatError(f"{path}: unsupported format tag {tag:#06x}")
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {channels} channels (only mono/stereo)")
    if tag == WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedFormatError(f"{path}: {bits}-bit float")
    if tag == WAVE_FORMAT_PCM and bits not in (8, 16, 24, 32):
        raise UnsupportedFormatError(f"{path}: {bits}-bit PCM")
    width = bits // 8
    if block_align != width * channels:
        raise WavFormatError(f"{path}: block align {block_align} inconsistent with {channels}x{bits} bit")
    if len(payload) % block_align:
        raise TruncatedDataError(f"{path}: data chunk ends mid-frame")

    if tag == WAVE_FORMAT_IEEE_FLOAT:
        x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(x)):
            raise WavFormatError(f"{path}: non-finite float samples")
        if np.any(np.abs(x) > 1.0):
            raise WavFormatError(f"{path}: float samples outside [-1, 1]")
    elif bits == 8:
        x = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        x = ints.astype(np.float64) / float(1 << 23)
    else:
        dtype = "<i2" if bits == 16 else "<i4"
        x = np.frombuffer(payload, dtype=dtype).astype(np.float64) / float(1 << (bits - 1))

    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples=x, sample_rate_hz=int(rate), clip_id=path.stem)


def _read_index(root: Path, index: Path):
    entries = {}
    with open(index, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"path", "fold", "target"} - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{index}: missing columns {sorted(missing)}")
        for row in reader:
            p = (root / row["path"]).resolve()
            try:
                entries[p] = (int(row["fold"]), int(row["target"]))
            except ValueError as exc:
                raise ManifestError(f"{index}: bad row {row}") from exc
    return entries


def scan_dataset(root, index=None) -> DatasetManifest:
    """Build a manifest from ESC-50 file names, or from a ``path,fold,target`` CSV.

    CSV entries take precedence over file names; files absent from the CSV
    must then parse as ``{fold}-{id}-{take}-{target}.wav``.
    """
    root = Path(root).resolve()
    if not root.is_dir():
        raise EmptyDatasetError(f"{root}: not a directory")
    indexed = _read_index(root, Path(index)) if index is not None else {}
    for p in indexed:
        if not p.exists():
            raise ManifestError(f"index references missing file {p}")

    wavs = sorted(root.rglob("*.wav"), key=lambda p: p.relative_to(root).as_posix())
    wavs += [p for p in indexed if p not in set(wavs)]
    if not wavs:
        raise EmptyDatasetError(f"{root}: no WAV files")

    refs, bad = [], []
    for p in sorted(set(wavs), key=lambda q: q.relative_to(root).as_posix()):
        rel = p.relative_to(root).as_posix()
        if p in indexed:
            fold, target = indexed[p]
        else:
            m = ESC50_NAME.match(p.name)
            if m is None:
                bad.append(rel)
                continue
            fold, target = int(m["fold"]), int(m["target"])
        if fold < 1 or target < 0:
            bad.append(rel)
            continue
        refs.append(ClipRef(p, Path(rel).with_suffix("").as_posix(), fold, target))
    if bad:
        raise ManifestError("unparsable dataset entries (no CSV index): " + ", ".join(bad))

    ids = [r.clip_id for r in refs]
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate clip ids in dataset")
    n_classes = 1 + max(r.class_index for r in refs)
    return DatasetManifest(root, tuple(refs), n_classes, frozenset(r.fold for r in refs))

"""Experiment configuration: a sectioned key-value text file.

Example::

    [meta]
    version = 1

    [dataset]
    root = data/mini-esc
    index =

    [spectrogram]
    fft_size = 1024
    ...

    [bands]
    cut_points_hz = 0, 10000, 22050

Every section and key is optional except ``dataset.root``; missing values
take the defaults below. Floats are written with ``repr`` so a
save/load round trip is exact.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..augment import MixupConfig
from ..crnn import NETWORKS
from ..dsp import BandScheme, SpectrogramConfig
from ..errors import ConfigError

CONFIG_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    network: str = "crnn"
    epochs: int = 300
    batch_size: int = 200
    seed: int = 0
    lr_initial: float = 0.1
    lr_factor: float = 10.0
    lr_period: int = 100
    momentum: float = 0.9

    def __post_init__(self):
        _coerce_numbers(self)
        if self.network not in NETWORKS:
            raise ConfigError(f"training.network must be one of {NETWORKS}, got {self.network!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr_period < 1:
            raise ConfigError("training.epochs >= 0, batch_size >= 1 and lr_period >= 1 are required")
        if not self.lr_initial > 0 or not 0 <= self.momentum < 1:
            raise ConfigError("training.lr_initial must be > 0 and momentum in [0, 1)")


@dataclass(frozen=True)
class FoldPolicy:
    """Rotating cross-validation: for test fold k the validation fold is the next one (cyclically)."""

    n_folds: int = 5
    test_folds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        object.__setattr__(self, "test_folds", tuple(int(f) for f in self.test_folds))
        if self.n_folds < 3:
            raise ConfigError("fold policy needs at least 3 folds (train, validation, test)")
        if not self.test_folds or any(not 1 <= f <= self.n_folds for f in self.test_folds):
            raise ConfigError(f"test folds {self.test_folds} outside 1..{self.n_folds}")

    def split(self, test_fold: int) -> tuple[list[int], int, int]:
        """(train folds, validation fold, test fold); the three sets are disjoint."""
        val = test_fold % self.n_folds + 1
        train = [f for f in range(1, self.n_folds + 1) if f not in (test_fold, val)]
        return train, val, test_fold


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str
    dataset_index: str = ""
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    bands: BandScheme = field(default_factory=lambda: BandScheme((0.0, 22050.0)))
    mixup: MixupConfig = field(default_factory=MixupConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    folds: FoldPolicy = field(default_factory=FoldPolicy)
    fusion_step: float = 0.1
    fusion_weights: tuple[float, ...] = ()
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "fusion_step", float(self.fusion_step))
        object.__setattr__(self, "fusion_weights", tuple(float(w) for w in self.fusion_weights))
        if not self.dataset_root:
            raise ConfigError("dataset.root is required")
        self.bands.validate(self.spectrogram)
        if self.fusion_weights and len(self.fusion_weights) != self.bands.n_bands:
            raise ConfigError(
                f"{len(self.fusion_weights)} fusion weights for {self.bands.n_bands} bands"
            )

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    # serialisation -------------------------------------------------------

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["meta"] = {"version": str(CONFIG_VERSION)}
        cp["dataset"] = {"root": self.dataset_root, "index": self.dataset_index}
        cp["spectrogram"] = {f.name: _fmt(getattr(self.spectrogram, f.name)) for f in fields(SpectrogramConfig)}
        cp["bands"] = {"cut_points_hz": ", ".join(repr(p) for p in self.bands.cut_points_hz)}
        cp["mixup"] = {"alpha": repr(self.mixup.alpha), "enabled": _fmt(self.mixup.enabled),
                       "seed": str(self.mixup.seed)}
        cp["training"] = {f.name: _fmt(getattr(self.training, f.name)) for f in fields(TrainingConfig)}
        cp["folds"] = {"n_folds": str(self.folds.n_folds),
                       "test_folds": ", ".join(str(f) for f in self.folds.test_folds)}
        cp["fusion"] = {"step": repr(self.fusion_step),
                        "weights": ", ".join(repr(w) for w in self.fusion_weights)}
        cp["output"] = {"dir": self.output_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, base_dir=None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unparsable config: {exc}") from exc
        version = cp.getint("meta", "version", fallback=CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        try:
            root = cp.get("dataset", "root", fallback="")
            if root and base_dir is not None and not Path(root).is_absolute():
                root = str(Path(base_dir) / root)
            spec = SpectrogramConfig(**_section(cp, "spectrogram", SpectrogramConfig))
            bands = BandScheme(_floats(cp.get("bands", "cut_points_hz", fallback=f"0, {spec.nyquist_hz!r}")))
            mixup = MixupConfig(
                alpha=cp.getfloat("mixup", "alpha", fallback=0.2),
                enabled=cp.getboolean("mixup", "enabled", fallback=True),
                seed=cp.getint("mixup", "seed", fallback=0),
            )
            training = TrainingConfig(**_section(cp, "training", TrainingConfig))
            folds = FoldPolicy(
                n_folds=cp.getint("folds", "n_folds", fallback=5),
                test_folds=tuple(int(v) for v in _floats(cp.get("folds", "test_folds", fallback="1, 2, 3, 4, 5"))),
            )
            out = cp.get("output", "dir", fallback="out")
            if base_dir is not None and not Path(out).is_absolute():
                out = str(Path(base_dir) / out)
            return cls(
                dataset_root=root,
                dataset_index=cp.get("dataset", "index", fallback=""),
                spectrogram=spec,
                bands=bands,
                mixup=mixup,
                training=training,
                folds=folds,
                fusion_step=cp.getfloat("fusion", "step", fallback=0.1),
                fusion_weights=tuple(_floats(cp.get("fusion", "weights", fallback=""))),
                output_dir=out,
            )
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        return cls.from_text(path.read_text(encoding="utf-8"), base_dir=path.parent)

    def config_hash(self) -> str:
        """Digest of everything that influences results (the output location excluded)."""
        return digest(self.with_(output_dir="").to_text())


def digest(*parts: str, length: int = 12) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:length]


def derive_seed(master: int, component: str) -> int:
    """Per-component seed derived from the master seed."""
    return int(hashlib.sha256(f"{component}:{master}".encode()).hexdigest()[:8], 16)


def _coerce_numbers(obj) -> None:
    """Cast int/float fields to their default's type so equal settings hash equally (10 vs 10.0)."""
    for f in fields(obj):
        value = getattr(obj, f.name)
        kind = type(f.default)
        if kind in (int, float) and not isinstance(value, bool) and isinstance(value, (int, float)):
            object.__setattr__(obj, f.name, kind(value))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _section(cp, name, cls) -> dict:
    if not cp.has_section(name):
        return {}
    known = {f.name for f in fields(cls)}
    out = {}
    for key, raw in cp.items(name):
        if key not in known:
            raise ConfigError(f"unknown key {name}.{key}")
        default = getattr(cls(), key)
        if isinstance(default, bool):
            out[key] = cp.getboolean(name, key)
        elif isinstance(default, int):
            out[key] = int(raw)
        elif isinstance(default, float):
            out[key] = float(raw)
        else:
            out[key] = raw.strip()
    return out

"""Extraction, per-band training, fusion and reporting over a dataset manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__, nn
from ..audio_io import DatasetManifest, scan_dataset
from ..crnn import CrnnModel, ValidationSet, checkpoint_path, clip_scores, train_branch
from ..dsp import BandScheme, FilterBankSet, NormStats, extract_features, normalize_features
from ..errors import ConfigError, DataError, SubspecError
from ..featcache import read_cache, write_cache
from ..fusion import FusionWeights, accuracy, fuse, grid_search_weights, simplex_grid
from .config import ExperimentConfig, derive_seed, digest
from .reports import ReportRow, write_rows

log = logging.getLogger(__name__)


class MissingArtifactError(DataError):
    pass


# ---------------------------------------------------------------- extraction


def load_manifest(cfg: ExperimentConfig) -> DatasetManifest:
    return scan_dataset(cfg.dataset_root, cfg.dataset_index or None)


def manifest_signature(manifest: DatasetManifest) -> str:
    parts = [f"{r.clip_id}|{r.fold}|{r.class_index}|{r.path.stat().st_size}" for r in manifest.clips]
    return digest(*parts)


def band_cache_path(cfg: ExperimentConfig, manifest: DatasetManifest, band: tuple[float, float]) -> Path:
    key = digest(repr(cfg.spectrogram), repr(tuple(band)), cfg.dataset_index, manifest_signature(manifest))
    return Path(cfg.output_dir) / "features" / f"band_{band[0]:g}-{band[1]:g}_{key}.sslm"


@dataclass
class ExtractSummary:
    cache_files: list[Path]
    computed_bands: list[int]
    records: dict[int, int] = field(default_factory=dict)


def run_extract(cfg: ExperimentConfig, manifest: DatasetManifest | None = None) -> ExtractSummary:
    """Write one feature cache per band; bands whose cache already exists are skipped."""
    manifest = manifest or load_manifest(cfg)
    bands = cfg.bands.bands()
    paths = [band_cache_path(cfg, manifest, b) for b in bands]
    todo = [i for i, p in enumerate(paths) if not p.exists()]
    summary = ExtractSummary(paths, todo)
    if not todo:
        log.info("feature caches up to date (%d bands)", len(bands))
        return summary
    banks = FilterBankSet(cfg.spectrogram, cfg.bands)
    per_band: dict[int, list] = {i: [] for i in todo}
    errors = []
    for ref in manifest.clips:
        try:
            clip = ref.load(cfg.spectrogram.sample_rate_hz)
            tensors = extract_features(clip, cfg.spectrogram, cfg.bands, banks)
        except SubspecError as exc:
            errors.append(f"{ref.path}: {exc}")
            continue
        for t in tensors:
            if t.band_index in per_band:
                per_band[t.band_index].append(t)
    if errors:
        raise DataError(f"{len(errors)} file(s) failed:\n" + "\n".join(errors))
    for i in todo:
        paths[i].parent.mkdir(parents=True, exist_ok=True)
        write_cache(paths[i], per_band[i])
        summary.records[i] = len(per_band[i])
        log.info("band %d: wrote %d records to %s", i, len(per_band[i]), paths[i])
    return summary


@dataclass
class BandData:
    """Window features of one band for a set of clips."""

    features: np.ndarray  # (n_windows, frames, mels, 3)
    clip_index: np.ndarray  # window -> clip position
    clip_ids: list[str]
    clip_labels: np.ndarray

    @property
    def window_labels(self) -> np.ndarray:
        return self.clip_labels[self.clip_index]


def load_band(cfg: ExperimentConfig, manifest: DatasetManifest, band_index: int) -> dict[str, list[np.ndarray]]:
    path = band_cache_path(cfg, manifest, cfg.bands.bands()[band_index])
    if not path.exists():
        raise MissingArtifactError(
            f"feature cache for band {band_index} not found ({path}); run `subspec extract` with this config first"
        )
    by_clip: dict[str, list] = {}
    for t in read_cache(path):
        by_clip.setdefault(t.clip_id, []).append(t)
    return {cid: [t.data for t in sorted(ts, key=lambda t: t.window_index)] for cid, ts in by_clip.items()}


def select(features: dict[str, list[np.ndarray]], manifest: DatasetManifest, folds) -> BandData:
    refs = manifest.select(folds)
    xs, idx = [], []
    for pos, ref in enumerate(refs):
        windows = features[ref.clip_id]
        xs.extend(windows)
        idx.extend([pos] * len(windows))
    shape = next(iter(features.values()))[0].shape if features else (0, 0, 3)
    x = np.stack(xs).astype(np.float32) if xs else np.zeros((0,) + shape, dtype=np.float32)
    return BandData(x, np.asarray(idx, dtype=np.int64), [r.clip_id for r in refs],
                    np.asarray([r.class_index for r in refs], dtype=np.int64))


# ------------------------------------------------------------------ training


def run_key(cfg: ExperimentConfig) -> str:
    """Digest of everything that influences trained parameters."""
    return cfg.with_(output_dir="", fusion_weights=(), fusion_step=0.1).config_hash()


def run_dir(cfg: ExperimentConfig, test_fold: int) -> Path:
    return Path(cfg.output_dir) / "runs" / run_key(cfg) / f"fold{test_fold}"


def make_optimizer(cfg: ExperimentConfig) -> nn.OptimizerState:
    t = cfg.training
    return nn.OptimizerState(
        learning_rate=t.lr_initial,
        momentum=t.momentum,
        schedule=nn.StepSchedule(t.lr_initial, t.lr_factor, t.lr_period),
    )


def new_model(cfg: ExperimentConfig, n_classes: int, band_index: int, test_fold: int) -> CrnnModel:
    seed = derive_seed(cfg.training.seed, f"init/band{band_index}/fold{test_fold}")
    return CrnnModel(n_classes, band_index=band_index, network=cfg.training.network, seed=seed)


@dataclass
class TrainSummary:
    checkpoints: list[Path]
    logs: dict[tuple[int, int], object]


def run_train(cfg: ExperimentConfig, manifest: DatasetManifest | None = None) -> TrainSummary:
    """Train one branch per band for every configured test fold."""
    manifest = manifest or load_manifest(cfg)
    summary = TrainSummary([], {})
    for b in range(cfg.bands.n_bands):
        feats = load_band(cfg, manifest, b)
        for k in cfg.folds.test_folds:
            train_folds, val_fold, _ = cfg.folds.split(k)
            train = select(feats, manifest, train_folds)
            val = select(feats, manifest, [val_fold])
            if len(train.features) == 0:
                raise DataError(f"fold {k}: no training clips in folds {train_folds}")
            x_train, stats = normalize_features(train.features)
            validation = None
            if len(val.features):
                x_val, _ = normalize_features(val.features, stats)
                validation = ValidationSet(x_val.astype(np.float32), val.clip_index, val.clip_labels)
            model = new_model(cfg, manifest.n_classes, b, k)
            mixup = replace(cfg.mixup, seed=derive_seed(cfg.training.seed, f"mixup{cfg.mixup.seed}/band{b}/fold{k}"))
            out = run_dir(cfg, k)
            out.mkdir(parents=True, exist_ok=True)
            log.info("fold %d band %d: training on %d windows", k, b, len(x_train))
            train_log = train_branch(
                model, x_train.astype(np.float32), train.window_labels, mixup=mixup,
                optimizer=make_optimizer(cfg), epochs=cfg.training.epochs,
                batch_size=cfg.training.batch_size,
                seed=derive_seed(cfg.training.seed, f"train/band{b}/fold{k}"),
                validation=validation,
                on_epoch=lambda r, b=b, k=k: log.info(
                    "fold %d band %d epoch %d lr %g loss %.4f acc %.3f val %s",
                    k, b, r.epoch, r.lr, r.train_loss, r.train_acc, r.val_acc),
            )
            ckpt = checkpoint_path(out, b)
            model.save(ckpt)
            stats.save(out / f"norm_band{b}.txt")
            train_log.write_csv(out / f"train_band{b}.csv")
            summary.checkpoints.append(ckpt)
            summary.logs[(k, b)] = train_log
    return summary


def load_branch(cfg: ExperimentConfig, n_classes: int, band_index: int, test_fold: int):
    out = run_dir(cfg, test_fold)
    ckpt = checkpoint_path(out, band_index)
    norm = out / f"norm_band{band_index}.txt"
    if not ckpt.exists() or not norm.exists():
        raise MissingArtifactError(f"no trained branch at {ckpt}; run `subspec train` with this config first")
    model = CrnnModel.load(ckpt, n_classes, band_index=band_index, network=cfg.training.network)
    return model, NormStats.load(norm)


# ---------------------------------------------------------------- evaluation


@dataclass
class SplitScores:
    """Clip-level scores of every branch on one split."""

    per_band: list[np.ndarray]  # each (n_clips, n_classes)
    labels: np.ndarray
    clip_ids: list[str]


@dataclass
class FoldEvaluation:
    test_fold: int
    weights: FusionWeights
    accuracy: float
    uniform_accuracy: float
    band_accuracies: list[float]
    val_accuracy: float | None
    val_band_accuracies: list[float]
    search: object = None


def branch_scores(cfg: ExperimentConfig, manifest: DatasetManifest, test_fold: int,
                  band_features=None) -> tuple[SplitScores, SplitScores]:
    """(validation, test) clip scores for every band of a trained fold."""
    _, val_fold, _ = cfg.folds.split(test_fold)
    val_scores, test_scores = [], []
    val = test = None
    for b in range(cfg.bands.n_bands):
        feats = band_features[b] if band_features is not None else load_band(cfg, manifest, b)
        model, stats = load_branch(cfg, manifest.n_classes, b, test_fold)
        val = select(feats, manifest, [val_fold])
        test = select(feats, manifest, [test_fold])
        for split, sink in ((val, val_scores), (test, test_scores)):
            if len(split.features):
                x, _ = normalize_features(split.features, stats)
                probs = model.predict_proba(x.astype(np.float32))
                sink.append(clip_scores(probs, split.clip_index, len(split.clip_labels)))
            else:
                sink.append(np.zeros((0, manifest.n_classes)))
    return (SplitScores(val_scores, val.clip_labels, val.clip_ids),
            SplitScores(test_scores, test.clip_labels, test.clip_ids))


def choose_weights(cfg: ExperimentConfig, val: SplitScores, weights=None):
    """Explicit weights, [1] for a single band, otherwise the validation grid-search optimum."""
    n = cfg.bands.n_bands
    if weights is not None:
        w = weights if isinstance(weights, FusionWeights) else FusionWeights(weights)
        if len(w) != n:
            raise ConfigError(f"{len(w)} fusion weights for {n} bands")
        return w, None
    if cfg.fusion_weights:
        return FusionWeights(cfg.fusion_weights), None
    if n == 1:
        return FusionWeights((1.0,)), None
    search = grid_search_weights(val.per_band, val.labels, cfg.fusion_step)
    return search.best_weights, search


def evaluate_fold(cfg: ExperimentConfig, manifest: DatasetManifest, test_fold: int, weights=None,
                  band_features=None) -> FoldEvaluation:
    val, test = branch_scores(cfg, manifest, test_fold, band_features)
    if len(test.labels) == 0:
        raise DataError(f"test fold {test_fold} has no clips")
    w, search = choose_weights(cfg, val, weights)
    n = cfg.bands.n_bands
    has_val = len(val.labels) > 0
    return FoldEvaluation(
        test_fold=test_fold,
        weights=w,
        accuracy=accuracy(fuse(test.per_band, w), test.labels),
        uniform_accuracy=accuracy(fuse(test.per_band, FusionWeights.uniform(n)), test.labels),
        band_accuracies=[accuracy(s, test.labels) for s in test.per_band],
        val_accuracy=accuracy(fuse(val.per_band, w), val.labels) if has_val else None,
        val_band_accuracies=[accuracy(s, val.labels) for s in val.per_band] if has_val else [],
        search=search,
    )


def make_row(cfg: ExperimentConfig, fold_acc: dict[int, float], weights: dict[int, FusionWeights],
             fusion: bool, status="ok") -> ReportRow:
    return ReportRow(
        n_ss=cfg.bands.n_bands,
        cut_points_hz=cfg.bands.cut_points_hz,
        network=cfg.training.network,
        mixup=cfg.mixup.enabled,
        fusion=fusion,
        weights=[weights[k].weights for k in sorted(weights)],
        fold_accuracies=dict(sorted(fold_acc.items())),
        config_hash=cfg.config_hash(),
        seed=cfg.training.seed,
        code_version=__version__,
        status=status,
    )


@dataclass
class EvaluateResult:
    folds: list[FoldEvaluation]
    row: ReportRow
    report_path: Path


def run_evaluate(cfg: ExperimentConfig, weights=None, manifest: DatasetManifest | None = None) -> EvaluateResult:
    manifest = manifest or load_manifest(cfg)
    feats = [load_band(cfg, manifest, b) for b in range(cfg.bands.n_bands)]
    folds = [evaluate_fold(cfg, manifest, k, weights, feats) for k in cfg.folds.test_folds]
    row = make_row(cfg, {f.test_fold: f.accuracy for f in folds}, {f.test_fold: f.weights for f in folds},
                   fusion=cfg.bands.n_bands > 1)
    reports = Path(cfg.output_dir) / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    for f in folds:
        if f.search is not None:
            f.search.write_csv(reports / f"fusion_surface_fold{f.test_fold}.csv")
    path = reports / "evaluate.csv"
    write_rows(path, [row], "table5")
    return EvaluateResult(folds, row, path)


# ------------------------------------------------------------- sweep & curve


@dataclass
class SweepResult:
    rows: list[ReportRow]
    paths: dict[str, Path]


def run_sweep(cfg: ExperimentConfig, schemes, *, networks=("crnn",), mixup=(True,), fusion=(True,),
              manifest: DatasetManifest | None = None) -> SweepResult:
    """Extract/train/evaluate for every scheme x network x mixup, reporting each fusion setting.

    A single-band scheme has no fusion choice and yields one row (fusion off).
    Failures are recorded in the row's status and the sweep continues.
    """
    manifest = manifest or load_manifest(cfg)
    rows = []
    for scheme in schemes:
        scheme = scheme if isinstance(scheme, BandScheme) else BandScheme(tuple(scheme))
        for network in networks:
            for use_mixup in mixup:
                variant = cfg.with_(
                    bands=scheme,
                    training=replace(cfg.training, network=network),
                    mixup=replace(cfg.mixup, enabled=bool(use_mixup)),
                    fusion_weights=(),
                )
                flags = [False] if scheme.n_bands == 1 else sorted({bool(f) for f in fusion})
                try:
                    run_extract(variant, manifest)
                    run_train(variant, manifest)
                    feats = [load_band(variant, manifest, b) for b in range(scheme.n_bands)]
                    evals = [evaluate_fold(variant, manifest, k, None, feats) for k in variant.folds.test_folds]
                except SubspecError as exc:
                    log.error("sweep entry %s/%s/mixup=%s failed: %s", scheme.cut_points_hz, network, use_mixup, exc)
                    for flag in flags:
                        rows.append(make_row(variant, {}, {}, flag, status=f"failed: {exc}".replace("\n", " ")))
                    continue
                for flag in flags:
                    if flag:
                        acc = {e.test_fold: e.accuracy for e in evals}
                        w = {e.test_fold: e.weights for e in evals}
                    else:
                        acc = {e.test_fold: e.uniform_accuracy for e in evals}
                        w = {e.test_fold: FusionWeights.uniform(scheme.n_bands) for e in evals}
                    rows.append(make_row(variant, acc, w, flag))
    reports = Path(cfg.output_dir) / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    paths = {"sweep": reports / "sweep.csv"}
    write_rows(paths["sweep"], rows, "sweep")
    for table in ("table1", "table3", "table4", "table5", "table6"):
        paths[table] = reports / f"{table}.csv"
        write_rows(paths[table], rows, table)
    return SweepResult(rows, paths)


def run_fusion_curve(cfg: ExperimentConfig, manifest: DatasetManifest | None = None,
                     split: str = "test") -> tuple[list[tuple[float, float]], Path]:
    """Accuracy against the first band's weight (0, 0.1, ..., 1) for a two-band scheme, mean over folds."""
    if cfg.bands.n_bands != 2:
        raise ConfigError(f"the fusion curve needs exactly 2 bands, scheme has {cfg.bands.n_bands}")
    manifest = manifest or load_manifest(cfg)
    feats = [load_band(cfg, manifest, b) for b in range(2)]
    grid = simplex_grid(2, cfg.fusion_step)
    totals = np.zeros(len(grid))
    for k in cfg.folds.test_folds:
        val, test = branch_scores(cfg, manifest, k, feats)
        scores = test if split == "test" else val
        for i, point in enumerate(grid):
            totals[i] += accuracy(fuse(scores.per_band, point), scores.labels)
    curve = [(point[0], float(t / len(cfg.folds.test_folds))) for point, t in zip(grid, totals)]
    curve.sort()
    reports = Path(cfg.output_dir) / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    path = reports / "fig3.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("w1,accuracy\n")
        for w1, acc in curve:
            fh.write(f"{w1:g},{acc!r}\n")
    return curve, path


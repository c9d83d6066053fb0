"""Pipeline and CLI on a tiny synthetic dataset (one window per clip, one epoch)."""

import csv

import numpy as np
import pytest

from subspec.audio_io import scan_dataset
from subspec.dsp import BandScheme
from subspec.errors import ConfigError
from subspec.harness import pipeline
from subspec.harness.cli import main
from subspec.harness.config import ExperimentConfig, FoldPolicy, TrainingConfig
from subspec.harness.reports import TABLE_COLUMNS, read_rows
from subspec.harness.toy import generate_toy_dataset

TRAINING = TrainingConfig(epochs=1, batch_size=8, lr_initial=0.01, lr_period=100)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    generate_toy_dataset(root, seed=1, clips_per_class=5, duration_s=0.7)
    return root


def make_cfg(dataset, out, **kw):
    base = dict(dataset_root=str(dataset), bands=BandScheme((0, 10000, 22050)), training=TRAINING,
                folds=FoldPolicy(5, (1,)), output_dir=str(out))
    base.update(kw)
    return ExperimentConfig(**base)


def write_cfg(tmp_path, cfg):
    path = tmp_path / "exp.ini"
    cfg.save(path)
    return str(path)


def test_toy_generator_layout(dataset):
    m = scan_dataset(dataset)
    assert len(m.clips) == 25
    assert m.n_classes == 5
    assert {len(v) for v in m.by_fold().values()} == {5}


def test_extract_counts_and_idempotence(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out")
    first = pipeline.run_extract(cfg)
    assert first.computed_bands == [0, 1]
    assert first.records == {0: 25, 1: 25}  # 0.7 s clips give one window each
    stamp = [p.stat().st_mtime_ns for p in first.cache_files]
    second = pipeline.run_extract(cfg)
    assert second.computed_bands == []
    assert [p.stat().st_mtime_ns for p in second.cache_files] == stamp
    other = pipeline.run_extract(make_cfg(dataset, tmp_path / "other"))
    assert [p.read_bytes() for p in other.cache_files] == [p.read_bytes() for p in first.cache_files]


def test_train_is_deterministic_and_logs(dataset, tmp_path):
    blobs = []
    for name in ("a", "b"):
        cfg = make_cfg(dataset, tmp_path / name, training=TrainingConfig(
            epochs=3, batch_size=8, lr_initial=0.01, lr_period=2))
        pipeline.run_extract(cfg)
        summary = pipeline.run_train(cfg)
        assert [p.name for p in summary.checkpoints] == ["band0.ckpt", "band1.ckpt"]
        blobs.append([p.read_bytes() for p in summary.checkpoints])
        rows = read_rows(pipeline.run_dir(cfg, 1) / "train_band0.csv")
        assert [float(r["lr"]) for r in rows] == pytest.approx([0.01, 0.01, 0.001])
    assert blobs[0] == blobs[1]


def test_evaluate_writes_a_table5_row(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out")
    pipeline.run_extract(cfg)
    pipeline.run_train(cfg)
    result = pipeline.run_evaluate(cfg)
    rows = read_rows(result.report_path)
    assert list(rows[0]) == TABLE_COLUMNS["table5"]
    assert rows[0]["n_ss"] == "2" and rows[0]["f_i_khz"] == "10"
    fold = result.folds[0]
    assert fold.val_accuracy >= max(fold.val_band_accuracies)
    surface = read_rows(tmp_path / "out" / "reports" / "fusion_surface_fold1.csv")
    assert len(surface) == 11 and list(surface[0]) == ["w1", "w2", "accuracy"]
    explicit = pipeline.run_evaluate(cfg, weights=(1.0, 0.0))
    assert explicit.folds[0].accuracy == explicit.folds[0].band_accuracies[0]


def test_fusion_curve(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out")
    pipeline.run_extract(cfg)
    pipeline.run_train(cfg)
    curve, path = pipeline.run_fusion_curve(cfg)
    assert [w for w, _ in curve] == pytest.approx(np.linspace(0, 1, 11))
    lines = path.read_text().splitlines()
    assert lines[0] == "w1,accuracy" and len(lines) == 12


def test_sweep_rows(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out")
    schemes = [BandScheme((0, 22050)), BandScheme((0, 10000, 22050))]
    result = pipeline.run_sweep(cfg, schemes, networks=("cnn",), mixup=(False,), fusion=(False, True))
    assert [(r.n_ss, r.fusion, r.status) for r in result.rows] == [(1, False, "ok"), (2, False, "ok"), (2, True, "ok")]
    for table, path in result.paths.items():
        with open(path) as fh:
            assert next(csv.reader(fh)) == TABLE_COLUMNS[table]
    assert len(read_rows(result.paths["table4"])) == 2


def test_sweep_records_failures(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out")
    bad = BandScheme((0, 3000, 22050))  # the 0-3 kHz band has an empty filter
    result = pipeline.run_sweep(cfg, [bad], networks=("cnn",), mixup=(False,))
    assert result.rows[0].status.startswith("failed")


# CLI -----------------------------------------------------------------------

def test_cli_end_to_end(dataset, tmp_path, capsys):
    cfg = write_cfg(tmp_path, make_cfg(dataset, tmp_path / "out", bands=BandScheme((0, 22050))))
    assert main(["--config", cfg, "extract"]) == 0
    assert main(["--config", cfg, "train"]) == 0
    assert main(["--config", cfg, "evaluate"]) == 0
    out = capsys.readouterr().out
    assert "mean accuracy" in out
    assert main(["--config", cfg, "fusion-curve"]) == 1  # needs two bands


def test_cli_exit_codes(dataset, tmp_path, capsys):
    assert main(["extract"]) == 1  # no config
    assert main(["--config", str(tmp_path / "missing.ini"), "extract"]) == 1
    (tmp_path / "bad.ini").write_text("[dataset]\nroot = data\n[training]\nnetwork = lstm\n")
    assert main(["--config", str(tmp_path / "bad.ini"), "extract"]) == 1
    (tmp_path / "nodata.ini").write_text("[dataset]\nroot = nowhere\n")
    assert main(["--config", str(tmp_path / "nodata.ini"), "extract"]) == 2
    cfg = write_cfg(tmp_path, make_cfg(dataset, tmp_path / "out"))
    assert main(["--config", cfg, "evaluate"]) == 2  # nothing extracted or trained yet
    capsys.readouterr()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_numeric_failure(dataset, tmp_path, capsys):
    cfg = make_cfg(dataset, tmp_path / "out", bands=BandScheme((0, 22050)),
                   training=TrainingConfig(epochs=2, batch_size=8, lr_initial=1e12, network="cnn"))
    path = write_cfg(tmp_path, cfg)
    assert main(["--config", path, "extract"]) == 0
    assert main(["--config", path, "train"]) == 3
    assert "non-finite" in capsys.readouterr().err


def test_cli_arch_and_gen_toy(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "arch"]) == 0
    out = capsys.readouterr().out
    assert "parameters: 2181970" in out
    rows = read_rows(tmp_path / "table2.csv")
    assert len(rows) == 15 and rows[5] == {"layer": "pool2", "output_size": "(8,30,64)"}
    assert main(["gen-toy", str(tmp_path / "toy"), "--clips-per-class", "5"]) == 0
    assert len(list((tmp_path / "toy").glob("*.wav"))) == 25


def _table1_schemes():
    from subspec.harness.cli import TABLE1_SCHEMES

    return [BandScheme.from_khz(0, s, 22.05) for s in TABLE1_SCHEMES]


def test_table1_sweep(dataset, tmp_path):
    from dataclasses import replace

    from subspec.dsp import SpectrogramConfig

    quick = TrainingConfig(network="cnn", epochs=1, batch_size=8, lr_initial=0.01)
    # the 0-3 kHz band needs the "nearest" policy for its lowest filter
    cfg = make_cfg(dataset, tmp_path / "out", training=quick,
                   spectrogram=replace(SpectrogramConfig(), empty_filter="nearest"))
    result = pipeline.run_sweep(cfg, _table1_schemes(), networks=("cnn",), mixup=(True,), fusion=(True,))
    rows = read_rows(result.paths["table1"])
    assert [r["f_i_khz"] for r in rows] == ["-", "10", "6,10", "3,6,10", "3,6,10,15", "3,6,10,13,16"]
    assert [r["n_ss"] for r in rows] == ["1", "2", "3", "4", "5", "6"]
    assert all(r.status == "ok" for r in result.rows)

    strict = make_cfg(dataset, tmp_path / "strict", training=quick)
    failed = pipeline.run_sweep(strict, _table1_schemes()[3:4], networks=("cnn",), mixup=(True,))
    assert "cover no FFT bin" in failed.rows[0].status


def test_ablation_flags_give_four_rows(dataset, tmp_path):
    cfg = make_cfg(dataset, tmp_path / "out", training=TrainingConfig(network="cnn", epochs=1, batch_size=8))
    result = pipeline.run_sweep(cfg, [BandScheme((0, 10000, 22050))], networks=("cnn",),
                                mixup=(False, True), fusion=(False, True))
    assert [(r.mixup, r.fusion) for r in result.rows] == [(False, False), (False, True), (True, False), (True, True)]
    assert len(read_rows(result.paths["table6"])) == 4


def test_single_band_row_and_explicit_table5_weights(dataset, tmp_path):
    from dataclasses import replace

    from subspec.dsp import SpectrogramConfig

    quick = TrainingConfig(network="cnn", epochs=1, batch_size=8)
    cfg = make_cfg(dataset, tmp_path / "one", bands=BandScheme((0, 22050)), training=quick)
    pipeline.run_extract(cfg)
    pipeline.run_train(cfg)
    row = read_rows(pipeline.run_evaluate(cfg).report_path)[0]
    assert row["weights"] == "1" and row["n_ss"] == "1"

    four = make_cfg(dataset, tmp_path / "four", bands=BandScheme.from_khz(0, (3, 6, 10), 22.05), training=quick,
                    spectrogram=replace(SpectrogramConfig(), empty_filter="nearest"))
    pipeline.run_extract(four)
    pipeline.run_train(four)
    result = pipeline.run_evaluate(four, weights=(0.4, 0.2, 0.2, 0.2))
    row = read_rows(result.report_path)[0]
    assert (row["n_ss"], row["f_l_khz"], row["f_i_khz"], row["f_h_khz"], row["weights"]) == (
        "4", "0", "3,6,10", "22.05", "0.4,0.2,0.2,0.2")
    with pytest.raises(ConfigError):
        pipeline.run_evaluate(four, weights=(0.5, 0.5))


def test_fusion_curve_follows_the_informative_band(tmp_path):
    data = tmp_path / "low"
    generate_toy_dataset(data, seed=2, clips_per_class=5, duration_s=0.7, low_only=True)
    cfg = make_cfg(data, tmp_path / "out", training=TrainingConfig(network="cnn", epochs=15, batch_size=8,
                                                                   lr_initial=0.01))
    pipeline.run_extract(cfg)
    pipeline.run_train(cfg)
    curve, _ = pipeline.run_fusion_curve(cfg)
    accs = [a for _, a in curve]
    fold = pipeline.run_evaluate(cfg, weights=(1.0, 0.0)).folds[0]
    assert accs[-1] == fold.band_accuracies[0]
    assert accs[-1] == max(accs)
    assert accs[-1] > accs[0]

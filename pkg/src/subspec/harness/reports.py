"""Report rows and the CSV layouts of the result tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from statistics import fmean

ALL_COLUMNS = [
    "n_ss", "f_l_khz", "f_i_khz", "f_h_khz", "network", "mixup", "segmentation", "fusion",
    "weights", "accuracy", "fold_accuracies", "config_hash", "seed", "code_version", "status",
]

TABLE_COLUMNS = {
    "sweep": ALL_COLUMNS,
    # accuracy under different numbers of sub-bands
    "table1": ["n_ss", "f_l_khz", "f_i_khz", "f_h_khz", "accuracy"],
    # network x mixup on the whole band
    "table3": ["network", "mixup", "accuracy"],
    # uniform vs searched fusion weights
    "table4": ["n_ss", "f_l_khz", "f_i_khz", "f_h_khz", "fusion", "accuracy"],
    # schemes with their fusion weights
    "table5": ["n_ss", "f_l_khz", "f_i_khz", "f_h_khz", "weights", "accuracy",
               "fold_accuracies", "config_hash", "seed", "code_version"],
    # every ablation combination
    "table6": ["network", "mixup", "segmentation", "fusion", "accuracy"],
}


def _khz(hz: float) -> str:
    return f"{hz / 1000:g}"


def _flag(v: bool) -> str:
    return "yes" if v else "no"


@dataclass
class ReportRow:
    n_ss: int
    cut_points_hz: tuple[float, ...]
    network: str
    mixup: bool
    fusion: bool
    weights: list[tuple[float, ...]]  # one vector per fold
    fold_accuracies: dict[int, float] = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    code_version: str = ""
    status: str = "ok"

    @property
    def segmentation(self) -> bool:
        return self.n_ss > 1

    @property
    def mean_accuracy(self) -> float | None:
        if not self.fold_accuracies:
            return None
        return fmean(self.fold_accuracies.values())

    def cells(self) -> dict[str, str]:
        inner = self.cut_points_hz[1:-1]
        weights = sorted({",".join(f"{v:g}" for v in w) for w in self.weights})
        acc = self.mean_accuracy
        return {
            "n_ss": str(self.n_ss),
            "f_l_khz": _khz(self.cut_points_hz[0]),
            "f_i_khz": ",".join(_khz(f) for f in inner) if inner else "-",
            "f_h_khz": _khz(self.cut_points_hz[-1]),
            "network": self.network.upper(),
            "mixup": _flag(self.mixup),
            "segmentation": _flag(self.segmentation),
            "fusion": _flag(self.fusion),
            "weights": "|".join(weights) if weights else "",
            "accuracy": "" if acc is None else repr(acc),
            "fold_accuracies": ";".join(f"{k}:{v!r}" for k, v in self.fold_accuracies.items()),
            "config_hash": self.config_hash,
            "seed": str(self.seed),
            "code_version": self.code_version,
            "status": self.status,
        }


def table_rows(rows, table: str):
    """Rows that belong in ``table``."""
    if table == "table1":
        return [r for r in rows if r.fusion or not r.segmentation]
    if table == "table3":
        return [r for r in rows if not r.segmentation]
    if table == "table4":
        return [r for r in rows if r.segmentation]
    if table == "table5":
        return [r for r in rows if r.fusion or not r.segmentation]
    return list(rows)


def write_rows(path, rows, table: str = "sweep") -> None:
    columns = TABLE_COLUMNS[table]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in table_rows(rows, table):
            cells = r.cells()
            w.writerow([cells[c] for c in columns])


def read_rows(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def architecture_rows(model) -> list[tuple[str, tuple[int, ...]]]:
    return model.table_shapes()


def write_architecture(path, model) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "output_size"])
        for name, shape in model.table_shapes():
            w.writerow([name, "(" + ",".join(str(s) for s in shape) + ")"])

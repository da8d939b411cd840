"""One-axis ablation sweeps: depth, batch size, or filter count.

Every point on an axis trains a fresh network from the same seed, so the
only thing that varies between rows is the swept value. Rows report final
train/validation accuracy, a test-set accuracy, and the wall-clock cost of
the point.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

from . import data as data_mod
from . import evaluator as eval_mod
from . import model as model_mod
from . import trainer as trainer_mod
from .errors import ConfigError

AXES = ("layers", "batch_size", "filters")
ABLATION_HEADER = ["axis", "value", "train_acc", "val_acc", "test_acc", "runtime_s"]


@dataclass(frozen=True)
class AblationSpec:
    axis: str
    values: tuple[int, ...]
    base_net: model_mod.NetworkConfig
    base_train: trainer_mod.TrainConfig
    epochs: int | None = None  # override per-point epochs; None keeps base_train.epochs

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"unknown ablation axis {self.axis!r}, expected one of {AXES}")
        if not self.values:
            raise ConfigError("ablation values must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError(f"ablation values must be strictly increasing, got {self.values}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"epochs override must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class AblationRow:
    axis: str
    value: int
    train_acc: float
    val_acc: float
    test_acc: float
    runtime_s: float


def derive_configs(
    spec: AblationSpec, value: int
) -> tuple[model_mod.NetworkConfig, trainer_mod.TrainConfig]:
    """Configs for one swept point; invalid combinations name the value."""
    net_cfg = spec.base_net
    train_cfg = spec.base_train
    try:
        if spec.axis == "layers":
            net_cfg = replace(net_cfg, conv_layers=value)
        elif spec.axis == "filters":
            net_cfg = replace(net_cfg, filters=value)
        else:
            train_cfg = replace(train_cfg, batch_size=value)
        if spec.epochs is not None:
            train_cfg = replace(train_cfg, epochs=spec.epochs)
    except ConfigError as exc:
        raise ConfigError(f"{spec.axis}={value}: {exc}") from None
    return net_cfg, train_cfg


def run_ablation(
    spec: AblationSpec,
    train_manifest: data_mod.DatasetManifest,
    val_manifest: data_mod.DatasetManifest,
    test_manifest: data_mod.DatasetManifest,
) -> list[AblationRow]:
    rows: list[AblationRow] = []
    for value in spec.values:
        net_cfg, train_cfg = derive_configs(spec, value)
        started = time.perf_counter()
        net = model_mod.build(net_cfg)
        net, records, _ = trainer_mod.train(net, train_manifest, val_manifest, train_cfg)
        predictions = eval_mod.predict_manifest(
            net, test_manifest, train_cfg.batch_size, train_cfg.loader_threads
        )
        test_acc, _, _ = eval_mod.frame_metrics(predictions)
        runtime = time.perf_counter() - started
        final = records[-1]
        rows.append(
            AblationRow(
                axis=spec.axis,
                value=value,
                train_acc=final.train_acc,
                val_acc=final.val_acc,
                test_acc=test_acc,
                runtime_s=runtime,
            )
        )
    return rows


def write_ablation_csv(rows: list[AblationRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ABLATION_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.axis,
                    r.value,
                    f"{r.train_acc:.9g}",
                    f"{r.val_acc:.9g}",
                    f"{r.test_acc:.9g}",
                    f"{r.runtime_s:.6f}",
                ]
            )

"""Frame- and video-level scoring of prediction records.

A frame's probability is thresholded at 0.5 (>= 0.5 means fake). A video's
verdict is the label carried by the strict majority of its frames; ties go
to fake, the security-conservative default. Confusion matrices are 2x2
with rows = ground truth (original, fake) and columns = detected, reported
both as counts and as row-normalized rates.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import model as model_mod
from .errors import ContractError, ManifestError

THRESHOLD = 0.5
PREDICTIONS_HEADER = ["video_id", "frame_index", "truth", "probability"]
HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class PredictionRecord:
    video_id: str
    frame_index: int
    truth: int  # 0 original, 1 fake
    probability: float


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (2, 2) int64
    rates: np.ndarray  # (2, 2) float64, rows normalized; all-zero row stays zero


@dataclass(frozen=True)
class VideoVerdict:
    video_id: str
    truth: int
    predicted: int
    frames_original: int
    frames_fake: int


def classify(probability: float) -> int:
    """0 (original) iff probability < 0.5; the boundary 0.5 is fake."""
    if not 0.0 <= probability <= 1.0:
        raise ContractError(f"probability out of [0,1]: {probability}")
    return 0 if probability < THRESHOLD else 1


def classify_batch(probabilities: np.ndarray) -> np.ndarray:
    p = np.asarray(probabilities)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ContractError("probabilities out of [0,1]")
    return (p >= THRESHOLD).astype(np.int64)


def _confusion(truths: np.ndarray, predicted: np.ndarray) -> ConfusionMatrix:
    counts = np.zeros((2, 2), dtype=np.int64)
    for t in (0, 1):
        mask = truths == t
        counts[t, 0] = int(np.sum(predicted[mask] == 0))
        counts[t, 1] = int(np.sum(predicted[mask] == 1))
    rates = np.zeros((2, 2), dtype=np.float64)
    for t in (0, 1):
        row_total = counts[t].sum()
        if row_total > 0:
            rates[t] = counts[t] / row_total
    return ConfusionMatrix(counts=counts, rates=rates)


def frame_metrics(
    records: list[PredictionRecord],
) -> tuple[float, ConfusionMatrix, int]:
    """(accuracy, confusion, misclassified count) over individual frames."""
    if not records:
        raise ContractError("frame_metrics: no records")
    truths = np.array([r.truth for r in records], dtype=np.int64)
    probs = np.array([r.probability for r in records], dtype=np.float64)
    predicted = classify_batch(probs)
    misclassified = int(np.sum(predicted != truths))
    accuracy = float((len(records) - misclassified) / len(records))
    return accuracy, _confusion(truths, predicted), misclassified


def majority_vote(records: list[PredictionRecord]) -> VideoVerdict:
    """Verdict for one video: the per-frame label held by more frames wins;
    an exact tie is called fake."""
    if not records:
        raise ContractError("majority_vote: no records")
    video_id = records[0].video_id
    truth = records[0].truth
    for r in records:
        if r.video_id != video_id:
            raise ContractError(
                f"majority_vote: mixed video ids {video_id!r} and {r.video_id!r}"
            )
        if r.truth != truth:
            raise ContractError(f"majority_vote: conflicting truth labels in {video_id!r}")
    votes_fake = sum(classify(r.probability) for r in records)
    votes_original = len(records) - votes_fake
    predicted = 1 if votes_fake >= votes_original else 0
    return VideoVerdict(
        video_id=video_id,
        truth=truth,
        predicted=predicted,
        frames_original=votes_original,
        frames_fake=votes_fake,
    )


def group_by_video(records: list[PredictionRecord]) -> dict[str, list[PredictionRecord]]:
    """Group records by video id, preserving first-appearance order."""
    groups: dict[str, list[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(r.video_id, []).append(r)
    return groups


def video_metrics(
    records: list[PredictionRecord],
) -> tuple[float, ConfusionMatrix, list[VideoVerdict]]:
    """Majority-vote per video, then frame_metrics-style aggregation over verdicts."""
    if not records:
        raise ContractError("video_metrics: no records")
    verdicts = [majority_vote(group) for group in group_by_video(records).values()]
    truths = np.array([v.truth for v in verdicts], dtype=np.int64)
    predicted = np.array([v.predicted for v in verdicts], dtype=np.int64)
    accuracy = float(np.mean(predicted == truths))
    return accuracy, _confusion(truths, predicted), verdicts


def probability_histogram(
    records: list[PredictionRecord], bins: int = HISTOGRAM_BINS
) -> np.ndarray:
    """Counts over equal bins of [0,1]; bin i covers [i/bins, (i+1)/bins),
    with the final bin closed so 1.0 is counted."""
    if bins < 1:
        raise ContractError(f"bins must be >= 1, got {bins}")
    counts = np.zeros(bins, dtype=np.int64)
    if not records:
        return counts
    probs = np.array([r.probability for r in records], dtype=np.float64)
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ContractError("probabilities out of [0,1]")
    edges = np.arange(bins + 1, dtype=np.float64) / bins
    idx = np.searchsorted(edges, probs, side="right") - 1
    idx = np.minimum(idx, bins - 1)  # 1.0 lands in the final bin
    np.add.at(counts, idx, 1)
    return counts


def predict_manifest(
    net: model_mod.Network,
    manifest: data_mod.DatasetManifest,
    batch_size: int = 128,
    threads: int = 1,
) -> list[PredictionRecord]:
    """Inference-mode pass over a manifest, in manifest order."""
    records: list[PredictionRecord] = []
    for indices in data_mod.make_batches(manifest, batch_size, shuffle=False, seed=0):
        batch = data_mod.assemble_batch(manifest, indices, threads=threads)
        probs, _ = model_mod.forward(net, batch.x, training=False)
        for (video_id, frame_index), truth, p in zip(
            batch.provenance, batch.y, probs
        ):
            records.append(
                PredictionRecord(video_id, frame_index, int(truth), float(p))
            )
    return records


def write_predictions(records: list[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTIONS_HEADER)
        for r in records:
            # repr keeps the shortest exact decimal form, so a written log
            # rescores identically to the in-memory records
            writer.writerow([r.video_id, r.frame_index, r.truth, repr(r.probability)])


def read_predictions(path) -> list[PredictionRecord]:
    reader = csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("line 1: empty prediction log") from None
    if header != PREDICTIONS_HEADER:
        raise ManifestError(
            f"line 1: bad header {header!r}, expected {PREDICTIONS_HEADER!r}"
        )
    records: list[PredictionRecord] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ManifestError(f"line {line_no}: expected 4 fields, got {len(row)}")
        try:
            truth = int(row[2])
            probability = float(row[3])
        except ValueError:
            raise ManifestError(f"line {line_no}: bad truth/probability") from None
        if truth not in (0, 1):
            raise ManifestError(f"line {line_no}: truth must be 0 or 1, got {truth}")
        if not 0.0 <= probability <= 1.0:
            raise ManifestError(f"line {line_no}: probability out of [0,1]")
        records.append(PredictionRecord(row[0], int(row[1]), truth, probability))
    return records


def format_confusion(cm: ConfusionMatrix) -> str:
    lines = [
        "                    detected original   detected fake",
        f"truth original      {cm.counts[0, 0]:>12d} ({cm.rates[0, 0]:.3f})"
        f"   {cm.counts[0, 1]:>8d} ({cm.rates[0, 1]:.3f})",
        f"truth fake          {cm.counts[1, 0]:>12d} ({cm.rates[1, 0]:.3f})"
        f"   {cm.counts[1, 1]:>8d} ({cm.rates[1, 1]:.3f})",
    ]
    return "\n".join(lines)


def write_metrics_jsonl(metrics: dict, path) -> None:
    """One JSON object per metric: {"metric": name, "value": value}."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for name, value in metrics.items():
            fh.write(json.dumps({"metric": name, "value": value}) + "\n")

"""Dataset manifests, PPM frame IO, batching, and synthetic data.

Real datasets are consumed as directories of pre-sized binary PPM (P6)
frames described by a manifest CSV with header
`path,label,video_id,frame_index`; frame extraction and face cropping are
upstream concerns. Labels are 0 = original, 1 = fake.

The synthetic generator produces desk-scale stand-in data with the same
layout: per-video smooth color gradients, where fake videos additionally
carry a small high-frequency checker patch (a learnable class signal).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DecodeError, ManifestError, ShapeError

MANIFEST_HEADER = ["path", "label", "video_id", "frame_index"]
MANIFEST_NAME = "manifest.csv"
SPLITS = ("train", "val", "test")

PATCH_AMPLITUDE = 0.22
NOISE_AMPLITUDE = 0.02


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: int
    video_id: str
    frame_index: int


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")

    def __len__(self) -> int:
        return len(self.rows)


def parse_manifest(source: str, split: str = "train") -> DatasetManifest:
    """Parse manifest CSV text; rows keep file order.

    Raises ManifestError with a 1-based line number for a bad header,
    malformed row, non-{0,1} label, or duplicate (video_id, frame_index).
    """
    reader = csv.reader(io.StringIO(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("line 1: empty manifest, expected header") from None
    if header != MANIFEST_HEADER:
        raise ManifestError(
            f"line 1: bad header {header!r}, expected {MANIFEST_HEADER!r}"
        )
    rows: list[ManifestRow] = []
    seen: set[tuple[str, int]] = set()
    for line_no, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != 4:
            raise ManifestError(f"line {line_no}: expected 4 fields, got {len(record)}")
        path, label_text, video_id, frame_text = record
        if not path:
            raise ManifestError(f"line {line_no}: empty path")
        if label_text not in ("0", "1"):
            raise ManifestError(f"line {line_no}: label must be 0 or 1, got {label_text!r}")
        try:
            frame_index = int(frame_text)
        except ValueError:
            raise ManifestError(
                f"line {line_no}: bad frame_index {frame_text!r}"
            ) from None
        key = (video_id, frame_index)
        if key in seen:
            raise ManifestError(f"line {line_no}: duplicate (video_id, frame_index) {key}")
        seen.add(key)
        rows.append(ManifestRow(path, int(label_text), video_id, frame_index))
    return DatasetManifest(rows=rows, split=split)


def read_manifest(path, split: str = "train") -> DatasetManifest:
    """Parse a manifest file, resolving relative row paths against its directory."""
    path = Path(path)
    manifest = parse_manifest(path.read_text(encoding="utf-8"), split=split)
    base = path.parent
    resolved = [
        row if Path(row.path).is_absolute()
        else ManifestRow(str(base / row.path), row.label, row.video_id, row.frame_index)
        for row in manifest.rows
    ]
    return DatasetManifest(rows=resolved, split=split)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for row in manifest.rows:
            writer.writerow([row.path, row.label, row.video_id, row.frame_index])


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """PPM header token: skips whitespace and '#' comments."""
    n = len(data)
    while pos < n:
        b = data[pos]
        if b in b" \t\r\n":
            pos += 1
        elif b == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise DecodeError("truncated PPM header")
    return data[start:pos], pos


def load_image(path) -> np.ndarray:
    """Decode a binary PPM (P6, maxval 255) into (1, 3, h, w) float32 in [0,1]."""
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise DecodeError(f"{path}: wrong magic {data[:2]!r}, expected b'P6'")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise DecodeError(f"{path}: bad header token {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"{path}: maxval must be 255, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = 3 * width * height
    raster = data[pos:]
    if len(raster) < expected:
        raise DecodeError(
            f"{path}: truncated pixel data ({len(raster)} of {expected} bytes)"
        )
    if len(raster) > expected:
        raise DecodeError(f"{path}: {len(raster) - expected} trailing bytes")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    x = pixels.astype(np.float32) / 255.0
    return x.transpose(2, 0, 1)[np.newaxis]  # (1, 3, h, w), channels R,G,B


def write_ppm(pixels: np.ndarray, path) -> None:
    """Write (3, h, w) float values in [0,1] as binary PPM, maxval 255."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ShapeError(f"write_ppm expects (3, h, w), got {pixels.shape}")
    _, h, w = pixels.shape
    bytes_img = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(bytes_img.transpose(1, 2, 0).tobytes())


def make_batches(
    manifest: DatasetManifest, batch_size: int, shuffle: bool, seed
) -> list[list[int]]:
    """Partition row indices into consecutive batches; optional seeded shuffle.

    All batches have batch_size rows except possibly the last. The
    permutation depends only on the seed, not on batch_size, so sweeps
    over batch size see the same underlying sample order.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    n = len(manifest.rows)
    if n == 0:
        raise ContractError("cannot batch an empty manifest")
    indices = np.arange(n)
    if shuffle:
        indices = np.random.default_rng(seed).permutation(n)
    return [indices[i : i + batch_size].tolist() for i in range(0, n, batch_size)]


@dataclass
class Batch:
    x: np.ndarray  # (b, 3, h, w) float32 in [0, 1]
    y: np.ndarray  # (b,) float32 labels
    provenance: list[tuple[str, int]]  # (video_id, frame_index) per sample


def assemble_batch(
    manifest: DatasetManifest, indices: list[int], threads: int = 1
) -> Batch:
    """Load and stack the given rows. Loading may be parallel; assembly
    order always follows `indices` regardless of completion order."""
    rows = [manifest.rows[i] for i in indices]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(load_image, [r.path for r in rows]))
    else:
        images = [load_image(r.path) for r in rows]
    first = images[0].shape
    for row, img in zip(rows, images):
        if img.shape != first:
            raise ShapeError(
                f"{row.path}: frame shape {img.shape[1:]} != batch shape {first[1:]}"
            )
    return Batch(
        x=np.concatenate(images, axis=0),
        y=np.array([r.label for r in rows], dtype=np.float32),
        provenance=[(r.video_id, r.frame_index) for r in rows],
    )


def _video_base(rng: np.random.Generator, size: int) -> tuple[np.ndarray, float]:
    """Smooth per-channel random gradient pattern shared by a video's frames."""
    coords = np.arange(size, dtype=np.float32) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    base = np.empty((3, size, size), dtype=np.float32)
    for c in range(3):
        bias = rng.uniform(0.35, 0.65)
        ax, ay = rng.uniform(-0.3, 0.3, size=2)
        amp = rng.uniform(0.08, 0.18)
        fx, fy = rng.uniform(0.5, 1.5, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        base[c] = bias + ax * xx + ay * yy + amp * np.sin(
            2.0 * np.pi * (fx * xx + fy * yy) + phase
        )
    drift_phase = float(rng.uniform(0.0, 2.0 * np.pi))
    return base, drift_phase


def _checker(patch: int, cell: int) -> np.ndarray:
    """Square patch of alternating +/- amplitude cells, cell pixels wide.

    Every cell size yields the same multiset of pixel values, so patches
    differ only in spatial arrangement, never in mean or variance.
    """
    idx = np.arange(patch) // cell
    grid = np.add.outer(idx, idx) % 2
    return (grid * 2.0 - 1.0).astype(np.float32) * PATCH_AMPLITUDE


def generate_synthetic(
    count_videos: int,
    frames_per_video: int,
    size: int,
    seed: int,
    destination,
    split: str = "train",
) -> DatasetManifest:
    """Write a balanced synthetic dataset of PPM frames plus manifest.csv.

    Videos alternate original/fake (even count required for exact class
    balance). Every frame carries a localized low-amplitude patch over the
    video's smooth base pattern: fake frames get a one-pixel checker,
    original frames get the same amplitudes arranged in coarse blocks. The
    two patch kinds share the same pixel-value multiset, so the label is
    invisible to global statistics and only local texture separates the
    classes. Faint pixel noise keeps every channel non-constant. Output is
    byte-deterministic under a fixed seed. Returned row paths are resolved
    against `destination`; the CSV on disk keeps them relative.
    """
    if count_videos < 2 or count_videos % 2 != 0:
        raise ConfigError(f"count_videos must be even and >= 2, got {count_videos}")
    if frames_per_video < 1:
        raise ConfigError(f"frames_per_video must be >= 1, got {frames_per_video}")
    if size < 8:
        raise ConfigError(f"size must be >= 8, got {size}")
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)

    patch = min(max(4, (size // 4) & ~1), size - 2)
    patches = {0: _checker(patch, cell=2), 1: _checker(patch, cell=1)}
    relative_rows: list[ManifestRow] = []
    resolved_rows: list[ManifestRow] = []
    for v in range(count_videos):
        label = v % 2  # alternating original / fake
        video_id = f"vid{v:04d}"
        video_dir = dest / video_id
        video_dir.mkdir(exist_ok=True)
        rng = np.random.default_rng([seed, v])
        base, drift_phase = _video_base(rng, size)
        py0 = int(rng.integers(1, size - patch))
        px0 = int(rng.integers(1, size - patch))
        for f in range(frames_per_video):
            drift = 0.02 * np.sin(2.0 * np.pi * f / frames_per_video + drift_phase)
            frame = base + np.float32(drift)
            frame = frame + rng.uniform(
                -NOISE_AMPLITUDE, NOISE_AMPLITUDE, size=frame.shape
            ).astype(np.float32)
            py = int(np.clip(py0 + rng.integers(-1, 2), 0, size - patch))
            px = int(np.clip(px0 + rng.integers(-1, 2), 0, size - patch))
            frame[:, py : py + patch, px : px + patch] += patches[label]
            frame = np.clip(frame, 0.0, 1.0)
            name = f"{f}.ppm"
            write_ppm(frame, video_dir / name)
            relative_rows.append(ManifestRow(f"{video_id}/{name}", label, video_id, f))
            resolved_rows.append(
                ManifestRow(str(video_dir / name), label, video_id, f)
            )
    write_manifest(
        DatasetManifest(rows=relative_rows, split=split), dest / MANIFEST_NAME
    )
    return DatasetManifest(rows=resolved_rows, split=split)

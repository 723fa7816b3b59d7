"""Point-cloud data model and the on-disk dataset format.

A point cloud is an N x (d + C) float64 matrix: d spatial coordinates
(d in {2, 3}) followed by C feature channels per point.  Clouds are
immutable after construction; every operation returns a new object.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

MANIFEST_NAME = "manifest.csv"
METADATA_NAME = "metadata.txt"
MANIFEST_HEADER = ["sample_id", "file", "label", "n_points", "spatial_dim", "n_channels"]


class ValidationError(ValueError):
    """Raised when an operation receives a cloud violating its invariants."""


@dataclass(frozen=True)
class PointCloud:
    data: np.ndarray
    spatial_dim: int
    n_channels: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"cloud data must be 2-D, got ndim={arr.ndim}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n_points(self) -> int:
        return self.data.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return self.data[:, : self.spatial_dim]

    @property
    def channels(self) -> np.ndarray:
        return self.data[:, self.spatial_dim:]


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    message: str = ""
    row: int | None = None
    col: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_cloud(cloud: PointCloud) -> ValidationResult:
    """Check every PointCloud invariant; report the first violation found."""
    if cloud.n_points < 1:
        return ValidationResult(False, "n_points >= 1 violated: cloud is empty")
    if cloud.spatial_dim not in (2, 3):
        return ValidationResult(False, f"spatial_dim must be 2 or 3, got {cloud.spatial_dim}")
    if cloud.n_channels < 0:
        return ValidationResult(False, f"n_channels must be >= 0, got {cloud.n_channels}")
    expected = cloud.spatial_dim + cloud.n_channels
    if cloud.data.shape[1] != expected:
        return ValidationResult(
            False,
            f"column count {cloud.data.shape[1]} != spatial_dim + n_channels = {expected}",
        )
    finite = np.isfinite(cloud.data)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        return ValidationResult(
            False, f"non-finite entry at row {row}, column {col}", int(row), int(col)
        )
    return ValidationResult(True)


def ensure_valid(cloud: PointCloud) -> None:
    res = validate_cloud(cloud)
    if not res:
        raise ValidationError(res.message)


def normalize_spatial(
    cloud: PointCloud,
    channel_stats: tuple[np.ndarray, np.ndarray] | None = None,
) -> PointCloud:
    """Center the coordinates on the centroid and scale the farthest point to 1.

    Feature channels are standardized to zero mean, unit variance.  By
    default the statistics come from the cloud itself; pass
    ``channel_stats = (mean, std)`` to standardize against externally
    computed (e.g. dataset-level) statistics instead.  Zero-variance
    channels are only demeaned, never scaled.  Deterministic and, in the
    per-cloud form, idempotent.
    """
    ensure_valid(cloud)
    coords = cloud.coords - cloud.coords.mean(axis=0)
    radius = np.sqrt((coords**2).sum(axis=1)).max()
    if radius > 0.0:
        coords = coords / radius
    channels = np.asarray(cloud.channels, dtype=np.float64).copy()
    if cloud.n_channels > 0:
        if channel_stats is None:
            mean = channels.mean(axis=0)
            std = channels.std(axis=0)
        else:
            mean = np.asarray(channel_stats[0], dtype=np.float64)
            std = np.asarray(channel_stats[1], dtype=np.float64)
        channels = channels - mean
        scale = np.where(std > 0.0, std, 1.0)
        channels = channels / scale
    return PointCloud(np.hstack([coords, channels]), cloud.spatial_dim, cloud.n_channels)


def permuted_view(cloud: PointCloud, perm: np.ndarray) -> PointCloud:
    """Reorder points: row i of the result is row perm[i] of the input."""
    perm = np.asarray(perm)
    if perm.shape != (cloud.n_points,) or not np.array_equal(np.sort(perm), np.arange(cloud.n_points)):
        raise ValueError("perm must be a bijection on {0..N-1}")
    return PointCloud(cloud.data[perm], cloud.spatial_dim, cloud.n_channels)


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    cloud: PointCloud
    label: int  # 0 = low noise in the window region, 1 = high noise

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[LabeledSample, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValidationError("sample_ids must be pairwise distinct")
        dims = {(s.cloud.spatial_dim, s.cloud.n_channels) for s in self.samples}
        if len(dims) > 1:
            raise ValidationError(f"samples disagree on (spatial_dim, n_channels): {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def spatial_dim(self) -> int:
        return self.samples[0].cloud.spatial_dim

    @property
    def n_channels(self) -> int:
        return self.samples[0].cloud.n_channels

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


def _atomic_write(path: str, content: str | bytes) -> None:
    # write-temp-then-rename so partially written files never appear
    mode = "wb" if isinstance(content, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_cloud(cloud: PointCloud) -> str:
    # repr() of a Python float is the shortest string that round-trips exactly
    lines = [f"{cloud.n_points} {cloud.spatial_dim} {cloud.n_channels}"]
    for row in cloud.data:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _parse_cloud(text: str) -> PointCloud:
    lines = text.strip().split("\n")
    n, d, c = (int(t) for t in lines[0].split())
    if len(lines) - 1 != n:
        raise ValidationError(f"sample file declares {n} points but has {len(lines) - 1} rows")
    data = np.array([[float(t) for t in ln.split()] for ln in lines[1:]], dtype=np.float64)
    data = data.reshape(n, d + c)
    return PointCloud(data, d, c)


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    """Write the dataset directory: manifest.csv, metadata.txt, one text file per sample."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for s in dataset.samples:
        fname = f"{s.sample_id}.txt"
        _atomic_write(os.path.join(out_dir, fname), _format_cloud(s.cloud))
        rows.append([s.sample_id, fname, str(s.label), str(s.cloud.n_points),
                     str(s.cloud.spatial_dim), str(s.cloud.n_channels)])
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    w.writerows(rows)
    _atomic_write(os.path.join(out_dir, MANIFEST_NAME), buf.getvalue())
    meta_lines = [f"{k} = {v}" for k, v in sorted(dataset.metadata.items())]
    _atomic_write(os.path.join(out_dir, METADATA_NAME), "\n".join(meta_lines) + "\n")


def load_dataset(in_dir: str) -> Dataset:
    manifest = os.path.join(in_dir, MANIFEST_NAME)
    if not os.path.isfile(manifest):
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {in_dir}")
    samples = []
    with open(manifest, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != MANIFEST_HEADER:
            raise ValidationError(f"unexpected manifest header: {header}")
        for sample_id, fname, label, n, d, c in reader:
            with open(os.path.join(in_dir, fname)) as sf:
                cloud = _parse_cloud(sf.read())
            if (cloud.n_points, cloud.spatial_dim, cloud.n_channels) != (int(n), int(d), int(c)):
                raise ValidationError(f"sample {sample_id}: file disagrees with manifest")
            samples.append(LabeledSample(sample_id, cloud, int(label)))
    metadata: dict[str, str] = {}
    meta_path = os.path.join(in_dir, METADATA_NAME)
    if os.path.isfile(meta_path):
        with open(meta_path) as f:
            for line in f:
                line = line.strip()
                if line:
                    k, _, v = line.partition(" = ")
                    metadata[k] = v
    return Dataset(tuple(samples), metadata)

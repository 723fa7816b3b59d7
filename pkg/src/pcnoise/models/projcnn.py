"""Plane-projection images of point clouds and the CNN that classifies them.

A cloud is flattened onto a coordinate plane: each point's field value is
added into the grid cell addressed by its quantized plane coordinates.
The quantization bounds are computed once per dataset so images of
different samples stay spatially comparable.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from ..cloud import Dataset, PointCloud, _atomic_write, ensure_valid
from ..nn.layers import BatchNorm, Conv2d, Linear, MaxPool2d, ReLU

IMAGES_MANIFEST = "images_manifest.csv"
PROJECTION_FILE = "projection.txt"


@dataclass(frozen=True)
class ProjectionSpec:
    plane: tuple[int, int] = (0, 1)
    resolution: int = 64
    field_channel: int = 0
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        a, b = self.plane
        if a == b or a < 0 or b < 0:
            raise ValueError(f"plane axes must be distinct nonnegative indices, got {self.plane}")
        if self.resolution < 4:
            raise ValueError(f"resolution must be >= 4, got {self.resolution}")

    def plane_name(self) -> str:
        return "".join("xyz"[a] for a in self.plane)


def _quantize(values: np.ndarray, lo: float, hi: float, resolution: int) -> np.ndarray:
    if hi > lo:
        cells = np.floor((values - lo) / (hi - lo) * resolution).astype(np.int64)
        cells[values == hi] = resolution - 1
    else:
        cells = np.zeros(len(values), dtype=np.int64)
    return cells


def pointcloud_to_image(cloud: PointCloud, spec: ProjectionSpec) -> np.ndarray:
    """Accumulate each point's field value into its quantized (R, R) cell.

    Accumulation runs in point-row order, so the result is bit-deterministic
    and independent of any permutation of the input rows.
    """
    ensure_valid(cloud)
    a, b = spec.plane
    if a >= cloud.spatial_dim or b >= cloud.spatial_dim:
        raise ValueError(f"plane {spec.plane} invalid for spatial_dim={cloud.spatial_dim}")
    if spec.field_channel >= cloud.n_channels:
        raise ValueError(f"field_channel {spec.field_channel} but cloud has {cloud.n_channels}")
    if spec.bounds is None:
        raise ValueError("projection spec has no quantization bounds; use project_dataset "
                         "or set bounds explicitly")
    r = spec.resolution
    ia = _quantize(cloud.coords[:, a], *spec.bounds[0], r)
    ib = _quantize(cloud.coords[:, b], *spec.bounds[1], r)
    bad = (ia < 0) | (ia >= r) | (ib < 0) | (ib >= r)
    if bad.any():
        i = int(np.argwhere(bad)[0])
        raise ValueError(f"point {i} at {tuple(cloud.coords[i])} quantizes outside the image")
    image = np.zeros(r * r)
    np.add.at(image, ia * r + ib, cloud.channels[:, spec.field_channel])
    return image.reshape(r, r)


def dataset_bounds(dataset: Dataset, spec: ProjectionSpec):
    coords = np.vstack([s.cloud.coords for s in dataset.samples])
    a, b = spec.plane
    return (
        (float(coords[:, a].min()), float(coords[:, a].max())),
        (float(coords[:, b].min()), float(coords[:, b].max())),
    )


def project_dataset(
    dataset: Dataset, spec: ProjectionSpec
) -> tuple[list[tuple[str, np.ndarray, int]], ProjectionSpec]:
    """One image per sample, labels carried over; bounds fixed dataset-wide.

    Returns ([(sample_id, image, label), ...], spec-with-resolved-bounds).
    """
    if len(dataset.samples) == 0:
        raise ValueError("empty dataset")
    a, b = spec.plane
    d = dataset.spatial_dim
    if a >= d or b >= d:
        raise ValueError(f"plane {spec.plane} invalid for spatial_dim={d}")
    resolved = spec if spec.bounds is not None else replace(spec, bounds=dataset_bounds(dataset, spec))
    images = [
        (s.sample_id, pointcloud_to_image(s.cloud, resolved), s.label) for s in dataset.samples
    ]
    return images, resolved


def save_image_set(
    images: list[tuple[str, np.ndarray, int]], spec: ProjectionSpec, out_dir: str
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for sample_id, image, label in images:
        fname = f"{sample_id}.img.txt"
        text = "\n".join(" ".join(repr(float(v)) for v in row) for row in image) + "\n"
        _atomic_write(os.path.join(out_dir, fname), text)
        rows.append([sample_id, fname, str(label)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "file", "label"])
    w.writerows(rows)
    _atomic_write(os.path.join(out_dir, IMAGES_MANIFEST), buf.getvalue())
    lines = [
        f"plane = {spec.plane[0]},{spec.plane[1]}",
        f"resolution = {spec.resolution}",
        f"field_channel = {spec.field_channel}",
    ]
    if spec.bounds is not None:
        lines.append("bounds = " + ",".join(repr(v) for pair in spec.bounds for v in pair))
    _atomic_write(os.path.join(out_dir, PROJECTION_FILE), "\n".join(lines) + "\n")


def load_image_set(in_dir: str) -> tuple[list[tuple[str, np.ndarray, int]], ProjectionSpec]:
    kv = {}
    with open(os.path.join(in_dir, PROJECTION_FILE)) as f:
        for line in f:
            if line.strip():
                k, _, v = line.strip().partition(" = ")
                kv[k] = v
    bounds = None
    if "bounds" in kv:
        b = [float(t) for t in kv["bounds"].split(",")]
        bounds = ((b[0], b[1]), (b[2], b[3]))
    spec = ProjectionSpec(
        plane=tuple(int(t) for t in kv["plane"].split(",")),  # type: ignore[arg-type]
        resolution=int(kv["resolution"]),
        field_channel=int(kv["field_channel"]),
        bounds=bounds,
    )
    images = []
    with open(os.path.join(in_dir, IMAGES_MANIFEST), newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for sample_id, fname, label in reader:
            with open(os.path.join(in_dir, fname)) as imf:
                image = np.array(
                    [[float(t) for t in ln.split()] for ln in imf.read().strip().split("\n")]
                )
            images.append((sample_id, image, int(label)))
    return images, spec


@dataclass(frozen=True)
class CnnConfig:
    resolution: int = 64
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    epochs: int = 25
    init_seed: int = 0

    def __post_init__(self):
        if len(self.conv_channels) != 3:
            raise ValueError("the baseline uses exactly three conv layers")
        if self.resolution % 8 != 0 or self.resolution < 8:
            raise ValueError(f"resolution must be divisible by 2^3, got {self.resolution}")


class ProjCnn:
    """Three (conv3x3 -> batch norm -> relu -> maxpool2) blocks, then a linear head."""

    tag = "cnn"

    def __init__(self, config: CnnConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        self.blocks: list[tuple[Conv2d, BatchNorm, ReLU, MaxPool2d]] = []
        c_in = 1
        for i, c_out in enumerate(config.conv_channels):
            conv = Conv2d(c_in, c_out, name=f"conv{i}")
            conv.init(rng)
            self.blocks.append((conv, BatchNorm(c_out, name=f"conv{i}.bn"), ReLU(), MaxPool2d()))
            c_in = c_out
        side = config.resolution // 8
        self.flat_dim = config.conv_channels[-1] * side * side
        self.fc = Linear(self.flat_dim, 2, name="fc")
        self.fc.init(rng)

    @staticmethod
    def _bn_2d(bn: BatchNorm, x: np.ndarray, train: bool) -> np.ndarray:
        c, h, w = x.shape
        flat = x.reshape(c, h * w).T  # pixels as rows, channels as columns
        return bn.forward(flat, train).T.reshape(c, h, w)

    @staticmethod
    def _bn_2d_back(bn: BatchNorm, grad: np.ndarray) -> np.ndarray:
        c, h, w = grad.shape
        return bn.backward(grad.reshape(c, h * w).T).T.reshape(c, h, w)

    def forward(self, image: np.ndarray, mode: str = "eval") -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, :, :]
        r = self.config.resolution
        if x.shape != (1, r, r):
            raise ValueError(f"expected (1, {r}, {r}) image, got {x.shape}")
        train = mode == "train"
        for conv, bn, act, pool in self.blocks:
            x = pool.forward(act.forward(self._bn_2d(bn, conv.forward(x), train)))
        self._pre_flat_shape = x.shape
        logits = self.fc.forward(x.reshape(1, self.flat_dim))
        return logits[0]

    def backward(self, dlogits: np.ndarray) -> None:
        g = self.fc.backward(np.asarray(dlogits, dtype=np.float64)[None, :])
        g = g.reshape(self._pre_flat_shape)
        for conv, bn, act, pool in reversed(self.blocks):
            g = conv.backward(self._bn_2d_back(bn, act.backward(pool.backward(g))))

    def predict(self, image: np.ndarray) -> int:
        logits = self.forward(image, mode="eval")
        return 1 if logits[1] > logits[0] else 0

    def parameters(self):
        out = []
        for conv, bn, _, _ in self.blocks:
            out += conv.params() + bn.params()
        return out + self.fc.params()

    def buffers(self):
        out = []
        for _, bn, _, _ in self.blocks:
            out += bn.buffers()
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def config_items(self) -> dict[str, str]:
        return {
            "resolution": str(self.config.resolution),
            "conv_channels": ",".join(str(c) for c in self.config.conv_channels),
            "epochs": str(self.config.epochs),
            "init_seed": str(self.config.init_seed),
        }

    @classmethod
    def from_config_items(cls, items: dict[str, str]) -> "ProjCnn":
        return cls(CnnConfig(
            resolution=int(items["resolution"]),
            conv_channels=tuple(int(c) for c in items["conv_channels"].split(",")),  # type: ignore[arg-type]
            epochs=int(items["epochs"]),
            init_seed=int(items["init_seed"]),
        ))

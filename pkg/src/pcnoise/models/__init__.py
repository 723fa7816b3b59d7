from .pointnet import PointNet, PointNetConfig
from .dgcnn import Dgcnn, DgcnnConfig, edge_features, knn_graph
from .projcnn import (
    CnnConfig,
    ProjCnn,
    ProjectionSpec,
    load_image_set,
    pointcloud_to_image,
    project_dataset,
    save_image_set,
)

from ..nn.checkpoint import load_checkpoint, save_checkpoint

MODEL_CLASSES = {cls.tag: cls for cls in (PointNet, Dgcnn, ProjCnn)}


def save_model(path: str, model, extra_config: dict[str, str] | None = None) -> None:
    """Checkpoint a model: tag + config in the header, params then buffers as payload."""
    items = dict(model.config_items())
    if extra_config:
        items.update(extra_config)
    tensors = [(p.name, p.value) for p in model.parameters()]
    tensors += [(name, arr) for name, arr in model.buffers()]
    save_checkpoint(path, model.tag, items, tensors)


def load_model(path: str):
    """Rebuild a model from a checkpoint; the tag in the header picks the class.

    Returns (model, header_config_items).
    """
    tag, items, tensors = load_checkpoint(path)
    if tag not in MODEL_CLASSES:
        raise ValueError(f"unknown model tag {tag!r} in checkpoint")
    model = MODEL_CLASSES[tag].from_config_items(items)
    for p in model.parameters():
        p.value[...] = tensors[p.name]
    for name, arr in model.buffers():
        arr[...] = tensors[name]
    return model, items


__all__ = [
    "PointNet", "PointNetConfig", "Dgcnn", "DgcnnConfig", "edge_features", "knn_graph",
    "CnnConfig", "ProjCnn", "ProjectionSpec", "load_image_set", "pointcloud_to_image",
    "project_dataset", "save_image_set", "MODEL_CLASSES", "save_model", "load_model",
]

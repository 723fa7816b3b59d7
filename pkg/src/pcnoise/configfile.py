"""Flat `key = value` run configuration shared by every CLI command.

One namespace covers the generator, the training protocol and the model
hyperparameters.  Unknown keys are rejected; command-line flags override
file values; the fully resolved configuration is printed (with its digest)
by every run so any result can be reproduced.
"""

from __future__ import annotations

import hashlib

from .cloud import ValidationError  # noqa: F401  (re-exported for CLI error mapping)
from .modal import GeneratorConfig, WindowRegion
from .models import CnnConfig, DgcnnConfig, PointNetConfig, ProjectionSpec
from .nn.optim import OptimizerConfig
from .training import TrainingConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    # generator
    "grid_n": "32",
    "max_mode": "8",
    "k_min": "2.0",
    "k_max": "20.0",
    "damping": "1.0",
    "jitter": "0.005",
    "window": "0.7,1.0,0.4,0.6",
    "n_samples": "72",
    "seed": "42",
    # training protocol
    "epochs": "20",
    "batch_size": "2",
    "learning_rate": "0.01",
    "momentum": "0.9",
    "split_fraction": repr(2.0 / 3.0),
    "split_seed": "7",
    "shuffle_each_epoch": "true",
    "init_seed": "1",
    # point models
    "k_neighbors": "10",
    "mlp_widths": "64,64,64,128,1024",
    "edge_widths": "64,64,128,256",
    "embed_width": "1024",
    "head_widths": "512,256,2",
    # projection + CNN baseline
    "plane": "0,1",
    "resolution": "64",
    "field_channel": "0",
    "conv_channels": "8,16,32",
    "cnn_epochs": "25",
}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value.strip()
    return values


def resolve_config(
    file_path: str | None = None, overrides: dict[str, str] | None = None
) -> dict[str, str]:
    resolved = dict(DEFAULTS)
    if file_path is not None:
        resolved.update(parse_config_file(file_path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        resolved[key] = value
    return resolved


def config_digest(resolved: dict[str, str]) -> str:
    text = "\n".join(f"{k} = {resolved[k]}" for k in sorted(resolved))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _int(resolved, key) -> int:
    try:
        return int(resolved[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be an integer, got {resolved[key]!r}") from None


def _float(resolved, key) -> float:
    try:
        return float(resolved[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {resolved[key]!r}") from None


def _bool(resolved, key) -> bool:
    v = resolved[key].lower()
    if v not in ("true", "false"):
        raise ConfigError(f"config key {key!r} must be true or false, got {resolved[key]!r}")
    return v == "true"


def _int_tuple(resolved, key) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in resolved[key].split(","))
    except ValueError:
        raise ConfigError(f"config key {key!r} must be comma-separated integers") from None


def generator_config(resolved: dict[str, str]) -> GeneratorConfig:
    w = [float(t) for t in resolved["window"].split(",")]
    if len(w) != 4:
        raise ConfigError("window must be four comma-separated floats x0,x1,y0,y1")
    try:
        return GeneratorConfig(
            grid_n=_int(resolved, "grid_n"),
            max_mode=_int(resolved, "max_mode"),
            k_min=_float(resolved, "k_min"),
            k_max=_float(resolved, "k_max"),
            damping=_float(resolved, "damping"),
            jitter=_float(resolved, "jitter"),
            window=WindowRegion(*w),
            n_samples=_int(resolved, "n_samples"),
            seed=_int(resolved, "seed"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def training_config(resolved: dict[str, str]) -> TrainingConfig:
    try:
        return TrainingConfig(
            epochs=_int(resolved, "epochs"),
            batch_size=_int(resolved, "batch_size"),
            optimizer=OptimizerConfig(
                learning_rate=_float(resolved, "learning_rate"),
                momentum=_float(resolved, "momentum"),
            ),
            split_train_fraction=_float(resolved, "split_fraction"),
            split_seed=_int(resolved, "split_seed"),
            shuffle_each_epoch=_bool(resolved, "shuffle_each_epoch"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def pointnet_config(resolved: dict[str, str], input_dim: int) -> PointNetConfig:
    return PointNetConfig(
        input_dim=input_dim,
        mlp_widths=_int_tuple(resolved, "mlp_widths"),
        head_widths=_int_tuple(resolved, "head_widths"),
        init_seed=_int(resolved, "init_seed"),
    )


def dgcnn_config(resolved: dict[str, str], input_dim: int) -> DgcnnConfig:
    return DgcnnConfig(
        input_dim=input_dim,
        k_neighbors=_int(resolved, "k_neighbors"),
        edge_widths=_int_tuple(resolved, "edge_widths"),
        embed_width=_int(resolved, "embed_width"),
        head_widths=_int_tuple(resolved, "head_widths"),
        init_seed=_int(resolved, "init_seed"),
    )


def cnn_config(resolved: dict[str, str]) -> CnnConfig:
    channels = _int_tuple(resolved, "conv_channels")
    if len(channels) != 3:
        raise ConfigError("conv_channels must be three comma-separated integers")
    return CnnConfig(
        resolution=_int(resolved, "resolution"),
        conv_channels=channels,  # type: ignore[arg-type]
        epochs=_int(resolved, "cnn_epochs"),
        init_seed=_int(resolved, "init_seed"),
    )


def projection_spec(resolved: dict[str, str]) -> ProjectionSpec:
    plane = _int_tuple(resolved, "plane")
    if len(plane) != 2:
        raise ConfigError("plane must be two comma-separated axis indices")
    return ProjectionSpec(
        plane=plane,  # type: ignore[arg-type]
        resolution=_int(resolved, "resolution"),
        field_channel=_int(resolved, "field_channel"),
    )

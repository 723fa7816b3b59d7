"""PointNet-style binary classifier.

Shared pointwise MLPs lift each point feature vector through successive
widths, a global max pool collapses the point axis into one descriptor,
and a small fully connected head emits two logits.  The max pool makes
the whole model invariant to point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.layers import BatchNorm, GlobalMaxPool, Linear, ReLU


@dataclass(frozen=True)
class PointNetConfig:
    input_dim: int
    mlp_widths: tuple[int, ...] = (64, 64, 64, 128, 1024)
    head_widths: tuple[int, ...] = (512, 256, 2)
    init_seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.mlp_widths or not self.head_widths:
            raise ValueError("width lists must be nonempty")
        if self.head_widths[-1] != 2:
            raise ValueError(f"last head width must be 2, got {self.head_widths[-1]}")


class PointNet:
    """Per-point (linear -> batch norm -> relu) stack, max pool, linear head.

    The head is plain linear + relu: with per-sample statistics the pooled
    descriptor is a single row, so batch norm there would collapse to its
    beta offset and block every upstream gradient.
    """

    tag = "pointnet"

    def __init__(self, config: PointNetConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        self.mlp: list[tuple[Linear, BatchNorm, ReLU]] = []
        f_in = config.input_dim
        for i, width in enumerate(config.mlp_widths):
            lin = Linear(f_in, width, name=f"mlp{i}")
            lin.init(rng)
            self.mlp.append((lin, BatchNorm(width, name=f"mlp{i}.bn"), ReLU()))
            f_in = width
        self.pool = GlobalMaxPool()
        self.head: list[tuple[Linear, ReLU | None]] = []
        for i, width in enumerate(config.head_widths):
            lin = Linear(f_in, width, name=f"head{i}")
            lin.init(rng)
            last = i == len(config.head_widths) - 1
            self.head.append((lin, None if last else ReLU()))
            f_in = width

    def forward(self, points: np.ndarray, mode: str = "eval") -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected (N, {self.config.input_dim}) cloud matrix, got {points.shape}"
            )
        train = mode == "train"
        x = points
        for lin, bn, act in self.mlp:
            x = act.forward(bn.forward(lin.forward(x), train))
        x = self.pool.forward(x)
        for lin, act in self.head:
            x = lin.forward(x)
            if act is not None:
                x = act.forward(x)
        return x[0]

    def backward(self, dlogits: np.ndarray) -> None:
        g = np.asarray(dlogits, dtype=np.float64)[None, :]
        for lin, act in reversed(self.head):
            if act is not None:
                g = act.backward(g)
            g = lin.backward(g)
        g = self.pool.backward(g)
        for lin, bn, act in reversed(self.mlp):
            g = lin.backward(bn.backward(act.backward(g)))

    def predict(self, points: np.ndarray) -> int:
        """Class label from eval-mode logits; ties resolve to class 0."""
        logits = self.forward(points, mode="eval")
        return 1 if logits[1] > logits[0] else 0

    def parameters(self):
        out = []
        for lin, bn, _ in self.mlp:
            out += lin.params() + bn.params()
        for lin, _ in self.head:
            out += lin.params()
        return out

    def buffers(self):
        out = []
        for _, bn, _ in self.mlp:
            out += bn.buffers()
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def config_items(self) -> dict[str, str]:
        return {
            "input_dim": str(self.config.input_dim),
            "mlp_widths": ",".join(str(w) for w in self.config.mlp_widths),
            "head_widths": ",".join(str(w) for w in self.config.head_widths),
            "init_seed": str(self.config.init_seed),
        }

    @classmethod
    def from_config_items(cls, items: dict[str, str]) -> "PointNet":
        return cls(PointNetConfig(
            input_dim=int(items["input_dim"]),
            mlp_widths=tuple(int(w) for w in items["mlp_widths"].split(",")),
            head_widths=tuple(int(w) for w in items["head_widths"].split(",")),
            init_seed=int(items["init_seed"]),
        ))

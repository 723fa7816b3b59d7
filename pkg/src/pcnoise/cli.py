"""Command-line interface: gen, train, eval, sweep, compare, gradcheck.

Exit codes are a stable scripting contract: 0 success, 1 configuration or
input error, 2 I/O failure, 3 numerical divergence during training,
4 gradient-check failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import configfile as cf
from .cloud import ValidationError, _atomic_write, load_dataset, save_dataset
from .modal import generate_dataset
from .models import (
    Dgcnn,
    PointNet,
    ProjCnn,
    ProjectionSpec,
    load_model,
    project_dataset,
    save_model,
)
from .nn.checkpoint import CorruptCheckpointError
from .nn.gradcheck import check_model
from .nn.layers import Linear
from .training import (
    DEFAULT_SWEEP_KS,
    DivergenceError,
    derive_seed,
    evaluate_accuracy,
    format_comparison_csv,
    format_metrics_csv,
    format_sweep_csv,
    image_pairs,
    k_sweep,
    model_comparison,
    split_dataset,
    train_model,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_DIVERGED = 3
EXIT_GRADCHECK = 4

GRADCHECK_THRESHOLDS = {"linear": 1e-6, "pointnet": 1e-4, "dgcnn": 1e-4, "cnn": 1e-4}
# deep models use a larger step: at 1e-6 the central difference of an
# order-one loss is dominated by float64 roundoff, not by the gradients
GRADCHECK_STEPS = {"linear": 1e-6, "pointnet": 1e-5, "dgcnn": 1e-5, "cnn": 1e-5}


def _resolve(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for key in ("n_samples", "k_neighbors"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = str(v)
    if getattr(args, "seed", None) is not None:
        # one master seed drives generation, splitting and initialization
        overrides["seed"] = str(args.seed)
        overrides["split_seed"] = str(derive_seed(args.seed, 2))
        overrides["init_seed"] = str(derive_seed(args.seed, 3))
    resolved = cf.resolve_config(getattr(args, "config", None), overrides)
    for k in sorted(resolved):
        print(f"config {k} = {resolved[k]}")
    print(f"config-digest {cf.config_digest(resolved)}")
    return resolved


def cmd_gen(args) -> int:
    resolved = _resolve(args)
    gen_cfg = cf.generator_config(resolved)
    dataset = generate_dataset(gen_cfg)
    save_dataset(dataset, args.out)
    labels = dataset.labels()
    print(f"wrote {len(dataset)} samples to {args.out}")
    print(f"class balance: {int((labels == 1).sum())} high / {int((labels == 0).sum())} low")
    print(f"tau {dataset.metadata['tau']}")
    return EXIT_OK


class _LinearClassifier:
    """Single pointwise linear layer as a 2-class model, for gradient checking."""

    def __init__(self, in_dim: int, seed: int):
        self.lin = Linear(in_dim, 2, name="lin")
        self.lin.init(np.random.default_rng(seed))

    def forward(self, x, mode="eval"):
        return self.lin.forward(x)[0]

    def backward(self, dlogits):
        self.lin.backward(np.asarray(dlogits)[None, :])

    def parameters(self):
        return self.lin.params()

    def buffers(self):
        return []

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0


def _build_model(name: str, resolved: dict[str, str], input_dim: int):
    if name == "pointnet":
        return PointNet(cf.pointnet_config(resolved, input_dim))
    if name == "dgcnn":
        return Dgcnn(cf.dgcnn_config(resolved, input_dim))
    raise cf.ConfigError(f"unknown model {name!r}")


def _bounds_to_str(bounds) -> str:
    return ",".join(repr(v) for pair in bounds for v in pair)


def _bounds_from_str(text: str):
    vals = [float(t) for t in text.split(",")]
    return ((vals[0], vals[1]), (vals[2], vals[3]))


def cmd_train(args) -> int:
    resolved = _resolve(args)
    dataset = load_dataset(args.data)
    cfg = cf.training_config(resolved)
    train_samples, test_samples = split_dataset(dataset, cfg.split_train_fraction, cfg.split_seed)
    input_dim = dataset.spatial_dim + dataset.n_channels
    os.makedirs(args.out, exist_ok=True)
    extra: dict[str, str] = {}
    if args.model == "cnn":
        from dataclasses import replace

        spec = cf.projection_spec(resolved)
        images, spec = project_dataset(dataset, spec)
        model = ProjCnn(cf.cnn_config(resolved))
        cfg = replace(cfg, epochs=model.config.epochs)
        train_ids = {s.sample_id for s in train_samples}
        test_ids = {s.sample_id for s in test_samples}
        metrics = train_model(model, image_pairs(images, train_ids), cfg)
        metrics = evaluate_accuracy(model, image_pairs(images, test_ids), metrics)
        extra = {
            "plane": f"{spec.plane[0]},{spec.plane[1]}",
            "field_channel": str(spec.field_channel),
            "bounds": _bounds_to_str(spec.bounds),
        }
    else:
        model = _build_model(args.model, resolved, input_dim)
        from .training import train_and_eval_split

        metrics = train_and_eval_split(model, train_samples, test_samples, cfg)
    ckpt_path = os.path.join(args.out, f"{args.model}.ckpt")
    save_model(ckpt_path, model, extra)
    _atomic_write(os.path.join(args.out, f"{args.model}_metrics.csv"), format_metrics_csv(metrics))
    print(f"checkpoint {ckpt_path}")
    print(f"test_accuracy {metrics.test_accuracy:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, items = load_model(args.ckpt)
    dataset = load_dataset(args.data)
    if model.tag == "cnn":
        spec = ProjectionSpec(
            plane=tuple(int(t) for t in items["plane"].split(",")),  # type: ignore[arg-type]
            resolution=int(items["resolution"]),
            field_channel=int(items["field_channel"]),
            bounds=_bounds_from_str(items["bounds"]),
        )
        images, _ = project_dataset(dataset, spec)
        pairs = [(img[None, :, :], label) for _, img, label in images]
    else:
        expected = int(items["input_dim"])
        actual = dataset.spatial_dim + dataset.n_channels
        if expected != actual:
            raise ValidationError(
                f"checkpoint expects input_dim={expected} but dataset has d+C={actual}"
            )
        pairs = [(s.cloud.data, s.label) for s in dataset.samples]
    metrics = evaluate_accuracy(model, pairs)
    print(f"test_accuracy {metrics.test_accuracy:.6g}")
    print(f"confusion tp={metrics.tp} tn={metrics.tn} fp={metrics.fp} fn={metrics.fn}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    resolved = _resolve(args)
    dataset = load_dataset(args.data)
    ks = tuple(int(t) for t in args.k.split(","))
    cfg = cf.training_config(resolved)
    result = k_sweep(dataset, ks, cfg, init_seed=int(resolved["init_seed"]))
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "sweep.csv"), format_sweep_csv(result))
    best_k, best_acc = max(result, key=lambda ka: (ka[1], -ka[0]))
    print(f"best k {best_k} accuracy {best_acc:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    resolved = _resolve(args)
    dataset = load_dataset(args.data)
    cfg = cf.training_config(resolved)
    rows = model_comparison(
        dataset,
        cfg,
        k_neighbors=int(resolved["k_neighbors"]),
        cnn_cfg=cf.cnn_config(resolved),
        init_seed=int(resolved["init_seed"]),
    )
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "comparison.csv"), format_comparison_csv(rows))
    for name, acc in rows:
        print(f"{name} {acc:.6g}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    resolved = _resolve(args)
    rng = np.random.default_rng(12345)
    n, k = args.n, args.k
    if args.model == "linear":
        model = _LinearClassifier(in_dim=5, seed=int(resolved["init_seed"]))
        x = rng.standard_normal((1, 5))
    elif args.model == "pointnet":
        model = PointNet(cf.pointnet_config(resolved, input_dim=3))
        x = rng.standard_normal((n, 3))
    elif args.model == "dgcnn":
        from dataclasses import replace

        c = cf.dgcnn_config(resolved, input_dim=3)
        model = Dgcnn(replace(c, k_neighbors=k))
        x = rng.standard_normal((n, 3))
    else:
        from dataclasses import replace

        c = replace(cf.cnn_config(resolved), resolution=8)
        model = ProjCnn(c)
        x = rng.standard_normal((1, 8, 8))
    err = check_model(model, x, true_class=1, mode="eval",
                      h=GRADCHECK_STEPS[args.model], corrupt=args.corrupt_backward)
    threshold = GRADCHECK_THRESHOLDS[args.model]
    print(f"max relative gradient error {err:.3e} (threshold {threshold:.0e})")
    if err >= threshold:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_GRADCHECK
    print("gradient check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcnoise",
        description="Generate, train, and evaluate point-cloud noise classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed overriding seed/split_seed/init_seed")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    common(p)
    p.add_argument("--n-samples", type=int, dest="n_samples")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="split, train and evaluate one model")
    common(p)
    p.add_argument("--model", required=True, choices=("pointnet", "dgcnn", "cnn"))
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--k", type=int, dest="k_neighbors", help="DGCNN neighbor count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train DGCNN across K values")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default=",".join(str(k) for k in DEFAULT_SWEEP_KS),
                   help="comma-separated K values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="train CNN/PointNet/DGCNN on one split")
    common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of a model's gradients")
    common(p, out=False)
    p.add_argument("--model", required=True, choices=("linear", "pointnet", "dgcnn", "cnn"))
    p.add_argument("--n", type=int, default=16, help="points in the test cloud")
    p.add_argument("--k", type=int, default=4, help="DGCNN neighbor count")
    p.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (cf.ConfigError, CorruptCheckpointError, ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

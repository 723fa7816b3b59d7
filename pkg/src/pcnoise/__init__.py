"""pcnoise: point-cloud classifiers for triaging simulated acoustic fields.

Classifies finite-element style pressure fields, represented as point
clouds, into high-noise / low-noise classes using three from-scratch
models: PointNet, a dynamic-graph edge-convolution network (DGCNN), and a
plane-projection CNN baseline.  Includes a closed-form Helmholtz-modal
data generator, a manual-backprop layer kit with gradient checking, and a
deterministic training/evaluation harness.
"""

from .cloud import (
    Dataset,
    LabeledSample,
    PointCloud,
    ValidationError,
    ValidationResult,
    load_dataset,
    normalize_spatial,
    permuted_view,
    save_dataset,
    validate_cloud,
)
from .modal import (
    GeneratorConfig,
    ModalField,
    WindowRegion,
    eval_modal_field,
    generate_dataset,
    generate_sample,
    helmholtz_mode_residual,
)
from .models import (
    CnnConfig,
    Dgcnn,
    DgcnnConfig,
    PointNet,
    PointNetConfig,
    ProjCnn,
    ProjectionSpec,
    edge_features,
    knn_graph,
    load_model,
    pointcloud_to_image,
    project_dataset,
    save_model,
)
from .nn import OptimizerConfig, softmax_cross_entropy
from .training import (
    Metrics,
    TrainingConfig,
    evaluate_accuracy,
    k_sweep,
    model_comparison,
    replicate_protocol,
    split_dataset,
    train_model,
)

__version__ = "0.1.0"

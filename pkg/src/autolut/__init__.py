"""Look-up-table super-resolution engine.

Learnable convex-combination sampling feeds 4-D simplex-interpolated tables
through a multi-stage pipeline with bounded residual fusion and rotation
ensembles; tables are exported from small backbones and fine-tuned with
analytic gradients.
"""

from ._kernels import kernel_name
from .backbone import (
    BackboneWeights,
    Checkpoint,
    export_lut,
    export_pipeline,
    forward_backbone,
    load_checkpoint,
    storage_size,
    write_checkpoint,
)
from .errors import (
    AutoLutError,
    ContractViolationError,
    FormatError,
    InvalidCheckpointError,
    InvalidConfigError,
    InvalidDatasetError,
    InvalidInputError,
)
from .lut import LutTable, knot_value, lookup
from .pipeline import (
    BranchConfig,
    GroupConfig,
    PipelineConfig,
    extract_patch,
    load_pipeline,
    preset_config,
    preset_names,
    rotation_ensemble,
    run_group,
    save_pipeline,
    super_resolve,
)
from .planes import load_png, psnr, resize, rgb_to_y, save_png, ssim
from .residual import clamp_weights, combine
from .sampler import SamplerWeights, effective_receptive_field, normalize, sample

__version__ = "0.1.0"

"""Framework-free CNN inference runtime and architecture cost analyzer.

Headline surface: tensors and ops, model graphs with builders for the
bundled architectures, MAC/parameter/receptive-field analysis, the .lwcm
binary model container, PNM image IO, and the `lwcnn` command line.
"""

from .tensor import Prng, ShapeError, Tensor, fnv1a64, from_data, seeded_uniform, zeros
from .ops import (
    BatchNormParams,
    ConvWeights,
    DepthwiseWeights,
    avg_pool,
    batchnorm_infer,
    bilinear_resize,
    contrast_stretch,
    conv2d,
    depthwise_conv2d,
    dsc_layer,
    flatten,
    maxpool2,
    pointwise_conv2d,
    relu,
    sigmoid,
    softmax,
)
from .ops_direct import conv2d_direct, conv2d_direct_counted, depthwise_direct, dsc_direct
from .graph import (
    GraphError,
    LayerSpec,
    ModelGraph,
    apply_layer,
    build_ablation,
    build_lcnn,
    build_mobilenet,
    build_named,
    build_proposed,
    builder_names,
    forward,
    infer_shapes,
    seeded_store,
    validate,
    weight_specs,
    weighted_layer_count,
    with_input_shape,
    zero_store,
)
from .archfile import parse_arch, render_arch
from .analysis import (
    ConvCost,
    CostReport,
    LayerCost,
    analyze_model,
    compare_models,
    conv_macs,
    dsc_macs,
    dsc_ratio,
    layer_params,
    param_breakdown,
    receptive_field,
    render_csv,
    render_table,
    rf_chain,
)
from .model_format import (
    BadMagicError,
    BlobError,
    BoundsError,
    ChecksumError,
    DuplicateNameError,
    ModelView,
    SerializeError,
    VersionError,
    deserialize,
    open_inplace,
    serialize,
    serialize_bytes,
)
from .image_io import (
    PnmDepthError,
    PnmError,
    PnmFormatError,
    PnmTruncatedError,
    RawTensorError,
    pnm_bytes,
    raw_bytes,
    read_pnm,
    read_raw,
    write_pnm,
    write_raw,
)

__version__ = "0.1.0"

__all__ = [
    "BatchNormParams",
    "BadMagicError",
    "BlobError",
    "BoundsError",
    "ChecksumError",
    "ConvCost",
    "ConvWeights",
    "CostReport",
    "DepthwiseWeights",
    "DuplicateNameError",
    "GraphError",
    "LayerCost",
    "LayerSpec",
    "ModelGraph",
    "ModelView",
    "PnmDepthError",
    "PnmError",
    "PnmFormatError",
    "PnmTruncatedError",
    "Prng",
    "RawTensorError",
    "SerializeError",
    "ShapeError",
    "Tensor",
    "VersionError",
    "analyze_model",
    "apply_layer",
    "avg_pool",
    "batchnorm_infer",
    "bilinear_resize",
    "build_ablation",
    "build_lcnn",
    "build_mobilenet",
    "build_named",
    "build_proposed",
    "builder_names",
    "compare_models",
    "contrast_stretch",
    "conv2d",
    "conv2d_direct",
    "conv2d_direct_counted",
    "conv_macs",
    "depthwise_conv2d",
    "depthwise_direct",
    "deserialize",
    "dsc_direct",
    "dsc_layer",
    "dsc_macs",
    "dsc_ratio",
    "flatten",
    "fnv1a64",
    "forward",
    "from_data",
    "infer_shapes",
    "layer_params",
    "maxpool2",
    "open_inplace",
    "param_breakdown",
    "parse_arch",
    "pnm_bytes",
    "pointwise_conv2d",
    "raw_bytes",
    "read_pnm",
    "read_raw",
    "receptive_field",
    "relu",
    "render_arch",
    "render_csv",
    "render_table",
    "rf_chain",
    "seeded_store",
    "seeded_uniform",
    "serialize",
    "serialize_bytes",
    "sigmoid",
    "softmax",
    "validate",
    "weight_specs",
    "weighted_layer_count",
    "with_input_shape",
    "write_pnm",
    "write_raw",
    "zero_store",
    "zeros",
]

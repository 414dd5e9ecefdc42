"""Toolkit for a fixed-point CNN hyperspectral-pixel classifier and its
FPGA-style performance model: network derivation, bit-exact 16-bit
emulation, cycle/latency/resource estimation and design-space exploration.
"""

from .errors import (
    ConfigError,
    DataError,
    EmptyDatasetError,
    FormatError,
    HsiAccelError,
    InfeasibleError,
    ModelError,
    ShapeError,
    TruncationError,
    UnlabeledError,
    WeightShapeError,
)
from .hsi_io import (
    DatasetSplit,
    HsiCube,
    LabelMap,
    Patch,
    extract_patch,
    load_cube,
    load_labels,
    normalize,
    split_dataset,
    write_cube,
    write_labels,
)
from .model import (
    LayerSpec,
    NetParams,
    NetworkSpec,
    WeightSet,
    band_partition,
    derive_config,
    infer_float,
    load_weights,
    random_weights,
    save_weights,
)
from .quant import QFormat, QTensor, choose_qformat, dequantize, mac9, quantize, requantize
from .engine import (
    ExecutionTrace,
    HwParams,
    QWeightSet,
    classify_image,
    classify_pixel,
    draw_calibration_patches,
    quantize_weights,
    run_conv1x1,
    run_conv3x3,
    run_fc,
)
from .perf import (
    LayerCost,
    ResourceEstimate,
    Timeline,
    estimate_resources,
    layer_cycles,
    schedule,
    throughput_report,
    transfer_cycles,
)
from .dse import DesignPoint, DseResult, explore
from .presets import PRESETS, DatasetPreset, get_preset

__version__ = "0.1.0"

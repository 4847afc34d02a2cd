"""Grouped spatial pack convolutions for CPUs, with baselines, a tuner and a cost model."""

from .baselines import gemm, grouped_direct_conv_timed, im2col_group, im2col_grouped_conv
from .errors import (ComparisonError, ConfigurationError, GSPCError, RecordError, RecordKeyMismatch,
                     TileConfigError, TuningError, UnknownNetworkError)
from .gspc import (PackedInputs, PackedKernels, PackedOutputs, TileConfig, compute, default_tiles,
                   gspc_conv, pack_inputs, pack_kernels, unpack_outputs, validate_tiles)
from .reference import ConvParams, direct_grouped_conv, grouped_block, pointwise_conv
from .tensor import PaddingSpec, Shape4, allclose, flat_index, output_spatial_dims, pad_input, random_fill
from .workloads import LayerSpec, NetworkSpec, builtin_network, expected_time, macs, network_totals, params_count

__version__ = "0.1.0"

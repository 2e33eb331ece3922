"""Pansharpening by convolutional sparse coding: observation model, proximal solver,
unfolded network, training and quality indexes."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DivergenceError,
    ProxPanError,
    RasterDimensionError,
    RasterFormatError,
    RasterTruncatedError,
    ShapeError,
    UndefinedMetricError,
    UnsupportedOpError,
)
from .model import (
    AnalysisBanks,
    FeatureTriple,
    FusionPair,
    PriorWeights,
    SynthesisBanks,
    build_joint,
    objective_value,
    reconstruct_hrms,
    synthesize_ms,
    synthesize_pan,
)
from .network import NetworkConfig, NetworkParams, init_network, network_forward
from .raster import conv2d_adjoint, conv2d_same, inner_product, read_raster, write_raster
from .solver import SolverConfig, solve

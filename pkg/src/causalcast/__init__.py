"""Causal-prior-guided panel forecasting.

Discovers lagged causal structure between regions, distills it into a
directed prior matrix, and injects that prior into lightweight forecasters
through a gated residual adapter.
"""

from .adapter import (
    AdapterState,
    adapter_forward,
    adapter_regularizers,
    compute_gate,
    influence_bound_check,
    init_adapter_state,
    mica_layer,
    spatial_embed,
)
from .autodiff import Param, Tape, Var, grad_check
from .backbone import PatchConfig, count_params, moving_average_matrix
from .discovery import (
    CausalTensor,
    ParentSet,
    PCMCIDiscovery,
    StationaryPanel,
    parcorr_test,
    pcmci,
    preprocess_stationary,
)
from .exceptions import (
    CausalcastError,
    ConfigError,
    DegenerateSeriesError,
    IngestionError,
    InsufficientDataError,
    InsufficientSamplesError,
    NonFiniteLossError,
    ShapeError,
)
from .forecaster import (
    Adam,
    ForecastBatch,
    ForecastModel,
    FusionState,
    ModelConfig,
    ModelState,
    decode,
    fuse,
)
from .pipeline import (
    MetricsReport,
    Normalizer,
    PanelForecaster,
    PanelSeries,
    RunConfig,
    SplitSpec,
    bench,
    chronological_split,
    evaluate,
    fit,
    load_panel_csv,
    synthesize_coupled_panel,
    window_batches,
    write_panel_csv,
)
from .prior import (
    PriorMatrix,
    build_prior,
    identity_prior,
    lag_weights,
    pearson_prior,
    spectral_norm,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdapterState",
    "CausalTensor",
    "CausalcastError",
    "ConfigError",
    "DegenerateSeriesError",
    "ForecastBatch",
    "ForecastModel",
    "FusionState",
    "IngestionError",
    "InsufficientDataError",
    "InsufficientSamplesError",
    "MetricsReport",
    "ModelConfig",
    "ModelState",
    "NonFiniteLossError",
    "Normalizer",
    "PanelForecaster",
    "PanelSeries",
    "ParentSet",
    "Param",
    "PatchConfig",
    "PCMCIDiscovery",
    "PriorMatrix",
    "RunConfig",
    "ShapeError",
    "SplitSpec",
    "StationaryPanel",
    "Tape",
    "Var",
    "adapter_forward",
    "adapter_regularizers",
    "bench",
    "build_prior",
    "chronological_split",
    "compute_gate",
    "count_params",
    "decode",
    "evaluate",
    "fit",
    "fuse",
    "grad_check",
    "identity_prior",
    "influence_bound_check",
    "init_adapter_state",
    "lag_weights",
    "load_panel_csv",
    "mica_layer",
    "moving_average_matrix",
    "parcorr_test",
    "pcmci",
    "pearson_prior",
    "preprocess_stationary",
    "spatial_embed",
    "spectral_norm",
    "synthesize_coupled_panel",
    "window_batches",
    "write_panel_csv",
]

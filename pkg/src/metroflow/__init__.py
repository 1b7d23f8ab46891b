"""Passenger-flow prediction on metro station graphs.

A small, self-contained stack: a reverse-mode autodiff tensor core,
k-hop graph construction with GraphSAGE/GCN convolutions, a social
edge-weight learner, optional temporal and hypergraph branches, and a
seeded experiment grid with an over-smoothing diagnostic.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DiagnosticError,
    GenerationError,
    GraphError,
    MetroflowError,
    ReportError,
    ShapeError,
    TrainingError,
    UnknownStationError,
)
from .tensor import (
    GatherPlan,
    Segments,
    Tape,
    Tensor,
    backward,
    parameter,
)
from .graphs import (
    BaseGraph,
    Hypergraph,
    KHopGraph,
    WeightedGraph,
    build_khop,
    clique_expand,
    neighbor_sets,
    neighborhood_overlap,
    sample_adjacency,
)
from .layers import (
    EdgeWeightLearner,
    GcnLayer,
    Mlp,
    NeighborIndex,
    SageLayer,
    edge_weight,
    gcn_forward,
    sage_aggregate,
    sage_forward,
    sage_forward_decomposed,
    temporal_forward,
)
from .data import (
    SocialFeatures,
    StationDataset,
    TaskMatrix,
    build_task,
    load_dataset,
    load_dataset_dir,
    save_dataset,
    social_diff_features,
    synthesize_dataset,
)
from .model import (
    VARIANTS,
    Model,
    ModelConfig,
    assemble,
    forward,
    load_checkpoint,
    predict_task,
    save_checkpoint,
)
from .training import (
    AdamW,
    Split,
    Standardizer,
    TrainReport,
    adamw_step,
    lr_at,
    mae_loss,
    mape,
    mse_loss,
    split_years,
    train,
)
from .experiments import (
    RESULT_HEADER,
    ExperimentResult,
    GridSpec,
    OversmoothingReport,
    ResultRow,
    SummaryRow,
    best_hop_summary,
    oversmoothing_diagnostic,
    parse_results_csv,
    run_grid,
)
from .reporting import emit_report

__version__ = "0.1.0"

__all__ = [
    "MetroflowError", "ShapeError", "ContractError", "ConfigError",
    "DataError", "UnknownStationError", "GraphError", "GenerationError",
    "TrainingError", "DiagnosticError", "ReportError", "CheckpointError",
    "Tensor", "Tape", "GatherPlan", "Segments", "parameter", "backward",
    "BaseGraph", "KHopGraph", "Hypergraph", "WeightedGraph",
    "build_khop", "clique_expand", "sample_adjacency", "neighbor_sets",
    "neighborhood_overlap",
    "SageLayer", "GcnLayer", "Mlp", "EdgeWeightLearner", "NeighborIndex",
    "sage_aggregate", "sage_forward", "sage_forward_decomposed",
    "gcn_forward", "edge_weight", "temporal_forward",
    "StationDataset", "SocialFeatures", "TaskMatrix",
    "load_dataset", "load_dataset_dir", "save_dataset",
    "synthesize_dataset", "build_task", "social_diff_features",
    "VARIANTS", "ModelConfig", "Model", "assemble", "forward",
    "predict_task", "save_checkpoint", "load_checkpoint",
    "Split", "split_years", "Standardizer", "TrainReport",
    "AdamW", "adamw_step", "lr_at", "mse_loss", "mae_loss", "mape", "train",
    "GridSpec", "ResultRow", "ExperimentResult", "SummaryRow",
    "run_grid", "best_hop_summary", "RESULT_HEADER", "parse_results_csv",
    "OversmoothingReport", "oversmoothing_diagnostic",
    "emit_report",
    "__version__",
]

"""Ego-centred clustering for creator-side network A/B experiments."""

__version__ = "0.1.0"

from ._accel import backend
from .bias_correction import (
    ArmStats,
    CorrectedReadout,
    PopulationSizes,
    SampleStats,
    backtest_report,
    combined_mean,
    combined_var,
    lift_and_significance,
    mde,
)
from .clustering import (
    AssignmentTrace,
    EgoClusterSolution,
    Variant,
    assign_alter,
    assign_ego_variants,
    brute_force_min_loss,
    build_solution,
)
from .diagnostics import (
    ClusterDiagnostics,
    EgoLoss,
    ScenarioConfig,
    diagnose,
    ego_loss_rate,
    loss_rate_t14,
    overall_loss_rate,
    stability_rate,
    summary_table,
)
from .errors import EgoClusterError, EgoClusterWarning, IngestError, OracleGuardError, SchemaError
from .graph_model import (
    Edge,
    EdgeSchema,
    NetworkSnapshot,
    NetworkType,
    build_network,
    ingest_edges,
    restrict_egos,
    write_edges,
)
from .simulator import (
    Churn,
    EffectModel,
    SimConfig,
    estimate_ate,
    evolve_network,
    generate_graph,
    run_comparison,
    simulate_outcomes,
)

from interlab.analysis.experiments import (
    COMPARISONS,
    CorrelationPoint,
    CorrelationSweep,
    InteractionOnlyCurve,
    LambdaSweep,
    PropositionReport,
    attack_all,
    correlation_sweep,
    grid_interaction,
    grid_interactions,
    heatmap_rows,
    interaction_heatmap,
    interaction_only_curve,
    lambda_sweep,
    match_magnitude,
    pilot_tau,
    pmap,
    multi_step_leading_term,
    proposition_suite,
)
from interlab.analysis.report import read_csv, read_json, report_json, write_csv, write_json
from interlab.analysis.stats import Correlation, PairedTrend, bootstrap_ci, histogram, paired_trend, pearson
from interlab.analysis.transfer import (
    TransferRecord,
    TransferReport,
    loo_select,
    loo_transferability,
    success_flags,
    success_matrix,
    transfer_report,
    transfer_utilities,
    transfer_utility,
)

__all__ = [
    "COMPARISONS", "Correlation", "CorrelationPoint", "CorrelationSweep", "InteractionOnlyCurve", "LambdaSweep",
    "PairedTrend", "PropositionReport", "TransferRecord", "TransferReport", "attack_all", "bootstrap_ci",
    "correlation_sweep", "grid_interaction", "grid_interactions", "heatmap_rows", "histogram",
    "interaction_heatmap", "interaction_only_curve", "lambda_sweep", "loo_select", "loo_transferability",
    "match_magnitude", "paired_trend", "pearson", "pilot_tau", "pmap", "multi_step_leading_term",
    "proposition_suite", "read_csv", "read_json", "report_json", "success_flags", "success_matrix",
    "transfer_report", "transfer_utilities", "transfer_utility", "write_csv", "write_json",
]

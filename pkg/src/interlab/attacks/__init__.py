from interlab.attacks.config import METHODS, AttackConfig, AttackTrace, read_delta_blob, write_delta_blob
from interlab.attacks.methods import (
    attack_interaction_only,
    attack_ir,
    attack_mi,
    attack_noise,
    attack_opt,
    attack_pgd,
    attack_single,
    attack_vr,
    grid_cells,
    interaction_objective,
    noise_baseline,
    project,
    run_attack,
    smoothed_gradient,
)

__all__ = [
    "METHODS", "AttackConfig", "AttackTrace", "attack_interaction_only", "attack_ir", "attack_mi",
    "attack_noise", "attack_opt", "attack_pgd", "attack_single", "attack_vr", "grid_cells",
    "interaction_objective", "noise_baseline", "project", "read_delta_blob", "run_attack", "smoothed_gradient",
    "write_delta_blob",
]

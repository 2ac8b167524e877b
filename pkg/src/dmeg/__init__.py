"""Online minimax hedging over per-layer network experts with a constrained objective."""

from .hedge import (DualVariable, ExpertWeights, RateSchedule, combine,
                    constraint_certificate, eg_update_experts, eg_update_lambda,
                    grad_p, theorem_rates)
from .net import (HedgedNetwork, OptimizerState, backward, forward, init_network,
                  load_checkpoint, save_checkpoint, sgd_nesterov_step)
from .objectives import (NPObjective, constraint_loss, grad_b, grad_lambda,
                         instantaneous_lagrangian, main_loss)
from .runner import (ConfigError, ExperimentConfig, MetricsLog, NumericAbort,
                     config_from_dict, emit_report, extract_best_expert,
                     run_baseline_bl, run_baseline_mol, run_dmeg, run_gamma_sweep)
from .streams import (NormalizerState, Sample, StreamSpec, derive_seed,
                      gen_concept_drift, gen_stationary, make_stream, normalize,
                      open_csv_stream)

__all__ = [
    "ConfigError", "DualVariable", "ExperimentConfig", "ExpertWeights",
    "HedgedNetwork", "MetricsLog", "NormalizerState", "NPObjective",
    "NumericAbort", "OptimizerState", "RateSchedule", "Sample", "StreamSpec",
    "backward", "combine", "config_from_dict", "constraint_certificate",
    "constraint_loss", "derive_seed", "eg_update_experts", "eg_update_lambda",
    "emit_report", "extract_best_expert", "forward", "gen_concept_drift",
    "gen_stationary", "grad_b", "grad_lambda", "grad_p", "init_network",
    "instantaneous_lagrangian", "load_checkpoint", "main_loss", "make_stream",
    "normalize", "open_csv_stream", "run_baseline_bl", "run_baseline_mol",
    "run_dmeg", "run_gamma_sweep", "save_checkpoint", "sgd_nesterov_step",
    "theorem_rates",
]

__version__ = "0.1.0"

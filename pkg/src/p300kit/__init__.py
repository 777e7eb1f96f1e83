"""Single-trial P300 detection toolkit.

Trains lightweight CNNs (SepConv1D, FCNN, OCLNN) from scratch on EEG
epochs, reproduces the complexity tables of twelve published P300
architectures via static analysis, and ships the preprocessing and
cross-validation pipeline plus a synthetic oddball cohort generator.
"""

__version__ = "0.1.0"

from .arch import (ArchitectureSpec, LayerSpec, builtin_architectures,
                   builtin_names, format_architecture, get_architecture,
                   parse_architecture)
from .complexity import ComplexityReport, count_flops, count_params, infer_shapes
from .data import (SyntheticConfig, generate_subject, read_csv_epochs,
                   read_epochs, synth_generate, write_epochs)
from .epochs import ContinuousRecording, EpochSet, concat_epoch_sets
from .evaluate import (EvalRecord, EvalReport, aggregate, plan_cross_subject,
                       roc_auc, run_cross_subject, run_within_subject,
                       stratified_kfold)
from .nn import AnalysisOnlyError, Model, ModelState, build_model
from .signal import (IirFilter, apply_iir_filter, bandpass_epochs,
                     design_butterworth_bandpass, detrend_linear, extract_epochs,
                     remove_dc, standardize_channels)
from .train import (AdamState, TrainConfig, TrainHistory, adam_step, bce_loss,
                    cce_loss, loss_for_spec, train_model)

__all__ = [
    "ArchitectureSpec", "LayerSpec", "builtin_architectures", "builtin_names",
    "format_architecture", "get_architecture", "parse_architecture",
    "ComplexityReport", "count_flops", "count_params", "infer_shapes",
    "SyntheticConfig", "generate_subject", "read_csv_epochs", "read_epochs",
    "synth_generate", "write_epochs",
    "ContinuousRecording", "EpochSet", "concat_epoch_sets",
    "EvalRecord", "EvalReport", "aggregate", "plan_cross_subject", "roc_auc",
    "run_cross_subject", "run_within_subject", "stratified_kfold",
    "AnalysisOnlyError", "Model", "ModelState", "build_model",
    "IirFilter", "apply_iir_filter", "bandpass_epochs",
    "design_butterworth_bandpass", "detrend_linear", "extract_epochs",
    "remove_dc", "standardize_channels",
    "AdamState", "TrainConfig", "TrainHistory", "adam_step", "bce_loss",
    "cce_loss", "loss_for_spec", "train_model",
]

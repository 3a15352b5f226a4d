"""Tri-modal attention fusion networks for conversation emotion labelling.

Per-utterance speech/visual/text feature vectors are fused either early
(concatenation, or directional tri-modal attention) or late (combining
sub-network predictions); a contextual LSTM carries information between
consecutive utterances of one conversation. Everything runs on a minimal
float64 reverse-mode tape so gradients can be verified against finite
differences end to end.
"""

from . import ops
from .attention import (AttentionOutput, DirectionalAttentionParams,
                        StandardizedTriple, directional_attention, mma_block,
                        standardize)
from .checkpoint import load_checkpoint, load_model, save_checkpoint, save_model
from .data import (Conversation, SyntheticSpec, Utterance, generate_synthetic,
                   load_dataset, save_dataset, speaker_split)
from .experiment import run_experiment
from .gradcheck import grad_check
from .metrics import ConfusionMatrix, EvalReport, emit_confusion_plot, evaluate
from .models import (MODEL_KINDS, ModelConfig, build_model, count_parameters,
                     parameter_breakdown)
from .recurrent import ClstmBlock, LstmCellParams, clstm_forward, lstm_step
from .tape import (NumericalError, Parameter, ParameterStore, ShapeError, Tape,
                   Tensor)
from .training import (TrainConfig, TrainReport, TrainingDiverged,
                       train_fusion_head, train_subnetwork)

__version__ = "0.1.0"

__all__ = [
    "AttentionOutput", "ClstmBlock", "ConfusionMatrix", "Conversation",
    "DirectionalAttentionParams", "EvalReport", "LstmCellParams", "MODEL_KINDS",
    "ModelConfig", "NumericalError", "Parameter", "ParameterStore", "ShapeError",
    "StandardizedTriple", "SyntheticSpec", "Tape", "Tensor", "TrainConfig",
    "TrainReport", "TrainingDiverged", "Utterance", "build_model",
    "clstm_forward", "count_parameters", "directional_attention", "emit_confusion_plot",
    "evaluate", "generate_synthetic", "grad_check", "load_checkpoint", "load_dataset",
    "load_model", "lstm_step", "mma_block", "ops", "parameter_breakdown",
    "run_experiment", "save_checkpoint", "save_dataset", "save_model",
    "speaker_split", "standardize", "train_fusion_head", "train_subnetwork",
]

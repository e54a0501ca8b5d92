"""Sequence classifiers, training, metrics and checkpoints."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import MacroMetrics, evaluate_macro, majority_vote
from .model import (GATE_ORDER, MERGE_MODES, VARIANTS, LstmParams, ModelConfig,
                    ModelParams, NumericsError, Prediction, forward_batch,
                    init_model, loss_and_gradients, lstm_backward, lstm_forward,
                    model_forward, scale_rows, sigmoid, softmax)
from .optim import AdamState, adam_step
from .train import (BaselineModel, EpochStats, TrainResult, predict_windows,
                    train, train_baseline)

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "MacroMetrics", "evaluate_macro", "majority_vote",
    "GATE_ORDER", "MERGE_MODES", "VARIANTS", "LstmParams", "ModelConfig",
    "ModelParams", "NumericsError", "Prediction", "forward_batch",
    "init_model", "loss_and_gradients", "lstm_backward", "lstm_forward",
    "model_forward", "scale_rows", "sigmoid", "softmax",
    "AdamState", "adam_step",
    "BaselineModel", "EpochStats", "TrainResult", "predict_windows",
    "train", "train_baseline",
]

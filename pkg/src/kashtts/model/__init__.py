"""Grapheme-conditioned flow-matching acoustic model."""

from .checkpoint import (Checkpoint, ConfigMismatch, CorruptCheckpoint, load_checkpoint, restore_optimizer,
                         save_checkpoint)
from .config import LossWeights, ModelConfig, TrainConfig
from .gradcheck import check_gradients, grad_check, harness_config
from .inference import EmptyText, synthesize, synthesize_ids
from .network import (AcousticModel, InvalidSpeaker, InvalidToken, decoder_vfield, frames_from_log_durations,
                      length_regulate, predict_durations, predict_energy, predict_pitch)
from .prosody import (DurationMismatch, FrameProsody, ProsodyTargets, aggregate_prosody, extract_prosody_targets,
                      frame_prosody)
from .training import (LossBreakdown, NonFiniteLoss, StepResult, TrainOutcome, Utterance, evaluation_loss,
                       fit_prosody_stats, make_optimizer, mas_durations, total_loss, train, train_step)

__all__ = [
    "AcousticModel", "Checkpoint", "ConfigMismatch", "CorruptCheckpoint", "DurationMismatch", "EmptyText",
    "FrameProsody", "InvalidSpeaker", "InvalidToken", "LossBreakdown", "LossWeights", "ModelConfig",
    "NonFiniteLoss", "ProsodyTargets", "StepResult", "TrainConfig", "TrainOutcome", "Utterance",
    "aggregate_prosody", "check_gradients", "decoder_vfield", "evaluation_loss", "extract_prosody_targets",
    "fit_prosody_stats", "frame_prosody", "frames_from_log_durations", "grad_check", "harness_config",
    "length_regulate", "load_checkpoint", "make_optimizer", "mas_durations", "predict_durations",
    "predict_energy", "predict_pitch", "restore_optimizer", "save_checkpoint", "synthesize", "synthesize_ids",
    "total_loss", "train", "train_step",
]

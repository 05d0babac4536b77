"""Cascaded co-speech face and gesture synthesis on a small numpy autodiff engine."""

from .cascade import CoGModel, ModelConfig, synthesize
from .config import RunConfig, desk_config, load_config
from .dataio import GestureSequence, SequenceRecord, load_dataset, window_clips
from .frontend import EmotionSpeakerClassifier
from .objectives import LossWeights

__all__ = [
    "CoGModel",
    "EmotionSpeakerClassifier",
    "GestureSequence",
    "LossWeights",
    "ModelConfig",
    "RunConfig",
    "SequenceRecord",
    "desk_config",
    "load_config",
    "load_dataset",
    "synthesize",
    "window_clips",
]

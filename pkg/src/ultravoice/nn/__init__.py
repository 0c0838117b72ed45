from .checkpoint import CorruptFile, VersionMismatch, load_checkpoint, model_hash, save_checkpoint
from .model import ModelConfig, ShapeMismatch, TwoStreamModel
from .optim import RMSprop

__all__ = [
    "CorruptFile", "ModelConfig", "RMSprop", "ShapeMismatch", "TwoStreamModel",
    "VersionMismatch", "load_checkpoint", "model_hash", "save_checkpoint",
]

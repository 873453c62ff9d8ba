from .adam import Adam
from .checkpoint import Checkpoint, checkpoint_load, checkpoint_save

__all__ = ["Adam", "Checkpoint", "checkpoint_load", "checkpoint_save"]

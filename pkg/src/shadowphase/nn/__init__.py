from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save, param_store
from .models import (BiRNN, ClassifierConfig, DilatedCNN, FinalReconstructor, GRUCell,
                     PhaseClassifier, ShadowReconstructor, mean_pool_shadows)
from .training import TrainConfig, TrainingDiverged, evaluate, predict_proba, train

__all__ = [
    "BiRNN", "CheckpointError", "ClassifierConfig", "DilatedCNN", "FinalReconstructor",
    "GRUCell", "PhaseClassifier", "ShadowReconstructor", "TrainConfig", "TrainingDiverged",
    "checkpoint_load", "checkpoint_save", "evaluate", "mean_pool_shadows", "param_store",
    "predict_proba", "train",
]

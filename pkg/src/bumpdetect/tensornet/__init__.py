"""Small deterministic numpy network engine: dense/conv layers, backprop, SGD."""
from .io import ModelFormatError, load, save
from .layers import Conv, Dense, Flatten, MaxPool, ReLU, ShapeError, Softmax
from .network import (
    Model, NetworkSpec, activations, cnn4_ref, fc_preset, forward, init,
    logits, loss_and_grads, param_count, preset,
)
from .train import (
    TrainConfig, TrainingError, fine_tune, predict, read_history, train,
    write_history,
)

__all__ = [
    "Conv", "Dense", "Flatten", "MaxPool", "ReLU", "Softmax", "ShapeError",
    "NetworkSpec", "Model", "preset", "fc_preset", "cnn4_ref", "param_count",
    "init", "forward", "logits", "activations", "loss_and_grads",
    "TrainConfig", "TrainingError", "train", "predict", "fine_tune",
    "write_history", "read_history", "save", "load", "ModelFormatError",
]

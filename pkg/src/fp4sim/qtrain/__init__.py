from .data import ByteCorpus, InContextMarkovTask, MarkovTask
from .layers import QuantLinearConfig, quant_linear_backward, quant_linear_forward
from .model import ModelDims, ToyModel, build_toy_model, parameter_count
from .train import TrainRun, loss_curve_csv, lr_at, train

__all__ = [
    "ByteCorpus", "InContextMarkovTask", "MarkovTask", "QuantLinearConfig", "quant_linear_forward",
    "quant_linear_backward", "ModelDims", "ToyModel", "build_toy_model",
    "parameter_count", "TrainRun", "train", "lr_at", "loss_curve_csv",
]

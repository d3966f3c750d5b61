from .checkpoint import load_checkpoint, save_checkpoint
from .losses import mse_loss, smoothness_loss
from .network import ConvLayer, ForwardResult, LayerSpec, SrNetwork, Topology, conv2d_valid
from .train import MomentumSGD, Sample, TrainConfig, TrainResult, train

__all__ = [
    "ConvLayer", "ForwardResult", "LayerSpec", "MomentumSGD", "Sample", "SrNetwork",
    "Topology", "TrainConfig", "TrainResult", "conv2d_valid", "load_checkpoint",
    "mse_loss", "save_checkpoint", "smoothness_loss", "train",
]

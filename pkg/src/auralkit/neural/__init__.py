"""Scene/LoR encoder-decoder for perceptual parameters (torch, float64)."""

from .gradcheck import GradCheckReport, grad_check
from .layers import (
    GCNBlock,
    MultiHeadAttention,
    PositionalQuery,
    TransformerDecoder,
    TransformerEncoder,
    gcn_forward,
    normalized_adjacency,
    sinusoidal_encoding,
    topk_pool,
)
from .model import (
    LoREncoder,
    ModelConfig,
    ParamDecoder,
    SRIRModel,
    decode_params,
    lor_encode,
    scene_inputs,
    to_params,
)
from .train import load_checkpoint, save_checkpoint, train_toy, training_loss

__all__ = [
    "GCNBlock", "GradCheckReport", "LoREncoder", "ModelConfig", "MultiHeadAttention",
    "ParamDecoder", "PositionalQuery", "SRIRModel", "TransformerDecoder", "TransformerEncoder",
    "decode_params", "gcn_forward", "grad_check", "load_checkpoint", "lor_encode",
    "normalized_adjacency", "save_checkpoint", "scene_inputs", "sinusoidal_encoding",
    "to_params", "topk_pool", "train_toy", "training_loss",
]

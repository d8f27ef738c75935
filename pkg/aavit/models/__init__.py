# Models package
from aavit.models.checkpoint import load_checkpoint, save_checkpoint
from aavit.models.vit import (
    AAViT,
    ModelParams,
    embed,
    encoder_forward,
    forward_logits,
    head_aamlp,
    head_baseline,
    model_forward,
    parameter_specs,
    patchify,
)

__all__ = [
    "AAViT", "ModelParams", "embed", "encoder_forward", "forward_logits",
    "head_aamlp", "head_baseline", "model_forward", "parameter_specs", "patchify",
    "load_checkpoint", "save_checkpoint",
]

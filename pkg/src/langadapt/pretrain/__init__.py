from .encoder import (
    Encoder,
    EncoderConfig,
    EncoderOutput,
    collate,
    encoder_forward,
    initialize_new_embeddings,
    load_encoder,
    mlm_loss,
    save_encoder,
)
from .masking import MaskingConfig, PretrainingInstance, build_instances, mask_sequence, num_to_mask, read_shard, write_shard
from .train import PretrainConfig, PretrainResult, make_param_groups, train_mlm, warmup_linear_decay

__all__ = [
    "Encoder",
    "EncoderConfig",
    "EncoderOutput",
    "MaskingConfig",
    "PretrainConfig",
    "mask_sequence",
    "num_to_mask",
    "PretrainResult",
    "PretrainingInstance",
    "build_instances",
    "collate",
    "encoder_forward",
    "initialize_new_embeddings",
    "load_encoder",
    "make_param_groups",
    "mlm_loss",
    "read_shard",
    "save_encoder",
    "train_mlm",
    "warmup_linear_decay",
    "write_shard",
]

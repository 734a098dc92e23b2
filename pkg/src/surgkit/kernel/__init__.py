from .mock import (
    REFUSAL_TEXT,
    MockVLM,
    Oracle,
    Planted,
    Refuser,
    draw,
    mock_generate,
    mock_transport,
    wrong_answer,
)
from .numeric import (
    ACTIVATIONS,
    KernelConfig,
    PositionTriple,
    TokenGrid,
    attention,
    finite_difference_check,
    fuse_blocks,
    log_softmax,
    loss_from_scores,
    mrope_apply,
    mrope_rotate,
    multitask_loss,
    patch_embed,
    rope_1d,
    rope_frequencies,
    token_fuse,
    window_mask,
)

__all__ = [
    "ACTIVATIONS",
    "KernelConfig",
    "MockVLM",
    "Oracle",
    "Planted",
    "PositionTriple",
    "REFUSAL_TEXT",
    "Refuser",
    "TokenGrid",
    "attention",
    "draw",
    "finite_difference_check",
    "fuse_blocks",
    "log_softmax",
    "loss_from_scores",
    "mock_generate",
    "mock_transport",
    "mrope_apply",
    "mrope_rotate",
    "multitask_loss",
    "patch_embed",
    "rope_1d",
    "rope_frequencies",
    "token_fuse",
    "window_mask",
    "wrong_answer",
]

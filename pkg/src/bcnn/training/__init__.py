"""Two-step training for the binary CNN: straight-through gradients,
Adam, warmup+cosine schedule, losses, synthetic data, and the training
engine/loop."""

from .ste import (
    act_backward_gain,
    act_surrogate,
    weight_backward_gain,
    weight_surrogate,
)
from .optim import Adam, lr_at
from .losses import softmax_cross_entropy, distributional_loss

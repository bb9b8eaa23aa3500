"""Training losses: cosine reconstruction plus adversarial cross-entropy.

The reconstruction term replaces the usual mean squared error with a cosine
dissimilarity, which is the natural distance for unit normal vectors.  All
functions take torch tensors and are differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

#: Probabilities are clamped into [PROB_CLAMP, 1 - PROB_CLAMP] so the
#: cross-entropy terms stay finite.
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_reconstruction: float = 999.0
    lambda_adversarial: float = 1.0

    def __post_init__(self):
        if self.lambda_reconstruction < 0 or self.lambda_adversarial < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lambda_reconstruction == 0 and self.lambda_adversarial == 0:
            raise ValueError("at least one loss weight must be positive")


def _as_batch(t: torch.Tensor) -> torch.Tensor:
    if t.ndim == 3:
        return t.unsqueeze(0)
    if t.ndim == 4:
        return t
    raise ValueError(f"expected (C, H, W) or (N, C, H, W), got {tuple(t.shape)}")


def reconstruction_loss(target: torch.Tensor, generated: torch.Tensor,
                        variant: str = "per_pixel") -> torch.Tensor:
    """Cosine dissimilarity between two unit normal fields, in [0, 2].

    Fields are (N, 3, H, W) or (3, H, W) with unit vectors along the channel
    axis.  ``per_pixel`` averages 1 - y_i . yhat_i over pixels; ``global``
    instead takes one cosine between the flattened fields (normalizing by
    their overall norms), averaged over the batch.
    """
    target = _as_batch(target)
    generated = _as_batch(generated)
    if target.shape != generated.shape:
        raise ValueError(f"shape mismatch {tuple(target.shape)} vs "
                         f"{tuple(generated.shape)}")
    if variant == "per_pixel":
        dots = (target * generated).sum(dim=1)
        return (1.0 - dots).mean()
    if variant == "global":
        t = target.flatten(1)
        g = generated.flatten(1)
        cos = (t * g).sum(dim=1) / (t.norm(dim=1) * g.norm(dim=1))
        return (1.0 - cos).mean()
    raise ValueError(f"unknown variant {variant!r}")


def adversarial_loss_generator(disc_probs: torch.Tensor) -> torch.Tensor:
    """Cross-entropy pushing the discriminator's verdict toward "real"."""
    p = disc_probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return (-torch.log(p)).mean()


def discriminator_loss(real_probs: torch.Tensor,
                       fake_probs: torch.Tensor) -> torch.Tensor:
    """Cross-entropy with label 1 for real images and 0 for generated ones."""
    r = real_probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    f = fake_probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return (-torch.log(r)).mean() + (-torch.log(1.0 - f)).mean()


def total_generator_loss(rec, adv, weights: LossWeights):
    """Weighted combination of reconstruction and adversarial terms."""
    return weights.lambda_reconstruction * rec + weights.lambda_adversarial * adv

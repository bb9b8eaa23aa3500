"""Bowtie generator and DCGAN-style discriminator.

Both nets stack kernel-4 stride-2 (transposed) convolutions with LeakyReLU
activations and batch normalization everywhere except the first block of
each downsampling path and the output blocks.  The generator ends in a
UnitNormalize layer that projects every output pixel onto the unit sphere
with an epsilon-stabilized division, so its output is a valid normal field
for any parameter setting.  Parameter initialization and the Adam update
are driven by explicit, seedable state so training runs are reproducible
and checkpoints restore bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import torch
import torch.nn as nn

from .core import DEFAULT_EPSILON


def unit_normalize_backward(v, upstream, epsilon: float = DEFAULT_EPSILON):
    """Analytic input gradient of f(v) = v / (||v|| + epsilon).

    ``v`` and ``upstream`` hold vectors on the last axis.  The Jacobian is
    I/s - v v^T / (n s^2) with n = ||v|| and s = n + epsilon; at v = 0 it
    degenerates to I/epsilon (and the formula below reduces to exactly
    that, since s = epsilon and the rank-one term vanishes with v).
    """
    v = np.asarray(v, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    s = n + epsilon
    dot = np.sum(v * upstream, axis=-1, keepdims=True)
    safe_n = np.where(n > 0, n, 1.0)
    return upstream / s - v * dot / (safe_n * s * s)


class _UnitNormalize(torch.autograd.Function):
    """Per-pixel unit projection over the channel axis (dim 1)."""

    @staticmethod
    def forward(ctx, x, epsilon):
        n = torch.linalg.vector_norm(x, dim=1, keepdim=True)
        s = n + epsilon
        ctx.save_for_backward(x, n, s)
        ctx.epsilon = epsilon
        return x / s

    @staticmethod
    def backward(ctx, grad_output):
        x, n, s = ctx.saved_tensors
        dot = (x * grad_output).sum(dim=1, keepdim=True)
        safe_n = torch.where(n > 0, n, torch.ones_like(n))
        grad = grad_output / s - x * dot / (safe_n * s * s)
        return grad, None


def unit_project(x: torch.Tensor, epsilon: float = DEFAULT_EPSILON) -> torch.Tensor:
    """One epsilon-stabilized unit projection, x / (||x|| + epsilon), with the
    analytic backward above (channel axis = dim 1)."""
    return _UnitNormalize.apply(x, epsilon)


class UnitNormalize(nn.Module):
    """Output layer scaling each pixel's channel vector to unit length.

    Applies the stabilized projection twice: a single pass leaves vectors
    whose pre-normalization magnitude is near the epsilon measurably short
    of unit, while the second pass pins every nonzero pixel to unit length
    within float rounding.  Exactly-zero vectors stay zero.
    """

    def __init__(self, epsilon: float = DEFAULT_EPSILON):
        super().__init__()
        self.epsilon = epsilon

    def forward(self, x):
        return unit_project(unit_project(x, self.epsilon), self.epsilon)


def _stage_widths(base_width: int, depth: int):
    # Double per stage, capped at 8x base as in the usual DCGAN ladder.
    return [base_width * 2 ** min(i, 3) for i in range(depth)]


def _check_spatial(size: int, depth: int, what: str):
    need = 2 ** depth
    if size % need != 0 or size < need * 2:
        raise ValueError(
            f"{what} spatial size {size} invalid for depth {depth}: must be "
            f"a multiple of {need} and at least {need * 2}")


class GeneratorNet(nn.Module):
    """Encoder-decoder inpainting generator with unit-normalized output.

    ``input_channels`` is 4 when the occlusion mask rides along as an extra
    channel, 3 when the net sees only the masked image.  ``skip_connections``
    concatenates encoder features into the decoder (off by default).
    """

    def __init__(self, input_channels: int = 4, base_width: int = 64,
                 depth: int = 4, skip_connections: bool = False,
                 epsilon: float = DEFAULT_EPSILON):
        super().__init__()
        if input_channels not in (3, 4):
            raise ValueError("input_channels must be 3 or 4")
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.input_channels = input_channels
        self.base_width = base_width
        self.depth = depth
        self.skip_connections = skip_connections

        widths = _stage_widths(base_width, depth)
        self.encoder = nn.ModuleList()
        c_in = input_channels
        for i, c_out in enumerate(widths):
            # convs feeding batch norm drop their bias: the normalization
            # subtracts it out, leaving a dead parameter
            layers = [nn.Conv2d(c_in, c_out, 4, stride=2, padding=1,
                                bias=(i == 0))]
            if i > 0:
                layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2))
            self.encoder.append(nn.Sequential(*layers))
            c_in = c_out

        self.decoder = nn.ModuleList()
        for j in range(depth - 1):
            c_out = widths[depth - 2 - j]
            c_in_dec = widths[depth - 1 - j]
            if skip_connections and j > 0:
                c_in_dec *= 2
            self.decoder.append(nn.Sequential(
                nn.ConvTranspose2d(c_in_dec, c_out, 4, stride=2, padding=1,
                                   bias=False),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(0.2),
            ))
        c_final = widths[0]
        if skip_connections and depth > 1:
            c_final *= 2
        self.final = nn.ConvTranspose2d(c_final, 3, 4, stride=2, padding=1)
        self.output_normalize = UnitNormalize(epsilon)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.input_channels:
            raise ValueError(f"expected (N, {self.input_channels}, H, W) input, "
                             f"got {tuple(x.shape)}")
        _check_spatial(x.shape[2], self.depth, "input")
        _check_spatial(x.shape[3], self.depth, "input")
        features = []
        h = x
        for block in self.encoder:
            h = block(h)
            features.append(h)
        for j, block in enumerate(self.decoder):
            if self.skip_connections and j > 0:
                h = torch.cat([h, features[self.depth - 1 - j]], dim=1)
            h = block(h)
        if self.skip_connections and self.depth > 1:
            h = torch.cat([h, features[0]], dim=1)
        return self.output_normalize(self.final(h))


class DiscriminatorNet(nn.Module):
    """Stride-2 conv stack to a single real/fake probability."""

    def __init__(self, base_width: int = 64, depth: int = 4,
                 image_size: int = 64, in_channels: int = 3):
        super().__init__()
        _check_spatial(image_size, depth, "discriminator")
        self.base_width = base_width
        self.depth = depth
        self.image_size = image_size
        widths = _stage_widths(base_width, depth)
        blocks = []
        c_in = in_channels
        for i, c_out in enumerate(widths):
            blocks.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1,
                                    bias=(i == 0)))
            if i > 0:
                blocks.append(nn.BatchNorm2d(c_out))
            blocks.append(nn.LeakyReLU(0.2))
            c_in = c_out
        self.blocks = nn.Sequential(*blocks)
        bottleneck = image_size // 2 ** depth
        self.head = nn.Linear(widths[-1] * bottleneck * bottleneck, 1)

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ValueError(f"expected (N, C, {self.image_size}, "
                             f"{self.image_size}) input, got {tuple(x.shape)}")
        h = self.blocks(x)
        logit = self.head(h.flatten(1))
        return torch.sigmoid(logit).squeeze(1)


def _set_mode(net: nn.Module, mode: str):
    if mode == "train":
        net.train()
    elif mode == "eval":
        net.eval()
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


def generator_forward(net: GeneratorNet, x, mode: str = "eval"):
    """Run the generator with batch norm in the given mode."""
    _set_mode(net, mode)
    return net(x)


def discriminator_forward(net: DiscriminatorNet, image, mode: str = "eval"):
    """Run the discriminator, returning per-image probabilities in (0, 1)."""
    _set_mode(net, mode)
    return net(image)


def init_parameters(net: nn.Module, rng_seed: int) -> None:
    """Deterministic DCGAN-style init: conv/linear weights ~ N(0, 0.02),
    biases 0, batch-norm scale 1 and shift 0, running stats reset.

    Each parameter draws from its own RNG substream keyed by (seed, index
    in name-sorted order), so the result is independent of torch's global
    RNG and stable across runs.
    """
    with torch.no_grad():
        for idx, (name, p) in enumerate(sorted(net.named_parameters())):
            if name.endswith("bias"):
                p.zero_()
            elif p.ndim == 1:  # batch-norm scale
                p.fill_(1.0)
            else:
                rng = np.random.default_rng((rng_seed, idx))
                sample = rng.normal(0.0, 0.02, size=tuple(p.shape))
                p.copy_(torch.from_numpy(sample.astype(np.float32)))
        for m in net.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.reset_running_stats()


def parameter_gradients(loss: torch.Tensor, net: nn.Module) -> Dict[str, torch.Tensor]:
    """Backpropagate ``loss`` and return per-parameter gradients by name.

    Raises if the loss is not connected to a recorded forward pass.
    Parameters the loss does not depend on get zero gradients.
    """
    if loss.grad_fn is None:
        raise RuntimeError("loss is not attached to a computation graph; "
                           "run a forward pass with gradients enabled first")
    names, params = zip(*net.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True, retain_graph=False)
    return {n: (g if g is not None else torch.zeros_like(p))
            for n, p, g in zip(names, params, grads)}


@dataclass
class AdamState:
    """First/second moment estimates plus hyperparameters for Adam."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def for_network(cls, net: nn.Module, learning_rate: float = 1e-4) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        for name, p in net.named_parameters():
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        return state


def adam_step(state: AdamState, params: Dict[str, torch.Tensor],
              grads: Dict[str, torch.Tensor]) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} does not "
                                 f"match parameter {name} {tuple(p.shape)}")
            m = state.m[name]
            v = state.v[name]
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p.sub_(state.learning_rate * m_hat / (v_hat.sqrt() + state.eps))
    return state

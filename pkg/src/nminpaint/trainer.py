"""Alternating GAN training with per-epoch evaluation and reporting.

Every source of randomness (augmentation draws, batch order, training and
evaluation masks, parameter init) comes from an RNG substream keyed by the
run seed plus a stream tag and the step/sample indices, so runs are
reproducible, resumable from checkpoints without drift, and independent of
scheduling.  Evaluation masks are keyed by sample index only, making the
metric series comparable across epochs.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, List, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from . import checkpoint as ckpt
from . import losses
from .augment import AugmentParams, expand_dataset
from .core import NormalMap, OcclusionMask, normal_to_rgb
from .losses import (LossWeights, adversarial_loss_generator,
                     discriminator_loss, total_generator_loss)
from .masking import MaskSpec, MaskStyle, apply_mask, concat_mask_channel, generate_mask
from .metrics import (MetricReport, discriminator_accuracy,
                      masked_mean_angular_error, psnr, ssim, to_unit_interval)
from .model import (AdamState, DiscriminatorNet, GeneratorNet, adam_step,
                    init_parameters, parameter_gradients)
from .reporting import CSV_HEADER, format_csv_row, render_metrics_figure

_STREAM_INIT_GEN = 1
_STREAM_INIT_DISC = 2
_STREAM_PERM = 3
_STREAM_MASK = 4
_STREAM_EVAL_MASK = 5

#: Width in pixels of the white separators between panel quadrants.
PANEL_SEPARATOR = 2

_ACC_WINDOW = 10


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; training aborts loudly."""


def _derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    image_size: int = 64
    disc_update_period: int = 1
    disc_accuracy_gate: Optional[float] = None
    use_mask_channel: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)
    mask_spec: MaskSpec = field(default_factory=MaskSpec)
    reconstruction_variant: str = "per_pixel"
    masked_only: bool = False
    base_width: int = 64
    depth: int = 4
    skip_connections: bool = False
    learning_rate: float = 1e-4
    eval_every: int = 1
    panel_every: int = 5
    max_steps: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.disc_update_period < 1:
            raise ValueError("batch_size and disc_update_period must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        need = 2 ** self.depth
        if self.image_size % need != 0 or self.image_size < need * 2:
            raise ValueError(f"image_size {self.image_size} invalid for "
                             f"depth {self.depth}")
        if self.reconstruction_variant not in ("per_pixel", "global"):
            raise ValueError("reconstruction_variant must be per_pixel or global")
        if self.masked_only and self.reconstruction_variant != "per_pixel":
            raise ValueError("masked_only weighting requires the per_pixel variant")

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss_weights"] = dataclasses.asdict(self.loss_weights)
        ms = dataclasses.asdict(self.mask_spec)
        ms["style"] = self.mask_spec.style.value
        if ms["radius_range"] is not None:
            ms["radius_range"] = list(ms["radius_range"])
        d["mask_spec"] = ms
        return d

    @classmethod
    def from_echo(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss_weights"] = LossWeights(**d["loss_weights"])
        ms = dict(d["mask_spec"])
        ms["style"] = MaskStyle(ms["style"])
        if ms["radius_range"] is not None:
            ms["radius_range"] = tuple(ms["radius_range"])
        d["mask_spec"] = MaskSpec(**ms)
        return cls(**d)


@dataclass
class StepReport:
    step: int
    gen_loss: float
    rec_loss: float
    adv_loss: float
    disc_loss: float = math.nan
    disc_accuracy: float = math.nan
    disc_updated: bool = False


@dataclass
class RunResult:
    out_dir: Path
    csv_path: Path
    checkpoint_path: Path
    reports: List[MetricReport]
    step_reports: List[StepReport]


def _targets_tensor(maps: Sequence[NormalMap]) -> torch.Tensor:
    stack = np.stack([m.vectors for m in maps]).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(stack))


def _inputs_tensor(maps: Sequence[NormalMap], masks: Sequence[OcclusionMask],
                   use_mask_channel: bool) -> torch.Tensor:
    planes = []
    for m, mask in zip(maps, masks):
        masked = apply_mask(m, mask)
        if use_mask_channel:
            masked = concat_mask_channel(masked, mask)
        planes.append(masked.transpose(2, 0, 1))
    return torch.from_numpy(np.ascontiguousarray(np.stack(planes)))


def _occlusion_tensor(masks: Sequence[OcclusionMask]) -> torch.Tensor:
    stack = np.stack([m.values for m in masks]).astype(np.float32)
    return torch.from_numpy(stack)


def _train_masks(cfg: TrainConfig, global_step: int, n: int) -> List[OcclusionMask]:
    return [generate_mask(dataclasses.replace(
                cfg.mask_spec,
                rng_seed=_derive_seed(cfg.rng_seed, _STREAM_MASK, global_step, k)),
            cfg.image_size, cfg.image_size) for k in range(n)]


def eval_masks(cfg: TrainConfig, n: int) -> List[OcclusionMask]:
    """Fixed per-sample evaluation masks, identical across epochs."""
    return [generate_mask(dataclasses.replace(
                cfg.mask_spec,
                rng_seed=_derive_seed(cfg.rng_seed, _STREAM_EVAL_MASK, k)),
            cfg.image_size, cfg.image_size) for k in range(n)]


def build_networks(cfg: TrainConfig):
    """Construct and deterministically initialize the two networks."""
    gen = GeneratorNet(input_channels=4 if cfg.use_mask_channel else 3,
                       base_width=cfg.base_width, depth=cfg.depth,
                       skip_connections=cfg.skip_connections)
    disc = DiscriminatorNet(base_width=cfg.base_width, depth=cfg.depth,
                            image_size=cfg.image_size)
    init_parameters(gen, _derive_seed(cfg.rng_seed, _STREAM_INIT_GEN))
    init_parameters(disc, _derive_seed(cfg.rng_seed, _STREAM_INIT_DISC))
    return gen, disc


def _reconstruction(cfg: TrainConfig, targets, generated, occlusion):
    if cfg.masked_only:
        dots = (targets * generated).sum(dim=1)
        occluded = 1.0 - occlusion
        weight = occluded.sum().clamp(min=1.0)
        return ((1.0 - dots) * occluded).sum() / weight
    return losses.reconstruction_loss(targets, generated,
                                      cfg.reconstruction_variant)


def train_step(gen: GeneratorNet, disc: DiscriminatorNet,
               gen_state: AdamState, disc_state: AdamState,
               batch: Sequence[NormalMap], cfg: TrainConfig,
               global_step: int,
               acc_window: Optional[Deque[float]] = None) -> StepReport:
    """One generator update plus a discriminator update when due.

    Masks are drawn fresh per image from the (seed, step, sample) stream.
    The discriminator sees generated images detached from the generator's
    graph, so neither update can touch the other network's parameters.
    """
    if not batch:
        raise ValueError("empty batch")
    masks = _train_masks(cfg, global_step, len(batch))
    targets = _targets_tensor(batch)
    inputs = _inputs_tensor(batch, masks, cfg.use_mask_channel)
    occlusion = _occlusion_tensor(masks)

    gen.train()
    disc.train()
    generated = gen(inputs)
    rec = _reconstruction(cfg, targets, generated, occlusion)
    adv = adversarial_loss_generator(disc(generated))
    total = total_generator_loss(rec, adv, cfg.loss_weights)
    if not torch.isfinite(total):
        raise TrainingDiverged(f"generator loss non-finite at step {global_step}: "
                               f"rec={rec.item()} adv={adv.item()}")
    grads = parameter_gradients(total, gen)
    adam_step(gen_state, dict(gen.named_parameters()), grads)

    report = StepReport(step=global_step, gen_loss=total.item(),
                        rec_loss=rec.item(), adv_loss=adv.item())
    if global_step % cfg.disc_update_period == 0:
        real_probs = disc(targets)
        fake_probs = disc(generated.detach())
        acc = discriminator_accuracy(real_probs.detach().numpy(),
                                     fake_probs.detach().numpy())
        report.disc_accuracy = acc
        if acc_window is not None:
            acc_window.append(acc)
        gated = (cfg.disc_accuracy_gate is not None and acc_window
                 and sum(acc_window) / len(acc_window) > cfg.disc_accuracy_gate)
        if not gated:
            dloss = discriminator_loss(real_probs, fake_probs)
            if not torch.isfinite(dloss):
                raise TrainingDiverged(
                    f"discriminator loss non-finite at step {global_step}")
            dgrads = parameter_gradients(dloss, disc)
            adam_step(disc_state, dict(disc.named_parameters()), dgrads)
            report.disc_loss = dloss.item()
            report.disc_updated = True
    return report


def evaluate(gen: GeneratorNet, disc: DiscriminatorNet,
             eval_set: Sequence[NormalMap], cfg: TrainConfig,
             epoch: int = 0) -> MetricReport:
    """Eval-mode metrics on a fixed-mask evaluation set.

    SSIM/PSNR compare full images in [0, 1] encoding; the angular error is
    restricted to occluded pixels; discriminator accuracy is measured on
    real versus generated images at threshold 0.5.
    """
    if not eval_set:
        raise ValueError("empty evaluation set")
    masks = eval_masks(cfg, len(eval_set))
    ssims, psnrs, maes = [], [], []
    real_probs, fake_probs = [], []
    gen.eval()
    disc.eval()
    with torch.no_grad():
        for start in range(0, len(eval_set), cfg.batch_size):
            chunk = list(eval_set[start:start + cfg.batch_size])
            chunk_masks = masks[start:start + cfg.batch_size]
            targets = _targets_tensor(chunk)
            inputs = _inputs_tensor(chunk, chunk_masks, cfg.use_mask_channel)
            preds = gen(inputs)
            real_probs.append(disc(targets).numpy())
            fake_probs.append(disc(preds).numpy())
            preds_np = preds.numpy().transpose(0, 2, 3, 1)
            for i, m in enumerate(chunk):
                pred = preds_np[i]
                ssims.append(ssim(to_unit_interval(m.vectors), to_unit_interval(pred)))
                psnrs.append(psnr(to_unit_interval(m.vectors), to_unit_interval(pred)))
                maes.append(masked_mean_angular_error(
                    m.vectors, pred, chunk_masks[i].values == 0))
    acc = discriminator_accuracy(np.concatenate(real_probs),
                                 np.concatenate(fake_probs))
    return MetricReport(ssim=float(np.mean(ssims)), psnr=float(np.mean(psnrs)),
                        disc_accuracy=acc, mean_angular_error=float(np.mean(maes)),
                        epoch=epoch)


def emit_panel(target: NormalMap, masked: np.ndarray, predicted: np.ndarray,
               mask: OcclusionMask, path=None) -> np.ndarray:
    """Four-quadrant comparison image: target | masked | predicted | composite.

    The composite shows the prediction only where the mask says "occluded"
    and the target everywhere else.  Quadrants are separated by 2-px white
    columns, so the panel is 4 * W + 6 pixels wide.
    """
    h, w = target.height, target.width
    if masked.shape[:2] != (h, w) or predicted.shape[:2] != (h, w) \
            or (mask.height, mask.width) != (h, w):
        raise ValueError("panel inputs must share the target's dimensions")
    known = mask.values[..., None].astype(np.float32)
    composite = known * target.vectors + (1.0 - known) * predicted
    quadrants = [normal_to_rgb(target.vectors), normal_to_rgb(masked),
                 normal_to_rgb(predicted), normal_to_rgb(composite)]
    separator = np.full((h, PANEL_SEPARATOR, 3), 255, dtype=np.uint8)
    strips = []
    for k, q in enumerate(quadrants):
        if k:
            strips.append(separator)
        strips.append(q)
    panel = np.concatenate(strips, axis=1)
    if path is not None:
        Image.fromarray(panel, mode="RGB").save(path, format="PNG")
    return panel


def _collect_state(gen, disc, gen_state, disc_state):
    tensors = {}
    for prefix, net, state in (("gen", gen, gen_state), ("disc", disc, disc_state)):
        for name, p in net.named_parameters():
            tensors[f"{prefix}.param.{name}"] = p.detach().numpy().copy()
            tensors[f"{prefix}.adam_m.{name}"] = state.m[name].numpy().copy()
            tensors[f"{prefix}.adam_v.{name}"] = state.v[name].numpy().copy()
        for name, b in net.named_buffers():
            tensors[f"{prefix}.buffer.{name}"] = b.detach().numpy().copy()
    return tensors


def _restore_state(tensors, gen, disc, gen_state, disc_state):
    with torch.no_grad():
        for prefix, net, state in (("gen", gen, gen_state),
                                   ("disc", disc, disc_state)):
            for name, p in net.named_parameters():
                p.copy_(torch.from_numpy(tensors[f"{prefix}.param.{name}"]))
                state.m[name] = torch.from_numpy(
                    tensors[f"{prefix}.adam_m.{name}"]).clone()
                state.v[name] = torch.from_numpy(
                    tensors[f"{prefix}.adam_v.{name}"]).clone()
            for name, b in net.named_buffers():
                b.copy_(torch.from_numpy(tensors[f"{prefix}.buffer.{name}"]))


def _adam_meta(state: AdamState) -> dict:
    return {"learning_rate": state.learning_rate, "beta1": state.beta1,
            "beta2": state.beta2, "eps": state.eps, "step": state.step}


def save_training_checkpoint(path, cfg: TrainConfig, gen, disc, gen_state,
                             disc_state, epoch: int, global_step: int,
                             acc_window) -> None:
    meta = {
        "config": cfg.echo(),
        "epoch": epoch,
        "global_step": global_step,
        "gen_adam": _adam_meta(gen_state),
        "disc_adam": _adam_meta(disc_state),
        "acc_window": list(acc_window),
    }
    ckpt.save_checkpoint(path, _collect_state(gen, disc, gen_state, disc_state), meta)


def load_training_checkpoint(path, cfg: TrainConfig, gen, disc, gen_state,
                             disc_state):
    """Restore networks and optimizer state; returns (epoch, step, window)."""
    tensors, meta = ckpt.load_checkpoint(path)
    if meta["config"] != cfg.echo():
        raise ValueError("checkpoint was written with a different configuration")
    _restore_state(tensors, gen, disc, gen_state, disc_state)
    for state, key in ((gen_state, "gen_adam"), (disc_state, "disc_adam")):
        state.learning_rate = meta[key]["learning_rate"]
        state.beta1 = meta[key]["beta1"]
        state.beta2 = meta[key]["beta2"]
        state.eps = meta[key]["eps"]
        state.step = meta[key]["step"]
    window = deque(meta["acc_window"], maxlen=_ACC_WINDOW)
    return meta["epoch"], meta["global_step"], window


def run_training(cfg: TrainConfig, train_maps: Sequence[NormalMap],
                 eval_maps: Sequence[NormalMap], out_dir,
                 resume=None, panel_images: int = 4,
                 log=None) -> RunResult:
    """Full pipeline: augment x4, epoch loop, periodic eval/panels/checkpoints.

    Writes ``metrics.csv`` (one row per evaluation), ``metrics.png``,
    ``panels/`` and ``checkpoints/`` under ``out_dir``.  ``resume`` continues
    from a checkpoint written by a run with the same configuration and
    reproduces the uninterrupted trajectory exactly.
    """
    if not train_maps:
        raise ValueError("empty training dataset")
    if not eval_maps:
        raise ValueError("empty evaluation dataset")
    for m in list(train_maps) + list(eval_maps):
        if (m.height, m.width) != (cfg.image_size, cfg.image_size):
            raise ValueError(f"dataset images are {(m.height, m.width)}, "
                             f"config expects {cfg.image_size}")

    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "panels").mkdir(exist_ok=True)
    csv_path = out_dir / "metrics.csv"

    augmented = expand_dataset(list(train_maps), AugmentParams(rng_seed=cfg.rng_seed))
    gen, disc = build_networks(cfg)
    gen_state = AdamState.for_network(gen, cfg.learning_rate)
    disc_state = AdamState.for_network(disc, cfg.learning_rate)
    acc_window: Deque[float] = deque(maxlen=_ACC_WINDOW)
    start_epoch = 0
    global_step = 0
    if resume is not None:
        start_epoch, global_step, acc_window = load_training_checkpoint(
            resume, cfg, gen, disc, gen_state, disc_state)

    reports: List[MetricReport] = []
    step_reports: List[StepReport] = []
    csv_rows = [CSV_HEADER]
    figure_rows: List[dict] = []
    n = len(augmented)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    out_of_steps = cfg.max_steps is not None and global_step >= cfg.max_steps
    completed = start_epoch

    for epoch in range(start_epoch, cfg.epochs):
        if out_of_steps:
            break
        perm = np.random.default_rng(
            _derive_seed(cfg.rng_seed, _STREAM_PERM, epoch)).permutation(n)
        epoch_steps: List[StepReport] = []
        for b in range(steps_per_epoch):
            if cfg.max_steps is not None and global_step >= cfg.max_steps:
                out_of_steps = True
                break
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = [augmented[i] for i in idx]
            rep = train_step(gen, disc, gen_state, disc_state, batch, cfg,
                             global_step, acc_window)
            epoch_steps.append(rep)
            step_reports.append(rep)
            global_step += 1

        completed = epoch + 1
        is_last = completed == cfg.epochs or out_of_steps
        if completed % cfg.eval_every == 0 or is_last:
            report = evaluate(gen, disc, eval_maps, cfg, epoch=completed)
            reports.append(report)
            gen_loss = _nanmean([r.gen_loss for r in epoch_steps])
            rec_loss = _nanmean([r.rec_loss for r in epoch_steps])
            adv_loss = _nanmean([r.adv_loss for r in epoch_steps])
            disc_loss = _nanmean([r.disc_loss for r in epoch_steps])
            row = format_csv_row(completed, gen_loss, rec_loss, adv_loss,
                                 disc_loss, report.ssim, report.psnr,
                                 report.disc_accuracy, report.mean_angular_error)
            csv_rows.append(row)
            figure_rows.append({
                "epoch": completed, "gen_loss": gen_loss, "rec_loss": rec_loss,
                "adv_loss": adv_loss, "disc_loss": disc_loss,
                "ssim": report.ssim, "psnr": report.psnr,
                "disc_acc": report.disc_accuracy,
                "mae_deg": report.mean_angular_error})
            if log:
                log.info("epoch %d: %s", completed, row)
            save_training_checkpoint(
                out_dir / "checkpoints" / f"epoch_{completed:04d}.ckpt",
                cfg, gen, disc, gen_state, disc_state, completed, global_step,
                acc_window)
        if cfg.panel_every and (completed % cfg.panel_every == 0 or is_last):
            emit_eval_panels(gen, eval_maps, cfg, out_dir / "panels",
                             epoch=completed, limit=panel_images)

    csv_path.write_text("\n".join(csv_rows) + "\n")
    final = out_dir / "checkpoints" / "final.ckpt"
    save_training_checkpoint(final, cfg, gen, disc, gen_state, disc_state,
                             completed, global_step, acc_window)
    if figure_rows:
        render_metrics_figure(figure_rows, out_dir / "metrics.png")
    return RunResult(out_dir=out_dir, csv_path=csv_path, checkpoint_path=final,
                     reports=reports, step_reports=step_reports)


def emit_eval_panels(gen: GeneratorNet, eval_maps: Sequence[NormalMap],
                     cfg: TrainConfig, panels_dir, epoch: int,
                     limit: int = 4) -> List[Path]:
    """Render comparison panels for the first few evaluation images."""
    panels_dir = Path(panels_dir)
    panels_dir.mkdir(parents=True, exist_ok=True)
    masks = eval_masks(cfg, min(limit, len(eval_maps)))
    paths = []
    gen.eval()
    with torch.no_grad():
        for i, (m, mask) in enumerate(zip(eval_maps[:limit], masks)):
            inputs = _inputs_tensor([m], [mask], cfg.use_mask_channel)
            pred = gen(inputs).numpy()[0].transpose(1, 2, 0)
            masked = apply_mask(m, mask)
            path = panels_dir / f"epoch_{epoch:04d}_img{i}.png"
            emit_panel(m, masked, pred, mask, path)
            paths.append(path)
    return paths


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan

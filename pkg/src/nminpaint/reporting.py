"""Metric logs and figures emitted by the training/evaluation report path."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

CSV_HEADER = "epoch,gen_loss,rec_loss,adv_loss,disc_loss,ssim,psnr,disc_acc,mae_deg"


def format_csv_row(epoch: int, gen_loss: float, rec_loss: float, adv_loss: float,
                   disc_loss: float, ssim: float, psnr: float, disc_acc: float,
                   mae_deg: float) -> str:
    values = [gen_loss, rec_loss, adv_loss, disc_loss, ssim, psnr, disc_acc, mae_deg]
    return ",".join([str(epoch)] + [f"{v:.6f}" for v in values])


def read_metrics_csv(path) -> List[Dict[str, float]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({k: (int(v) if k == "epoch" else float(v))
                         for k, v in rec.items()})
    return rows


def render_metrics_figure(rows: List[Dict[str, float]], out_png) -> None:
    """Plot the training curves (losses, SSIM, PSNR, accuracy/error) to PNG."""
    out_png = Path(out_png)
    epochs = [r["epoch"] for r in rows]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))

    ax = axes[0, 0]
    ax.plot(epochs, [r["gen_loss"] for r in rows], label="generator")
    ax.plot(epochs, [r["disc_loss"] for r in rows], label="discriminator")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.set_title("Adversarial training losses")

    ax = axes[0, 1]
    ax.plot(epochs, [r["rec_loss"] for r in rows], label="reconstruction")
    ax.plot(epochs, [r["adv_loss"] for r in rows], label="adversarial")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    ax.set_title("Generator loss components")

    ax = axes[1, 0]
    ax.plot(epochs, [r["ssim"] for r in rows], label="SSIM")
    ax.set_xlabel("epoch")
    ax.set_ylabel("SSIM")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["psnr"] for r in rows], color="tab:orange", label="PSNR")
    ax2.set_ylabel("PSNR (dB)")
    ax.set_title("Image quality")

    ax = axes[1, 1]
    ax.plot(epochs, [r["disc_acc"] for r in rows], label="disc accuracy")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["mae_deg"] for r in rows], color="tab:red",
             label="angular error")
    ax2.set_ylabel("mean angular error (deg)")
    ax.set_title("Discriminator accuracy / angular error")

    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)

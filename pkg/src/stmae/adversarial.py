"""Least-squares patch discriminator.

Real frames are pushed to 1 and predicted
frames to 0, and the generator tries to make its predictions score 1.
Per-patch terms are averaged rather than summed.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class PatchDiscriminator(nn.Module):
    """Four strided conv stages and a 1-channel score map, one score per patch."""

    def __init__(self, in_channels: int = 3, channels: tuple[int, ...] = (32, 64, 128), slope: float = 0.2):
        super().__init__()
        layers, c = [], in_channels
        for i, cout in enumerate(channels):
            layers += [nn.Conv2d(c, cout, 4, 2, 1, bias=i == 0)]
            if i > 0:
                layers.append(nn.BatchNorm2d(cout))
            layers.append(nn.LeakyReLU(slope))
            c = cout
        layers.append(nn.Conv2d(c, 1, 3, 1, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def lsgan_generator_loss(scores_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * ((scores_fake - 1.0) ** 2).mean()


def lsgan_discriminator_loss(scores_real: torch.Tensor, scores_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * ((scores_real - 1.0) ** 2).mean() + 0.5 * (scores_fake**2).mean()


def generator_adv_loss(disc: nn.Module, pred_frame: torch.Tensor) -> torch.Tensor:
    """Gradients reach the generator through ``pred_frame``; the caller keeps D's
    parameters out of the generator optimizer."""
    return lsgan_generator_loss(disc(pred_frame))


def discriminator_loss(disc: nn.Module, real_frame: torch.Tensor, pred_frame: torch.Tensor) -> torch.Tensor:
    return lsgan_discriminator_loss(disc(real_frame), disc(pred_frame.detach()))

"""Two-stream convolutional autoencoders and the joint prediction decoder.

Tensors are channels-first. A clip of ``k_in`` RGB frames enters the
appearance encoder as ``(B, 3*k_in, H, W)``; its consecutive flows enter the
motion encoder as ``(B, 2*(k_in-1), H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class EncoderSpec:
    channels: tuple[int, ...] = (32, 64, 128, 128)
    feature_channels: int = 128
    strides: tuple[int, ...] = (1, 2, 2, 2, 1)
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.strides = tuple(self.strides)
        if len(self.channels) + 1 != 5 or len(self.strides) != 5:
            raise ValueError("the encoder has exactly 5 stages")
        if self.leaky_slope <= 0:
            raise ValueError("encoder activations must keep negative values (leaky_slope > 0)")

    @property
    def downsampling(self) -> int:
        f = 1
        for s in self.strides:
            f *= s
        return f

    @property
    def stage_channels(self) -> tuple[int, ...]:
        return self.channels + (self.feature_channels,)


def conv_bn_act(cin: int, cout: int, stride: int, act: nn.Module) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, stride, 1, bias=False), nn.BatchNorm2d(cout), act)


def up_bn_act(cin: int, cout: int, act: nn.Module) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 3, 2, 1, output_padding=1, bias=False), nn.BatchNorm2d(cout), act
    )


class Encoder(nn.Module):
    def __init__(self, in_channels: int, spec: EncoderSpec | None = None):
        super().__init__()
        self.spec = spec = spec or EncoderSpec()
        stages, c = [], in_channels
        for cout, s in zip(spec.stage_channels, spec.strides):
            stages.append(conv_bn_act(c, cout, s, nn.LeakyReLU(spec.leaky_slope)))
            c = cout
        self.stages = nn.Sequential(*stages)
        self.in_channels = in_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        d = self.spec.downsampling
        if x.shape[-1] % d or x.shape[-2] % d:
            raise ValueError(f"spatial dims {tuple(x.shape[-2:])} not divisible by {d}")
        return self.stages(x)


def _decoder_plan(in_channels: int, enc: EncoderSpec, stages: int) -> list[tuple[int, int, bool]]:
    """(cin, cout, upsample) per hidden stage, mirroring the encoder."""
    rev = list(reversed(enc.channels))  # 128, 128, 64, 32
    ups = sum(1 for s in enc.strides if s == 2)
    plan, c = [], in_channels
    # first stage keeps resolution, then one stage per x2 upsample
    plan.append((c, rev[0], False))
    c = rev[0]
    for i in range(ups):
        cout = rev[min(i + 1, len(rev) - 1)]
        plan.append((c, cout, True))
        c = cout
    while len(plan) < stages - 1:
        plan.append((c, c, False))
    return plan


class _Decoder(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, num_stages: int, spec: EncoderSpec | None, bounded: bool):
        super().__init__()
        spec = spec or EncoderSpec()
        layers = []
        for cin, cout, up in _decoder_plan(in_channels, spec, num_stages):
            layers.append(up_bn_act(cin, cout, nn.ReLU()) if up else conv_bn_act(cin, cout, 1, nn.ReLU()))
        last = layers[-1][0].out_channels
        layers.append(nn.Sequential(nn.Conv2d(last, out_channels, 3, 1, 1)))
        if len(layers) != num_stages:
            raise ValueError(f"decoder plan produced {len(layers)} stages, wanted {num_stages}")
        self.stages = nn.Sequential(*layers)
        self.bounded = bounded

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.stages(x)
        return torch.sigmoid(y) if self.bounded else y


class PretrainDecoder(_Decoder):
    """Six-stage decoder for the denoising / flow-reconstruction pretext tasks."""

    def __init__(self, out_channels: int, spec: EncoderSpec | None = None, bounded: bool = True):
        spec = spec or EncoderSpec()
        super().__init__(spec.feature_channels, out_channels, 6, spec, bounded)


class JointDecoder(_Decoder):
    """Five-stage decoder mapping aggregated ``4C`` features to one RGB frame in [0, 1]."""

    def __init__(self, spec: EncoderSpec | None = None, out_channels: int = 3):
        spec = spec or EncoderSpec()
        super().__init__(4 * spec.feature_channels, out_channels, 5, spec, bounded=True)


def aggregate(z_a: torch.Tensor, za_hat: torch.Tensor, z_m: torch.Tensor, zm_hat: torch.Tensor) -> torch.Tensor:
    """Channel concatenation in the fixed order ``[z_a, z_a_hat, z_m, z_m_hat]``."""
    return torch.cat([z_a, za_hat, z_m, zm_hat], dim=1)


def mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return F.mse_loss(pred, target, reduction="mean")


def stack_frames(frames: torch.Tensor) -> torch.Tensor:
    """``(B, k, 3, H, W) -> (B, 3k, H, W)``."""
    return frames.reshape(frames.shape[0], -1, *frames.shape[-2:])


@dataclass
class TwoStreamSpec:
    k_in: int = 4
    encoder: EncoderSpec = field(default_factory=EncoderSpec)

    @property
    def appearance_channels(self) -> int:
        return 3 * self.k_in

    @property
    def motion_channels(self) -> int:
        return 2 * (self.k_in - 1)


class AppearanceAE(nn.Module):
    """Denoising autoencoder over stacked RGB clips."""

    def __init__(self, spec: TwoStreamSpec | None = None):
        super().__init__()
        spec = spec or TwoStreamSpec()
        self.encoder = Encoder(spec.appearance_channels, spec.encoder)
        self.decoder = PretrainDecoder(spec.appearance_channels, spec.encoder, bounded=True)

    def forward(self, x):
        return self.decoder(self.encoder(x))


class MotionAE(nn.Module):
    """Flow reconstruction autoencoder; output is unbounded (flow units)."""

    def __init__(self, spec: TwoStreamSpec | None = None):
        super().__init__()
        spec = spec or TwoStreamSpec()
        self.encoder = Encoder(spec.motion_channels, spec.encoder)
        self.decoder = PretrainDecoder(spec.motion_channels, spec.encoder, bounded=False)

    def forward(self, x):
        return self.decoder(self.encoder(x))


def pretrain_appearance_loss(ae: AppearanceAE, noisy: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    """Denoising objective: MSE between the reconstruction of ``noisy`` and ``clean``."""
    return mse(ae(noisy), clean)


def pretrain_motion_loss(ae: MotionAE, flows: torch.Tensor) -> torch.Tensor:
    return mse(ae(flows), flows)

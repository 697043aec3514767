"""Anisotropic 3D-UNet for two-zone segmentation.

Three-level encoder/decoder with skip connections. The highest
resolution level uses in-plane 2D convolutions (kernel extent 1 along
z) to reflect the thick-slice anisotropy; deeper levels use full 3D
kernels. Spatial path: 36x36x18 -> 18x18x9 -> 9x9x5 and back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .volgrid import ProbVolume, Volume

INPUT_SHAPE = (36, 36, 18)


@dataclass(frozen=True)
class UnetConfig:
    filters: tuple[int, int, int] = (16, 32, 64)
    l2_coefficient: float = 1e-5
    seed: int = 0


def _block(in_ch, out_ch, kernel, padding):
    return nn.Sequential(
        nn.Conv3d(in_ch, out_ch, kernel, padding=padding), nn.ReLU(),
        nn.Conv3d(out_ch, out_ch, kernel, padding=padding), nn.ReLU(),
    )


class ZoneUnet(nn.Module):
    """(N, 1, 36, 36, 18) image -> (N, 3, 36, 36, 18) class probabilities."""

    def __init__(self, cfg: UnetConfig = UnetConfig()):
        super().__init__()
        self.cfg = cfg
        f0, f1, f2 = cfg.filters
        torch.manual_seed(cfg.seed)
        # level 0 is 2D in-plane: kernel (3, 3, 1)
        self.enc0 = _block(1, f0, (3, 3, 1), (1, 1, 0))
        self.down0 = nn.Conv3d(f0, f1, 3, stride=2, padding=1)  # -> 18,18,9
        self.enc1 = _block(f1, f1, 3, 1)
        self.down1 = nn.Conv3d(f1, f2, 3, stride=2, padding=1)  # -> 9,9,5
        self.bottleneck = _block(f2, f2, 3, 1)
        self.up1 = nn.ConvTranspose3d(f2, f1, 3, stride=2, padding=1,
                                      output_padding=(1, 1, 0))  # -> 18,18,9
        self.dec1 = _block(2 * f1, f1, 3, 1)
        self.up0 = nn.ConvTranspose3d(f1, f0, 3, stride=2, padding=1,
                                      output_padding=(1, 1, 1))  # -> 36,36,18
        self.dec0 = _block(2 * f0, f0, (3, 3, 1), (1, 1, 0))
        self.head = nn.Conv3d(f0, 3, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1:] != (1,) + INPUT_SHAPE:
            raise ValueError(f"expected (N, 1, 36, 36, 18) input, got {tuple(x.shape)}")
        s0 = self.enc0(x)
        s1 = self.enc1(torch.relu(self.down0(s0)))
        b = self.bottleneck(torch.relu(self.down1(s1)))
        d1 = self.up1(b)
        assert d1.shape[2:] == s1.shape[2:], "skip shapes misaligned at level 1"
        d1 = self.dec1(torch.cat([d1, s1], dim=1))
        d0 = self.up0(d1)
        assert d0.shape[2:] == s0.shape[2:], "skip shapes misaligned at level 0"
        d0 = self.dec0(torch.cat([d0, s0], dim=1))
        return torch.softmax(self.head(d0), dim=1)


def init_unet(cfg: UnetConfig = UnetConfig()) -> ZoneUnet:
    """Deterministically initialized segmentation network."""
    return ZoneUnet(cfg)


def l2_penalty(model: nn.Module, coefficient: float) -> torch.Tensor:
    """coefficient * sum of squared convolution kernel weights (no biases)."""
    if coefficient < 0:
        raise ValueError("coefficient must be >= 0")
    total = torch.zeros((), dtype=torch.float32)
    for name, p in model.named_parameters():
        if name.endswith("weight"):
            total = total + (p.to(total.dtype) ** 2).sum()
    return coefficient * total


def unet_forward(model: ZoneUnet, image: Volume) -> ProbVolume:
    """Per-voxel class probabilities for a normalized working-grid image."""
    if image.shape != INPUT_SHAPE:
        raise ValueError(f"expected image shape {INPUT_SHAPE}, got {image.shape}")
    x = torch.from_numpy(np.ascontiguousarray(image.data, dtype=np.float32))
    with torch.no_grad():
        probs = model(x[None, None])[0]
    return ProbVolume(
        probs.numpy().transpose(1, 2, 3, 0), image.spacing, image.origin
    )


def predict_labels(model: ZoneUnet, image: Volume):
    """Hard label map via channel argmax."""
    from .volgrid import argmax_labels

    return argmax_labels(unet_forward(model, image))

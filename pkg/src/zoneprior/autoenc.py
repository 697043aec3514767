"""Fully convolutional shape autoencoder.

Maps a 36x36x18x2 zone mask stack to a 9x9x5xK encoding and back.
Two strided-convolution stages realize 36 -> 18 -> 9 in-plane and
18 -> 9 -> 5 in z (the second z stride rounds up via padding).
Latent activation is linear so a squared-distance latent loss operates
on an unconstrained space; the output is logistic per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

INPUT_SHAPE = (36, 36, 18)
LATENT_SHAPE = (9, 9, 5)


@dataclass(frozen=True)
class AeConfig:
    latent_channels: int = 1
    filters: tuple[int, int] = (16, 32)
    seed: int = 0


class ShapeAutoencoder(nn.Module):
    """Encoder/decoder over (N, 2, 36, 36, 18) mask tensors."""

    def __init__(self, cfg: AeConfig = AeConfig()):
        super().__init__()
        self.cfg = cfg
        f0, f1 = cfg.filters
        k = cfg.latent_channels
        torch.manual_seed(cfg.seed)
        self.encoder = nn.Sequential(
            nn.Conv3d(2, f0, 3, padding=1), nn.ReLU(),
            nn.Conv3d(f0, f0, 3, stride=2, padding=1), nn.ReLU(),  # 36,36,18 -> 18,18,9
            nn.Conv3d(f0, f1, 3, padding=1), nn.ReLU(),
            nn.Conv3d(f1, f1, 3, stride=2, padding=1), nn.ReLU(),  # 18,18,9 -> 9,9,5
            nn.Conv3d(f1, k, 1),  # linear latent
        )
        self.decoder = nn.Sequential(
            nn.ConvTranspose3d(k, f1, 3, stride=2, padding=1,
                               output_padding=(1, 1, 0)), nn.ReLU(),  # 9,9,5 -> 18,18,9
            nn.Conv3d(f1, f0, 3, padding=1), nn.ReLU(),
            nn.ConvTranspose3d(f0, f0, 3, stride=2, padding=1,
                               output_padding=(1, 1, 1)), nn.ReLU(),  # -> 36,36,18
            nn.Conv3d(f0, f0, 3, padding=1), nn.ReLU(),
            nn.Conv3d(f0, 2, 1), nn.Sigmoid(),
        )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1:] != (2,) + INPUT_SHAPE:
            raise ValueError(f"expected (N, 2, 36, 36, 18) input, got {tuple(x.shape)}")
        return self.encoder(x)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[1:] != (self.cfg.latent_channels,) + LATENT_SHAPE:
            raise ValueError(f"expected (N, K, 9, 9, 5) encoding, got {tuple(z.shape)}")
        return self.decoder(z)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))

    def rescale_latent(self, s: float) -> None:
        """Divide the encoding by s without changing reconstructions.

        The latent layer is linear and the decoder's first layer is
        linear in the encoding, so scaling one down and the other up is
        an exact reparameterization. Used to calibrate the encoding to
        unit scale so a squared-distance latent loss is commensurate
        with voxel-mean pixel losses.
        """
        if s <= 0:
            raise ValueError("scale must be positive")
        with torch.no_grad():
            self.encoder[-1].weight /= s
            self.encoder[-1].bias /= s
            self.decoder[0].weight *= s


def init_autoencoder(cfg: AeConfig = AeConfig()) -> ShapeAutoencoder:
    """Deterministically initialized autoencoder."""
    return ShapeAutoencoder(cfg)


# numpy convenience wrappers over (nx, ny, nz, C) channel-last arrays

def _to_tensor(stack: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(
        stack.transpose(3, 0, 1, 2), dtype=np.float32))[None]


def _to_numpy(t: torch.Tensor) -> np.ndarray:
    return t[0].detach().numpy().transpose(1, 2, 3, 0)


def encode(model: ShapeAutoencoder, mask_stack: np.ndarray) -> np.ndarray:
    """(36,36,18,2) mask stack -> (9,9,5,K) encoding."""
    with torch.no_grad():
        return _to_numpy(model.encode(_to_tensor(mask_stack)))


def decode(model: ShapeAutoencoder, encoding: np.ndarray) -> np.ndarray:
    """(9,9,5,K) encoding -> (36,36,18,2) soft mask stack."""
    with torch.no_grad():
        return _to_numpy(model.decode(_to_tensor(encoding)))


def ae_forward(model: ShapeAutoencoder, mask_stack: np.ndarray) -> np.ndarray:
    """Reconstruction: decode(encode(stack))."""
    with torch.no_grad():
        return _to_numpy(model(_to_tensor(mask_stack)))

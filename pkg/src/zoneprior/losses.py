"""Training objectives.

All losses are voxel means (not sums) so the global-loss weight is
scale-comparable across grid sizes. Functions accept channel-last
torch tensors and are differentiable; numpy inputs are converted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class LossConfig:
    class_weights: tuple[float, float, float] = (1.0, 2.0, 6.0)  # bg, TZ, PZ
    global_weight: float = 0.2
    schedule: str = "constant"  # or "linear"
    eps: float = 1e-7

    def __post_init__(self):
        if any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if self.global_weight < 0:
            raise ValueError("global weight must be >= 0")
        if not 0.0 < self.eps < 1e-3:
            raise ValueError("eps must be in (0, 1e-3)")
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


def bce(pred, target, eps: float = 1e-7) -> torch.Tensor:
    """Mean binary cross-entropy over all voxels and channels."""
    p = _as_tensor(pred)
    t = _as_tensor(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    p = p.clamp(eps, 1.0 - eps)
    return -(t * p.log() + (1.0 - t) * (1.0 - p).log()).mean()


def weighted_cce(pred, target, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Class-weighted categorical cross-entropy, mean over voxels.

    ``target`` must be one-hot over the last (class) axis.
    """
    p = _as_tensor(pred)
    t = _as_tensor(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    t_detached = t.detach()
    if not (
        torch.all((t_detached == 0) | (t_detached == 1))
        and torch.allclose(t_detached.sum(dim=-1), torch.ones_like(t_detached.sum(dim=-1)))
    ):
        raise ValueError("target is not one-hot")
    weights = torch.as_tensor(cfg.class_weights, dtype=p.dtype, device=p.device)
    p = p.clamp(cfg.eps, 1.0)
    nll = -(t * p.log()).sum(dim=-1)
    w = (t * weights).sum(dim=-1)
    return (w * nll).mean()


def latent_loss(e_pred, e_gt) -> torch.Tensor:
    """Mean squared difference between two encodings."""
    a = _as_tensor(e_pred)
    b = _as_tensor(e_gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def combined_loss(pix, glob, lam: float):
    """pixel + lam * global, exactly."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return pix + lam * glob


def global_weight_schedule(cfg: LossConfig, epoch: int, total: int) -> float:
    """Global-loss weight for an epoch; linear mode decays to 0."""
    if total < 1:
        raise ValueError("total epochs must be >= 1")
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    if cfg.schedule == "constant" or total == 1:
        return cfg.global_weight
    return max(cfg.global_weight * (1.0 - epoch / (total - 1)), 0.0)

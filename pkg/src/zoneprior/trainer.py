"""Training procedures: autoencoder pretraining and constrained
segmenter training, plus dataset splitting, checkpointing, and logging.

The segmenter's per-step loss is
    weighted_cce + lambda(epoch) * latent_loss + l2_penalty
with the pre-trained encoder frozen; soft (pre-argmax) predictions are
fed to the encoder so the global term stays differentiable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import autoenc, segnet
from .augment import AugmentSpec, apply_transform, sample_transform
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    params_to_model,
    save_checkpoint,
    state_to_params,
)
from .losses import (
    LossConfig,
    bce,
    global_weight_schedule,
    latent_loss,
    weighted_cce,
)
from .metrics import CaseResult, DiceReport, aggregate_report, dice, per_class_dice
from .volgrid import (
    LabelVolume,
    Manifest,
    ValidationError,
    Volume,
    load_case,
    load_manifest,
    to_mask_stack,
)

CSV_COLUMNS = ["epoch", "split", "loss_total", "loss_pix", "loss_global",
               "dice_tz", "dice_pz"]


@dataclass
class RunConfig:
    manifest_path: str = ""
    out_dir: str = "runs"
    split_ratio: float = 0.8
    split_seed: int = 0
    batch_size: int = 4
    ae_epochs: int = 100
    ae_lr: float = 1e-3
    seg_epochs: int = 300
    seg_lr: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    encoder_checkpoint: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split ratio must be in (0, 1)")
        if self.batch_size < 1 or self.ae_epochs < 1 or self.seg_epochs < 1:
            raise ValueError("batch size and epoch counts must be >= 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "manifest_path", "out_dir", "split_ratio", "split_seed", "batch_size",
            "ae_epochs", "ae_lr", "seg_epochs", "seg_lr", "encoder_checkpoint",
            "seed")}
        d["adam_betas"] = list(self.adam_betas)
        d["loss"] = {
            "class_weights": list(self.loss.class_weights),
            "global_weight": self.loss.global_weight,
            "schedule": self.loss.schedule,
            "eps": self.loss.eps,
        }
        a = self.augment
        d["augment"] = {
            "grid_shape": list(a.grid_shape),
            "translation": list(a.translation),
            "flip_prob": a.flip_prob,
            "scale_range": list(a.scale_range),
            "rotation_deg": a.rotation_deg,
            "elastic_alpha": a.elastic_alpha,
            "elastic_sigma": a.elastic_sigma,
            "seed": a.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        loss = d.pop("loss", {})
        aug = d.pop("augment", {})
        if "class_weights" in loss:
            loss["class_weights"] = tuple(loss["class_weights"])
        for key in ("grid_shape", "translation", "scale_range"):
            if key in aug:
                aug[key] = tuple(aug[key])
        if "adam_betas" in d:
            d["adam_betas"] = tuple(d["adam_betas"])
        return cls(loss=LossConfig(**loss), augment=AugmentSpec(**aug), **d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class StepRecord:
    epoch: int
    total: float
    pix: float
    glob: float
    l2: float
    lam: float


@dataclass
class TrainResult:
    checkpoint_path: str
    csv_path: str
    rows: list[dict]
    step_log: list[StepRecord] = field(default_factory=list)
    best_dice: tuple[float, float] = (0.0, 0.0)


def split_dataset(manifest: Manifest, ratio: float, seed: int):
    """Deterministic shuffle; train size = floor(n * ratio)."""
    ids = manifest.ids()
    if len(ids) < 2:
        raise ValidationError("need at least 2 cases to split")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(np.floor(len(ids) * ratio))
    train = [ids[i] for i in order[:n_train]]
    val = [ids[i] for i in order[n_train:]]
    return train, val


def _load_all(manifest_path) -> tuple[Manifest, dict[str, Volume], dict[str, LabelVolume]]:
    manifest = load_manifest(manifest_path)
    images, labels = {}, {}
    for c in manifest.cases:
        img, lab = load_case(manifest_path, c)
        images[c.id] = img
        labels[c.id] = lab
    return manifest, images, labels


def _write_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _stack_tensor(stacks: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack([s.transpose(3, 0, 1, 2) for s in stacks]).astype(np.float32)
    return torch.from_numpy(arr)


def _check_finite(loss: torch.Tensor, context: str) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite loss during {context}: {loss.item()}")


def train_autoencoder(cfg: RunConfig) -> TrainResult:
    """Pretrain the shape autoencoder on label masks only.

    Minimizes binary cross-entropy between reconstructions and the
    ground-truth mask stacks; saves the checkpoint with the best
    validation reconstruction DICE.
    """
    manifest, _, labels = _load_all(cfg.manifest_path)
    train_ids, val_ids = split_dataset(manifest, cfg.split_ratio, cfg.split_seed)
    stacks = {cid: to_mask_stack(labels[cid]).masks for cid in manifest.ids()}

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = autoenc.init_autoencoder(autoenc.AeConfig(seed=cfg.seed))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.ae_lr, betas=cfg.adam_betas)

    rows = []
    best = -1.0
    best_dice = (0.0, 0.0)
    ckpt_base = out / "autoencoder"
    for epoch in range(cfg.ae_epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_ids))
        epoch_losses = []
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = [train_ids[i] for i in order[start:start + cfg.batch_size]]
            x = _stack_tensor([stacks[cid] for cid in batch_ids])
            recon = model(x)
            loss = bce(recon, x, eps=cfg.loss.eps)
            _check_finite(loss, "autoencoder training")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())

        model.eval()
        tz_scores, pz_scores = [], []
        for cid in val_ids:
            recon = autoenc.ae_forward(model, stacks[cid])
            tz_scores.append(dice(recon[..., 0] >= 0.5, stacks[cid][..., 0] > 0.5))
            pz_scores.append(dice(recon[..., 1] >= 0.5, stacks[cid][..., 1] > 0.5))
        val_tz, val_pz = float(np.mean(tz_scores)), float(np.mean(pz_scores))
        mean_loss = float(np.mean(epoch_losses))
        rows.append({"epoch": epoch, "split": "train",
                     "loss_total": f"{mean_loss:.8g}",
                     "loss_pix": f"{mean_loss:.8g}", "loss_global": "0",
                     "dice_tz": "", "dice_pz": ""})
        rows.append({"epoch": epoch, "split": "val", "loss_total": "",
                     "loss_pix": "", "loss_global": "",
                     "dice_tz": f"{val_tz:.8g}", "dice_pz": f"{val_pz:.8g}"})
        score = (val_tz + val_pz) / 2.0
        if score > best:
            best = score
            best_dice = (val_tz, val_pz)
            best_state = state_to_params(model)
            best_epoch = epoch

    # restore the best epoch, then calibrate the encoding to unit RMS
    # over the training masks (exact reparameterization; reconstructions
    # are unchanged but the latent loss becomes O(1))
    params_to_model(model, best_state)
    with torch.no_grad():
        encodings = [model.encode(_stack_tensor([stacks[cid]])) for cid in train_ids]
        rms = float(torch.cat(encodings).pow(2).mean().sqrt())
    if rms > 0:
        model.rescale_latent(rms)
    save_checkpoint(Checkpoint(
        state_to_params(model),
        {"kind": "autoencoder",
         "latent_channels": model.cfg.latent_channels,
         "filters": list(model.cfg.filters), "seed": model.cfg.seed},
        best_epoch), ckpt_base)

    csv_path = out / "autoencoder_metrics.csv"
    _write_csv(csv_path, rows)
    return TrainResult(str(ckpt_base), str(csv_path), rows, best_dice=best_dice)


def load_autoencoder(base_path) -> autoenc.ShapeAutoencoder:
    ckpt = load_checkpoint(base_path)
    if ckpt.config.get("kind") != "autoencoder":
        raise ValidationError(f"{base_path} is not an autoencoder checkpoint")
    model = autoenc.init_autoencoder(autoenc.AeConfig(
        latent_channels=ckpt.config["latent_channels"],
        filters=tuple(ckpt.config["filters"]),
        seed=ckpt.config.get("seed", 0)))
    params_to_model(model, ckpt.params)
    return model


def load_segmenter(base_path) -> segnet.ZoneUnet:
    ckpt = load_checkpoint(base_path)
    if ckpt.config.get("kind") != "segmenter":
        raise ValidationError(f"{base_path} is not a segmenter checkpoint")
    model = segnet.init_unet(segnet.UnetConfig(
        filters=tuple(ckpt.config["filters"]),
        l2_coefficient=ckpt.config["l2_coefficient"],
        seed=ckpt.config.get("seed", 0)))
    params_to_model(model, ckpt.params)
    return model


def train_segmenter(cfg: RunConfig) -> TrainResult:
    """Train the segmentation network, optionally shape-constrained.

    With an encoder checkpoint configured, the frozen encoder adds a
    latent-space loss between soft predictions and ground truth. Only
    training cases are augmented; validation is untouched.
    """
    manifest, images, labels = _load_all(cfg.manifest_path)
    train_ids, val_ids = split_dataset(manifest, cfg.split_ratio, cfg.split_seed)
    case_index = {cid: i for i, cid in enumerate(manifest.ids())}

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unet_cfg = segnet.UnetConfig(seed=cfg.seed)
    model = segnet.init_unet(unet_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.seg_lr, betas=cfg.adam_betas)

    encoder = None
    if cfg.encoder_checkpoint:
        encoder = load_autoencoder(cfg.encoder_checkpoint)
        encoder.eval()
        for p in encoder.parameters():
            p.requires_grad_(False)

    aug = replace(cfg.augment, grid_shape=segnet.INPUT_SHAPE)
    rows = []
    step_log = []
    best = -1.0
    best_dice = (0.0, 0.0)
    ckpt_base = out / "segmenter"
    for epoch in range(cfg.seg_epochs):
        lam = global_weight_schedule(cfg.loss, epoch, cfg.seg_epochs)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_ids))
        sums = {"total": 0.0, "pix": 0.0, "glob": 0.0}
        n_steps = 0
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = [train_ids[i] for i in order[start:start + cfg.batch_size]]
            xs, ys = [], []
            for cid in batch_ids:
                params = sample_transform(aug, epoch, case_index[cid])
                img, lab = apply_transform(images[cid], labels[cid], params)
                xs.append(img.data)
                ys.append(lab.labels)
            x = torch.from_numpy(np.stack(xs).astype(np.float32))[:, None]
            y = torch.from_numpy(np.stack(ys).astype(np.int64))
            target = torch.nn.functional.one_hot(y, 3).to(torch.float32)

            pred = model(x)  # (B, 3, nx, ny, nz)
            pred_cl = pred.permute(0, 2, 3, 4, 1)
            pix = weighted_cce(pred_cl, target, cfg.loss)
            if encoder is not None and lam > 0:
                glob = latent_loss(encoder.encode(pred[:, 1:3]),
                                   encoder.encode(target.permute(0, 4, 1, 2, 3)[:, 1:3]))
            else:
                glob = torch.zeros((), dtype=pred.dtype)
            l2 = segnet.l2_penalty(model, unet_cfg.l2_coefficient)
            loss = pix + lam * glob + l2
            _check_finite(loss, "segmenter training")
            opt.zero_grad()
            loss.backward()
            opt.step()

            pix_v, glob_v, l2_v = pix.item(), glob.item(), l2.item()
            total_v = pix_v + lam * glob_v + l2_v
            step_log.append(StepRecord(epoch, total_v, pix_v, glob_v, l2_v, lam))
            sums["total"] += total_v
            sums["pix"] += pix_v
            sums["glob"] += glob_v
            n_steps += 1

        model.eval()
        tz_scores, pz_scores = [], []
        for cid in val_ids:
            pred_labels = segnet.predict_labels(model, images[cid])
            tz, pz = per_class_dice(pred_labels, labels[cid])
            tz_scores.append(tz)
            pz_scores.append(pz)
        val_tz, val_pz = float(np.mean(tz_scores)), float(np.mean(pz_scores))
        rows.append({"epoch": epoch, "split": "train",
                     "loss_total": f"{sums['total'] / n_steps:.8g}",
                     "loss_pix": f"{sums['pix'] / n_steps:.8g}",
                     "loss_global": f"{sums['glob'] / n_steps:.8g}",
                     "dice_tz": "", "dice_pz": ""})
        rows.append({"epoch": epoch, "split": "val", "loss_total": "",
                     "loss_pix": "", "loss_global": "",
                     "dice_tz": f"{val_tz:.8g}", "dice_pz": f"{val_pz:.8g}"})
        score = (val_tz + val_pz) / 2.0
        if score > best:
            best = score
            best_dice = (val_tz, val_pz)
            save_checkpoint(Checkpoint(
                state_to_params(model),
                {"kind": "segmenter", "filters": list(unet_cfg.filters),
                 "l2_coefficient": unet_cfg.l2_coefficient, "seed": cfg.seed},
                epoch), ckpt_base)

    csv_path = out / "segmenter_metrics.csv"
    _write_csv(csv_path, rows)
    return TrainResult(str(ckpt_base), str(csv_path), rows, step_log, best_dice)


def evaluate(checkpoint_base, manifest_path, ids=None) -> DiceReport:
    """Per-case DICE of a segmenter checkpoint over (a subset of) a manifest."""
    model = load_segmenter(checkpoint_base)
    manifest = load_manifest(manifest_path)
    wanted = set(ids) if ids is not None else None
    results = []
    for c in manifest.cases:
        if wanted is not None and c.id not in wanted:
            continue
        image, gt = load_case(manifest_path, c)
        pred = segnet.predict_labels(model, image)
        tz, pz = per_class_dice(pred, gt)
        results.append(CaseResult(c.id, tz, pz))
    if not results:
        raise ValidationError("no cases matched the requested ids")
    return aggregate_report(results)

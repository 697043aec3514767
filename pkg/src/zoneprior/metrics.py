"""DICE overlap scoring and evaluation reports."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .volgrid import PZ, TZ, LabelVolume, ValidationError


def dice(p: np.ndarray, g: np.ndarray) -> float:
    """DICE = 2|P n G| / (|P| + |G|); 1.0 when both masks are empty."""
    p = np.asarray(p, dtype=bool)
    g = np.asarray(g, dtype=bool)
    if p.shape != g.shape:
        raise ValidationError(f"mask shapes differ: {p.shape} vs {g.shape}")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def per_class_dice(pred: LabelVolume, gt: LabelVolume) -> tuple[float, float]:
    """(DICE_TZ, DICE_PZ) from the class indicator masks."""
    if pred.shape != gt.shape:
        raise ValidationError(f"grid shapes differ: {pred.shape} vs {gt.shape}")
    return (
        dice(pred.labels == TZ, gt.labels == TZ),
        dice(pred.labels == PZ, gt.labels == PZ),
    )


@dataclass
class CaseResult:
    id: str
    tz: float
    pz: float


@dataclass
class DiceReport:
    per_case: list[CaseResult]
    mean_tz: float
    mean_pz: float

    @property
    def case_count(self) -> int:
        return len(self.per_case)

    def to_json(self) -> str:
        payload = {
            "per_case": [{"id": c.id, "tz": c.tz, "pz": c.pz} for c in self.per_case],
            "mean_tz": self.mean_tz,
            "mean_pz": self.mean_pz,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DiceReport":
        payload = json.loads(text)
        cases = [CaseResult(c["id"], c["tz"], c["pz"]) for c in payload["per_case"]]
        return cls(cases, payload["mean_tz"], payload["mean_pz"])


def aggregate_report(cases: list[CaseResult]) -> DiceReport:
    """Unweighted per-case means per class."""
    if not cases:
        raise ValidationError("cannot aggregate an empty case list")
    mean_tz = float(np.mean([c.tz for c in cases]))
    mean_pz = float(np.mean([c.pz for c in cases]))
    return DiceReport(list(cases), mean_tz, mean_pz)


def comparison_table(rows: list[tuple[str, DiceReport]]) -> str:
    """Text table of mean DICE scores, one row per run."""
    width = max(len(name) for name, _ in rows)
    lines = [f"{'':<{width}} | TZ   | PZ", f"{'-' * width}-|------|-----"]
    for name, report in rows:
        lines.append(
            f"{name:<{width}} | {report.mean_tz:.2f} | {report.mean_pz:.2f}"
        )
    return "\n".join(lines) + "\n"

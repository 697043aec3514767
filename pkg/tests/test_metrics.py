import numpy as np
import pytest

from zoneprior.metrics import (
    CaseResult,
    DiceReport,
    aggregate_report,
    comparison_table,
    dice,
    per_class_dice,
)
from zoneprior.volgrid import LabelVolume, ValidationError


def brute_force_dice(p, g):
    """Set-cardinality oracle: voxel coordinates as explicit sets."""
    ps = {tuple(i) for i in np.argwhere(p)}
    gs = {tuple(i) for i in np.argwhere(g)}
    if not ps and not gs:
        return 1.0
    return 2.0 * len(ps & gs) / (len(ps) + len(gs))


def test_dice_identity():
    m = np.zeros((4, 4, 2), dtype=bool)
    m[1, 1, 0] = m[2, 2, 1] = True
    assert dice(m, m) == 1.0


def test_dice_disjoint():
    p = np.zeros((4, 4, 2), dtype=bool)
    g = np.zeros((4, 4, 2), dtype=bool)
    p[0, 0, 0] = True
    g[3, 3, 1] = True
    assert dice(p, g) == 0.0


def test_dice_hand_counted():
    # |P| = 3, |G| = 5, |P n G| = 2 -> 2*2 / (3+5) = 0.5
    p = np.zeros((4, 4, 2), dtype=bool)
    g = np.zeros((4, 4, 2), dtype=bool)
    p[0, 0, 0] = p[1, 1, 0] = p[2, 2, 0] = True
    g[0, 0, 0] = g[1, 1, 0] = g[3, 3, 0] = g[0, 1, 1] = g[1, 0, 1] = True
    assert dice(p, g) == 0.5


def test_dice_empty_convention():
    empty = np.zeros((2, 2, 2), dtype=bool)
    assert dice(empty, empty) == 1.0


def test_dice_symmetry_and_range():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.random((8, 8, 4)) < 0.3
        g = rng.random((8, 8, 4)) < 0.3
        d = dice(p, g)
        assert d == dice(g, p)
        assert 0.0 <= d <= 1.0


def test_dice_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = rng.random((8, 8, 4)) < rng.random()
        g = rng.random((8, 8, 4)) < rng.random()
        assert dice(p, g) == brute_force_dice(p, g)


def test_dice_shape_mismatch():
    with pytest.raises(ValidationError):
        dice(np.zeros((2, 2, 2), dtype=bool), np.zeros((2, 2, 3), dtype=bool))


def test_per_class_dice_trivial():
    rng = np.random.default_rng(2)
    l = LabelVolume(rng.integers(0, 3, size=(6, 6, 3)).astype(np.uint8))
    assert per_class_dice(l, l) == (1.0, 1.0)
    empty = LabelVolume(np.zeros((6, 6, 3), dtype=np.uint8))
    assert per_class_dice(empty, l) == (0.0, 0.0)


def test_per_class_dice_hand_built():
    pred = np.zeros((4, 4, 2), dtype=np.uint8)
    gt = np.zeros((4, 4, 2), dtype=np.uint8)
    # TZ: pred {a,b}, gt {b,c} -> overlap 1 -> 2/(2+2) = 0.5
    pred[0, 0, 0] = pred[0, 1, 0] = 1
    gt[0, 1, 0] = gt[0, 2, 0] = 1
    # PZ: pred {d}, gt {d,e,f} -> 2/(1+3) = 0.5... use distinct counts:
    pred[3, 3, 1] = 2
    gt[3, 3, 1] = gt[3, 2, 1] = gt[2, 3, 1] = 2
    tz, pz = per_class_dice(LabelVolume(pred), LabelVolume(gt))
    assert tz == brute_force_dice(pred == 1, gt == 1) == 0.5
    assert pz == brute_force_dice(pred == 2, gt == 2) == 0.5


def test_aggregate_means():
    report = aggregate_report([CaseResult("a", 0.8, 0.6), CaseResult("b", 0.9, 0.7)])
    assert report.mean_tz == pytest.approx(0.85)
    assert report.mean_pz == pytest.approx(0.65)
    assert report.case_count == 2


def test_aggregate_single_case():
    report = aggregate_report([CaseResult("only", 0.42, 0.24)])
    assert report.mean_tz == 0.42
    assert report.mean_pz == 0.24


def test_aggregate_empty_rejected():
    with pytest.raises(ValidationError):
        aggregate_report([])


def test_report_json_roundtrip():
    report = aggregate_report([CaseResult("a", 0.8, 0.6)])
    back = DiceReport.from_json(report.to_json())
    assert back.mean_tz == report.mean_tz
    assert back.per_case[0].id == "a"


def test_comparison_table_layout():
    base = aggregate_report([CaseResult("a", 0.85, 0.60)])
    enc = aggregate_report([CaseResult("a", 0.85, 0.67)])
    table = comparison_table([("3D-UNet", base), ("3D-UNet trained with encoder", enc)])
    lines = table.strip().splitlines()
    assert "TZ" in lines[0] and "PZ" in lines[0]
    assert lines[2].startswith("3D-UNet ")
    assert lines[3].startswith("3D-UNet trained with encoder")
    assert "0.67" in lines[3]

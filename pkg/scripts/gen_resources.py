#!/usr/bin/env python3
"""Regenerate the bundled package resources (montage table, instruction catalog)."""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from eegalign.instruct import CatalogEntry, save_catalog  # noqa: E402
from eegalign.montage import build_standard_montage, write_montage  # noqa: E402


def ssvep_grid(start: float, stop: float, step: float) -> list[str]:
    names = []
    f = start
    while f <= stop + 1e-9:
        names.append(f"{f:04.1f}")
        f = round(f + step, 10)
    return names


MI = "Decode motor imagery"
EMO = "Decode emotional states"
SSVEP = "Decode SSVEP"
LR = "Decode (Left vs Right) hand motor imagery"
GRID40 = ssvep_grid(8.0, 15.8, 0.2)

ENTRIES = [
    CatalogEntry("OpenBMI-MI", MI, LR, ("Right", "Left")),
    CatalogEntry(
        "BCIC-IV2a", MI, "Decode (Left vs Right vs Foot vs Tongue) motor imagery",
        ("Left", "Right", "Foot", "Tongue"),
    ),
    CatalogEntry(
        "BCIC-Upperlimb", MI, "Decode (Cylindrical, Spherical, Lumbrical) hand movements",
        ("Cylin", "Sphe", "Lumbrical"),
    ),
    CatalogEntry("SHU-MI", MI, LR, ("Right", "Left")),
    CatalogEntry(
        "HighGamma", MI, "Decode (Left vs Right vs Foot) motor imagery",
        ("Left", "Right", "Foot"),
    ),
    CatalogEntry("Cho2017", MI, LR, ("Left", "Right")),
    CatalogEntry("Shin2017A", MI, LR, ("Left", "Right")),
    CatalogEntry("PhysioNet-MI", MI, LR, ("Left", "Right")),
    CatalogEntry(
        "FACED", EMO,
        "Decode emotional states (Anger, Fear, Disgust, Sadness, Amusement, "
        "Inspiration, Joy, Tenderness, Neutral)",
        ("Anger", "Fear", "Disgust", "Sad", "Amusement", "Inspiration", "Joy",
         "Tenderness", "Neutral"),
    ),
    CatalogEntry(
        "SEED", EMO, "Decode emotional states (Positive, Neutral, Negative)",
        ("Positive", "Neutral", "Negative"),
    ),
    CatalogEntry(
        "SEED-IV", EMO, "Decode emotional states (Neutral, Sad, Fear, Happy)",
        ("Neutral", "Sad", "Fear", "Happy"),
    ),
    CatalogEntry(
        "SEED-V", EMO, "Decode emotional states (Disgust, Fear, Sad, Neutral, Happy)",
        ("Disgust", "Fear", "Sad", "Neutral", "Happy"),
    ),
    CatalogEntry(
        "SEED-VII", EMO,
        "Decode emotional states (Happy, Surprise, Neutral, Sad, Disgust, Fear, Anger)",
        ("Happy", "Surprise", "Neutral", "Sad", "Disgust", "Fear", "Anger"),
    ),
    CatalogEntry(
        "OpenBMI-SSVEP", SSVEP, "Decode SSVEP frequencies (5.4hz, 6.6hz, 8.6hz, 12.0hz)",
        ("12.0", "08.6", "06.6", "05.4"),
    ),
    CatalogEntry(
        "eldBETA", SSVEP,
        "Decode SSVEP frequencies (8.0hz, 9.5hz, 11.0hz, 8.5hz, 10.0hz, 11.5hz, "
        "9.0hz, 10.5hz, 12.0hz)",
        ("08.0", "09.5", "11.0", "08.5", "10.0", "11.5", "09.0", "10.5", "12.0"),
    ),
    CatalogEntry(
        "Benchmark", SSVEP,
        "Decode SSVEP frequencies from 8.0hz to 15.8hz with 0.2hz interval, "
        "total 40 classes",
        tuple(GRID40),
    ),
    CatalogEntry(
        "BETA", SSVEP,
        "Decode SSVEP frequencies from 8.0hz to 15.8hz with 0.2hz interval, "
        "total 40 classes",
        tuple(GRID40),
    ),
    CatalogEntry(
        "BCIC-Speech", "Decode covert speech",
        "Decode covert speech (hello, help-me, stop, thank-you, yes)",
        ("hello", "help-me", "stop", "thank-you", "yes"),
    ),
    CatalogEntry(
        "ADHD-AliMotie", "Decode mental disorder", "Decode ADHD vs Healthy",
        ("Healthy", "ADHD"),
    ),
    CatalogEntry(
        "Workload", "Decode mental workload states",
        "Decode mental workload states (Resting vs Workload)",
        ("Resting", "Workload"),
    ),
]


def main() -> None:
    res = ROOT / "src" / "eegalign" / "resources"
    write_montage(build_standard_montage(), res / "montage65.txt")
    save_catalog({e.name: e for e in ENTRIES}, res / "instruction_catalog.json")
    print(f"wrote montage table and catalog ({len(ENTRIES)} datasets) to {res}")


if __name__ == "__main__":
    main()

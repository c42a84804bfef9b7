"""Standard 65-electrode 10-10 scalp montage on the unit sphere.

Electrode positions are constructed geometrically: landmark points (vertex,
nasion, inion, pre-auricular) are fixed on the unit sphere and every other
electrode is placed by circular-arc interpolation between three named anchor
points, following the conventional 10% spacing of the extended 10-20 system.
The resulting table ships with the package as ``resources/montage65.txt``
(one ``name x y z`` line per electrode); ``default_montage()`` loads it.

Coordinate convention: x points to the right ear, y to the nasion, z to the
vertex. All positions have unit norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

MONTAGE_SIZE = 65

_RESOURCE = "montage65.txt"


@dataclass(frozen=True)
class Montage65:
    """65 named electrode positions on the unit sphere."""

    names: tuple[str, ...]
    positions: np.ndarray  # (65, 3), unit rows

    def __post_init__(self) -> None:
        if len(self.names) != MONTAGE_SIZE:
            raise ValueError(f"montage must have {MONTAGE_SIZE} electrodes, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("montage electrode names must be unique")
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.shape != (MONTAGE_SIZE, 3):
            raise ValueError(f"positions must be ({MONTAGE_SIZE}, 3), got {pos.shape}")
        norms = np.linalg.norm(pos, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("montage positions must lie on the unit sphere (|norm - 1| <= 1e-9)")

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"electrode {name!r} not in montage") from None


def _circle_point(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray, frac: float) -> np.ndarray:
    """Point at ``frac`` of the circular arc p1 -> p3 that passes through p2.

    The three anchors must lie on a common circle on the unit sphere (true for
    every 10-10 contour). ``frac`` = 0 gives p1, 1 gives p3.
    """
    normal = np.cross(p2 - p1, p3 - p1)
    nrm = np.linalg.norm(normal)
    if nrm < 1e-12:
        raise ValueError("arc anchors are collinear")
    normal = normal / nrm
    # Center of the circle: projection of the sphere center onto the arc plane.
    center = np.dot(normal, p1) * normal
    radius = float(np.linalg.norm(p1 - center))
    u = (p1 - center) / radius
    v = np.cross(normal, u)

    def angle_of(p: np.ndarray) -> float:
        w = (p - center) / radius
        return float(np.arctan2(np.dot(w, v), np.dot(w, u))) % (2.0 * np.pi)

    if angle_of(p2) > angle_of(p3):
        # Walk the other way around so the arc visits p2 before p3.
        v = -v
    theta = angle_of(p3) * frac
    point = center + radius * (np.cos(theta) * u + np.sin(theta) * v)
    return point / np.linalg.norm(point)


def build_standard_montage() -> Montage65:
    """Construct the 65-channel 10-10 montage from landmark geometry.

    Covers the nine standard rows (Fp through O) plus the ear-level
    FT9/FT10/TP9/TP10 ring, ordered front-to-back and left-to-right.
    """
    nz = np.array([0.0, 1.0, 0.0])
    iz = np.array([0.0, -1.0, 0.0])
    t9 = np.array([-1.0, 0.0, 0.0])
    t10 = np.array([1.0, 0.0, 0.0])
    cz = np.array([0.0, 0.0, 1.0])

    pos: dict[str, np.ndarray] = {"Cz": cz}

    def place(name: str, point: np.ndarray) -> None:
        if name not in pos:
            point = np.where(np.abs(point) < 1e-15, 0.0, point)
            pos[name] = point / np.linalg.norm(point)

    # Sagittal midline contour: nasion -> vertex -> inion at 10% steps.
    sagittal = ["Fpz", "AFz", "Fz", "FCz", "Cz", "CPz", "Pz", "POz", "Oz"]
    for i, name in enumerate(sagittal, start=1):
        place(name, _circle_point(nz, cz, iz, i / 10.0))
    # Coronal contour: left ear -> vertex -> right ear.
    coronal = ["T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8"]
    for i, name in enumerate(coronal, start=1):
        place(name, _circle_point(t9, cz, t10, i / 10.0))
    # 10% circumference half-rings through the temporal electrodes.
    left_ring = ["Fp1", "AF7", "F7", "FT7", "T7", "TP7", "P7", "PO7", "O1"]
    right_ring = ["Fp2", "AF8", "F8", "FT8", "T8", "TP8", "P8", "PO8", "O2"]
    for i, (ln, rn) in enumerate(zip(left_ring, right_ring), start=1):
        place(ln, _circle_point(pos["Fpz"], pos["T7"], pos["Oz"], i / 10.0))
        place(rn, _circle_point(pos["Fpz"], pos["T8"], pos["Oz"], i / 10.0))
    # Ear-level ring on the equator (same azimuths as FT7/TP7 one level down).
    place("FT9", _circle_point(nz, t9, iz, 0.4))
    place("TP9", _circle_point(nz, t9, iz, 0.6))
    place("FT10", _circle_point(nz, t10, iz, 0.4))
    place("TP10", _circle_point(nz, t10, iz, 0.6))
    # Lateral rows interpolated between the ring and midline electrodes.
    rows = {
        ("AF7", "AFz", "AF8"): {"AF3": 0.25, "AF4": 0.75},
        ("F7", "Fz", "F8"): {"F5": 0.125, "F3": 0.25, "F1": 0.375, "F2": 0.625, "F4": 0.75, "F6": 0.875},
        ("FT7", "FCz", "FT8"): {"FC5": 0.125, "FC3": 0.25, "FC1": 0.375, "FC2": 0.625, "FC4": 0.75, "FC6": 0.875},
        ("TP7", "CPz", "TP8"): {"CP5": 0.125, "CP3": 0.25, "CP1": 0.375, "CP2": 0.625, "CP4": 0.75, "CP6": 0.875},
        ("P7", "Pz", "P8"): {"P5": 0.125, "P3": 0.25, "P1": 0.375, "P2": 0.625, "P4": 0.75, "P6": 0.875},
        ("PO7", "POz", "PO8"): {"PO3": 0.25, "PO4": 0.75},
    }
    for (a, b, c), members in rows.items():
        for name, frac in members.items():
            place(name, _circle_point(pos[a], pos[b], pos[c], frac))

    order = [
        "Fp1", "Fpz", "Fp2",
        "AF7", "AF3", "AFz", "AF4", "AF8",
        "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
        "FT9", "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "FT10",
        "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
        "TP9", "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "TP10",
        "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
        "PO7", "PO3", "POz", "PO4", "PO8",
        "O1", "Oz", "O2",
    ]
    positions = np.stack([pos[name] for name in order])
    return Montage65(names=tuple(order), positions=positions)


def write_montage(montage: Montage65, path: str | Path) -> None:
    """Write a montage as a ``name x y z`` text table (full float precision)."""
    lines = [
        f"{name} {float(x)!r} {float(y)!r} {float(z)!r}"
        for name, (x, y, z) in zip(montage.names, montage.positions)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_montage(path: str | Path) -> Montage65:
    """Load a montage from a ``name x y z`` text table."""
    names: list[str] = []
    coords: list[list[float]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'name x y z', got {line!r}")
        names.append(parts[0])
        coords.append([float(p) for p in parts[1:]])
    return Montage65(names=tuple(names), positions=np.asarray(coords, dtype=np.float64))


def default_montage() -> Montage65:
    """The bundled 65-channel montage table."""
    ref = resources.files("eegalign.resources").joinpath(_RESOURCE)
    with resources.as_file(ref) as path:
        return read_montage(path)

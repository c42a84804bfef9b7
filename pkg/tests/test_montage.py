import numpy as np
import pytest

from eegalign.montage import (
    MONTAGE_SIZE,
    Montage65,
    build_standard_montage,
    default_montage,
    read_montage,
    write_montage,
)


def test_bundled_table_matches_builder(montage):
    built = build_standard_montage()
    assert montage.names == built.names
    np.testing.assert_array_equal(montage.positions, built.positions)


def test_exactly_65_unique_unit_positions(montage):
    assert len(montage.names) == MONTAGE_SIZE
    assert len(set(montage.names)) == MONTAGE_SIZE
    norms = np.linalg.norm(montage.positions, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_left_right_mirror_symmetry(montage):
    pairs = [("C3", "C4"), ("F7", "F8"), ("O1", "O2"), ("FT9", "FT10"), ("TP7", "TP8")]
    for left, right in pairs:
        pl = montage.positions[montage.index(left)]
        pr = montage.positions[montage.index(right)]
        np.testing.assert_allclose(pl * [-1, 1, 1], pr, atol=1e-12)


def test_vertex_and_landmarks(montage):
    np.testing.assert_allclose(montage.positions[montage.index("Cz")], [0, 0, 1])
    assert montage.positions[montage.index("Fpz")][1] > 0.9  # frontal
    assert montage.positions[montage.index("Oz")][1] < -0.9  # occipital


def test_round_trip_exact(tmp_path, montage):
    path = tmp_path / "m.txt"
    write_montage(montage, path)
    again = read_montage(path)
    assert again.names == montage.names
    np.testing.assert_array_equal(again.positions, montage.positions)


def test_validation_rejects_bad_counts():
    with pytest.raises(ValueError, match="65"):
        Montage65(names=("a", "b"), positions=np.eye(3)[:2])


def test_validation_rejects_off_sphere(montage):
    bad = montage.positions.copy()
    bad[3] *= 1.5
    with pytest.raises(ValueError, match="unit sphere"):
        Montage65(names=montage.names, positions=bad)


def test_unknown_electrode(montage):
    with pytest.raises(KeyError):
        montage.index("XX9")

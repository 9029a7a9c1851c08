import numpy as np
import pytest

from errors import ArtifactIOError, GridFormatError
from grid_io import read_grids, write_grids
from manifold import Lattice, Space


def test_box_grids_round_trip_bit_exact(tmp_path, rng):
    lattice = Lattice.build(Space.box([-15.0, -15.0], [15.0, 15.0]), 0.5)
    sections = {"a": rng.normal(size=lattice.shape), "b": rng.uniform(size=lattice.shape) * 1e-300}
    path = tmp_path / "grids.txt"
    write_grids(path, lattice, sections, {"beta": 0.4009, "kernel": "gaussian"})

    loaded, grids, meta = read_grids(path)
    assert loaded.same_as(lattice)
    assert loaded.space == lattice.space
    for name, values in sections.items():
        assert np.array_equal(grids[name], values)
    assert float(meta["beta"]) == 0.4009
    assert meta["kernel"] == "gaussian"


def test_torus_lattice_survives_the_dump(tmp_path):
    lattice = Lattice.build(Space.torus(2), 0.1)
    path = tmp_path / "torus.txt"
    write_grids(path, lattice, {"V": np.arange(lattice.size, dtype=float).reshape(lattice.shape)})
    loaded, grids, _ = read_grids(path)
    assert loaded.shape == (63, 63)
    assert loaded.spacing == lattice.spacing
    assert grids["V"][1, 0] == 63.0


def test_write_rejects_mismatched_section(tmp_path):
    lattice = Lattice.build(Space.box([0.0], [1.0]), 0.1)
    with pytest.raises(ValueError):
        write_grids(tmp_path / "bad.txt", lattice, {"a": np.zeros(5)})


def test_read_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.txt"
    path.write_text("phi psi V\n0 0 1\n")
    with pytest.raises(ValueError):
        read_grids(path)


def test_read_rejects_truncated_section(tmp_path):
    lattice = Lattice.build(Space.box([0.0], [1.0]), 0.1)
    path = tmp_path / "short.txt"
    write_grids(path, lattice, {"a": np.zeros(lattice.shape)})
    text = path.read_text().splitlines()
    path.write_text("\n".join(text[:-3]) + "\n")
    with pytest.raises(ValueError):
        read_grids(path)


def test_missing_file_is_an_artifact_error(tmp_path):
    with pytest.raises(ArtifactIOError) as exc:
        read_grids(tmp_path / "nope.txt")
    assert exc.value.exit_code == 5


def _torus_dump(tmp_path):
    lattice = Lattice.build(Space.torus(2), 1.0)
    path = tmp_path / "fes.txt"
    write_grids(path, lattice, {"V": np.zeros(lattice.shape)})
    return path


@pytest.mark.parametrize("key", ["kind", "dims", "shape", "spacing"])
def test_missing_header_key_is_a_format_error(tmp_path, key):
    path = _torus_dump(tmp_path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith(key + " ")]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GridFormatError) as exc:
        read_grids(path)
    assert exc.value.exit_code == 2
    assert key in exc.value.detail


def test_bad_header_and_value_lines_are_format_errors(tmp_path):
    path = _torus_dump(tmp_path)
    text = path.read_text()
    path.write_text(text.replace("kind torus", "kind sphere"))
    with pytest.raises(GridFormatError):
        read_grids(path)
    path.write_text(text.replace("[V]\n0\n", "[V]\nzero\n"))
    with pytest.raises(GridFormatError) as exc:
        read_grids(path)
    assert "zero" in exc.value.detail

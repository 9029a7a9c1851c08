"""Convert a tabulated free-energy surface (phi psi V per line) into the grid
dump read by the torus environment.

    python scripts/import_fes.py fes.dat alanine_fes.txt --spacing 0.05

Lines starting with ``#`` or ``@`` are skipped (PLUMED / GROMACS headers).
Table points are averaged per periodic cell; empty cells take the highest
tabulated energy.
"""
import sys
from pathlib import Path

import click
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from environment import TorusPotential  # noqa: E402
from manifold import Lattice, Space, wrap  # noqa: E402


def read_table(path: Path, degrees: bool) -> np.ndarray:
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line[0] in "#@":
            continue
        fields = line.split()
        if len(fields) < 3:
            raise ValueError(f"expected 'phi psi V' columns, got: {line!r}")
        rows.append([float(v) for v in fields[:3]])
    table = np.asarray(rows, dtype=np.float64)
    if degrees:
        table[:, :2] = np.deg2rad(table[:, :2])
    return table


def bin_table(table: np.ndarray, spacing: float) -> TorusPotential:
    lattice = Lattice.build(Space.torus(2), spacing)
    angles = wrap(table[:, :2], lattice.space)
    flat = np.ravel_multi_index(lattice.cell_index(angles), lattice.shape)
    sums = np.bincount(flat, weights=table[:, 2], minlength=lattice.size)
    counts = np.bincount(flat, minlength=lattice.size)
    values = np.full(lattice.size, table[:, 2].max())
    filled = counts > 0
    values[filled] = sums[filled] / counts[filled]
    print(f"셀 {filled.sum()}/{lattice.size} 채움 (빈 셀은 최대 에너지)")
    return TorusPotential(lattice, values.reshape(lattice.shape))


@click.command()
@click.argument("table_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_path", type=click.Path(dir_okay=False))
@click.option("--spacing", type=float, default=0.05, show_default=True, help="Target grid spacing in radians.")
@click.option("--degrees", is_flag=True, help="Angles in the table are in degrees.")
def main(table_path, out_path, spacing, degrees):
    table = read_table(Path(table_path), degrees)
    print(f"FES 테이블: {len(table)} points")
    potential = bin_table(table, spacing)
    potential.save(out_path)
    print(f"✅ 저장 완료: {out_path}")


if __name__ == "__main__":
    main()

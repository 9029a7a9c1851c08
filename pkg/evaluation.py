from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import ndimage

from errors import GridFormatError
from grid_io import read_grids, write_grids
from manifold import Lattice, displacement


@dataclass
class DensityGrid:
    """Probability masses on the cells of a lattice; values sum to 1."""

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.lattice.shape:
            raise ValueError(f"density shape {self.values.shape} does not match lattice {self.lattice.shape}")

    @classmethod
    def from_weights(cls, lattice: Lattice, weights) -> "DensityGrid":
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("density weights must be finite and non-negative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("density weights sum to zero")
        return cls(lattice, weights / total)

    def mass_where(self, mask) -> float:
        return float(self.values[np.asarray(mask, dtype=bool)].sum())

    def mass_between(self, lower, upper) -> float:
        nodes = self.lattice.nodes()
        inside = np.all((nodes >= np.asarray(lower)) & (nodes <= np.asarray(upper)), axis=-1)
        return self.mass_where(inside)

    def save(self, path) -> None:
        write_grids(path, self.lattice, {"density": self.values})

    @classmethod
    def load(cls, path) -> "DensityGrid":
        lattice, sections, _ = read_grids(path)
        if "density" not in sections:
            raise GridFormatError(f"{path} has no density section")
        return cls(lattice, sections["density"])


def empirical_histogram(samples, env) -> DensityGrid:
    lattice = env.lattice
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, lattice.dim)
    if samples.shape[0] == 0:
        raise ValueError("cannot build a histogram from an empty sample set")
    idx = lattice.cell_index(samples)
    flat = np.ravel_multi_index(idx, lattice.shape)
    counts = np.bincount(flat, minlength=lattice.size).reshape(lattice.shape)
    return DensityGrid(lattice, counts / samples.shape[0])


def l1_error(p: DensityGrid, q: DensityGrid) -> float:
    if not p.lattice.same_as(q.lattice):
        raise ValueError("L1 error needs densities on the same grid")
    return float(0.5 * np.abs(p.values - q.values).sum())


# =========================
# Mode coverage
# =========================
def basin_masks(lattice: Lattice, centers, radius: float) -> List[np.ndarray]:
    """Cells within ``radius`` (wrap-aware) of each centre."""
    nodes = lattice.nodes()
    masks = []
    for c in np.atleast_2d(np.asarray(centers, dtype=np.float64)):
        d = displacement(np.broadcast_to(c, nodes.shape), nodes, lattice.space)
        masks.append(np.linalg.norm(d, axis=-1) <= radius)
    return masks


def strict_local_maxima(grid: DensityGrid) -> np.ndarray:
    values = grid.values
    footprint = np.ones((3,) * values.ndim, dtype=bool)
    footprint[(1,) * values.ndim] = False
    if grid.lattice.space.is_torus:
        neighbours = ndimage.maximum_filter(values, footprint=footprint, mode="wrap")
    else:
        neighbours = ndimage.maximum_filter(values, footprint=footprint, mode="constant", cval=-np.inf)
    return values > neighbours


def mode_coverage(policy_hist: DensityGrid, modes: Sequence[np.ndarray]) -> List[bool]:
    peaks = strict_local_maxima(policy_hist)
    flags = []
    for basin in modes:
        basin = np.asarray(basin, dtype=bool)
        if not basin.any():
            raise ValueError("empty basin")
        flags.append(bool(np.any(peaks & basin)))
    return flags

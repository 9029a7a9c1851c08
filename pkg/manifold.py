"""State spaces and the geometry primitives shared by the sampler, the
policies and the grids.

Points are numpy arrays whose last axis is the space dimension; any leading
axes are batch axes.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

TWO_PI = 2.0 * math.pi


class SpaceKind(str, Enum):
    BOX = "box"
    TORUS = "torus"


@dataclass(frozen=True)
class Space:
    kind: SpaceKind
    dim: int
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("space dimension must be positive")
        if self.kind == SpaceKind.BOX:
            if len(self.lower) != self.dim or len(self.upper) != self.dim:
                raise ValueError("box bounds must match the space dimension")
            if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
                raise ValueError("box bounds need lower < upper in every dimension")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Space":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        return cls(SpaceKind.BOX, len(lower), lower, upper)

    @classmethod
    def torus(cls, dim: int) -> "Space":
        return cls(SpaceKind.TORUS, dim)

    @property
    def is_torus(self) -> bool:
        return self.kind == SpaceKind.TORUS

    @property
    def period(self) -> np.ndarray:
        if not self.is_torus:
            raise ValueError("only a torus has a period")
        return np.full(self.dim, TWO_PI)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.is_torus:
            return np.full(self.dim, -math.pi), np.full(self.dim, math.pi)
        return np.asarray(self.lower), np.asarray(self.upper)


def _as_points(x, s: Space) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != s.dim:
        raise ValueError(f"expected points of dimension {s.dim}, got shape {x.shape}")
    return x


def _wrap_angles(x: np.ndarray) -> np.ndarray:
    wrapped = np.mod(x + math.pi, TWO_PI) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    canonical = (x >= -math.pi) & (x < math.pi)
    return np.where(canonical, x, wrapped)


def wrap(x, s: Space) -> np.ndarray:
    x = _as_points(x, s)
    if not s.is_torus:
        return x
    return _wrap_angles(x)


def reflect(x, p, s: Space) -> Tuple[np.ndarray, np.ndarray]:
    if s.is_torus:
        raise ValueError("reflection is only defined on a bounded box")
    x = _as_points(x, s)
    p = np.asarray(p, dtype=np.float64)
    lo, hi = s.bounds
    width = hi - lo

    below = x < lo
    above = x > hi
    if np.any((lo - x) >= width) or np.any((x - hi) >= width):
        raise ValueError("walker overshot the box by a full width; the timestep is too large")

    x_new = np.where(below, 2.0 * lo - x, np.where(above, 2.0 * hi - x, x))
    p_new = np.where(below | above, -p, p)
    return x_new, p_new


def displacement(a, b, s: Space) -> np.ndarray:
    a = _as_points(a, s)
    b = _as_points(b, s)
    if not s.is_torus:
        return b - a
    return _wrap_angles(b - a)


# =========================
# Lattices
# =========================
@dataclass(frozen=True)
class Lattice:
    """Regular grid over a space.

    Box lattices put nodes on both walls (``lower + i*h``). Torus lattices
    put nodes at cell centres ``-pi + (i + 1/2)*h`` with ``h = 2*pi/N``, so
    cell ``i`` covers ``[-pi + i*h, -pi + (i+1)*h)``.
    """

    space: Space
    shape: Tuple[int, ...]
    spacing: Tuple[float, ...]

    @classmethod
    def build(cls, space: Space, spacing: Union[float, Sequence[float]]) -> "Lattice":
        requested = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (space.dim,))
        if np.any(requested <= 0):
            raise ValueError("grid spacing must be positive")
        lo, hi = space.bounds
        if space.is_torus:
            counts = np.maximum(np.rint(TWO_PI / requested).astype(int), 1)
            actual = TWO_PI / counts
        else:
            counts = np.rint((hi - lo) / requested).astype(int) + 1
            actual = (hi - lo) / (counts - 1)
        return cls(space, tuple(int(n) for n in counts), tuple(float(h) for h in actual))

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list:
        lo, _ = self.space.bounds
        out = []
        for i in range(self.dim):
            idx = np.arange(self.shape[i], dtype=np.float64)
            if self.space.is_torus:
                out.append(lo[i] + (idx + 0.5) * self.spacing[i])
            else:
                out.append(lo[i] + idx * self.spacing[i])
        return out

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_index(self, x) -> Tuple[np.ndarray, ...]:
        """Index of the cell holding each point; clamps on a box, wraps on a torus."""
        x = _as_points(x, self.space)
        lo, _ = self.space.bounds
        h = np.asarray(self.spacing)
        n = np.asarray(self.shape)
        if self.space.is_torus:
            idx = np.floor((wrap(x, self.space) - lo) / h).astype(np.int64) % n
        else:
            idx = np.clip(np.rint((x - lo) / h).astype(np.int64), 0, n - 1)
        return tuple(idx[..., i] for i in range(self.dim))

    def same_as(self, other: "Lattice") -> bool:
        return (
            self.space == other.space
            and self.shape == other.shape
            and np.allclose(self.spacing, other.spacing, rtol=0.0, atol=1e-12)
        )

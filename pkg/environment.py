"""Benchmark environments: line, grid and torus."""
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import multivariate_normal, norm

from errors import GridFormatError, UnknownNameError
from evaluation import DensityGrid, basin_masks
from grid_io import read_grids, write_grids
from manifold import Lattice, Space, wrap
from metadynamics import grid_interpolator
from policy import MixtureKind

HORIZON = 3
LOG_REWARD_FLOOR = -10.0

LINE_BOUNDS = (-5.0, 23.0)
# (mean, variance)
LINE_COMPONENTS = ((-2.0, 1.0), (-2.0, 0.4), (2.0, 0.6), (20.0, 0.1))

GRID_BOUNDS = (-15.0, 15.0)
GRID_CENTERS = ((-7.0, -7.0), (-7.0, 7.0), (7.0, 7.0), (7.0, -7.0))
GRID_VARIANCE = 2.0

TORUS_BETA = 0.4009
P_PARALLEL = (-1.2, 2.68)

# 합성 알라닌 FES: (name, (phi, psi), well depth in kJ/mol), 에너지 오름차순
TORUS_WELLS = (
    ("P_parallel", P_PARALLEL, 30.0),
    ("alpha_R", (-1.45, -0.65), 28.5),
    ("C5", (-2.6, 2.9), 27.0),
    ("alpha_prime", (-2.8, -0.5), 24.0),
    ("alpha_L", (1.0, 0.6), 21.0),
    ("alpha_D", (1.05, -2.1), 15.5),
)


# =========================
# Reward densities
# =========================
def line_reward(x):
    x = np.asarray(x, dtype=np.float64)
    r = sum(norm.pdf(x, loc=mu, scale=math.sqrt(var)) for mu, var in LINE_COMPONENTS)
    inside = (x >= LINE_BOUNDS[0]) & (x <= LINE_BOUNDS[1])
    return np.where(inside, r, 0.0)


def grid_reward(x):
    x = np.asarray(x, dtype=np.float64)
    cov = GRID_VARIANCE * np.eye(2)
    r = sum(multivariate_normal.pdf(x, mean=c, cov=cov) for c in GRID_CENTERS)
    r = np.asarray(r, dtype=np.float64).reshape(x.shape[:-1])
    inside = np.all((x >= GRID_BOUNDS[0]) & (x <= GRID_BOUNDS[1]), axis=-1)
    return np.where(inside, r, 0.0)


@dataclass
class TorusPotential:
    """Tabulated V(phi, psi) read by periodic multilinear interpolation."""

    lattice: Lattice
    values: np.ndarray
    wells: Tuple = ()
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.lattice.space.is_torus or self.lattice.dim != 2:
            raise ValueError("a torus potential lives on the 2-torus")
        # FES 는 상수만큼 자유로움: 최솟값을 0으로
        self.values = np.asarray(self.values, dtype=np.float64) - np.min(self.values)
        self._interp = grid_interpolator(self.values, self.lattice)

    def energy(self, angles) -> np.ndarray:
        angles = np.asarray(angles, dtype=np.float64)
        flat = wrap(angles.reshape(-1, 2), self.lattice.space)
        return self._interp(flat).reshape(angles.shape[:-1])

    @classmethod
    def from_file(cls, path) -> "TorusPotential":
        lattice, sections, _ = read_grids(path)
        if "V" not in sections:
            raise GridFormatError(f"{path} has no V section")
        return cls(lattice, sections["V"])

    def save(self, path) -> None:
        write_grids(path, self.lattice, {"V": self.values})

    @classmethod
    def synthetic(
        cls,
        depths: Optional[Dict[str, float]] = None,
        spacing: float = 0.05,
        concentration: float = 5.0,
        plateau: float = 30.0,
    ) -> "TorusPotential":
        lattice = Lattice.build(Space.torus(2), spacing)
        nodes = lattice.nodes()
        v = np.full(lattice.shape, plateau)
        wells = []
        for name, center, depth in TORUS_WELLS:
            depth = (depths or {}).get(name, depth)
            d = nodes - np.asarray(center)
            v -= depth * np.exp(concentration * (np.cos(d[..., 0]) + np.cos(d[..., 1]) - 2.0))
            wells.append((name, center))
        return cls(lattice, v, tuple(wells))


def torus_reward(phi, psi, potential: Optional[TorusPotential] = None, beta: float = TORUS_BETA):
    if potential is None:
        raise RuntimeError("torus reward needs a loaded potential")
    angles = np.stack(np.broadcast_arrays(np.asarray(phi, float), np.asarray(psi, float)), axis=-1)
    return np.exp(-beta * potential.energy(angles))


# =========================
# Environment
# =========================
@dataclass
class Environment:
    name: str
    space: Space
    lattice: Lattice
    source: np.ndarray
    reward_fn: Callable[[np.ndarray], np.ndarray]
    policy_kind: MixtureKind
    buffer_threshold: float
    mode_names: Tuple[str, ...]
    mode_centers: np.ndarray
    basin_radius: float
    horizon: int = HORIZON
    _target: Optional[DensityGrid] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.space.dim

    def reward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.asarray(self.reward_fn(x), dtype=np.float64).reshape(x.shape[:-1])

    def log_reward_clipped(self, x) -> np.ndarray:
        return log_reward_clipped(self, x)

    # 세 환경 모두 z(x) = x
    def cv(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)

    def cv_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        return np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim))

    def target_density(self) -> DensityGrid:
        if self._target is None:
            self._target = target_density(self)
        return self._target

    def basins(self) -> List[np.ndarray]:
        return basin_masks(self.lattice, self.mode_centers, self.basin_radius)


def log_reward_clipped(env: Environment, x) -> np.ndarray:
    r = env.reward(x)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
    return np.maximum(log_r, LOG_REWARD_FLOOR)


def target_density(env: Environment, spacing: Optional[float] = None) -> DensityGrid:
    lattice = env.lattice if spacing is None else Lattice.build(env.space, spacing)
    return DensityGrid.from_weights(lattice, env.reward(lattice.nodes()))


def make_line_env(spacing: float = 0.01) -> Environment:
    space = Space.box([LINE_BOUNDS[0]], [LINE_BOUNDS[1]])
    return Environment(
        name="line",
        space=space,
        lattice=Lattice.build(space, spacing),
        source=np.zeros(1),
        reward_fn=lambda x: line_reward(x[..., 0]),
        policy_kind=MixtureKind.GAUSS_1D,
        buffer_threshold=1e-3,
        mode_names=("minus_two", "two", "twenty"),
        mode_centers=np.array([[-2.0], [2.0], [20.0]]),
        basin_radius=1.0,
    )


def make_grid_env(spacing: float = 0.075) -> Environment:
    space = Space.box([GRID_BOUNDS[0]] * 2, [GRID_BOUNDS[1]] * 2)
    return Environment(
        name="grid",
        space=space,
        lattice=Lattice.build(space, spacing),
        source=np.zeros(2),
        reward_fn=grid_reward,
        policy_kind=MixtureKind.GAUSS_2D,
        buffer_threshold=1e-4,
        mode_names=("lower_left", "upper_left", "upper_right", "lower_right"),
        mode_centers=np.asarray(GRID_CENTERS),
        basin_radius=3.0,
    )


def make_torus_env(
    potential: Optional[TorusPotential] = None,
    beta: float = TORUS_BETA,
    spacing: float = 0.1,
) -> Environment:
    if potential is None:
        path = os.getenv("METAGFN_TORUS_POTENTIAL")
        potential = TorusPotential.from_file(path) if path else TorusPotential.synthetic()
    wells = potential.wells or tuple((name, center) for name, center, _ in TORUS_WELLS)
    space = Space.torus(2)
    return Environment(
        name="torus",
        space=space,
        lattice=Lattice.build(space, spacing),
        source=np.asarray(P_PARALLEL),
        reward_fn=lambda x: torus_reward(x[..., 0], x[..., 1], potential, beta),
        policy_kind=MixtureKind.VON_MISES_2D,
        buffer_threshold=1e-10,
        mode_names=tuple(name for name, _ in wells),
        mode_centers=np.asarray([center for _, center in wells]),
        basin_radius=0.6,
    )


ENVIRONMENTS = {
    "line": make_line_env,
    "grid": make_grid_env,
    "torus": make_torus_env,
}


def make_env(name: str, **kwargs) -> Environment:
    if name not in ENVIRONMENTS:
        raise UnknownNameError(f"unknown environment '{name}'; choose one of {{{', '.join(ENVIRONMENTS)}}}")
    return ENVIRONMENTS[name](**kwargs)

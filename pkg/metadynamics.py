"""Adapted metadynamics.

Two kernel density estimates live on a shared lattice over CV space: ``n_hat``
(visit frequency) and ``r_hat`` (reward-weighted visits). Their regularised
log-ratio ``v_hat`` plus the cumulative bias ``v_bias`` drive the Langevin
walkers.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import RegularGridInterpolator

from evaluation import DensityGrid, l1_error
from errors import GridFormatError
from grid_io import read_grids, write_grids
from langevin import LangevinParams, WalkerState, em_step
from manifold import Lattice, TWO_PI, displacement, wrap

logger = logging.getLogger(__name__)

GRID_NAMES = ("n_hat", "r_hat", "v_hat", "v_bias")


class KernelKind(str, Enum):
    GAUSSIAN = "gaussian"
    VON_MISES = "von_mises"


class MetadParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    w: float = Field(gt=0)
    stride: int = Field(ge=1)
    # Gaussian sigma per CV dimension, or von Mises kappa on a torus
    width: Tuple[float, ...]
    epsilon: float = Field(gt=0)
    langevin: LangevinParams

    @property
    def dt(self) -> float:
        return self.langevin.dt

    @property
    def beta(self) -> float:
        return self.langevin.beta


@dataclass
class PotentialGrids:
    lattice: Lattice
    kernel: KernelKind
    width: np.ndarray
    epsilon: float
    beta: float
    n_hat: np.ndarray
    r_hat: np.ndarray
    v_hat: np.ndarray
    v_bias: np.ndarray
    _field: Optional[RegularGridInterpolator] = field(default=None, repr=False, compare=False)

    @classmethod
    def empty(cls, lattice: Lattice, width, epsilon: float, beta: float) -> "PotentialGrids":
        kernel = KernelKind.VON_MISES if lattice.space.is_torus else KernelKind.GAUSSIAN
        zeros = np.zeros(lattice.shape)
        grids = cls(
            lattice=lattice,
            kernel=kernel,
            width=np.broadcast_to(np.asarray(width, dtype=np.float64), (lattice.dim,)).copy(),
            epsilon=float(epsilon),
            beta=float(beta),
            n_hat=zeros.copy(),
            r_hat=zeros.copy(),
            v_hat=zeros.copy(),
            v_bias=zeros.copy(),
        )
        grids.refresh_potential()
        return grids

    @classmethod
    def for_params(cls, lattice: Lattice, params: MetadParams) -> "PotentialGrids":
        return cls.empty(lattice, params.width, params.epsilon, params.beta)

    @property
    def cv_space(self):
        return self.lattice.space

    @property
    def v_hat_ceiling(self) -> float:
        return -math.log(self.epsilon) / self.beta

    def refresh_potential(self) -> None:
        self.v_hat = -np.log(self.r_hat / (self.n_hat + self.epsilon) + self.epsilon) / self.beta
        self._field = None

    def total_field(self) -> RegularGridInterpolator:
        if self._field is None:
            self._field = grid_interpolator(self.v_hat + self.v_bias, self.lattice)
        return self._field

    # -------- grid dump --------
    def save(self, path) -> None:
        meta = {
            "kernel": self.kernel.value,
            "width": self.width,
            "epsilon": self.epsilon,
            "beta": self.beta,
        }
        write_grids(path, self.lattice, {name: getattr(self, name) for name in GRID_NAMES}, meta)

    @classmethod
    def load(cls, path) -> "PotentialGrids":
        lattice, sections, meta = read_grids(path)
        missing = [name for name in GRID_NAMES if name not in sections]
        missing += [key for key in ("kernel", "width", "epsilon", "beta") if key not in meta]
        if missing:
            raise GridFormatError(f"grid dump {path} lacks {missing}")
        return cls(
            lattice=lattice,
            kernel=KernelKind(meta["kernel"]),
            width=np.asarray([float(v) for v in meta["width"].split()]),
            epsilon=float(meta["epsilon"]),
            beta=float(meta["beta"]),
            **{name: sections[name] for name in GRID_NAMES},
        )


# =========================
# Kernels
# =========================
def _kernel_factors(g: PotentialGrids, centers: np.ndarray) -> List[np.ndarray]:
    """Per-dimension kernel factors, each of shape (walkers, nodes along dim)."""
    axes = g.lattice.axes()
    space = g.lattice.space
    factors = []
    for i, axis in enumerate(axes):
        if space.is_torus:
            d = axis[None, :] - centers[:, i : i + 1]
            factors.append(np.exp(g.width[i] * (np.cos(d) - 1.0)))
        else:
            d = (axis[None, :] - centers[:, i : i + 1]) / g.width[i]
            factors.append(np.exp(-0.5 * d * d))
    return factors


def _einsum_spec(dim: int) -> str:
    letters = "ijklmn"[:dim]
    return "b," + ",".join("b" + c for c in letters) + "->" + letters


def _weighted_kernel_sum(g: PotentialGrids, centers: np.ndarray, weights: np.ndarray) -> np.ndarray:
    factors = _kernel_factors(g, centers)
    return np.einsum(_einsum_spec(g.lattice.dim), weights, *factors)


def kernel_eval(g: PotentialGrids, z_center) -> np.ndarray:
    z_center = wrap(np.asarray(z_center, dtype=np.float64).reshape(1, -1), g.cv_space)
    return _weighted_kernel_sum(g, z_center, np.ones(1))


def deposit(g: PotentialGrids, z_t, reward, params: MetadParams) -> PotentialGrids:
    """Deposit one kernel per walker into the shared grids (in place)."""
    centers = wrap(np.asarray(z_t, dtype=np.float64).reshape(-1, g.lattice.dim), g.cv_space)
    reward = np.broadcast_to(np.asarray(reward, dtype=np.float64), (centers.shape[0],))
    if np.any(reward < 0) or not np.all(np.isfinite(reward)):
        raise ValueError("deposited rewards must be finite and non-negative")

    visits = _weighted_kernel_sum(g, centers, np.ones(centers.shape[0]))
    g.n_hat += visits
    g.r_hat += _weighted_kernel_sum(g, centers, reward)
    g.v_bias += params.stride * params.dt * params.w * visits
    g.refresh_potential()
    return g


# =========================
# Gradients
# =========================
def grid_interpolator(grid: np.ndarray, lattice: Lattice) -> RegularGridInterpolator:
    axes = lattice.axes()
    values = np.asarray(grid, dtype=np.float64)
    if lattice.space.is_torus:
        # 주기 경계: 양 끝에 한 칸씩 덧댐
        values = np.pad(values, [(1, 1)] * lattice.dim, mode="wrap")
        axes = [np.concatenate(([a[-1] - TWO_PI], a, [a[0] + TWO_PI])) for a in axes]
    return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)


def _gradient(interp: RegularGridInterpolator, lattice: Lattice, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z = z.reshape(-1, lattice.dim)
    space = lattice.space
    lo, hi = space.bounds
    if not space.is_torus and (np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12)):
        raise ValueError("gradient requested outside the grid bounds")
    z = wrap(z, space)

    h = np.asarray(lattice.spacing)
    eye = np.eye(lattice.dim)
    plus = z[:, None, :] + h[None, :, None] * eye[None, :, :]
    minus = z[:, None, :] - h[None, :, None] * eye[None, :, :]
    if space.is_torus:
        plus, minus = wrap(plus, space), wrap(minus, space)
        step = np.broadcast_to(2.0 * h, (z.shape[0], lattice.dim))
    else:
        # 경계 셀은 한쪽 차분
        over = plus[:, range(lattice.dim), range(lattice.dim)] > hi
        under = minus[:, range(lattice.dim), range(lattice.dim)] < lo
        plus = np.where(over[:, :, None], z[:, None, :], plus)
        minus = np.where(under[:, :, None], z[:, None, :], minus)
        step = h * (2.0 - over - under)

    n = z.shape[0] * lattice.dim
    values = interp(np.concatenate([plus.reshape(n, -1), minus.reshape(n, -1)]))
    grad = (values[:n] - values[n:]).reshape(z.shape) / step
    return grad[0] if single else grad


def grad_on_grid(grid: np.ndarray, z, lattice: Lattice) -> np.ndarray:
    return _gradient(grid_interpolator(grid, lattice), lattice, z)


# =========================
# Walkers
# =========================
@dataclass
class AmState:
    walkers: WalkerState
    grids: PotentialGrids
    steps: int = 0


def am_forces(g: PotentialGrids, env, x: np.ndarray) -> np.ndarray:
    z = env.cv(x)
    grad_z = _gradient(g.total_field(), g.lattice, z)
    jac = env.cv_jacobian(x)
    return -np.einsum("bk,bkd->bd", grad_z, jac)


def am_step(state: AmState, env, params: MetadParams, rng: np.random.Generator) -> AmState:
    walkers, g = state.walkers, state.grids
    if state.steps % params.stride == 0:
        deposit(g, env.cv(walkers.x), env.reward(walkers.x), params)
    force = am_forces(g, env, walkers.x)
    state.walkers = em_step(walkers, force, params.langevin, env.space, rng)
    state.steps += 1
    return state


def implied_density(g: PotentialGrids) -> DensityGrid:
    # exp(-beta*V) 의 최댓값을 1로 맞춰 언더플로 방지
    log_rho = -g.beta * g.v_hat
    return DensityGrid.from_weights(g.lattice, np.exp(log_rho - log_rho.max()))


def run_adapted_metadynamics(
    state: AmState,
    env,
    params: MetadParams,
    iterations: int,
    rng: np.random.Generator,
    report_every: int = 250,
) -> List[Tuple[int, float]]:
    """Advance the walkers and return (iteration, implied-density L1) pairs."""
    target = env.target_density()
    series = []
    for it in range(1, iterations + 1):
        am_step(state, env, params, rng)
        if it % report_every == 0 or it == iterations:
            err = l1_error(implied_density(state.grids), target)
            series.append((it, err))
            logger.debug("am iteration %d: implied-density L1 %.4f", it, err)
    return series

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from manifold import Space, reflect, wrap


class LangevinParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=0)
    beta: float = Field(gt=0)
    dt: float = Field(gt=0)
    # 모든 실험에서 M = I
    mass: Optional[Tuple[float, ...]] = None

    def mass_vector(self, dim: int) -> np.ndarray:
        if self.mass is None:
            return np.ones(dim)
        mass = np.broadcast_to(np.asarray(self.mass, dtype=np.float64), (dim,))
        if np.any(mass <= 0):
            raise ValueError("mass must be strictly positive in every dimension")
        return mass


@dataclass
class WalkerState:
    x: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __len__(self):
        return 1 if self.x.ndim == 1 else self.x.shape[0]


def em_step(
    w: WalkerState,
    force,
    params: LangevinParams,
    s: Space,
    rng: np.random.Generator,
    noise: Optional[np.ndarray] = None,
) -> WalkerState:
    """One Euler-Maruyama step of underdamped Langevin dynamics.

    ``noise`` replaces the standard-normal draw when given (same shape as x).
    Works on a single walker or a batch with walkers along the first axis.
    """
    force = np.asarray(force, dtype=np.float64)
    if force.shape[-1] != s.dim:
        raise ValueError(f"force has dimension {force.shape[-1]}, space has {s.dim}")
    if not np.all(np.isfinite(force)):
        raise ValueError("non-finite force")

    mass = params.mass_vector(s.dim)
    if noise is None:
        noise = rng.standard_normal(w.x.shape)
    amplitude = math.sqrt(2.0 * params.gamma * params.dt / params.beta)

    x_new = w.x + (w.p / mass) * params.dt
    p_new = (
        w.p
        + force * params.dt
        - params.gamma * w.p * params.dt
        + amplitude * np.sqrt(mass) * noise
    )

    if s.is_torus:
        x_new = wrap(x_new, s)
    else:
        x_new, p_new = reflect(x_new, p_new, s)
    return WalkerState(x_new, p_new, w.t + params.dt)

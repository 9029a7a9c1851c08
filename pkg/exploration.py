"""Where training trajectories come from.

Every strategy alternates exploration batches with replay batches on the
``freq_rb`` cadence. MetaGFN additionally runs adapted-metadynamics walkers
every ``freq_md`` episodes; that branch wins when both cadences hit.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from gfn_core import GfnModel, LossFn, Trajectories, assemble_trajectories, backward_sample, rollout_forward
from langevin import WalkerState
from manifold import wrap
from metadynamics import AmState, MetadParams, PotentialGrids, am_step
from policy import DEFAULT_NOISE, noise_schedule
from replay_buffer import ReplayBuffer

logger = logging.getLogger(__name__)

# env name -> (position variance, momentum variance) around the source
WALKER_INIT = {
    "line": (1.0, 0.5),
    "grid": (1.0, 0.0),
    "torus": (0.1, 0.05),
}


class StrategyKind(str, Enum):
    ON_POLICY = "on_policy"
    NOISY = "noisy"
    THOMPSON = "thompson"
    METAGFN = "metagfn"


class ReplayVariant(str, Enum):
    ALWAYS_BACKWARD = "always_backward"
    REUSE_INITIAL = "reuse_initial"


class Branch(str, Enum):
    ON_POLICY = "on_policy"
    NOISY = "noisy"
    THOMPSON = "thompson"
    METADYNAMICS = "am"
    REPLAY = "replay"


class Strategy(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: StrategyKind = StrategyKind.ON_POLICY
    noise0: float = Field(default=DEFAULT_NOISE, ge=0)
    heads: int = Field(default=10, ge=1)
    include_prob: float = Field(default=0.3, gt=0, le=1)
    freq_md: int = Field(default=10, ge=1)
    freq_rb: int = Field(default=2, ge=1)
    variant: ReplayVariant = ReplayVariant.ALWAYS_BACKWARD
    # MetaGFN "with noise": sigma0 for its on-policy batches
    noise: Optional[float] = Field(default=None, ge=0)

    @property
    def forward_heads(self) -> int:
        return self.heads if self.kind == StrategyKind.THOMPSON else 1


@dataclass
class Batch:
    trajectories: Trajectories
    branch: Branch


# =========================
# Metadynamics walkers
# =========================
def init_walkers(env, b: int, rng: np.random.Generator) -> WalkerState:
    x_var, p_var = WALKER_INIT.get(env.name, (1.0, 0.0))
    x = env.source + np.sqrt(x_var) * rng.standard_normal((b, env.dim))
    p = np.sqrt(p_var) * rng.standard_normal((b, env.dim)) if p_var > 0 else np.zeros((b, env.dim))
    if env.space.is_torus:
        x = wrap(x, env.space)
    else:
        lo, hi = env.space.bounds
        x = np.clip(x, lo, hi)
    return WalkerState(x, p)


def make_am_state(env, b: int, params: MetadParams, rng: np.random.Generator) -> AmState:
    return AmState(init_walkers(env, b, rng), PotentialGrids.for_params(env.lattice, params))


# =========================
# Thompson sampling
# =========================
def thompson_generate(model: GfnModel, env, b: int, rng: np.random.Generator) -> Tuple[Trajectories, np.ndarray]:
    heads = rng.integers(0, model.forward_heads, size=b)
    return rollout_forward(model, env, b, rng, heads=heads), heads


def thompson_loss(
    batch: Trajectories,
    model: GfnModel,
    loss_fn: LossFn,
    p: float,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Sum of per-head losses over independently included (trajectory, head) pairs."""
    coins = rng.random((len(batch), model.forward_heads)) < p
    total = model.log_z * 0.0
    for k in range(model.forward_heads):
        included = np.flatnonzero(coins[:, k])
        if included.size:
            total = total + loss_fn(batch.select(included), model, heads=k).sum()
    return total


# =========================
# MetaGFN
# =========================
def _replay_trajectories(model, env, buffer, b, rng, variant: ReplayVariant, noise=None) -> Trajectories:
    entries = buffer.sample_biased(b, rng)
    if variant == ReplayVariant.REUSE_INITIAL and all(e.states is not None for e in entries):
        return assemble_trajectories(model, env, np.stack([e.states for e in entries]))
    terminals = np.stack([e.terminal for e in entries])
    return backward_sample(model, terminals, env, rng, noise=noise)


def metagfn_batch(
    am_state: AmState,
    model: GfnModel,
    env,
    buffer: ReplayBuffer,
    episode: int,
    b: int,
    rng: np.random.Generator,
    strategy: Strategy,
    metad: MetadParams,
    total_batches: int,
    walker_rng: Optional[np.random.Generator] = None,
) -> Tuple[Batch, AmState, ReplayBuffer]:
    walker_rng = rng if walker_rng is None else walker_rng
    noise = None
    if strategy.noise:
        noise = noise_schedule(episode, total_batches, strategy.noise)

    if episode % strategy.freq_md == 0:
        for _ in range(metad.stride):
            am_step(am_state, env, metad, walker_rng)
        terminals = am_state.walkers.x.copy()
        traj = backward_sample(model, terminals, env, rng, noise=noise)
        buffer.push_batch(terminals, env.reward(terminals), traj.states)
        return Batch(traj, Branch.METADYNAMICS), am_state, buffer

    if episode % strategy.freq_rb == 0:
        if len(buffer):
            traj = _replay_trajectories(model, env, buffer, b, rng, strategy.variant, noise)
            return Batch(traj, Branch.REPLAY), am_state, buffer
        logger.warning("episode %d: replay buffer empty, falling back to on-policy", episode)

    return Batch(rollout_forward(model, env, b, rng, noise=noise), Branch.ON_POLICY), am_state, buffer


# =========================
# Driver
# =========================
class Explorer:
    """Owns the mutable exploration state (buffer, walkers) of one training run."""

    def __init__(
        self,
        strategy: Strategy,
        env,
        model: GfnModel,
        buffer: ReplayBuffer,
        total_batches: int,
        batch_size: int,
        metad: Optional[MetadParams] = None,
        walker_rng: Optional[np.random.Generator] = None,
    ):
        self.strategy = strategy
        self.env = env
        self.model = model
        self.buffer = buffer
        self.total_batches = total_batches
        self.batch_size = batch_size
        self.metad = metad
        self.walker_rng = walker_rng
        self.am_state = None
        if strategy.kind == StrategyKind.METAGFN:
            if metad is None or walker_rng is None:
                raise ValueError("MetaGFN needs metadynamics parameters and a walker stream")
            self.am_state = make_am_state(env, batch_size, metad, walker_rng)

    def next_batch(self, episode: int, rng: np.random.Generator) -> Batch:
        b = self.batch_size
        kind = self.strategy.kind
        if kind == StrategyKind.METAGFN:
            batch, self.am_state, self.buffer = metagfn_batch(
                self.am_state, self.model, self.env, self.buffer, episode, b, rng,
                self.strategy, self.metad, self.total_batches, self.walker_rng,
            )
            return batch

        if episode % self.strategy.freq_rb == 0:
            if len(self.buffer):
                traj = _replay_trajectories(self.model, self.env, self.buffer, b, rng, ReplayVariant.REUSE_INITIAL)
                return Batch(traj, Branch.REPLAY)
            logger.warning("episode %d: replay buffer empty, falling back to %s", episode, kind.value)

        if kind == StrategyKind.THOMPSON:
            traj, _ = thompson_generate(self.model, self.env, b, rng)
            branch = Branch.THOMPSON
        elif kind == StrategyKind.NOISY:
            noise = noise_schedule(episode, self.total_batches, self.strategy.noise0)
            traj = rollout_forward(self.model, self.env, b, rng, noise=noise)
            branch = Branch.NOISY
        else:
            traj = rollout_forward(self.model, self.env, b, rng)
            branch = Branch.ON_POLICY
        self.buffer.push_batch(traj.terminals, self.env.reward(traj.terminals), traj.states)
        return Batch(traj, branch)

    def loss(self, batch: Batch, loss_fn: LossFn, rng: np.random.Generator) -> torch.Tensor:
        if self.strategy.kind == StrategyKind.THOMPSON:
            return thompson_loss(batch.trajectories, self.model, loss_fn, self.strategy.include_prob, rng)
        return loss_fn(batch.trajectories, self.model).sum()

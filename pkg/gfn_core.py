"""Trajectories, the GFlowNet model and the balance losses.

A trajectory is ``s_0 -> s_1 -> ... -> s_T`` with ``s_0`` the source and
``T`` the environment horizon. Step ``t`` is part of the state and reaches the
network as a one-hot. The backward step ``s_1 -> s_0`` is a Dirac mass on the
source and contributes nothing to ``logpb``.
"""
import functools
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import torch
from torch import nn

from errors import UnknownNameError
from manifold import wrap
from policy import RAW_SIZE, MixtureKind, MixturePolicy, apply_noise, head_to_mixture, log_density, sample
from tensor_nn import Mlp

DEFAULT_STB_LAMBDA = 0.9


# =========================
# Trajectories
# =========================
@dataclass
class Trajectories:
    """A batch of ``b`` trajectories of a fixed horizon."""

    states: np.ndarray  # (b, T+1, d)
    logpf: np.ndarray  # (b, T)
    logpb: np.ndarray  # (b, T), column 0 is the Dirac step
    log_reward: np.ndarray  # (b,) clipped
    heads: np.ndarray = field(default=None)  # (b,) generating forward head

    def __post_init__(self):
        b = self.states.shape[0]
        if self.heads is None:
            self.heads = np.zeros(b, dtype=np.int64)
        horizon = self.states.shape[1] - 1
        if self.logpf.shape != (b, horizon) or self.logpb.shape != (b, horizon):
            raise ValueError("log-density arrays must have one column per transition")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def terminals(self) -> np.ndarray:
        return self.states[:, -1]

    def select(self, idx) -> "Trajectories":
        return Trajectories(
            self.states[idx], self.logpf[idx], self.logpb[idx], self.log_reward[idx], self.heads[idx]
        )

    @classmethod
    def concat(cls, parts: Sequence["Trajectories"]) -> "Trajectories":
        return cls(
            np.concatenate([p.states for p in parts]),
            np.concatenate([p.logpf for p in parts]),
            np.concatenate([p.logpb for p in parts]),
            np.concatenate([p.log_reward for p in parts]),
            np.concatenate([p.heads for p in parts]),
        )


@dataclass
class TrajectoryScores:
    """Differentiable re-evaluation of a batch under the current network.

    ``log_flow[:, 0]`` is log Z and ``log_flow[:, T]`` the clipped log-reward.
    """

    logpf: torch.Tensor  # (b, T)
    logpb: torch.Tensor  # (b, T)
    log_flow: torch.Tensor  # (b, T+1)


# =========================
# Model
# =========================
class GfnModel(nn.Module):
    def __init__(
        self,
        dim: int,
        kind: MixtureKind,
        horizon: int = 3,
        hidden: int = 256,
        layers: int = 3,
        dropout: float = 0.2,
        forward_heads: int = 1,
    ):
        super().__init__()
        if forward_heads < 1:
            raise ValueError("a model needs at least one forward head")
        self.dim = dim
        self.kind = MixtureKind(kind)
        self.horizon = horizon
        self.forward_heads = forward_heads
        heads = {f"pf_{k}": RAW_SIZE[self.kind] for k in range(forward_heads)}
        heads["pb"] = RAW_SIZE[self.kind]
        heads["log_flow"] = 1
        self.mlp = Mlp(dim + horizon + 1, heads, hidden=hidden, layers=layers, dropout=dropout)
        self.log_z = nn.Parameter(torch.zeros((), dtype=torch.float64))
        self._spec = {
            "dim": dim,
            "kind": self.kind.value,
            "horizon": horizon,
            "hidden": hidden,
            "layers": layers,
            "dropout": dropout,
            "forward_heads": forward_heads,
        }

    @property
    def spec(self) -> dict:
        return dict(self._spec)

    @classmethod
    def from_spec(cls, spec: dict) -> "GfnModel":
        return cls(**spec)

    def network_parameters(self):
        return self.mlp.parameters()

    def encode(self, x, t: int) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=torch.float64).reshape(-1, self.dim)
        step = torch.zeros(x.shape[0], self.horizon + 1, dtype=torch.float64)
        step[:, t] = 1.0
        return torch.cat([x, step], dim=-1)

    def forward(self, x, t: int) -> Dict[str, torch.Tensor]:
        return self.mlp(self.encode(x, t))

    def forward_policy(self, out: Dict[str, torch.Tensor], heads=None) -> MixturePolicy:
        if heads is None:
            raw = out["pf_0"]
        elif np.ndim(heads) == 0:
            raw = out[f"pf_{int(heads)}"]
        else:
            stacked = torch.stack([out[f"pf_{k}"] for k in range(self.forward_heads)], dim=1)
            idx = torch.as_tensor(np.asarray(heads, dtype=np.int64))
            raw = stacked[torch.arange(stacked.shape[0]), idx]
        return head_to_mixture(raw, self.kind)

    def backward_policy(self, out: Dict[str, torch.Tensor]) -> MixturePolicy:
        return head_to_mixture(out["pb"], self.kind)


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite log-density along a trajectory")


@torch.no_grad()
def _log_densities(model: GfnModel, env, states: np.ndarray, heads, noise: Optional[float]):
    """Forward and backward log-densities along fixed state sequences."""
    b, n_states, _ = states.shape
    horizon = n_states - 1
    logpf = np.zeros((b, horizon))
    logpb = np.zeros((b, horizon))
    for t in range(n_states):
        out = model(states[:, t], t)
        if t < horizon:
            pf = apply_noise(model.forward_policy(out, heads), noise)
            logpf[:, t] = log_density(pf, states[:, t + 1], env.space, origin=states[:, t]).numpy()
        if t > 1:
            pb = apply_noise(model.backward_policy(out), noise)
            logpb[:, t - 1] = log_density(pb, states[:, t - 1], env.space, origin=states[:, t]).numpy()
    return logpf, logpb


class _eval_mode:
    def __init__(self, model: nn.Module):
        self.model = model

    def __enter__(self):
        self.was_training = self.model.training
        self.model.eval()
        return self.model

    def __exit__(self, *exc):
        self.model.train(self.was_training)
        return False


def rollout_forward(
    model: GfnModel,
    env,
    b: int,
    rng: np.random.Generator,
    noise: Optional[float] = None,
    heads=None,
) -> Trajectories:
    horizon = env.horizon
    x = np.broadcast_to(env.source, (b, env.dim)).astype(np.float64)
    states = [x]
    logpf = np.zeros((b, horizon))
    logpb = np.zeros((b, horizon))
    with _eval_mode(model), torch.no_grad():
        for t in range(horizon):
            pf = apply_noise(model.forward_policy(model(x, t), heads), noise)
            nxt = sample(pf, env.space, rng, origin=x)
            logpf[:, t] = log_density(pf, nxt, env.space, origin=x).numpy()
            if t > 0:
                pb = apply_noise(model.backward_policy(model(nxt, t + 1)), noise)
                logpb[:, t] = log_density(pb, x, env.space, origin=nxt).numpy()
            states.append(nxt)
            x = nxt
    _check_finite(logpf, logpb)
    head_ids = np.zeros(b, dtype=np.int64) if heads is None else np.broadcast_to(heads, (b,)).astype(np.int64)
    return Trajectories(np.stack(states, axis=1), logpf, logpb, env.log_reward_clipped(x), head_ids)


def backward_sample(
    model: GfnModel,
    terminal,
    env,
    rng: np.random.Generator,
    noise: Optional[float] = None,
    heads=None,
) -> Trajectories:
    """Walk terminals back to the source with the backward policy."""
    horizon = env.horizon
    terminal = wrap(np.asarray(terminal, dtype=np.float64).reshape(-1, env.dim), env.space)
    b = terminal.shape[0]
    states = np.empty((b, horizon + 1, env.dim))
    states[:, horizon] = terminal
    states[:, 0] = env.source
    with _eval_mode(model), torch.no_grad():
        for t in range(horizon, 1, -1):
            pb = apply_noise(model.backward_policy(model(states[:, t], t)), noise)
            states[:, t - 1] = sample(pb, env.space, rng, origin=states[:, t])
        logpf, logpb = _log_densities(model, env, states, heads, noise)
    _check_finite(logpf, logpb)
    head_ids = np.zeros(b, dtype=np.int64) if heads is None else np.broadcast_to(heads, (b,)).astype(np.int64)
    return Trajectories(states, logpf, logpb, env.log_reward_clipped(terminal), head_ids)


def assemble_trajectories(model: GfnModel, env, states, heads=None) -> Trajectories:
    """Build a batch from explicit state sequences; ``s_0`` must be the source."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 2:
        states = states[None]
    if states.shape[1] != env.horizon + 1:
        raise ValueError(f"trajectories need {env.horizon + 1} states, got {states.shape[1]}")
    if not np.allclose(states[:, 0], env.source, rtol=0.0, atol=0.0):
        raise ValueError("trajectories must start at the source")
    with _eval_mode(model):
        logpf, logpb = _log_densities(model, env, states, heads, None)
    _check_finite(logpf, logpb)
    b = states.shape[0]
    head_ids = np.zeros(b, dtype=np.int64) if heads is None else np.broadcast_to(heads, (b,)).astype(np.int64)
    return Trajectories(states, logpf, logpb, env.log_reward_clipped(states[:, -1]), head_ids)


# =========================
# Losses
# =========================
def score(model: GfnModel, traj: Trajectories, heads=None) -> TrajectoryScores:
    """Re-evaluate stored states with the current (un-noised) policies, with gradients."""
    states = traj.states
    b, horizon = len(traj), traj.horizon
    logpf, logpb, flows = [], [torch.zeros(b, dtype=torch.float64)], [model.log_z.expand(b)]
    for t in range(horizon + 1):
        out = model(states[:, t], t)
        if t < horizon:
            pf = model.forward_policy(out, heads)
            logpf.append(log_density(pf, states[:, t + 1], origin=states[:, t]))
        if 0 < t < horizon:
            flows.append(out["log_flow"][:, 0])
        if t > 1:
            pb = model.backward_policy(out)
            logpb.append(log_density(pb, states[:, t - 1], origin=states[:, t]))
    flows.append(torch.as_tensor(traj.log_reward, dtype=torch.float64))
    return TrajectoryScores(torch.stack(logpf, 1), torch.stack(logpb, 1), torch.stack(flows, 1))


def _potentials(s: TrajectoryScores) -> torch.Tensor:
    """``a_t = log F(s_t) - sum_{u<t} (logpf_u - logpb_u)``; sub-balance residuals are differences."""
    steps = torch.cumsum(s.logpf - s.logpb, dim=1)
    steps = torch.cat([torch.zeros_like(steps[:, :1]), steps], dim=1)
    return s.log_flow - steps


def trajectory_balance(s: TrajectoryScores) -> torch.Tensor:
    a = _potentials(s)
    return (a[:, 0] - a[:, -1]) ** 2


def detailed_balance(s: TrajectoryScores) -> torch.Tensor:
    res = s.log_flow[:, :-1] + s.logpf - s.log_flow[:, 1:] - s.logpb
    return (res**2).sum(dim=1)


def subtrajectory_balance(s: TrajectoryScores, lam: float = DEFAULT_STB_LAMBDA) -> torch.Tensor:
    if lam <= 0:
        raise ValueError("subtrajectory weight lambda must be positive")
    a = _potentials(s)
    n = a.shape[1]
    i, j = torch.triu_indices(n, n, offset=1)
    res = a[:, i] - a[:, j]
    weights = torch.as_tensor(lam, dtype=torch.float64) ** (j - i).to(torch.float64)
    return (weights * res**2).sum(dim=1) / weights.sum()


def tb_loss(traj: Trajectories, model: GfnModel, heads=None) -> torch.Tensor:
    """Per-trajectory TB loss; sum it for the batch loss."""
    return trajectory_balance(score(model, traj, heads))


def db_loss(traj: Trajectories, model: GfnModel, heads=None) -> torch.Tensor:
    return detailed_balance(score(model, traj, heads))


def stb_loss(traj: Trajectories, model: GfnModel, lam: float = DEFAULT_STB_LAMBDA, heads=None) -> torch.Tensor:
    return subtrajectory_balance(score(model, traj, heads), lam)


LossFn = Callable[..., torch.Tensor]

LOSSES = {"tb": tb_loss, "db": db_loss, "stb": stb_loss}


def make_loss(name: str, lam: float = DEFAULT_STB_LAMBDA) -> LossFn:
    name = name.lower()
    if name not in LOSSES:
        raise UnknownNameError(f"unknown loss '{name}'; choose one of {{{', '.join(LOSSES)}}}")
    if name == "stb":
        return functools.partial(stb_loss, lam=lam)
    return LOSSES[name]

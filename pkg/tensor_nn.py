"""Dense network, reverse-mode gradients and the optimiser.

torch autograd plays the tape: ``forward`` records the graph (dropout masks
included) and ``backward`` replays it for an arbitrary upstream gradient.
Everything runs in float64.
"""
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import nn
from torch.optim.lr_scheduler import LambdaLR

from errors import ArtifactIOError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

torch.set_default_dtype(torch.float64)


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class Mlp(nn.Module):
    """Torso of ``layers`` x (Linear, GELU, Dropout) feeding named linear heads."""

    def __init__(
        self,
        in_features: int,
        heads: Mapping[str, int],
        hidden: int = 256,
        layers: int = 3,
        dropout: float = 0.2,
    ):
        super().__init__()
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.in_features = in_features
        torso: List[nn.Module] = []
        width = in_features
        for _ in range(layers):
            torso += [nn.Linear(width, hidden), nn.GELU(approximate="none"), nn.Dropout(p=dropout)]
            width = hidden
        self.torso = nn.Sequential(*torso)
        self.heads = nn.ModuleDict({name: nn.Linear(width, size) for name, size in heads.items()})
        self.to(torch.float64)

    @property
    def mode(self) -> Mode:
        return Mode.TRAIN if self.training else Mode.EVAL

    def set_mode(self, mode: Mode) -> "Mlp":
        return self.train(Mode(mode) == Mode.TRAIN)

    def forward(self, x: torch.Tensor) -> Dict[str, torch.Tensor]:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"network expects {self.in_features} inputs, got {x.shape[-1]}")
        h = self.torso(x)
        return {name: head(h) for name, head in self.heads.items()}


def backward(
    outputs: Mapping[str, torch.Tensor],
    loss_grad: Mapping[str, torch.Tensor],
    params: Iterable[torch.Tensor],
) -> List[torch.Tensor]:
    """Vector-Jacobian product of the head outputs with respect to ``params``."""
    names = list(loss_grad)
    for name in names:
        if name not in outputs:
            raise ValueError(f"no head output named {name}")
        if loss_grad[name].shape != outputs[name].shape:
            raise ValueError(f"gradient for {name} has shape {tuple(loss_grad[name].shape)}, output is {tuple(outputs[name].shape)}")
    params = list(params)
    grads = torch.autograd.grad(
        [outputs[n] for n in names],
        params,
        grad_outputs=[loss_grad[n] for n in names],
        retain_graph=True,
        allow_unused=True,
    )
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


# =========================
# Optimiser
# =========================
def lr_at(j: int, total: int, lr0: float) -> float:
    """Linear decay from ``lr0`` to zero at batch ``total``."""
    return lr0 * (1.0 - j / total)


class OptimizerParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=1e-3, gt=0)
    logz_lr: float = Field(default=1e-1, gt=0)
    clip: float = Field(default=10.0, gt=0)
    betas: tuple = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    total_batches: int = Field(default=100_000, ge=1)


class GfnOptimizer:
    """Adam over two parameter groups with global-norm clipping and a linear schedule."""

    def __init__(self, net_params, logz_params, params: OptimizerParams):
        self.params = params
        self.net_params = list(net_params)
        self.logz_params = list(logz_params)
        self.adam = torch.optim.Adam(
            [
                {"params": self.net_params, "lr": params.lr},
                {"params": self.logz_params, "lr": params.logz_lr},
            ],
            betas=params.betas,
            eps=params.eps,
        )
        total = params.total_batches
        # LambdaLR 의 epoch 0 이 첫 번째 배치
        self.scheduler = LambdaLR(self.adam, lambda step: max(lr_at(step + 1, total, 1.0), 0.0))
        self.skipped = 0

    @property
    def lr(self) -> List[float]:
        return [group["lr"] for group in self.adam.param_groups]

    def zero_grad(self) -> None:
        self.adam.zero_grad(set_to_none=False)

    def step(self) -> bool:
        """Clip, then take one Adam step. Returns False when the step was rejected."""
        everything = self.net_params + self.logz_params
        norm = torch.nn.utils.clip_grad_norm_(everything, self.params.clip)
        if not math.isfinite(float(norm)):
            self.skipped += 1
            logger.warning("non-finite gradient norm, skipping step (%d skipped so far)", self.skipped)
            self.zero_grad()
            self.scheduler.step()
            return False
        self.adam.step()
        self.scheduler.step()
        return True

    def state_dict(self) -> dict:
        return {"adam": self.adam.state_dict(), "scheduler": self.scheduler.state_dict(), "skipped": self.skipped}

    def load_state_dict(self, state: dict) -> None:
        self.adam.load_state_dict(state["adam"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.skipped = state.get("skipped", 0)


def adam_step(optimizer: GfnOptimizer) -> bool:
    return optimizer.step()


# =========================
# Checkpoints
# =========================
def save_checkpoint(path, model: nn.Module, optimizer: Optional[GfnOptimizer], spec: dict, extra: Optional[dict] = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_spec": spec,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise ArtifactIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ArtifactIOError(f"{path}: unsupported checkpoint version {payload.get('format_version')}")
    return payload

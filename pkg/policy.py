"""Mixture policies over one-step increments.

A policy head emits a raw vector that is mapped to a mixture over the
increment ``delta``; the next state is ``wrap(current + delta)``. The same
family serves the forward and the backward direction.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import torch
from torch.distributions import Categorical, Independent, MixtureSameFamily, Normal, VonMises

from manifold import Space, wrap


class MixtureKind(str, Enum):
    GAUSS_1D = "gauss_1d"
    GAUSS_2D = "gauss_2d"
    VON_MISES_2D = "von_mises_2d"


RAW_SIZE = {
    MixtureKind.GAUSS_1D: 9,
    MixtureKind.GAUSS_2D: 24,
    MixtureKind.VON_MISES_2D: 15,
}

COMPONENTS = {
    MixtureKind.GAUSS_1D: 3,
    MixtureKind.GAUSS_2D: 4,
    MixtureKind.VON_MISES_2D: 3,
}

DIMS = {
    MixtureKind.GAUSS_1D: 1,
    MixtureKind.GAUSS_2D: 2,
    MixtureKind.VON_MISES_2D: 2,
}

# (lower, upper) for means and Gaussian scales
GAUSS_1D_MEAN = (-14.0, 14.0)
GAUSS_1D_SIGMA = (0.1, 1.0)
GAUSS_2D_MEAN = (-15.0, 15.0)
GAUSS_2D_SIGMA = (0.1, 7.0)
VON_MISES_LOG_KAPPA = 5.0

DEFAULT_NOISE = 2.0


@dataclass
class MixturePolicy:
    """Batched mixture parameters.

    ``means`` and ``scales`` have shape ``(..., K, d)``; ``scales`` holds the
    standard deviations for Gaussian kinds and the concentrations for von
    Mises. ``weights`` has shape ``(..., K)``.
    """

    kind: MixtureKind
    means: torch.Tensor
    scales: torch.Tensor
    weights: torch.Tensor

    @property
    def is_von_mises(self) -> bool:
        return self.kind == MixtureKind.VON_MISES_2D

    def distribution(self) -> MixtureSameFamily:
        base = VonMises(self.means, self.scales) if self.is_von_mises else Normal(self.means, self.scales)
        return MixtureSameFamily(Categorical(probs=self.weights), Independent(base, 1))


def _affine_sigmoid(raw: torch.Tensor, bounds) -> torch.Tensor:
    lo, hi = bounds
    return lo + (hi - lo) * torch.sigmoid(raw)


def head_to_mixture(raw, kind: MixtureKind) -> MixturePolicy:
    raw = torch.as_tensor(raw, dtype=torch.float64)
    kind = MixtureKind(kind)
    if raw.shape[-1] != RAW_SIZE[kind]:
        raise ValueError(f"{kind.value} head needs {RAW_SIZE[kind]} raw outputs, got {raw.shape[-1]}")
    batch = raw.shape[:-1]
    k, d = COMPONENTS[kind], DIMS[kind]

    if kind == MixtureKind.GAUSS_1D:
        means = _affine_sigmoid(raw[..., 0:3], GAUSS_1D_MEAN)
        scales = _affine_sigmoid(raw[..., 3:6], GAUSS_1D_SIGMA)
        logits = raw[..., 6:9]
    elif kind == MixtureKind.GAUSS_2D:
        means = _affine_sigmoid(raw[..., 0:8], GAUSS_2D_MEAN)
        # 성분당 3개 중 앞의 2개만 대각 sigma 로 사용
        scale_logits = raw[..., 8:20].reshape(*batch, k, 3)[..., :2]
        scales = _affine_sigmoid(scale_logits, GAUSS_2D_SIGMA)
        logits = raw[..., 20:24]
    else:
        means = 2.0 * torch.atan(raw[..., 0:6])
        scales = torch.exp(VON_MISES_LOG_KAPPA * torch.sigmoid(raw[..., 6:12]))
        logits = raw[..., 12:15]

    return MixturePolicy(
        kind=kind,
        means=means.reshape(*batch, k, d),
        scales=scales.reshape(*batch, k, d),
        weights=torch.softmax(logits, dim=-1),
    )


def log_density(pol: MixturePolicy, x, s: Optional[Space] = None, origin=None) -> torch.Tensor:
    """Log-density of reaching ``x`` from ``origin`` (zero when omitted).

    Von Mises components are periodic, so the raw difference needs no wrap.
    """
    x = torch.as_tensor(x, dtype=torch.float64)
    if s is not None and x.shape[-1] != s.dim:
        raise ValueError(f"expected points of dimension {s.dim}, got {x.shape[-1]}")
    if origin is not None:
        origin = torch.as_tensor(origin, dtype=torch.float64)
        x = x - origin
    return pol.distribution().log_prob(x)


def _pick_components(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(weights, axis=-1)
    u = rng.random(weights.shape[:-1]) * cdf[..., -1]
    idx = (cdf < u[..., None]).sum(axis=-1)
    return np.minimum(idx, weights.shape[-1] - 1)


def sample(pol: MixturePolicy, s: Space, rng: np.random.Generator, origin=None) -> np.ndarray:
    """Ancestral sample: component from the weights, then the component draw."""
    weights = pol.weights.detach().cpu().numpy()
    means = pol.means.detach().cpu().numpy()
    scales = pol.scales.detach().cpu().numpy()

    idx = _pick_components(weights, rng)
    mu = np.take_along_axis(means, idx[..., None, None], axis=-2)[..., 0, :]
    scale = np.take_along_axis(scales, idx[..., None, None], axis=-2)[..., 0, :]

    if pol.is_von_mises:
        # numpy 의 vonmises 는 Best-Fisher 기각 샘플링
        delta = rng.vonmises(mu, scale)
    else:
        delta = mu + scale * rng.standard_normal(mu.shape)

    if origin is not None:
        delta = np.asarray(origin, dtype=np.float64) + delta
    return wrap(delta, s)


def apply_noise(pol: MixturePolicy, sigma_bar: Optional[float]) -> MixturePolicy:
    if sigma_bar is None or sigma_bar == 0:
        return pol
    if sigma_bar < 0:
        raise ValueError("exploration noise must be non-negative")
    if pol.is_von_mises:
        scales = (pol.scales.rsqrt() + sigma_bar) ** -2
    else:
        scales = pol.scales + sigma_bar
    return replace(pol, scales=scales)


def noise_schedule(j: int, total: int, sigma0: float = DEFAULT_NOISE) -> float:
    """Exponential-then-flat decay of the exploration noise over ``total`` batches."""
    half = total / 2.0
    if j >= half:
        return 0.0
    return sigma0 * (math.exp(-2.0 * j * math.e / half) - math.exp(-2.0 * math.e))

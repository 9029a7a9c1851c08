"""Seed splitting.

Every random stream of a run is derived from one 64-bit seed:
``SeedSequence([seed, STREAMS[name]])`` for named streams and
``SeedSequence([seed, STREAMS[name], index])`` for indexed sub-streams
(per-episode or per-walker). Streams never share state, so the draw order of
one consumer cannot shift another.
"""
import numpy as np

STREAMS = {
    "init": 0,
    "rollout": 1,
    "walkers": 2,
    "thompson": 4,
    "eval": 5,
    "dropout": 6,
}


def _sequence(seed: int, name: str, index=None) -> np.random.SeedSequence:
    if name not in STREAMS:
        raise ValueError(f"unknown random stream: {name}")
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name]]
    if index is not None:
        key.append(int(index))
    return np.random.SeedSequence(key)


def stream(seed: int, name: str, index=None) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, name, index))


def torch_seed(seed: int, name: str) -> int:
    # torch.manual_seed 는 63비트 정수만 받음
    return int(_sequence(seed, name).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

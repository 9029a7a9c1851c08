import csv
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from errors import ArtifactIOError

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 10_000
TOP_FRACTION = 0.3


@dataclass(frozen=True)
class ReplayEntry:
    terminal: np.ndarray
    reward: float
    order: int
    # 처음 생성된 궤적 전체 (재사용 변형용)
    states: Optional[np.ndarray] = None


class ReplayBuffer:
    """FIFO store of terminal states admitted above a reward threshold."""

    def __init__(self, threshold: float, capacity: int = DEFAULT_CAPACITY, top_fraction: float = TOP_FRACTION):
        if capacity < 1:
            raise ValueError("replay capacity must be at least 1")
        self.threshold = threshold
        self.capacity = capacity
        self.top_fraction = top_fraction
        self.entries = deque(maxlen=capacity)
        self._counter = itertools.count()
        self.rejected = 0

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, terminal, reward: float, states=None) -> bool:
        if not reward > self.threshold:
            self.rejected += 1
            return False
        self.entries.append(
            ReplayEntry(
                terminal=np.array(terminal, dtype=np.float64),
                reward=float(reward),
                order=next(self._counter),
                states=None if states is None else np.array(states, dtype=np.float64),
            )
        )
        return True

    def push_batch(self, terminals, rewards, states=None) -> int:
        stored = 0
        for i, (x, r) in enumerate(zip(terminals, rewards)):
            stored += self.push(x, r, None if states is None else states[i])
        return stored

    def strata(self):
        ranked = sorted(self.entries, key=lambda e: (-e.reward, e.order))
        top = math.ceil(self.top_fraction * len(ranked))
        return ranked[:top], ranked[top:]

    def sample_biased(self, b: int, rng: np.random.Generator) -> List[ReplayEntry]:
        """Half the batch from the top-reward stratum, the rest from the remainder."""
        if not self.entries:
            raise ValueError("cannot sample from an empty replay buffer")
        upper, lower = self.strata()
        if not lower:
            pool = list(self.entries)
            return [pool[i] for i in rng.integers(0, len(pool), size=b)]
        n_upper = (b + 1) // 2
        picks = [upper[i] for i in rng.integers(0, len(upper), size=n_upper)]
        picks += [lower[i] for i in rng.integers(0, len(lower), size=b - n_upper)]
        return picks

    def dump(self, path) -> None:
        dim = len(self.entries[0].terminal) if self.entries else 0
        header = ["order"] + [f"x{i}" for i in range(dim)] + ["reward"]
        try:
            with open(Path(path), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for e in self.entries:
                    writer.writerow([e.order, *("%.17g" % v for v in e.terminal), "%.17g" % e.reward])
        except OSError as exc:
            raise ArtifactIOError(f"cannot write replay buffer dump {path}: {exc}") from exc
        logger.info("replay buffer dumped: %d entries -> %s", len(self.entries), path)


def push(buf: ReplayBuffer, terminal, reward: float, states=None) -> ReplayBuffer:
    buf.push(terminal, reward, states)
    return buf


def sample_biased(buf: ReplayBuffer, b: int, rng: np.random.Generator) -> List[ReplayEntry]:
    return buf.sample_biased(b, rng)

"""Counter-based random streams for reproducible, order-independent ensembles.

Every draw comes from a Philox4x64 generator keyed by (seed, block), where
block = trajectory_id // BLOCK_SIZE. The 256-bit counter selects the purpose:
word 1 holds the period index for Brownian increments and word 2 is set for
initial conditions. A block is always generated whole, so the numbers seen by
trajectory j depend only on (seed, j, period), never on how the ensemble is
chunked or which thread runs it.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

BLOCK_SIZE = 64
_INIT_WORD = 1


def _generator(seed: int, block: int, counter: tuple[int, int, int, int]) -> np.random.Generator:
    bit_generator = np.random.Philox(key=np.array([seed, block], dtype=np.uint64), counter=np.array(counter, dtype=np.uint64))
    return np.random.Generator(bit_generator)


def _blocked(
    trajectory_ids: np.ndarray,
    draw: Callable[[int], np.ndarray],
) -> np.ndarray:
    ids = np.asarray(trajectory_ids, dtype=np.int64)
    blocks = ids // BLOCK_SIZE
    lanes = ids % BLOCK_SIZE
    out: np.ndarray | None = None
    for block in np.unique(blocks):
        chunk = draw(int(block))
        selected = blocks == block
        if out is None:
            out = np.empty(chunk.shape[:1] + (ids.size,) + chunk.shape[2:], dtype=float)
        out[:, selected] = chunk[:, lanes[selected]]
    assert out is not None
    return out


class NoiseStream:
    """Brownian increments and initial-condition draws for a set of trajectories.

    Args:
        seed: 64-bit run seed.
        trajectory_ids: Global ids of the trajectories, in ensemble order.
        particles: Particle count d.
    """

    def __init__(self, seed: int, trajectory_ids: np.ndarray, particles: int) -> None:
        self.seed = int(seed)
        self.trajectory_ids = np.atleast_1d(np.asarray(trajectory_ids, dtype=np.int64))
        self.particles = particles
        if self.trajectory_ids.size == 0:
            raise ValueError("NoiseStream needs at least one trajectory")

    @property
    def size(self) -> int:
        return int(self.trajectory_ids.size)

    def increments(self, period: int, n_steps: int, dt: float) -> np.ndarray:
        """Increments dW ~ N(0, dt) of shape (n_steps, B, d, 3) for one period."""
        shape = (n_steps, BLOCK_SIZE, self.particles, 3)

        def draw(block: int) -> np.ndarray:
            gen = _generator(self.seed, block, (0, period, 0, 0))
            return gen.standard_normal(shape)

        return np.sqrt(dt) * _blocked(self.trajectory_ids, draw)

    def initial(self, tag: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Uniform fractional positions and standard normal momenta, shape (B, d, 3).

        `tag` separates the initial draws of different ensembles.
        """
        shape = (2, BLOCK_SIZE, self.particles, 3)

        def draw(block: int) -> np.ndarray:
            gen = _generator(self.seed, block, (0, 0, _INIT_WORD, tag))
            uniform = gen.random(shape[1:])
            normal = gen.standard_normal(shape[1:])
            return np.stack([uniform, normal], axis=1)[None]

        both = _blocked(self.trajectory_ids, draw)[0]
        return both[:, 0], both[:, 1]

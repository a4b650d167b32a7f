"""Counter-based Gaussian streams for reproducible trajectory sampling.

Every draw is addressed by (run seed, stream id, step index, trajectory
index) through a Philox counter, so the same address always yields the
same Gaussian block no matter how many threads are running or in which
order trajectories are processed.

Layout: Philox key = (seed, stream); the step index selects a disjoint
counter block of 2^64 draws; within a block, trajectory i starts at
offset i·dim. Raw 64-bit words are mapped to open-interval uniforms and
then through the inverse normal CDF.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_INV_2_53 = 2.0**-53


def _to_normal(raw: np.ndarray) -> np.ndarray:
    """Map raw uint64 words to standard normals via inverse-CDF.

    The +0.5 offset keeps uniforms strictly inside (0, 1) so ndtri is
    always finite.
    """
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    return ndtri(u)


class CounterRng:
    """Deterministic, order-independent Gaussian source.

    Parameters
    ----------
    seed : int
        Run-level seed.
    stream : int
        Substream id, separating e.g. candidate trajectories or
        independent samplers inside one run.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)

    def _bitgen(self, step: int, block: int) -> Philox:
        bg = Philox(
            counter=np.array([0, 0, int(step), 0], dtype=np.uint64),
            key=np.array([self.seed, self.stream], dtype=np.uint64),
        )
        if block:
            # Philox.advance moves one 128-bit counter block (4 raw words)
            # per unit of delta.
            bg.advance(int(block))
        return bg

    def normal(self, step: int, n: int, dim: int) -> np.ndarray:
        """Gaussian block of shape (n, dim) for all trajectories at one step."""
        raw = self._bitgen(step, 0).random_raw(n * dim)
        return _to_normal(raw).reshape(n, dim)

    def normal_rows(self, step: int, row0: int, n: int, dim: int) -> np.ndarray:
        """Rows [row0, row0+n) of the step's full Gaussian block.

        Lets workers draw disjoint trajectory slices that concatenate to
        exactly the block :meth:`normal` would return.
        """
        word = row0 * dim
        raw = self._bitgen(step, word // 4).random_raw(word % 4 + n * dim)
        return _to_normal(raw[word % 4:]).reshape(n, dim)

    def normal_single(self, step: int, traj: int, dim: int) -> np.ndarray:
        """Gaussian row (dim,) for trajectory `traj` at one step.

        Equals row `traj` of the block returned by :meth:`normal`.
        """
        return self.normal_rows(step, traj, 1, dim)[0]

    def substream(self, stream: int) -> "CounterRng":
        """A sibling generator with the same seed and a different stream id."""
        return CounterRng(self.seed, stream)

    def row_slice(self, row0: int) -> "RowSliceRng":
        """View whose block draws start at trajectory row row0."""
        return RowSliceRng(self, row0)


class RowSliceRng:
    """Adapter exposing a row-offset window of a CounterRng's blocks.

    normal(step, n, dim) returns rows [row0, row0+n) of the base
    generator's block, so chunked workers reproduce the unchunked draws
    bit for bit.
    """

    def __init__(self, base: CounterRng, row0: int):
        self.base = base
        self.row0 = int(row0)

    @property
    def seed(self) -> int:
        return self.base.seed

    @property
    def stream(self) -> int:
        return self.base.stream

    def normal(self, step: int, n: int, dim: int) -> np.ndarray:
        return self.base.normal_rows(step, self.row0, n, dim)

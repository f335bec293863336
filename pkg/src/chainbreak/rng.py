"""Counter-based random streams.

Every stochastic routine in the package derives its noise from a Philox
generator keyed by ``(seed, trial_index, purpose)``.  Streams for distinct
keys are independent, and a given stream yields the same sequence no matter
how the draws are chunked, so results do not depend on block sizes or on
how trials are distributed over workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# purpose ids keep streams used for different roles disjoint even when the
# same (seed, trial_index) pair appears in two experiments
NORMALS = 0
UNIFORMS = 1
CHAIN_NORMALS = 2
CHAIN_UNIFORMS = 3
BATCH = 4


def stream(seed: int, trial_index: int = 0, purpose: int = NORMALS) -> np.random.Generator:
    """Return the generator for one (seed, trial, purpose) triple."""
    if trial_index < 0:
        raise ValueError(f"trial_index must be non-negative, got {trial_index}")
    if not 0 <= purpose < 8:
        raise ValueError(f"unknown stream purpose {purpose}")
    key = ((seed & _MASK64) << 64) | ((trial_index << 3 | purpose) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


class UniformPool:
    """Lazily refilled buffer of uniforms drawn from one stream.

    Simulation kernels consume uniforms only on the rare steps where a
    boundary is close enough for a crossing test to matter, so uniforms are
    drawn on demand in small blocks rather than pregenerated per step.
    """

    def __init__(self, gen: np.random.Generator, block: int = 4096):
        self._gen = gen
        self._block = block
        self.buf = gen.random(block)
        self.used = 0

    def refill(self, used: int) -> None:
        """Discard the first ``used`` entries and top the buffer back up."""
        self.used += used
        remaining = self.buf[used:]
        fresh = self._gen.random(self._block)
        self.buf = np.concatenate([remaining, fresh])

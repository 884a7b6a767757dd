"""Counter-based Gaussian noise for reproducible parallel simulation.

Every increment is a pure function of (seed, stream, step, index): the block
of standard normals for a given (stream, step) is generated by a Philox
bit generator keyed on the seed with the (step, stream) pair in the counter,
so the value at a given index never depends on how many values were drawn,
in which order, or on how work is split across threads.  Prefix stability
(the first k values of a block are the same whatever the block length) is
what lets a mean-field proxy particle reuse the increments of particle 0
of an N-particle block.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

# Counter slot used when drawing initial conditions, so that time-step
# blocks (step = 0, 1, 2, ...) can never collide with them.
INIT_STEP = 2**62

_INV_2_53 = 2.0**-53


class BrownianSource:
    """Stateless source of standard normal increments.

    Gaussians come from the inverse normal CDF applied to 53-bit uniforms,
    offset to the open interval (0, 1).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def _raw(self, stream: int, step: int, count: int) -> np.ndarray:
        bg = Philox(key=self.seed, counter=[0, 0, int(step), int(stream)])
        return bg.random_raw(count)

    def uniforms(self, stream: int, step: int, count: int) -> np.ndarray:
        """Uniform variates in the open interval (0, 1)."""
        raw = self._raw(stream, step, count)
        return ((raw >> 11) + 0.5) * _INV_2_53

    def normals(self, stream: int, step: int, count: int) -> np.ndarray:
        """Standard normal variates, element i being a pure function of
        (seed, stream, step, i)."""
        return ndtri(self.uniforms(stream, step, count))

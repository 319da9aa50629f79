"""Counter-based random streams.

Every random draw derives from one 64-bit seed.  A stream is keyed by
``(seed, purpose, index)``, so multistart runs produce the same numbers no
matter how the starts are scheduled.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

EXTREMAL = 1
SOLVER = 2
CHECKS = 3


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    key = ((int(seed) & _MASK64) << 64) | ((int(purpose) & 0xFFFFFFFF) << 32) | (int(index) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))

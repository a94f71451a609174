"""Counter-based keyed random numbers.

Draws are pure functions of (seed, stream coordinates), so any task can
reproduce the same value regardless of execution order or thread.  This
is what makes speculative and sequential simulation runs bit-identical
rather than merely statistically equivalent.

The mixer is the 64-bit finalizer from splitmix64 folded over the
coordinates with a golden-ratio multiplier.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stream purposes, kept small and documented: one integer per use site.
MOVE = 1
ACCEPT = 2
EXCHANGE = 3
INIT = 4


def _mix(value: int) -> int:
    value &= _MASK
    value = ((value ^ (value >> 30)) * _MIX1) & _MASK
    value = ((value ^ (value >> 27)) * _MIX2) & _MASK
    return value ^ (value >> 31)


def key_bits(seed: int, *coords: int) -> int:
    """Collapse a seed and stream coordinates into 64 mixed bits."""
    state = _mix(seed ^ _GOLDEN)
    for coord in coords:
        state = _mix(state ^ ((coord * _GOLDEN) & _MASK))
    return state


def uniform(seed: int, *coords: int) -> float:
    """One uniform draw in [0, 1) for the given stream coordinates."""
    return (key_bits(seed, *coords) >> 11) * 2.0**-53


def uniform_block(seed: int, count: int, *coords: int) -> np.ndarray:
    """``count`` uniform draws in [0, 1), lane index appended to the key.

    Vectorized with wrap-around uint64 arithmetic; lane ``i`` equals
    ``uniform(seed, *coords, i)`` exactly.
    """
    base = np.uint64(key_bits(seed, *coords))
    lanes = np.arange(count, dtype=np.uint64)
    golden = np.uint64(_GOLDEN)
    with np.errstate(over="ignore"):
        state = base ^ (lanes * golden)
        state = (state ^ (state >> np.uint64(30))) * np.uint64(_MIX1)
        state = (state ^ (state >> np.uint64(27))) * np.uint64(_MIX2)
        state = state ^ (state >> np.uint64(31))
    return (state >> np.uint64(11)).astype(np.float64) * 2.0**-53

"""Deterministic, hierarchical random-number streams.

Every source of randomness in a run is drawn from a stream addressed by an
integer path rooted at the experiment seed, e.g. ``(seed, STREAM_PROPOSAL,
t)``.  Streams are independent of execution order and thread count, which
is what makes runs bit-reproducible and lets the filters satisfy their
locality contracts: the noise consumed at (t, v, n) never depends on values
elsewhere on the lattice.

Within a stream, arrays are drawn in one vectorised call with a fixed
layout (particle index first, vertex second), so position in the array
plays the role of the remaining key components.
"""

from __future__ import annotations

import numpy as np

# Stream purposes.  Keys are integers because SeedSequence entropy is.
STREAM_DATA = 0
STREAM_PROPOSAL = 1
STREAM_RESAMPLE = 2
STREAM_SUBSAMPLE = 3
STREAM_IID = 4
STREAM_BACKWARD = 5
STREAM_INIT = 6
STREAM_FILTER = 7
STREAM_RUN = 8


class RngKey:
    """Immutable address of a random stream.

    ``child`` extends the path; ``generator`` instantiates the stream.
    Two keys with different paths yield statistically independent
    generators (SeedSequence mixing).
    """

    __slots__ = ("path",)

    def __init__(self, *path: int):
        for p in path:
            if not isinstance(p, (int, np.integer)) or p < 0:
                raise ValueError(f"key components must be nonnegative ints, got {p!r}")
        self.path = tuple(int(p) for p in path)

    def child(self, *ids: int) -> "RngKey":
        return RngKey(*self.path, *ids)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.path)))

    def __repr__(self) -> str:
        return f"RngKey{self.path}"

    def __eq__(self, other) -> bool:
        return isinstance(other, RngKey) and self.path == other.path

    def __hash__(self) -> int:
        return hash(self.path)

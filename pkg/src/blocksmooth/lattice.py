"""One-dimensional lattice topology: neighbourhoods, blocks, boundaries.

Vertices are ``0..V-1`` with metric ``d(u, v) = |u - v|``.  Neighbourhoods
truncate at the lattice edges; there is no wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpatialGraph:
    """Lattice of ``num_vertices`` sites with interaction radius ``radius``.

    ``radius`` is the model's spatial correlation range: the default
    neighbourhood ``N(v)`` used by transitions is ``N_radius(v)``.
    """

    num_vertices: int
    radius: int

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("lattice needs at least one vertex")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def vertices(self) -> np.ndarray:
        return np.arange(self.num_vertices)

    def distance(self, u: int, v: int) -> int:
        return abs(int(u) - int(v))

    def neighborhood(self, v: int, i: int | None = None) -> np.ndarray:
        """``N_i(v) = {u : |u - v| <= i}``, truncated at the edges.

        ``i`` defaults to the graph radius.
        """
        i = self.radius if i is None else i
        lo = max(0, v - i)
        hi = min(self.num_vertices, v + i + 1)
        return np.arange(lo, hi)

    def ring(self, v: int, r: int) -> np.ndarray:
        """``B_r(v) = {u : |u - v| = r}``, truncated at the edges."""
        if r == 0:
            return np.array([v])
        out = [u for u in (v - r, v + r) if 0 <= u < self.num_vertices]
        return np.array(out, dtype=int)

    def neighborhood_of_set(self, vertices, i: int | None = None) -> np.ndarray:
        """``N_i(J)``: union of ``N_i(v)`` over ``v in J``, sorted, deduplicated."""
        verts = np.asarray(vertices, dtype=int)
        if verts.size == 0:
            raise ValueError("vertex set must be nonempty")
        if verts.min() < 0 or verts.max() >= self.num_vertices:
            raise ValueError("vertex set outside the lattice")
        i = self.radius if i is None else i
        parts = [self.neighborhood(int(v), i) for v in verts]
        return np.unique(np.concatenate(parts))

    def block_boundary(self, block) -> np.ndarray:
        """``dK = {v in K : N(v) not a subset of K}`` (radius-``b`` neighbourhoods)."""
        block = np.asarray(block, dtype=int)
        if block.size == 0:
            raise ValueError("block must be nonempty")
        members = set(block.tolist())
        out = [
            int(v)
            for v in block
            if not set(self.neighborhood(int(v)).tolist()) <= members
        ]
        return np.array(out, dtype=int)

    def set_distance(self, a, b) -> int:
        """``d(J, J') = min |u - v|`` over pairs."""
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if a.size == 0 or b.size == 0:
            raise ValueError("sets must be nonempty")
        return int(np.abs(a[:, None] - b[None, :]).min())


def build_lattice(num_vertices: int, radius: int) -> SpatialGraph:
    """Construct the 1-D lattice graph (V >= 1 enforced)."""
    return SpatialGraph(num_vertices, radius)


@dataclass(frozen=True)
class BlockPartition:
    """Ordered partition of the vertex set into contiguous blocks.

    ``enlargement_radius`` is the radius ``i`` defining the enlarged blocks
    ``K_hat = N_i(K)`` used by the blocked smoothers.
    """

    blocks: tuple = field()
    enlargement_radius: int = 0

    def __post_init__(self):
        if self.enlargement_radius < 0:
            raise ValueError("enlargement radius must be nonnegative")
        blocks = tuple(tuple(int(v) for v in blk) for blk in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise ValueError("partition needs nonempty blocks")
        flat = [v for blk in blocks for v in blk]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("blocks must tile 0..V-1 without gaps or overlap")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def contiguous(cls, num_vertices: int, block_size: int, enlargement_radius: int = 0) -> "BlockPartition":
        """Equal-size contiguous blocks; the final block absorbs any remainder."""
        if block_size < 1 or block_size > num_vertices:
            raise ValueError("block size must be in 1..V")
        n_full = num_vertices // block_size
        edges = [k * block_size for k in range(n_full)] + [num_vertices]
        if len(edges) < 2:
            edges = [0, num_vertices]
        blocks = [tuple(range(edges[k], edges[k + 1])) for k in range(len(edges) - 1)]
        return cls(tuple(blocks), enlargement_radius)

    @classmethod
    def single_block(cls, num_vertices: int) -> "BlockPartition":
        return cls((tuple(range(num_vertices)),), 0)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def num_vertices(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block(self, k: int) -> np.ndarray:
        return np.array(self.blocks[k], dtype=int)

    def enlarged_block(self, k: int, graph: SpatialGraph) -> np.ndarray:
        """``K_hat = N_i(K)`` on the given graph."""
        return graph.neighborhood_of_set(self.blocks[k], self.enlargement_radius)

"""Mixed bounded sample space: products of simplices and a hypercube.

A point lives in ``S_{d_1} x ... x S_{d_M} x [0,1]^{d_cube}``.  Simplex
blocks store the d free coordinates; the (d+1)-th part is implicit
(one minus the stored sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, OutOfRange, SimplexViolation

SUM_TOL = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Shape of the sample space: simplex block dimensions plus a cube."""

    simplex_dims: tuple[int, ...]
    cube_dim: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.simplex_dims)
        object.__setattr__(self, "simplex_dims", dims)
        if any(d < 1 for d in dims):
            raise InvalidArgument("simplex block dimensions must be positive")
        if self.cube_dim < 0:
            raise InvalidArgument("cube dimension must be non-negative")
        if len(dims) == 0 and self.cube_dim == 0:
            raise InvalidArgument("the sample space must be non-empty")

    @property
    def n_simplex(self) -> int:
        return len(self.simplex_dims)

    @property
    def n_blocks(self) -> int:
        """Simplex blocks plus the cube block (when present)."""
        return self.n_simplex + (1 if self.cube_dim > 0 else 0)

    @property
    def total_dim(self) -> int:
        return sum(self.simplex_dims) + self.cube_dim

    def block_dim(self, block: int) -> int:
        """Dimension of 1-based block index; M+1 is the cube block."""
        if 1 <= block <= self.n_simplex:
            return self.simplex_dims[block - 1]
        if block == self.n_simplex + 1 and self.cube_dim > 0:
            return self.cube_dim
        raise InvalidArgument(f"block index {block} out of range for {self}")

    def volume(self) -> float:
        """Lebesgue volume of the space: prod 1/d_m! over simplex blocks."""
        v = 1.0
        for d in self.simplex_dims:
            v /= math.factorial(d)
        return v


@dataclass(frozen=True)
class BlockIndex:
    """1-based block identifier; M+1 denotes the hypercube block."""

    index: int

    def check(self, spec: DomainSpec) -> None:
        spec.block_dim(self.index)


@dataclass(frozen=True)
class MixedPoint:
    """One observation: simplex sub-vectors plus a cube sub-vector."""

    simplex_blocks: tuple[np.ndarray, ...]
    cube_block: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.simplex_blocks)
        object.__setattr__(self, "simplex_blocks", blocks)
        object.__setattr__(self, "cube_block", np.asarray(self.cube_block, dtype=float))

    def block(self, index: int, spec: DomainSpec) -> np.ndarray:
        """Sub-vector of 1-based block `index`."""
        if 1 <= index <= spec.n_simplex:
            return self.simplex_blocks[index - 1]
        if index == spec.n_simplex + 1:
            return self.cube_block
        raise InvalidArgument(f"block index {index} out of range")

    def flat(self) -> np.ndarray:
        parts = list(self.simplex_blocks) + [self.cube_block]
        return np.concatenate([np.atleast_1d(p) for p in parts]) if parts else np.empty(0)


def point_from_flat(x: np.ndarray, spec: DomainSpec) -> MixedPoint:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.total_dim,):
        raise DimensionMismatch(f"expected {spec.total_dim} coordinates, got {x.shape}")
    blocks = []
    off = 0
    for d in spec.simplex_dims:
        blocks.append(x[off : off + d])
        off += d
    return MixedPoint(tuple(blocks), x[off:])


def validate(point: MixedPoint, spec: DomainSpec) -> MixedPoint:
    """Check that `point` lies in the space described by `spec`.

    Returns the point unchanged when all invariants hold.
    """
    if len(point.simplex_blocks) != spec.n_simplex:
        raise DimensionMismatch(
            f"expected {spec.n_simplex} simplex blocks, got {len(point.simplex_blocks)}"
        )
    if point.cube_block.shape != (spec.cube_dim,):
        raise DimensionMismatch(
            f"expected cube block of length {spec.cube_dim}, got {point.cube_block.shape}"
        )
    for m, (block, d) in enumerate(zip(point.simplex_blocks, spec.simplex_dims), start=1):
        if block.shape != (d,):
            raise DimensionMismatch(f"simplex block {m} has length {block.shape}, expected {d}")
        if np.any(block < 0.0) or np.any(block > 1.0):
            raise OutOfRange(f"simplex block {m} has a coordinate outside [0,1]")
        if block.sum() > 1.0 + SUM_TOL:
            raise SimplexViolation(f"simplex block {m} sums to {block.sum()} > 1")
    if spec.cube_dim and (np.any(point.cube_block < 0.0) or np.any(point.cube_block > 1.0)):
        raise OutOfRange("cube block has a coordinate outside [0,1]")
    return point


def clamp_interior(point: MixedPoint, spec: DomainSpec, epsilon: float = 1e-6) -> MixedPoint:
    """Push a point strictly inside the space.

    Every coordinate ends up >= epsilon and every simplex block sum
    <= 1 - epsilon; excess mass is redistributed proportionally within
    the block.  Idempotent, and total (never raises for coordinates in
    [0,1]).
    """
    if not (0.0 < epsilon <= 1e-3):
        raise InvalidArgument("epsilon must lie in (0, 1e-3]")
    new_blocks = []
    for block, d in zip(point.simplex_blocks, spec.simplex_dims):
        b = np.clip(block, epsilon, 1.0 - epsilon)
        s = b.sum()
        limit = 1.0 - epsilon
        if s > limit:
            # shrink toward the floor so the floor constraint is preserved
            b = epsilon + (b - epsilon) * (limit - d * epsilon) / (s - d * epsilon)
        new_blocks.append(b)
    cube = np.clip(point.cube_block, epsilon, 1.0 - epsilon)
    return MixedPoint(tuple(new_blocks), cube)


@dataclass(frozen=True)
class Dataset:
    """Column-block view of n observations on a DomainSpec."""

    spec: DomainSpec
    simplex: tuple[np.ndarray, ...]  # one (n, d_m) array per simplex block
    cube: np.ndarray  # (n, cube_dim)

    def __post_init__(self):
        object.__setattr__(self, "simplex", tuple(np.asarray(a, dtype=float) for a in self.simplex))
        object.__setattr__(self, "cube", np.asarray(self.cube, dtype=float))

    @property
    def n(self) -> int:
        if self.simplex:
            return self.simplex[0].shape[0]
        return self.cube.shape[0]

    def point(self, i: int) -> MixedPoint:
        return MixedPoint(tuple(a[i] for a in self.simplex), self.cube[i])

    def points(self):
        return [self.point(i) for i in range(self.n)]


def dataset_from_points(points, spec: DomainSpec) -> Dataset:
    simplex = tuple(
        np.array([p.simplex_blocks[m] for p in points]) if points else np.empty((0, d))
        for m, d in enumerate(spec.simplex_dims)
    )
    cube = (
        np.array([p.cube_block for p in points])
        if points
        else np.empty((0, spec.cube_dim))
    )
    if points and spec.cube_dim == 0:
        cube = np.empty((len(points), 0))
    return Dataset(spec, simplex, cube)


def clamp_dataset(data: Dataset, epsilon: float = 1e-6) -> Dataset:
    pts = [clamp_interior(p, data.spec, epsilon) for p in data.points()]
    return dataset_from_points(pts, data.spec)

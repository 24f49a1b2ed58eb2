"""Finite sample spaces, partitions as sigma-algebras, and filtrations.

A partition is stored in canonical form: points inside a block follow the
sample-space order and blocks are sorted by their first point, so structurally
equal partitions compare and serialize identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidMatrix, NotNested, SpaceMismatch


@dataclass(frozen=True)
class SampleSpace:
    """An ordered finite set of outcome labels."""

    points: tuple[str, ...]

    def __post_init__(self):
        pts = tuple(str(p) for p in self.points)
        if not pts:
            raise InvalidMatrix("sample space must be nonempty")
        if len(set(pts)) != len(pts):
            raise InvalidMatrix("sample space labels must be unique")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return len(self.points)

    def index(self, point: str) -> int:
        try:
            return self.points.index(point)
        except ValueError:
            raise SpaceMismatch(f"point {point!r} not in sample space") from None

    def check_event(self, event: Iterable[str]) -> tuple[str, ...]:
        """Validate an event and return it in canonical (space) order."""
        members = {str(p) for p in event}
        for p in members:
            self.index(p)
        return tuple(p for p in self.points if p in members)


@dataclass(frozen=True)
class PartitionSigmaAlgebra:
    """A partition of a sample space, identified with the sigma-algebra it generates."""

    space: SampleSpace
    blocks: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        canon = []
        seen: set[str] = set()
        for block in self.blocks:
            ordered = self.space.check_event(block)
            if not ordered:
                raise InvalidMatrix("partition blocks must be nonempty")
            if seen.intersection(ordered):
                raise InvalidMatrix("partition blocks must be disjoint")
            seen.update(ordered)
            canon.append(ordered)
        if seen != set(self.space.points):
            missing = sorted(set(self.space.points) - seen)
            raise InvalidMatrix(f"partition does not cover the space: missing {missing}")
        canon.sort(key=lambda blk: self.space.index(blk[0]))
        object.__setattr__(self, "blocks", tuple(canon))

    @classmethod
    def trivial(cls, space: SampleSpace) -> "PartitionSigmaAlgebra":
        return cls(space, (space.points,))

    @classmethod
    def discrete(cls, space: SampleSpace) -> "PartitionSigmaAlgebra":
        return cls(space, tuple((p,) for p in space.points))

    @property
    def is_discrete(self) -> bool:
        return all(len(b) == 1 for b in self.blocks)

    def block_of(self, point: str) -> tuple[str, ...]:
        for block in self.blocks:
            if point in block:
                return block
        raise SpaceMismatch(f"point {point!r} not in sample space")

    def refines(self, coarser: "PartitionSigmaAlgebra") -> bool:
        """True iff every block of ``self`` lies inside one block of ``coarser``."""
        if self.space != coarser.space:
            raise SpaceMismatch("partitions live on different sample spaces")
        return all(set(b) <= set(coarser.block_of(b[0])) for b in self.blocks)


def join_partitions(p: PartitionSigmaAlgebra,
                    q: PartitionSigmaAlgebra) -> PartitionSigmaAlgebra:
    """Coarsest common refinement: nonempty intersections of blocks."""
    if p.space != q.space:
        raise SpaceMismatch("cannot join partitions on different spaces")
    blocks = []
    for bp in p.blocks:
        for bq in q.blocks:
            common = tuple(x for x in bp if x in bq)
            if common:
                blocks.append(common)
    return PartitionSigmaAlgebra(p.space, tuple(blocks))


@dataclass(frozen=True)
class Filtration:
    """A refining chain of partitions over one sample space."""

    stages: tuple[PartitionSigmaAlgebra, ...]

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise InvalidMatrix("filtration needs at least one stage")
        space = stages[0].space
        for j, stage in enumerate(stages[1:], start=1):
            if stage.space != space:
                raise SpaceMismatch("filtration stages live on different spaces")
            if not stage.refines(stages[j - 1]):
                raise NotNested(
                    f"stage {j} does not refine stage {j - 1}")
        object.__setattr__(self, "stages", stages)

    @property
    def space(self) -> SampleSpace:
        return self.stages[0].space

    @property
    def depth(self) -> int:
        return len(self.stages)

    def terminal(self) -> PartitionSigmaAlgebra:
        """Join of all stages; equals the last stage of a refining chain."""
        out = self.stages[0]
        for stage in self.stages[1:]:
            out = join_partitions(out, stage)
        return out


def partition_from_lists(space: SampleSpace,
                         blocks: Sequence[Sequence[str]]) -> PartitionSigmaAlgebra:
    """Build a partition from a raw list-of-lists description."""
    return PartitionSigmaAlgebra(space, tuple(tuple(b) for b in blocks))

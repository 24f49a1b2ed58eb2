"""Operator-valued random variables on a finite sample space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from . import linalg
from .errors import DimMismatch, InvalidMatrix, SpaceMismatch
from .spaces import SampleSpace


@dataclass(frozen=True, eq=False)
class QuantumRandomVariable:
    """A map from sample points to d x d complex matrices.

    Hermiticity, positivity and effect-valuedness are detected at
    construction and exposed as flags; operations that need one of them
    check the flag instead of re-deriving it.
    """

    space: SampleSpace
    values: Mapping[str, np.ndarray]
    dim: int = 0
    is_hermitian: bool = False
    is_positive: bool = False
    is_effect: bool = False

    def __post_init__(self):
        if set(self.values) != set(self.space.points):
            raise SpaceMismatch("values must be given at every sample point")
        mats: dict[str, np.ndarray] = {}
        dim = 0
        for x in self.space.points:
            arr = linalg.as_matrix(self.values[x])
            if dim == 0:
                dim = arr.shape[0]
            elif arr.shape[0] != dim:
                raise DimMismatch(
                    f"value at {x!r} has dimension {arr.shape[0]}, expected {dim}")
            arr.flags.writeable = False
            mats[x] = arr
        hermitian = all(linalg.is_hermitian(mats[x]) for x in self.space.points)
        positive = False
        effect = False
        if hermitian:
            lows, highs = [], []
            for x in self.space.points:
                vals = np.linalg.eigvalsh(0.5 * (mats[x] + linalg.dagger(mats[x])))
                scale = max(float(np.max(np.abs(vals))), 1.0)
                lows.append(float(vals[0]) / scale)
                highs.append(float(vals[-1]))
            positive = all(lo >= -linalg.PSD_TOL for lo in lows)
            effect = positive and all(hi <= 1.0 + linalg.PSD_TOL for hi in highs)
        object.__setattr__(self, "values", mats)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "is_hermitian", hermitian)
        object.__setattr__(self, "is_positive", positive)
        object.__setattr__(self, "is_effect", effect)

    @classmethod
    def from_values(cls, space: SampleSpace,
                    values: Mapping[str, np.ndarray]) -> "QuantumRandomVariable":
        return cls(space, dict(values))

    @classmethod
    def constant(cls, space: SampleSpace, matrix) -> "QuantumRandomVariable":
        arr = linalg.as_matrix(matrix)
        return cls(space, {x: arr for x in space.points})

    @classmethod
    def zero(cls, space: SampleSpace, dim: int) -> "QuantumRandomVariable":
        return cls.constant(space, np.zeros((dim, dim), dtype=np.complex128))

    def value(self, point: str) -> np.ndarray:
        try:
            return self.values[point]
        except KeyError:
            raise SpaceMismatch(f"point {point!r} not in sample space") from None

    def map_values(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> "QuantumRandomVariable":
        return QuantumRandomVariable(
            self.space, {x: fn(x, self.values[x]) for x in self.space.points})

    def masked(self, event: Iterable[str]) -> "QuantumRandomVariable":
        """Multiply by the indicator of ``event``: zero outside, kept inside."""
        inside = set(self.space.check_event(event))
        zero = np.zeros((self.dim, self.dim), dtype=np.complex128)
        return self.map_values(lambda x, v: v if x in inside else zero)

    def _require_same_shape(self, other: "QuantumRandomVariable") -> None:
        if self.space != other.space:
            raise SpaceMismatch("random variables live on different spaces")
        if self.dim != other.dim:
            raise DimMismatch(f"dimensions differ: {self.dim} vs {other.dim}")

    def __add__(self, other: "QuantumRandomVariable") -> "QuantumRandomVariable":
        self._require_same_shape(other)
        return self.map_values(lambda x, v: v + other.values[x])

    def __sub__(self, other: "QuantumRandomVariable") -> "QuantumRandomVariable":
        self._require_same_shape(other)
        return self.map_values(lambda x, v: v - other.values[x])

    def __neg__(self) -> "QuantumRandomVariable":
        return self.map_values(lambda x, v: -v)

    def __mul__(self, scalar) -> "QuantumRandomVariable":
        c = complex(scalar)
        return self.map_values(lambda x, v: c * v)

    __rmul__ = __mul__

    def max_norm(self) -> float:
        """Largest entry magnitude across all values."""
        return max(linalg.max_entry_norm(self.values[x]) for x in self.space.points)

    def distance(self, other: "QuantumRandomVariable") -> float:
        """Max-entry norm of the difference."""
        self._require_same_shape(other)
        return max(
            linalg.max_entry_norm(self.values[x] - other.values[x])
            for x in self.space.points)

    def allclose(self, other: "QuantumRandomVariable", tol: float = 1e-12) -> bool:
        return self.distance(other) <= tol

    def is_measurable(self, blocks: Iterable[tuple[str, ...]],
                      tol: float = 1e-12) -> bool:
        """True iff values are constant on every block, within ``tol``."""
        for block in blocks:
            first = self.values[block[0]]
            for x in block[1:]:
                if linalg.max_entry_norm(self.values[x] - first) > tol:
                    return False
        return True


def require_hermitian_valued(psi: QuantumRandomVariable, what: str) -> None:
    if not psi.is_hermitian:
        raise InvalidMatrix(f"{what}: random variable must be Hermitian-valued")


def require_positive_valued(psi: QuantumRandomVariable, what: str) -> None:
    if not psi.is_positive:
        raise InvalidMatrix(f"{what}: random variable must be positive-valued")

"""POVMs on finite sample spaces and operator-valued Radon-Nikodym calculus.

A POVM assigns a quantum effect to every atom; event values are the sums of
atom effects and are formed on demand. The induced classical measure is the
normalized trace of the atom effects, and derivatives of POVMs against their
induced measures (and against each other) are computed atomwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import linalg
from .errors import (
    DimMismatch,
    NotAbsolutelyContinuous,
    NotAnEffect,
    NotProbabilityMeasure,
    SpaceMismatch,
    ZeroMeasure,
)
from .rv import QuantumRandomVariable
from .spaces import SampleSpace

#: absolute threshold below which an effect counts as the zero matrix
NULL_ATOM_TOL = linalg.PSD_TOL

#: |total trace / d - 1| threshold for the probability flag
PROBABILITY_TOL = 1e-10


@dataclass(frozen=True)
class ClassicalMeasure:
    """A nonnegative weight per sample point."""

    space: SampleSpace
    weights: Mapping[str, float]

    def __post_init__(self):
        if set(self.weights) != set(self.space.points):
            raise SpaceMismatch("weights must be given at every sample point")
        clean = {}
        for x in self.space.points:
            w = float(self.weights[x])
            if w < 0.0:
                raise ZeroMeasure(f"negative weight {w!r} at {x!r}")
            clean[x] = w
        object.__setattr__(self, "weights", clean)

    def weight(self, point: str) -> float:
        try:
            return self.weights[point]
        except KeyError:
            raise SpaceMismatch(f"point {point!r} not in sample space") from None

    def mass(self, event: Iterable[str] | None = None) -> float:
        points = self.space.points if event is None else self.space.check_event(event)
        return float(sum(self.weights[x] for x in points))

    @property
    def is_probability(self) -> bool:
        return abs(self.mass() - 1.0) <= PROBABILITY_TOL

    def positive_points(self, tol: float = 0.0) -> tuple[str, ...]:
        return tuple(x for x in self.space.points if self.weights[x] > tol)


@dataclass(frozen=True, eq=False)
class Povm:
    """A positive operator-valued measure given by its atom effects.

    Construct through :func:`validate_povm`, which performs the axiom checks.
    """

    space: SampleSpace
    effects: Mapping[str, np.ndarray]
    dim: int
    is_probability: bool

    def effect(self, point: str) -> np.ndarray:
        try:
            return self.effects[point]
        except KeyError:
            raise SpaceMismatch(f"point {point!r} not in sample space") from None

    def mass(self, event: Iterable[str] | None = None) -> np.ndarray:
        """Value of the measure on an event: sum of its atom effects."""
        points = self.space.points if event is None else self.space.check_event(event)
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for x in points:
            out = out + self.effects[x]
        return out

    @cached_property
    def sqrt_effects(self) -> dict[str, np.ndarray]:
        return {x: linalg.root_psd(self.effects[x]) for x in self.space.points}

    def integrate(self, psi: QuantumRandomVariable,
                  event: Iterable[str] | None = None) -> np.ndarray:
        """Operator integral of ``psi`` over ``event``.

        Atomwise this is ``sum_x effect_x^{1/2} psi(x) effect_x^{1/2}``,
        which on the whole space of a probability measure is the quantum
        expectation.
        """
        if psi.space != self.space:
            raise SpaceMismatch("random variable and measure spaces differ")
        if psi.dim != self.dim:
            raise DimMismatch(f"dimensions differ: {psi.dim} vs {self.dim}")
        points = self.space.points if event is None else self.space.check_event(event)
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for x in points:
            s = self.sqrt_effects[x]
            out = out + s @ psi.value(x) @ s
        return out

    def as_qrv(self) -> QuantumRandomVariable:
        """The atom effects viewed as an effect-valued random variable."""
        return QuantumRandomVariable(self.space, dict(self.effects))


def validate_povm(candidate: Mapping[str, np.ndarray],
                  space: SampleSpace | Sequence[str] | None = None) -> Povm:
    """Check the POVM axioms on a raw effect map and build the measure.

    Every atom value must be a quantum effect (PSD, eigenvalues at most one
    within tolerance), and so must the total mass, since it is the largest
    event value. The total must also be nonzero.

    Raises
    ------
    NotAnEffect
        If an atom value or the total mass fails the effect test.
    ZeroMeasure
        If the total mass vanishes.
    """
    if space is None:
        space = SampleSpace(tuple(candidate.keys()))
    elif not isinstance(space, SampleSpace):
        space = SampleSpace(tuple(space))
    if set(candidate) != set(space.points):
        raise SpaceMismatch("effect map must cover exactly the sample space")

    effects: dict[str, np.ndarray] = {}
    dim = 0
    for x in space.points:
        arr = linalg.as_hermitian(candidate[x])
        if dim == 0:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise DimMismatch(
                f"effect at {x!r} has dimension {arr.shape[0]}, expected {dim}")
        _require_effect(arr, f"atom {x!r}")
        arr.flags.writeable = False
        effects[x] = arr

    total = np.zeros((dim, dim), dtype=np.complex128)
    for x in space.points:
        total = total + effects[x]
    if linalg.max_entry_norm(total) <= NULL_ATOM_TOL:
        raise ZeroMeasure("total mass of the candidate measure is zero")
    _require_effect(total, "total mass")
    is_probability = (
        linalg.max_entry_norm(total - np.eye(dim)) <= PROBABILITY_TOL)
    return Povm(space=space, effects=effects, dim=dim,
                is_probability=is_probability)


def _require_effect(arr: np.ndarray, what: str) -> None:
    vals = np.linalg.eigvalsh(arr)
    scale = max(float(np.max(np.abs(vals))), 1.0)
    if float(vals[0]) < -linalg.PSD_TOL * scale:
        raise NotAnEffect(
            f"{what}: min eigenvalue {float(vals[0]):.3e} is negative")
    if float(vals[-1]) > 1.0 + linalg.PSD_TOL:
        raise NotAnEffect(
            f"{what}: max eigenvalue {float(vals[-1]):.6e} exceeds one")


def scalar_povm(measure: ClassicalMeasure, dim: int) -> Povm:
    """The POVM ``mu * identity`` induced by a classical measure."""
    eye = np.eye(dim)
    return validate_povm(
        {x: measure.weights[x] * eye for x in measure.space.points},
        space=measure.space)


def require_probability(nu: Povm, what: str) -> None:
    if not nu.is_probability:
        raise NotProbabilityMeasure(
            f"{what}: total mass must be the identity; "
            "normalize the input measure explicitly if that is intended")


def induced_measure(nu: Povm) -> ClassicalMeasure:
    """Normalized-trace classical measure: ``mu(x) = tr(effect_x) / d``."""
    weights = {
        x: float(np.real(np.trace(nu.effects[x]))) / nu.dim
        for x in nu.space.points
    }
    return ClassicalMeasure(nu.space, weights)


def null_atoms(nu: Povm) -> tuple[str, ...]:
    """Atoms carrying the zero effect (within tolerance)."""
    return tuple(x for x in nu.space.points
                 if linalg.max_entry_norm(nu.effects[x]) <= NULL_ATOM_TOL)


def principal_rn(nu: Povm) -> QuantumRandomVariable:
    """Derivative of a POVM against its induced classical measure.

    At every atom of positive induced measure the value is the atom effect
    rescaled to trace ``d``; at null atoms the value is zero. The defining
    property ``integral_E <w xi, xi> dmu = <nu(E) xi, xi>`` then holds for
    every event and vector.
    """
    mu = induced_measure(nu)
    values: dict[str, np.ndarray] = {}
    zero = np.zeros((nu.dim, nu.dim), dtype=np.complex128)
    for x in nu.space.points:
        m = mu.weights[x]
        values[x] = nu.effects[x] / m if m > 0.0 else zero
    return QuantumRandomVariable(nu.space, values)


def singular_atoms(nu: Povm, rank_tol: float = linalg.RANK_TOL) -> tuple[str, ...]:
    """Atoms of positive induced measure whose derivative value is singular."""
    mu = induced_measure(nu)
    out = []
    for x in nu.space.points:
        if mu.weights[x] <= 0.0:
            continue
        vals = np.linalg.eigvalsh(nu.effects[x])
        if float(vals[0]) <= rank_tol * float(vals[-1]):
            out.append(x)
    return tuple(out)


def is_abs_continuous(nu2: Povm, nu1: Povm) -> bool:
    """True iff every null atom of ``nu1`` is also null for ``nu2``."""
    if nu2.space != nu1.space:
        raise SpaceMismatch("measures live on different sample spaces")
    if nu2.dim != nu1.dim:
        raise DimMismatch(f"dimensions differ: {nu2.dim} vs {nu1.dim}")
    null1 = set(null_atoms(nu1))
    return all(linalg.max_entry_norm(nu2.effects[x]) <= NULL_ATOM_TOL
               for x in null1)


def nonprincipal_rn(nu2: Povm, nu1: Povm) -> QuantumRandomVariable:
    """Derivative of one POVM against another.

    Atomwise, with ``w_i`` the principal derivatives and ``mu_i`` the induced
    measures, the value is the classical ratio ``mu2/mu1`` times the
    congruence of ``w2`` by ``w1^{-1/2}``. Where ``w1`` is singular the
    congruence uses the pseudo-inverse root; :func:`singular_atoms` on
    ``nu1`` reports exactly the atoms where that happens.

    Raises
    ------
    NotAbsolutelyContinuous
        If ``nu2`` charges an atom that is null for ``nu1``.
    """
    if not is_abs_continuous(nu2, nu1):
        raise NotAbsolutelyContinuous(
            "second measure charges an atom the first one does not")
    mu1 = induced_measure(nu1)
    mu2 = induced_measure(nu2)
    w1 = principal_rn(nu1)
    w2 = principal_rn(nu2)
    values: dict[str, np.ndarray] = {}
    zero = np.zeros((nu1.dim, nu1.dim), dtype=np.complex128)
    for x in nu1.space.points:
        m1 = mu1.weights[x]
        if m1 <= 0.0:
            values[x] = zero
            continue
        ratio = mu2.weights[x] / m1
        inv_root = linalg.pinv_psd(linalg.root_psd(w1.value(x)))
        values[x] = ratio * (inv_root @ w2.value(x) @ inv_root)
    return QuantumRandomVariable(nu1.space, values)

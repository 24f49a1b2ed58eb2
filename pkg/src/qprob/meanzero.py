"""Classification of vanishing quantum expectations.

For a positive-valued random variable the following are equivalent, and the
classifier evaluates each one independently:

A. the quantum expectation vanishes;
B. at almost every point the ranges of the value and of the derivative of
   the measure are orthogonal;
C. at almost every point ``psi(x)* w(x) = 0``;
D. the box product ``psi box w`` vanishes almost everywhere;
E. (positive values only) ``psi(x)^{1/2} w(x)^{1/2} = 0`` almost everywhere.

For merely Hermitian or general values only part of the graph survives:
B and C are equivalent, C implies D, and D implies A; the reverse
implications fail on explicit two-point counterexamples, which
:func:`counterexample_fixtures` provides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import SpaceMismatch
from .expectation import boxtimes, expectation
from .povm import Povm, induced_measure, principal_rn, require_probability, validate_povm
from .rv import QuantumRandomVariable
from .spaces import SampleSpace

#: default max-entry / overlap threshold for every statement
MEANZERO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MeanZeroReport:
    """Verdicts for the five vanishing-mean statements plus witnesses.

    ``statement_e`` is ``None`` when the input is not positive-valued, since
    the square-root statement only makes sense there. ``witnesses`` maps a
    statement letter to the matrices or scalars whose size was measured.
    """

    statement_a: bool
    statement_b: bool
    statement_c: bool
    statement_d: bool
    statement_e: bool | None
    tol: float
    witnesses: dict

    @property
    def verdicts(self) -> dict[str, bool | None]:
        return {"A": self.statement_a, "B": self.statement_b,
                "C": self.statement_c, "D": self.statement_d,
                "E": self.statement_e}

    def implication_violations(self) -> list[str]:
        """Edges of the general implication graph violated by the verdicts.

        Checks B implies C, C implies B, C implies D, and D implies A; empty
        for every mathematically consistent input.
        """
        found = []
        if self.statement_b and not self.statement_c:
            found.append("B->C")
        if self.statement_c and not self.statement_b:
            found.append("C->B")
        if self.statement_c and not self.statement_d:
            found.append("C->D")
        if self.statement_d and not self.statement_a:
            found.append("D->A")
        return found

    @property
    def all_equivalent(self) -> bool:
        """True when the five evaluated statements agree (positive case)."""
        flags = [self.statement_a, self.statement_b, self.statement_c,
                 self.statement_d]
        if self.statement_e is not None:
            flags.append(self.statement_e)
        return len(set(flags)) == 1


def classify_mean_zero(psi: QuantumRandomVariable, nu: Povm,
                       tol: float = MEANZERO_TOL) -> MeanZeroReport:
    """Evaluate the five vanishing-mean statements independently.

    Pointwise statements are evaluated only at atoms of positive induced
    measure; null atoms cannot influence any of them.
    """
    require_probability(nu, "classify_mean_zero")
    if psi.space != nu.space:
        raise SpaceMismatch("random variable and measure spaces differ")

    mu = induced_measure(nu)
    w = principal_rn(nu)
    active = [x for x in nu.space.points if mu.weights[x] > 0.0]

    mean = expectation(psi, nu)
    verdict_a = linalg.max_entry_norm(mean) < tol

    overlaps: dict[str, float] = {}
    adjoint_products: dict[str, np.ndarray] = {}
    for x in active:
        p_val = linalg.column_space_projector(psi.value(x))
        p_w = linalg.range_projector(w.value(x))
        overlaps[x] = float(np.real(np.trace(p_val @ p_w)))
        adjoint_products[x] = linalg.dagger(psi.value(x)) @ w.value(x)
    verdict_b = all(v < tol for v in overlaps.values())
    verdict_c = all(linalg.max_entry_norm(m) < tol
                    for m in adjoint_products.values())

    boxed = boxtimes(psi, nu)
    verdict_d = all(linalg.max_entry_norm(boxed.value(x)) < tol for x in active)

    verdict_e: bool | None = None
    root_products: dict[str, np.ndarray] = {}
    if psi.is_positive:
        for x in active:
            root_products[x] = (linalg.root_psd(psi.value(x))
                                @ linalg.root_psd(w.value(x)))
        verdict_e = all(linalg.max_entry_norm(m) < tol
                        for m in root_products.values())

    witnesses = {
        "A": mean,
        "B": overlaps,
        "C": adjoint_products,
        "D": {x: boxed.value(x) for x in active},
        "E": root_products if psi.is_positive else None,
    }
    return MeanZeroReport(statement_a=bool(verdict_a),
                          statement_b=bool(verdict_b),
                          statement_c=bool(verdict_c),
                          statement_d=bool(verdict_d),
                          statement_e=verdict_e if verdict_e is None else bool(verdict_e),
                          tol=tol, witnesses=witnesses)


def adjoint_mean_zero(psi: QuantumRandomVariable, nu: Povm,
                      tol: float = MEANZERO_TOL) -> bool:
    """Left-multiplied vanishing condition: ``psi(x) w(x) = 0`` a.e.

    When the condition holds the expectation must vanish as well; that
    consequence is verified on the spot and a failure would indicate a
    numerical inconsistency rather than a property of the input.
    """
    require_probability(nu, "adjoint_mean_zero")
    if psi.space != nu.space:
        raise SpaceMismatch("random variable and measure spaces differ")
    mu = induced_measure(nu)
    w = principal_rn(nu)
    holds = all(
        linalg.max_entry_norm(psi.value(x) @ w.value(x)) < tol
        for x in nu.space.points if mu.weights[x] > 0.0)
    if holds:
        mean_norm = linalg.max_entry_norm(expectation(psi, nu))
        if mean_norm >= tol:
            raise AssertionError(
                f"left condition holds but the mean has norm {mean_norm:.3e}")
    return holds


@dataclass(frozen=True)
class CounterexampleFixtures:
    """Two-point fixtures separating the statements for non-positive values.

    The first pair has a vanishing mean although no pointwise product
    vanishes; the second has a vanishing box product although the adjoint
    products do not vanish.
    """

    nu1: Povm
    psi1: QuantumRandomVariable
    nu2: Povm
    psi2: QuantumRandomVariable


def counterexample_fixtures() -> CounterexampleFixtures:
    """The built-in two-point separating fixtures on a qubit."""
    space = SampleSpace(("x1", "x2"))
    eye = np.eye(2)
    nu1 = validate_povm({"x1": 0.5 * eye, "x2": 0.5 * eye}, space=space)
    psi1 = QuantumRandomVariable(space, {"x1": eye.copy(), "x2": -eye})
    nu2 = validate_povm(
        {"x1": np.diag([1.0, 0.0]), "x2": np.diag([0.0, 1.0])}, space=space)
    psi2 = QuantumRandomVariable(
        space,
        {"x1": np.array([[0.0, 1.0], [1.0, 1.0]]),
         "x2": np.array([[1.0, 1.0], [1.0, 0.0]])})
    return CounterexampleFixtures(nu1=nu1, psi1=psi1, nu2=nu2, psi2=psi2)

"""Quantum expectation of operator-valued random variables.

The expectation against a quantum probability measure is the effect-weighted
congruence sum ``sum_x effect_x^{1/2} psi(x) effect_x^{1/2}``. This module
also provides the box product (congruence by derivative roots), the probe
states that turn "for every state" into a finite check, the Choi certificate
of complete positivity, ultraweak almost-sure limits, a dominated convergence
check, and summation of operator series inside the expectation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DimMismatch,
    InvalidMatrix,
    NotAnEffect,
    NotConverged,
    NotStrictlyPositiveEffect,
    PartialSumsDiverge,
    QprobError,
    SpaceMismatch,
)
from .linalg import DensityOperator, dagger, max_entry_norm, trace_pair
from .povm import Povm, induced_measure, nonprincipal_rn, principal_rn, require_probability
from .rv import QuantumRandomVariable, require_hermitian_valued

#: number of trailing terms that must agree for a sequence to count as Cauchy
UW_WINDOW = 5

#: default tolerance for ultraweak convergence checks
CONV_TOL = 1e-8

#: strict-positivity floor for effect eigenvalues in the series identity
EPS_INV = 1e-6

#: refuse to sum series whose a-priori term count exceeds this
MAX_SERIES_TERMS = 5_000_000


@dataclass(frozen=True, eq=False)
class ProbeStateSet:
    """A spanning family of states used to certify operator statements.

    The real span of the probe matrices must be the full Hermitian space, so
    scalar checks against every probe certify entrywise statements.
    """

    dim: int
    states: tuple[DensityOperator, ...]

    def __post_init__(self):
        rows = []
        for rho in self.states:
            if rho.dim != self.dim:
                raise DimMismatch("probe state dimension mismatch")
            flat = rho.matrix.reshape(-1)
            rows.append(np.concatenate([flat.real, flat.imag]))
        rank = np.linalg.matrix_rank(np.asarray(rows))
        if rank != self.dim * self.dim:
            raise InvalidMatrix(
                f"probe states span rank {rank}, need {self.dim * self.dim}")

    def __iter__(self):
        return iter(self.states)

    def __len__(self) -> int:
        return len(self.states)


def probe_states(d: int) -> ProbeStateSet:
    """The standard d^2 probe states.

    Diagonal units, then for each pair the symmetric and antisymmetric
    rank-one combinations, each normalized to trace one.
    """
    states: list[DensityOperator] = []
    for i in range(d):
        m = np.zeros((d, d), dtype=np.complex128)
        m[i, i] = 1.0
        states.append(DensityOperator(m, label=f"e{i}"))
    for i in range(d):
        for j in range(i + 1, d):
            sym = np.zeros((d, d), dtype=np.complex128)
            sym[i, i] = sym[j, j] = 0.5
            sym[i, j] = sym[j, i] = 0.5
            states.append(DensityOperator(sym, label=f"re{i}{j}"))
            skew = np.zeros((d, d), dtype=np.complex128)
            skew[i, i] = skew[j, j] = 0.5
            skew[i, j] = -0.5j
            skew[j, i] = 0.5j
            states.append(DensityOperator(skew, label=f"im{i}{j}"))
    return ProbeStateSet(dim=d, states=tuple(states))


def boxtimes(psi: QuantumRandomVariable, nu: Povm) -> QuantumRandomVariable:
    """Congruence of ``psi`` by square roots of the principal derivative.

    Pointwise ``w(x)^{1/2} psi(x) w(x)^{1/2}`` with ``w`` the derivative of
    ``nu`` against its induced classical measure.
    """
    require_probability(nu, "boxtimes")
    _check_compat(psi, nu)
    w = principal_rn(nu)
    values = {}
    for x in nu.space.points:
        s = linalg.root_psd(w.value(x))
        values[x] = s @ psi.value(x) @ s
    return QuantumRandomVariable(nu.space, values)


def general_boxtimes(psi: QuantumRandomVariable, nu2: Povm,
                     nu1: Povm) -> QuantumRandomVariable:
    """Congruence of ``psi`` by the derivative of one measure against another.

    Pointwise ``m (w1^{1/2} psi w1^{1/2}) m`` where ``m`` is the geometric
    mean of ``w1^{-1}`` and the derivative of ``nu2`` against ``nu1``. When
    the two measures coincide and ``w1`` is invertible this collapses to
    ``psi`` itself, and against a scalar base measure it collapses to
    :func:`boxtimes`.
    """
    if nu2.space != nu1.space:
        raise SpaceMismatch("measures live on different sample spaces")
    _check_compat(psi, nu1)
    deriv = nonprincipal_rn(nu2, nu1)
    mu1 = induced_measure(nu1)
    w1 = principal_rn(nu1)
    values = {}
    zero = np.zeros((nu1.dim, nu1.dim), dtype=np.complex128)
    for x in nu1.space.points:
        if mu1.weights[x] <= 0.0:
            values[x] = zero
            continue
        s1 = linalg.root_psd(w1.value(x))
        mean = linalg.geometric_mean(linalg.pinv_psd(w1.value(x)), deriv.value(x))
        values[x] = mean @ (s1 @ psi.value(x) @ s1) @ mean
    return QuantumRandomVariable(nu1.space, values)


def psi_rho(psi: QuantumRandomVariable, rho: DensityOperator,
            nu: Povm) -> dict[str, complex]:
    """Scalar slice of ``psi`` through a state: ``tr(rho (psi box w)(x))``."""
    boxed = boxtimes(psi, nu)
    return {x: trace_pair(rho, boxed.value(x)) for x in nu.space.points}


def expectation(psi: QuantumRandomVariable, nu: Povm) -> np.ndarray:
    """Quantum expectation ``sum_x effect_x^{1/2} psi(x) effect_x^{1/2}``."""
    require_probability(nu, "expectation")
    _check_compat(psi, nu)
    return nu.integrate(psi)


def expectation_via_derivative(psi: QuantumRandomVariable, nu: Povm) -> np.ndarray:
    """Same expectation through the induced measure and the box product.

    Computes ``sum_x mu(x) (psi box w)(x)``; agreement with
    :func:`expectation` is the dual-route identity used by the tests and the
    CLI report.
    """
    mu = induced_measure(nu)
    boxed = boxtimes(psi, nu)
    out = np.zeros((nu.dim, nu.dim), dtype=np.complex128)
    for x in nu.space.points:
        out = out + mu.weights[x] * boxed.value(x)
    return out


def choi_matrix(nu: Povm) -> np.ndarray:
    """Choi matrix of the expectation map, one block per sample point.

    The expectation is a direct sum of congruences ``Y -> e_x^{1/2} Y
    e_x^{1/2}``, so its Choi matrix is the direct sum of the blocks
    ``(1 (x) e_x^{1/2}) Omega (1 (x) e_x^{1/2})`` with ``Omega`` the
    unnormalized maximally entangled projector. Positive semidefiniteness of
    the result certifies complete positivity.
    """
    d = nu.dim
    omega = np.outer(np.eye(d).reshape(-1), np.eye(d).reshape(-1))
    n = len(nu.space.points)
    out = np.zeros((n * d * d, n * d * d), dtype=np.complex128)
    for k, x in enumerate(nu.space.points):
        lift = np.kron(np.eye(d), nu.sqrt_effects[x])
        block = lift @ omega @ lift
        sl = slice(k * d * d, (k + 1) * d * d)
        out[sl, sl] = 0.5 * (block + dagger(block))
    return out


def uw_as_limit(seq: Sequence[QuantumRandomVariable], probes: ProbeStateSet,
                tol: float = CONV_TOL) -> QuantumRandomVariable:
    """Ultraweak almost-sure limit of a sequence of random variables.

    Declares convergence when, for every probe state and sample point, the
    scalar trace sequence is Cauchy over the trailing window of
    ``UW_WINDOW`` terms within ``tol``. The returned candidate applies a
    guarded entrywise Aitken step to the last three terms, which is exact for
    geometrically convergent tails and falls back to the final term.

    Raises
    ------
    NotConverged
        If some probe trace still moves by ``tol`` or more across the
        trailing window; carries the worst residual and its location.
    """
    seq = list(seq)
    if len(seq) < UW_WINDOW:
        raise NotConverged(
            f"need at least {UW_WINDOW} terms, got {len(seq)}",
            residual=float("inf"))
    space = seq[0].space
    for psi in seq[1:]:
        if psi.space != space or psi.dim != seq[0].dim:
            raise SpaceMismatch("sequence members live on different spaces")
    if probes.dim != seq[0].dim:
        raise DimMismatch("probe dimension does not match the sequence")

    worst = 0.0
    worst_probe, worst_point = -1, ""
    window = seq[-UW_WINDOW:]
    for k, rho in enumerate(probes):
        for x in space.points:
            final = trace_pair(rho, window[-1].value(x))
            resid = max(abs(trace_pair(rho, psi.value(x)) - final)
                        for psi in window[:-1])
            if resid > worst:
                worst, worst_probe, worst_point = resid, k, x
    if worst >= tol:
        raise NotConverged(
            f"probe trace at point {worst_point!r} still moves by "
            f"{worst:.3e} >= {tol:.1e}", residual=worst,
            probe_index=worst_probe, point=worst_point)

    values = {
        x: linalg.aitken(seq[-3].value(x), seq[-2].value(x), seq[-1].value(x))
        for x in space.points
    }
    return QuantumRandomVariable(space, values)


@dataclass(frozen=True, eq=False)
class DominatedConvergenceReport:
    """Outcome of a dominated-convergence check on a sequence."""

    converged: bool
    limit: QuantumRandomVariable
    envelope: dict[str, float]
    residual_history: np.ndarray  # probes x terms
    final_residual: float
    decay_exponent: float
    tol: float


def dct_check(seq: Sequence[QuantumRandomVariable], nu: Povm,
              probes: ProbeStateSet | None = None,
              tol: float = CONV_TOL) -> DominatedConvergenceReport:
    """Dominated-convergence check: expectations follow the ultraweak limit.

    Finds the limit of the sequence, records the dominating envelope
    ``Z(x) = sup over terms and probes of |trace slice|``, and tracks the
    per-probe expectation residuals against the expectation of the limit.
    """
    require_probability(nu, "dct_check")
    seq = list(seq)
    if probes is None:
        probes = probe_states(nu.dim)
    limit = uw_as_limit(seq, probes, tol)
    _check_compat(limit, nu)

    w = principal_rn(nu)
    roots = {x: linalg.root_psd(w.value(x)) for x in nu.space.points}
    envelope = {x: 0.0 for x in nu.space.points}
    for psi in seq:
        for x in nu.space.points:
            boxed = roots[x] @ psi.value(x) @ roots[x]
            biggest = max(abs(trace_pair(rho, boxed)) for rho in probes)
            envelope[x] = max(envelope[x], biggest)

    target = expectation(limit, nu)
    history = np.zeros((len(probes), len(seq)))
    for n, psi in enumerate(seq):
        diff = expectation(psi, nu) - target
        for k, rho in enumerate(probes):
            history[k, n] = abs(trace_pair(rho, diff))
    final = float(history[:, -1].max())
    return DominatedConvergenceReport(
        converged=bool(final < tol), limit=limit, envelope=envelope,
        residual_history=history, final_residual=final,
        decay_exponent=_decay_exponent(history), tol=tol)


def _decay_exponent(history: np.ndarray) -> float:
    """Log-log slope of the worst-probe residual over the trailing half."""
    worst = history.max(axis=0)
    n = np.arange(1, worst.size + 1)
    keep = (n > worst.size // 2) & (worst > 0.0)
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(n[keep]), np.log(worst[keep]), 1)[0]
    return float(slope)


@dataclass(frozen=True, eq=False)
class SeriesResult:
    """Both routes through an operator series and their agreement."""

    sum_of_expectations: np.ndarray
    expectation_of_limit: np.ndarray
    n_used: int
    gap: float
    tol: float


def series_expectation(terms: Sequence[QuantumRandomVariable], nu: Povm,
                       tol: float = CONV_TOL) -> SeriesResult:
    """Sum a series of random variables inside the expectation.

    Checks that the partial sums converge ultraweakly, then compares the sum
    of the termwise expectations (truncated once its own trailing window is
    Cauchy within ``tol``) against the expectation of the limit. The two
    routes must agree within ``10 * tol``.

    Raises
    ------
    PartialSumsDiverge
        If the partial sums have no ultraweak limit within ``tol``.
    """
    require_probability(nu, "series_expectation")
    terms = list(terms)
    if not terms:
        raise InvalidMatrix("series needs at least one term")
    partials = []
    acc = terms[0]
    partials.append(acc)
    for term in terms[1:]:
        acc = acc + term
        partials.append(acc)
    probes = probe_states(nu.dim)
    try:
        limit = uw_as_limit(partials, probes, tol)
    except NotConverged as exc:
        raise PartialSumsDiverge(
            f"partial sums do not settle: {exc}") from exc

    expectation_partials = []
    acc_e = np.zeros((nu.dim, nu.dim), dtype=np.complex128)
    for term in terms:
        acc_e = acc_e + expectation(term, nu)
        expectation_partials.append(acc_e.copy())
    n_used = len(terms)
    for n in range(UW_WINDOW, len(terms) + 1):
        window = expectation_partials[n - UW_WINDOW:n]
        spread = max(max_entry_norm(m - window[-1]) for m in window[:-1])
        if spread < tol:
            n_used = n
            break
    route_sum = expectation_partials[n_used - 1]
    route_limit = expectation(limit, nu)
    gap = max_entry_norm(route_sum - route_limit)
    if gap > 10.0 * tol:
        raise QprobError(
            f"series routes disagree by {gap:.3e} > {10.0 * tol:.1e}")
    return SeriesResult(sum_of_expectations=route_sum,
                        expectation_of_limit=route_limit,
                        n_used=n_used, gap=gap, tol=tol)


@dataclass(frozen=True, eq=False)
class EffectSeriesVerdict:
    """Truncated effect-series identity versus the identity matrix."""

    passed: bool
    residual: float
    n_used: int
    lambda_min: float
    total: np.ndarray
    tol: float


def effect_series_identity(psi: QuantumRandomVariable, nu: Povm,
                           n_max: int | None = None,
                           tol: float = CONV_TOL) -> EffectSeriesVerdict:
    """Sum ``E[psi (1 - (1 + psi^{-2})^{-1})^n psi]`` over ``n >= 1``.

    For strictly positive effect values the series telescopes to the
    identity. All powers are functions of ``psi(x)``, so each atom is summed
    term by term in its own eigenbasis. The default ``n_max`` is the smallest
    count whose geometric tail bound ``(1 + lambda_min^2)^{-n}`` drops below
    ``tol * lambda_min^2``, which guarantees the truncation error is below
    ``tol`` before any term is computed.

    Raises
    ------
    NotStrictlyPositiveEffect
        If some value has an eigenvalue below ``EPS_INV`` on an atom of
        positive induced measure.
    NotAnEffect
        If some value has an eigenvalue above one.
    """
    require_probability(nu, "effect_series_identity")
    _check_compat(psi, nu)
    require_hermitian_valued(psi, "effect_series_identity")
    mu = induced_measure(nu)
    active = [x for x in nu.space.points if mu.weights[x] > 0.0]

    spectra: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    lam_min = np.inf
    for x in active:
        vals, vecs = np.linalg.eigh(psi.value(x))
        if float(vals[-1]) > 1.0 + linalg.PSD_TOL:
            raise NotAnEffect(
                f"value at {x!r} has eigenvalue {float(vals[-1]):.6e} > 1")
        if float(vals[0]) < EPS_INV:
            raise NotStrictlyPositiveEffect(
                f"value at {x!r} has eigenvalue {float(vals[0]):.3e} "
                f"below {EPS_INV:.1e}")
        spectra[x] = (vals, vecs)
        lam_min = min(lam_min, float(vals[0]))

    if n_max is None or n_max <= 0:
        floor = tol * lam_min * lam_min
        n_max = int(np.ceil(np.log(1.0 / floor) / np.log1p(lam_min * lam_min)))
        n_max = max(n_max, 1)
    if n_max > MAX_SERIES_TERMS:
        raise QprobError(
            f"a-priori term count {n_max} exceeds {MAX_SERIES_TERMS}; "
            "pass n_max explicitly to truncate earlier")

    total = np.zeros((nu.dim, nu.dim), dtype=np.complex128)
    for x in active:
        vals, vecs = spectra[x]
        kappa = 1.0 / (1.0 + vals * vals)
        sums = vals * vals * _power_partial_sum(kappa, n_max)
        inner = (vecs * sums) @ dagger(vecs)
        s = nu.sqrt_effects[x]
        total = total + s @ inner @ s
    residual = max_entry_norm(total - np.eye(nu.dim))
    return EffectSeriesVerdict(passed=bool(residual < tol), residual=residual,
                               n_used=n_max, lambda_min=float(lam_min),
                               total=total, tol=tol)


def _power_partial_sum(kappa: np.ndarray, n_terms: int,
                       chunk: int = 100_000) -> np.ndarray:
    """Accumulate ``sum_{n=1}^{N} kappa^n`` entrywise, term by term.

    Chunked so the intermediate power table stays small; the running power
    carries across chunks.
    """
    total = np.zeros_like(kappa)
    running = np.ones_like(kappa)
    done = 0
    while done < n_terms:
        count = min(chunk, n_terms - done)
        table = np.cumprod(np.tile(kappa, (count, 1)), axis=0)
        total = total + running * table.sum(axis=0)
        running = running * table[-1]
        done += count
    return total


def _check_compat(psi: QuantumRandomVariable, nu: Povm) -> None:
    if psi.space != nu.space:
        raise SpaceMismatch("random variable and measure spaces differ")
    if psi.dim != nu.dim:
        raise DimMismatch(f"dimensions differ: {psi.dim} vs {nu.dim}")

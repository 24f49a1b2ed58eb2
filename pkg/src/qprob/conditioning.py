"""Quantum conditional expectation, tower property, and martingale limits.

The conditional expectation of a random variable given a partition is the
partition-measurable variable whose operator integral matches that of the
original on every block. On each block this is a linear system for one
Hermitian matrix; it is solved in a Hermitian operator basis by minimal-norm
least squares, so rank-deficient measures pick the range-compressed version.
The solver is dense in d^2 unknowns per block and intended for the small
dimensions the rest of the package supports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DimMismatch,
    InvalidMatrix,
    NotNested,
    QprobError,
    SpaceMismatch,
    ZeroExpectation,
)
from .expectation import (
    CONV_TOL,
    UW_WINDOW,
    ProbeStateSet,
    expectation,
    probe_states,
    uw_as_limit,
)
from .linalg import max_entry_norm, trace_pair
from .povm import Povm, induced_measure, principal_rn, require_probability
from .rv import QuantumRandomVariable, require_hermitian_valued
from .spaces import Filtration, PartitionSigmaAlgebra

#: default residual tolerance for the block solves
SOLVER_TOL = 1e-9

#: a block solution with min eigenvalue below this is replaced by zero
CLAMP_EIG_TOL = -1e-8

#: default tolerance for limit-class equivalence, scaled by input norms
GAMMA_TOL = 1e-9

#: absolute threshold under which an expectation counts as zero (strict mode)
ZERO_MEAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ConditionalSolve:
    """Solution of the block systems defining a conditional expectation.

    ``block_values`` maps each partition block to its Hermitian solution;
    ``residuals`` holds the per-block defining-property residual in max-entry
    norm. Blocks whose solution violated positivity were replaced by zero and
    listed in ``clamped_blocks`` (their residual then reports the size of the
    dropped data). ``beyond_hypothesis`` marks inputs that are Hermitian but
    not positive-valued.
    """

    sigma: PartitionSigmaAlgebra
    block_values: dict[tuple[str, ...], np.ndarray]
    residuals: dict[tuple[str, ...], float]
    clamped_blocks: tuple[tuple[str, ...], ...]
    beyond_hypothesis: bool
    solver_tol: float
    dim: int

    def to_qrv(self) -> QuantumRandomVariable:
        """Expand the block values to a partition-measurable random variable."""
        values = {}
        for block in self.sigma.blocks:
            for x in block:
                values[x] = self.block_values[block]
        return QuantumRandomVariable(self.sigma.space, values)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _block_system(nu: Povm, mu_weights: dict[str, float],
                  roots: dict[str, np.ndarray],
                  block: tuple[str, ...]) -> tuple[np.ndarray, float]:
    """Superoperator of the block: ``Y -> sum mu_x root_x Y root_x``."""
    d = nu.dim
    mat = np.zeros((d * d, d * d), dtype=np.complex128)
    mass = 0.0
    for x in block:
        m = mu_weights[x]
        if m <= 0.0:
            continue
        mat = mat + m * np.kron(roots[x].T, roots[x])
        mass += m
    return mat, mass


def conditional_expectation(psi: QuantumRandomVariable, nu: Povm,
                            sigma: PartitionSigmaAlgebra,
                            solver_tol: float = SOLVER_TOL,
                            strict: bool = True) -> ConditionalSolve:
    """Condition a random variable on the sigma-algebra of a partition.

    Solves, for every block ``B`` of positive induced measure, the linear
    system ``sum_{x in B} mu_x w_x^{1/2} Y w_x^{1/2} = sum_{x in B} mu_x
    w_x^{1/2} psi(x) w_x^{1/2}`` by minimal-norm least squares in a Hermitian
    operator basis. Null blocks get the zero matrix. For positive-valued
    input a solution with an eigenvalue below ``CLAMP_EIG_TOL`` is replaced
    by zero and flagged, keeping the positivity convention explicit rather
    than silent.

    Raises
    ------
    ZeroExpectation
        In strict mode, when the input is positive-valued with vanishing
        expectation; conditioning is still well defined mathematically, but
        the martingale statements assume a nonzero mean, so the degenerate
        case must be requested explicitly with ``strict=False``.
    """
    require_probability(nu, "conditional_expectation")
    require_hermitian_valued(psi, "conditional_expectation")
    if psi.space != nu.space or sigma.space != nu.space:
        raise SpaceMismatch("random variable, measure and partition must share a space")
    if psi.dim != nu.dim:
        raise DimMismatch(f"dimensions differ: {psi.dim} vs {nu.dim}")
    beyond = not psi.is_positive
    if strict and not beyond:
        if max_entry_norm(expectation(psi, nu)) < ZERO_MEAN_TOL:
            raise ZeroExpectation(
                "conditioning a positive variable with zero expectation; "
                "pass strict=False to allow the degenerate case")

    d = nu.dim
    mu = induced_measure(nu)
    w = principal_rn(nu)
    roots = {x: linalg.root_psd(w.value(x)) for x in nu.space.points}
    basis = linalg.hermitian_basis(d)
    basis_mat = np.column_stack([h.reshape(-1, order="F") for h in basis])

    block_values: dict[tuple[str, ...], np.ndarray] = {}
    residuals: dict[tuple[str, ...], float] = {}
    clamped: list[tuple[str, ...]] = []
    for block in sigma.blocks:
        superop, mass = _block_system(nu, mu.weights, roots, block)
        if mass <= 0.0:
            block_values[block] = np.zeros((d, d), dtype=np.complex128)
            residuals[block] = 0.0
            continue
        target = np.zeros((d, d), dtype=np.complex128)
        for x in block:
            if mu.weights[x] > 0.0:
                target = target + mu.weights[x] * (roots[x] @ psi.value(x) @ roots[x])
        t_real = np.real(linalg.dagger(basis_mat) @ superop @ basis_mat)
        rhs = np.real(linalg.dagger(basis_mat) @ target.reshape(-1, order="F"))
        coef = np.linalg.lstsq(t_real, rhs, rcond=linalg.RANK_TOL)[0]
        sol = (basis_mat @ coef).reshape((d, d), order="F")
        sol = 0.5 * (sol + linalg.dagger(sol))
        applied = (superop @ sol.reshape(-1, order="F")).reshape((d, d), order="F")
        residual = max_entry_norm(applied - target)
        if not beyond:
            low = float(np.linalg.eigvalsh(sol)[0])
            if low < CLAMP_EIG_TOL:
                clamped.append(block)
                sol = np.zeros((d, d), dtype=np.complex128)
                residual = max_entry_norm(target)
        block_values[block] = sol
        residuals[block] = float(residual)
    return ConditionalSolve(sigma=sigma, block_values=block_values,
                            residuals=residuals, clamped_blocks=tuple(clamped),
                            beyond_hypothesis=beyond, solver_tol=solver_tol,
                            dim=d)


@dataclass(frozen=True, eq=False)
class RhoSliceReport:
    """Probe-state comparison of quantum and classical conditioning.

    For every probe the classical conditional expectation of the sliced
    variable is compared, block by block, with the block average of the
    sliced conditioned variable. ``pointwise_deviation`` additionally
    compares the slice of the conditioned variable pointwise against the
    block-constant classical value; it vanishes when the derivative is
    constant on blocks (scalar measures, singleton blocks) but not in
    general, since slicing need not preserve measurability.
    """

    max_deviation: float
    per_probe: dict[str, float]
    pointwise_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def rho_slice_check(psi: QuantumRandomVariable, nu: Povm,
                    sigma: PartitionSigmaAlgebra,
                    probes: ProbeStateSet | None = None,
                    tol: float = CONV_TOL,
                    strict: bool = True) -> RhoSliceReport:
    """Check that conditioning commutes with slicing through probe states."""
    solve = conditional_expectation(psi, nu, sigma, strict=strict)
    if solve.clamped_blocks:
        raise QprobError(
            "rho_slice_check requires a solve without clamped blocks")
    if probes is None:
        probes = probe_states(nu.dim)
    mu = induced_measure(nu)
    w = principal_rn(nu)
    roots = {x: linalg.root_psd(w.value(x)) for x in nu.space.points}
    phi = solve.to_qrv()

    per_probe: dict[str, float] = {}
    pointwise = 0.0
    for idx, rho in enumerate(probes):
        label = rho.label or f"probe{idx}"
        worst = 0.0
        for block in sigma.blocks:
            mass = sum(mu.weights[x] for x in block)
            if mass <= 0.0:
                continue
            sliced = {
                x: trace_pair(rho, roots[x] @ psi.value(x) @ roots[x])
                for x in block
            }
            classical = sum(mu.weights[x] * sliced[x] for x in block) / mass
            conditioned = {
                x: trace_pair(rho, roots[x] @ phi.value(x) @ roots[x])
                for x in block
            }
            aggregated = sum(mu.weights[x] * conditioned[x] for x in block) / mass
            worst = max(worst, abs(classical - aggregated))
            pointwise = max(
                pointwise,
                max(abs(conditioned[x] - classical)
                    for x in block if mu.weights[x] > 0.0))
        per_probe[label] = worst
    max_dev = max(per_probe.values()) if per_probe else 0.0
    return RhoSliceReport(max_deviation=max_dev, per_probe=per_probe,
                          pointwise_deviation=pointwise, tol=tol)


@dataclass(frozen=True, eq=False)
class TowerReport:
    """Three-way agreement of iterated conditioning."""

    deviation_refine_then_coarse: float
    deviation_coarse_then_refine: float
    max_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def tower_check(psi: QuantumRandomVariable, nu: Povm,
                coarse: PartitionSigmaAlgebra, fine: PartitionSigmaAlgebra,
                tol: float = CONV_TOL, strict: bool = True) -> TowerReport:
    """Tower property: conditioning twice equals conditioning once.

    With ``fine`` refining ``coarse``, conditioning on the fine algebra and
    then the coarse one must reproduce the single coarse conditioning, and
    conditioning the coarse result on the fine algebra must leave it fixed.

    Raises
    ------
    NotNested
        If ``fine`` does not refine ``coarse``.
    """
    if not fine.refines(coarse):
        raise NotNested("tower check needs the second partition to refine the first")
    on_coarse = conditional_expectation(psi, nu, coarse, strict=strict).to_qrv()
    on_fine = conditional_expectation(psi, nu, fine, strict=strict).to_qrv()
    fine_then_coarse = conditional_expectation(
        on_fine, nu, coarse, strict=False).to_qrv()
    coarse_then_fine = conditional_expectation(
        on_coarse, nu, fine, strict=False).to_qrv()
    dev1 = fine_then_coarse.distance(on_coarse)
    dev2 = coarse_then_fine.distance(on_coarse)
    return TowerReport(deviation_refine_then_coarse=float(dev1),
                       deviation_coarse_then_refine=float(dev2),
                       max_deviation=float(max(dev1, dev2)), tol=tol)


def build_martingale(psi: QuantumRandomVariable, nu: Povm,
                     filtration: Filtration,
                     strict: bool = True) -> list[QuantumRandomVariable]:
    """Condition one variable along every stage of a filtration."""
    return [
        conditional_expectation(psi, nu, stage, strict=strict).to_qrv()
        for stage in filtration.stages
    ]


@dataclass(frozen=True, eq=False)
class MartingaleVerdict:
    """Stagewise check of the martingale axioms."""

    passed: bool
    measurability_ok: tuple[bool, ...]
    integrability_ok: tuple[bool, ...]
    conditioning_residuals: tuple[float, ...]
    witness: str
    tol: float


def is_martingale(seq: Sequence[QuantumRandomVariable], nu: Povm,
                  filtration: Filtration, tol: float = CONV_TOL) -> MartingaleVerdict:
    """Verify adaptedness and the one-step conditioning identity.

    Checks that stage ``j`` is measurable for partition ``j``, that every
    stage is integrable (automatic on a finite space, recorded explicitly),
    and that conditioning stage ``j+1`` on partition ``j`` reproduces stage
    ``j`` within ``tol``.
    """
    seq = list(seq)
    if len(seq) != filtration.depth:
        raise InvalidMatrix(
            f"sequence length {len(seq)} does not match filtration depth "
            f"{filtration.depth}")
    measurable = tuple(
        phi.is_measurable(stage.blocks, tol)
        for phi, stage in zip(seq, filtration.stages))
    integrable = tuple(True for _ in seq)
    residuals = []
    witness = ""
    for j in range(len(seq) - 1):
        back = conditional_expectation(
            seq[j + 1], nu, filtration.stages[j], strict=False).to_qrv()
        residuals.append(float(back.distance(seq[j])))
        if residuals[-1] >= tol and not witness:
            witness = (f"conditioning stage {j + 1} on stage {j} misses by "
                       f"{residuals[-1]:.3e}")
    for j, ok in enumerate(measurable):
        if not ok and not witness:
            witness = f"stage {j} is not measurable for its partition"
    passed = all(measurable) and all(r < tol for r in residuals)
    return MartingaleVerdict(passed=bool(passed), measurability_ok=measurable,
                             integrability_ok=integrable,
                             conditioning_residuals=tuple(residuals),
                             witness=witness, tol=tol)


def gamma_equiv(a: QuantumRandomVariable, b: QuantumRandomVariable, nu: Povm,
                tol: float = GAMMA_TOL) -> bool:
    """Limit-class equivalence: the boxed difference vanishes a.e.

    True iff ``((a - b) box w)(x)`` vanishes in max-entry norm at every atom
    of positive induced measure, with ``tol`` scaled by the larger input
    norm. Two such variables are indistinguishable through every probe slice
    of the measure even when they differ entrywise on derivative kernels.
    """
    require_probability(nu, "gamma_equiv")
    diff = a - b
    if diff.space != nu.space or diff.dim != nu.dim:
        raise SpaceMismatch("operands do not match the measure")
    mu = induced_measure(nu)
    w = principal_rn(nu)
    scale = max(1.0, a.max_norm(), b.max_norm())
    for x in nu.space.points:
        if mu.weights[x] <= 0.0:
            continue
        s = linalg.root_psd(w.value(x))
        if max_entry_norm(s @ diff.value(x) @ s) >= tol * scale:
            return False
    return True


def sigma_member(candidate: QuantumRandomVariable, psi: QuantumRandomVariable,
                 nu: Povm, sigma_inf: PartitionSigmaAlgebra,
                 tol: float = GAMMA_TOL, strict: bool = True) -> bool:
    """Expectation-level membership in the limit class.

    True iff the expectation of the candidate matches the expectation of the
    conditioned variable on the terminal algebra, with ``tol`` scaled like
    in :func:`gamma_equiv`. Every limit-class member in the boxed sense is a
    member in this sense, never conversely.
    """
    conditioned = conditional_expectation(
        psi, nu, sigma_inf, strict=strict).to_qrv()
    gap = max_entry_norm(expectation(candidate, nu) - expectation(conditioned, nu))
    scale = max(1.0, candidate.max_norm(), psi.max_norm())
    return bool(gap < tol * scale)


@dataclass(frozen=True, eq=False)
class MartingaleRun:
    """Everything produced by one martingale convergence experiment."""

    filtration: Filtration
    stages: tuple[QuantumRandomVariable, ...]
    limit: QuantumRandomVariable
    terminal_sigma: PartitionSigmaAlgebra
    probe_traces: dict[str, dict[str, np.ndarray]]
    stage_gaps: tuple[float, ...]
    solver_residuals: tuple[float, ...]
    clamped: tuple[tuple[str, ...], ...]
    martingale_verdict: MartingaleVerdict
    limit_measurable: bool
    gamma_verdict: bool
    gamma_vs_target: bool | None
    sigma_verdict: bool
    tol: float


def qmct_run(psi: QuantumRandomVariable, nu: Povm, filtration: Filtration,
             probes: ProbeStateSet | None = None, tol: float = CONV_TOL,
             gamma_tol: float = GAMMA_TOL,
             strict: bool = True) -> MartingaleRun:
    """Run one martingale convergence experiment and classify its limit.

    Builds the conditioned stages, takes their ultraweak limit (a finite
    refining chain is eventually constant, so the stage list is padded with
    its final element before the window test), and then verifies the
    expected convergence behavior: the limit is measurable for the terminal
    algebra, it is limit-class equivalent to conditioning directly on the
    terminal algebra, and its expectation agrees with that conditioning.
    When the terminal algebra separates points, or the input variable is
    itself terminal-measurable, the limit is additionally compared against
    the input variable.
    """
    require_probability(nu, "qmct_run")
    if probes is None:
        probes = probe_states(nu.dim)
    solves = [conditional_expectation(psi, nu, stage, strict=strict)
              for stage in filtration.stages]
    stages = tuple(s.to_qrv() for s in solves)
    clamped = tuple(block for s in solves for block in s.clamped_blocks)

    padded = list(stages) + [stages[-1]] * UW_WINDOW
    limit = uw_as_limit(padded, probes, tol)

    terminal = filtration.terminal()
    limit_measurable = limit.is_measurable(terminal.blocks, tol)
    target_solve = conditional_expectation(psi, nu, terminal, strict=strict)
    target = target_solve.to_qrv()
    gamma_ok = gamma_equiv(limit, target, nu, gamma_tol)
    identified = terminal.is_discrete or psi.is_measurable(terminal.blocks, tol)
    gamma_vs_target = gamma_equiv(limit, psi, nu, gamma_tol) if identified else None
    sigma_ok = sigma_member(limit, psi, nu, terminal, strict=strict)

    traces: dict[str, dict[str, np.ndarray]] = {}
    for idx, rho in enumerate(probes):
        label = rho.label or f"probe{idx}"
        traces[label] = {
            x: np.array([trace_pair(rho, phi.value(x)) for phi in stages])
            for x in nu.space.points
        }
    gaps = tuple(float(phi.distance(limit)) for phi in stages)
    residuals = tuple(float(s.max_residual) for s in solves)
    verdict = is_martingale(list(stages), nu, filtration, tol=max(tol, SOLVER_TOL))
    return MartingaleRun(filtration=filtration, stages=stages, limit=limit,
                         terminal_sigma=terminal, probe_traces=traces,
                         stage_gaps=gaps, solver_residuals=residuals,
                         clamped=clamped, martingale_verdict=verdict,
                         limit_measurable=bool(limit_measurable),
                         gamma_verdict=bool(gamma_ok),
                         gamma_vs_target=gamma_vs_target,
                         sigma_verdict=bool(sigma_ok), tol=tol)


@dataclass(frozen=True, eq=False)
class ConditionalContinuityReport:
    """Conditioning applied along an ultraweakly convergent sequence."""

    converged: bool
    residual_history: tuple[float, ...]
    final_residual: float
    premise_residual: float
    tol: float


def cond_continuity_check(seq: Sequence[QuantumRandomVariable],
                          psi: QuantumRandomVariable, nu: Povm,
                          sigma: PartitionSigmaAlgebra,
                          probes: ProbeStateSet | None = None,
                          tol: float = CONV_TOL,
                          strict: bool = True) -> ConditionalContinuityReport:
    """Check that conditioning preserves ultraweak limits.

    ``premise_residual`` records how close the tail of the input sequence is
    to its stated limit through the probes; the history tracks the probe
    residuals of the conditioned terms against the conditioned limit.
    """
    if probes is None:
        probes = probe_states(nu.dim)
    target = conditional_expectation(psi, nu, sigma, strict=strict).to_qrv()
    premise = max(
        abs(trace_pair(rho, seq[-1].value(x) - psi.value(x)))
        for rho in probes for x in psi.space.points)
    history = []
    for term in seq:
        conditioned = conditional_expectation(
            term, nu, sigma, strict=False).to_qrv()
        worst = max(
            abs(trace_pair(rho, conditioned.value(x) - target.value(x)))
            for rho in probes for x in psi.space.points)
        history.append(float(worst))
    final = history[-1] if history else float("inf")
    return ConditionalContinuityReport(converged=bool(final < tol),
                                       residual_history=tuple(history),
                                       final_residual=final,
                                       premise_residual=float(premise),
                                       tol=tol)

"""Quantum expectation: probes, dual routes, Choi certificates, limits."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_close, random_hermitian, rng
from qprob import generate
from qprob.errors import (
    DimMismatch,
    InvalidMatrix,
    NotAnEffect,
    NotConverged,
    NotProbabilityMeasure,
    NotStrictlyPositiveEffect,
    PartialSumsDiverge,
    QprobError,
    SpaceMismatch,
)
from qprob.expectation import (
    CONV_TOL,
    EPS_INV,
    UW_WINDOW,
    ProbeStateSet,
    boxtimes,
    choi_matrix,
    dct_check,
    effect_series_identity,
    expectation,
    expectation_via_derivative,
    general_boxtimes,
    probe_states,
    psi_rho,
    series_expectation,
    uw_as_limit,
)
from qprob.linalg import (
    DensityOperator,
    dagger,
    is_psd,
    max_entry_norm,
    root_psd,
    trace_pair,
)
from qprob.povm import induced_measure, principal_rn, scalar_povm, validate_povm
from qprob.rv import QuantumRandomVariable
from qprob.spaces import SampleSpace

DUAL_ROUTE_TOL = 1e-10
CHOI_EIG_TOL = 1e-10
SEEDS = st.integers(min_value=0, max_value=10**6)
DIMS = st.sampled_from([2, 3, 4])


def sample_povm(seed: int, d: int = 2, n: int = 3, ranks=None):
    g = rng(seed)
    return generate.random_povm(g, generate.default_space(n), d, ranks=ranks)


def hermitian_qrv(seed: int, space, d: int) -> QuantumRandomVariable:
    g = rng(seed)
    return QuantumRandomVariable.from_values(
        space, {x: random_hermitian(g, d) for x in space.points})


class TestProbeStates:
    @given(DIMS)
    def test_count_trace_and_positivity(self, d):
        probes = probe_states(d)
        assert len(probes) == d * d
        for rho in probes:
            assert abs(float(np.real(np.trace(rho.matrix))) - 1.0) < 1e-12
            assert is_psd(rho.matrix)

    def test_labels(self):
        labels = [rho.label for rho in probe_states(2)]
        assert labels == ["e0", "e1", "re01", "im01"]

    @given(SEEDS, DIMS)
    def test_probes_separate_matrices(self, seed, d):
        # a Hermitian matrix with all probe slices zero must be zero
        h = random_hermitian(rng(seed), d)
        slices = [trace_pair(rho, h) for rho in probe_states(d)]
        biggest = max(abs(s) for s in slices)
        if max_entry_norm(h) > 1e-9:
            assert biggest > 1e-12 * max_entry_norm(h)

    def test_non_spanning_set_rejected(self):
        diag_only = tuple(
            DensityOperator(np.diag([1.0, 0.0])) for _ in range(4))
        with pytest.raises(InvalidMatrix):
            ProbeStateSet(dim=2, states=diag_only)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(DimMismatch):
            ProbeStateSet(dim=3, states=tuple(probe_states(2)))


class TestExpectation:
    @given(SEEDS, DIMS, st.sampled_from([2, 3, 5]))
    def test_unital(self, seed, d, n):
        nu = sample_povm(seed, d, n)
        one = QuantumRandomVariable.constant(nu.space, np.eye(d))
        assert_close(expectation(one, nu), np.eye(d), 1e-10, "unitality")

    @given(SEEDS, DIMS)
    def test_dual_route_full_rank(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = hermitian_qrv(seed + 1, nu.space, d)
        assert_close(expectation(psi, nu),
                     expectation_via_derivative(psi, nu),
                     DUAL_ROUTE_TOL, "dual route")

    @given(SEEDS)
    def test_dual_route_rank_deficient(self, seed):
        nu = sample_povm(seed, d=3, n=3, ranks=[1, 2, 3])
        psi = hermitian_qrv(seed + 1, nu.space, 3)
        assert_close(expectation(psi, nu),
                     expectation_via_derivative(psi, nu),
                     1e-9, "dual route, deficient measure")

    @given(SEEDS, DIMS)
    def test_positive_input_gives_psd_output(self, seed, d):
        nu = sample_povm(seed, d, 3)
        g = rng(seed + 2)
        psi = generate.random_positive_qrv(g, nu.space, d)
        assert is_psd(expectation(psi, nu))

    @given(SEEDS, DIMS)
    def test_linear_and_hermiticity_preserving(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = hermitian_qrv(seed + 3, nu.space, d)
        phi = hermitian_qrv(seed + 4, nu.space, d)
        lhs = expectation(psi + phi * 3.0, nu)
        rhs = expectation(psi, nu) + 3.0 * expectation(phi, nu)
        assert_close(lhs, rhs, 1e-10, "linearity")
        out = expectation(psi, nu)
        assert_close(out, dagger(out), 1e-12, "Hermitian output")

    def test_requires_probability(self):
        space = SampleSpace(("x1", "x2"))
        sub = validate_povm({x: 0.25 * np.eye(2) for x in space.points},
                            space=space)
        one = QuantumRandomVariable.constant(space, np.eye(2))
        with pytest.raises(NotProbabilityMeasure):
            expectation(one, sub)

    def test_space_mismatch(self):
        nu = sample_povm(0, 2, 3)
        other = QuantumRandomVariable.constant(SampleSpace(("y1",)), np.eye(2))
        with pytest.raises(SpaceMismatch):
            expectation(other, nu)


class TestBoxProducts:
    @given(SEEDS, DIMS)
    def test_boxtimes_against_scalar_measure_is_identity_map(self, seed, d):
        nu = sample_povm(seed, d, 3)
        mu = induced_measure(nu)
        flat = scalar_povm(mu, d)
        psi = hermitian_qrv(seed + 5, nu.space, d)
        boxed = boxtimes(psi, flat)
        for x in mu.positive_points(tol=1e-12):
            assert_close(boxed.value(x), psi.value(x), 1e-10)

    @given(SEEDS, DIMS)
    def test_general_boxtimes_collapses_on_equal_measures(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = hermitian_qrv(seed + 6, nu.space, d)
        out = general_boxtimes(psi, nu, nu)
        for x in nu.space.points:
            assert_close(out.value(x), psi.value(x), 1e-6,
                         f"collapse at {x}")

    @given(SEEDS, DIMS)
    def test_general_boxtimes_against_scalar_base_is_boxtimes(self, seed, d):
        nu = sample_povm(seed, d, 3)
        flat = scalar_povm(induced_measure(nu), d)
        psi = hermitian_qrv(seed + 7, nu.space, d)
        lhs = general_boxtimes(psi, nu, flat)
        rhs = boxtimes(psi, nu)
        for x in nu.space.points:
            assert_close(lhs.value(x), rhs.value(x), 1e-6)

    @given(SEEDS, DIMS)
    def test_psi_rho_is_probe_slice_of_box(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = hermitian_qrv(seed + 8, nu.space, d)
        rho = generate.random_density(rng(seed + 9), d)
        slices = psi_rho(psi, rho, nu)
        boxed = boxtimes(psi, nu)
        for x in nu.space.points:
            assert abs(slices[x] - trace_pair(rho, boxed.value(x))) < 1e-12


class TestChoi:
    @given(SEEDS, DIMS, st.sampled_from([2, 3, 4]))
    def test_choi_is_psd(self, seed, d, n):
        nu = sample_povm(seed, d, n)
        cmat = choi_matrix(nu)
        assert float(np.linalg.eigvalsh(cmat)[0]) >= -CHOI_EIG_TOL

    @given(SEEDS, st.sampled_from([2, 3]))
    def test_blocks_encode_the_sandwich_maps(self, seed, d):
        # reading each block back as a map must give Y -> s_x Y s_x
        nu = sample_povm(seed, d, 3)
        cmat = choi_matrix(nu)
        g = rng(seed + 10)
        y = random_hermitian(g, d)
        for k, x in enumerate(nu.space.points):
            sl = slice(k * d * d, (k + 1) * d * d)
            block = cmat[sl, sl].reshape(d, d, d, d)
            applied = np.einsum("ijkl,ik->jl", block, y)
            s = root_psd(nu.effects[x])
            assert_close(applied, s @ y @ s, 1e-9, f"map from block {x}")

    @given(SEEDS, st.sampled_from([2, 3]))
    def test_partial_trace_recovers_effects(self, seed, d):
        nu = sample_povm(seed, d, 3)
        cmat = choi_matrix(nu)
        total = np.zeros((d, d), dtype=np.complex128)
        for k, x in enumerate(nu.space.points):
            sl = slice(k * d * d, (k + 1) * d * d)
            block = cmat[sl, sl].reshape(d, d, d, d)
            partial = np.einsum("ijil->jl", block)
            assert_close(partial, nu.effects[x], 1e-9,
                         f"partial trace at {x}")
            total = total + partial
        assert_close(total, np.eye(d), 1e-9, "unital certificate")


class TestUltraweakLimit:
    @given(SEEDS, st.sampled_from([2, 3]))
    def test_geometric_sequence_limit(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = hermitian_qrv(seed + 11, nu.space, d)
        eta = hermitian_qrv(seed + 12, nu.space, d)
        seq = [psi + eta * (0.5 ** n) for n in range(40)]
        limit = uw_as_limit(seq, probe_states(d))
        assert limit.distance(psi) < 1e-10

    def test_too_few_terms(self):
        space = generate.default_space(2)
        seq = [QuantumRandomVariable.zero(space, 2)] * (UW_WINDOW - 1)
        with pytest.raises(NotConverged) as err:
            uw_as_limit(seq, probe_states(2))
        assert err.value.residual == float("inf")

    def test_oscillating_sequence_rejected(self):
        space = generate.default_space(2)
        seq = [QuantumRandomVariable.constant(space, ((-1.0) ** n) * np.eye(2))
               for n in range(20)]
        with pytest.raises(NotConverged) as err:
            uw_as_limit(seq, probe_states(2))
        assert err.value.residual >= 1.0
        assert err.value.point in space.points

    def test_probe_dim_mismatch(self):
        space = generate.default_space(2)
        seq = [QuantumRandomVariable.zero(space, 2)] * 6
        with pytest.raises(DimMismatch):
            uw_as_limit(seq, probe_states(3))


class TestDominatedConvergence:
    @settings(max_examples=20)
    @given(SEEDS)
    def test_harmonic_tail_report(self, seed):
        nu = sample_povm(seed, 2, 3)
        psi = hermitian_qrv(seed + 13, nu.space, 2)
        eta = hermitian_qrv(seed + 14, nu.space, 2)
        seq = [psi + eta * (1.0 / n) for n in range(1, 301)]
        report = dct_check(seq, nu, tol=1e-2)
        assert report.converged
        assert report.final_residual < 1e-2
        assert report.residual_history.shape == (4, 300)
        assert report.final_residual == pytest.approx(
            float(report.residual_history[:, -1].max()))
        # residuals are measured against the extrapolated limit, which sits
        # near psi + eta/(2N); subtracting that offset steepens the raw -1
        # harmonic slope, so accept anything clearly in the decaying band
        assert -2.2 < report.decay_exponent < -0.6
        assert report.limit.distance(psi) < 1e-2

    def test_envelope_dominates_every_slice(self):
        nu = sample_povm(21, 2, 3)
        psi = hermitian_qrv(22, nu.space, 2)
        eta = hermitian_qrv(23, nu.space, 2)
        seq = [psi + eta * (1.0 / n) for n in range(1, 201)]
        report = dct_check(seq, nu, tol=1e-1)
        probes = probe_states(2)
        w = principal_rn(nu)
        roots = {x: root_psd(w.value(x)) for x in nu.space.points}
        for member in seq:
            for x in nu.space.points:
                boxed = roots[x] @ member.value(x) @ roots[x]
                for rho in probes:
                    assert abs(trace_pair(rho, boxed)) <= (
                        report.envelope[x] + 1e-12)

    def test_slow_sequence_not_converged(self):
        nu = sample_povm(31, 2, 3)
        psi = hermitian_qrv(32, nu.space, 2)
        eta = hermitian_qrv(33, nu.space, 2)
        seq = [psi + eta * (5.0 / n) for n in range(1, 201)]
        report = dct_check(seq, nu, tol=1e-3)
        assert not report.converged
        assert report.final_residual >= 1e-3


class TestSeriesExpectation:
    @given(SEEDS, st.sampled_from([2, 3]))
    def test_geometric_series_routes_agree(self, seed, d):
        nu = sample_povm(seed, d, 3)
        eta = hermitian_qrv(seed + 15, nu.space, d)
        terms = [eta * (0.5 ** n) for n in range(60)]
        result = series_expectation(terms, nu)
        assert result.gap < 10 * CONV_TOL
        closed_form = expectation(eta * 2.0, nu)
        assert_close(result.sum_of_expectations, closed_form, 1e-6,
                     "geometric series closed form")
        assert result.n_used <= len(terms)

    def test_divergent_series_rejected(self):
        nu = sample_povm(41, 2, 3)
        eta = hermitian_qrv(42, nu.space, 2)
        with pytest.raises(PartialSumsDiverge):
            series_expectation([eta] * 30, nu)

    def test_empty_series_rejected(self):
        nu = sample_povm(43, 2, 3)
        with pytest.raises(InvalidMatrix):
            series_expectation([], nu)


class TestEffectSeries:
    @given(SEEDS, st.sampled_from([2, 3]))
    def test_identity_reached_at_a_priori_count(self, seed, d):
        nu = sample_povm(seed, d, 3)
        g = rng(seed + 16)
        psi = generate.random_effect_qrv(g, nu.space, d)
        verdict = effect_series_identity(psi, nu)
        assert verdict.passed
        assert verdict.residual < CONV_TOL
        assert verdict.lambda_min >= 0.05 - 1e-12

    @given(SEEDS)
    def test_truncated_sum_matches_naive_matrix_route(self, seed):
        # same truncation computed with dense matrix powers, no eigenbasis
        nu = sample_povm(seed, 2, 3)
        g = rng(seed + 17)
        psi = generate.random_effect_qrv(g, nu.space, 2)
        n_max = 40
        verdict = effect_series_identity(psi, nu, n_max=n_max)
        eye = np.eye(2)
        total = np.zeros((2, 2), dtype=np.complex128)
        for x in nu.space.points:
            v = psi.value(x)
            kappa = np.linalg.inv(eye + v @ v)
            power = eye.copy()
            inner = np.zeros((2, 2), dtype=np.complex128)
            for _ in range(n_max):
                power = power @ kappa
                inner = inner + v @ power @ v
            s = root_psd(nu.effects[x])
            total = total + s @ inner @ s
        assert_close(verdict.total, total, 1e-10, "naive route")

    def test_scalar_effect_telescopes(self):
        space = generate.default_space(2)
        nu = validate_povm({x: 0.5 * np.eye(2) for x in space.points},
                           space=space)
        psi = QuantumRandomVariable.constant(space, 0.5 * np.eye(2))
        verdict = effect_series_identity(psi, nu)
        assert verdict.passed
        assert verdict.lambda_min == pytest.approx(0.5)

    def test_rejects_nearly_singular_effect(self):
        space = generate.default_space(2)
        nu = validate_povm({x: 0.5 * np.eye(2) for x in space.points},
                           space=space)
        psi = QuantumRandomVariable.constant(
            space, np.diag([0.5, EPS_INV / 10]))
        with pytest.raises(NotStrictlyPositiveEffect):
            effect_series_identity(psi, nu)

    def test_rejects_value_above_one(self):
        space = generate.default_space(2)
        nu = validate_povm({x: 0.5 * np.eye(2) for x in space.points},
                           space=space)
        psi = QuantumRandomVariable.constant(space, np.diag([1.5, 0.5]))
        with pytest.raises(NotAnEffect):
            effect_series_identity(psi, nu)

    def test_rejects_untractable_term_count(self):
        space = generate.default_space(2)
        nu = validate_povm({x: 0.5 * np.eye(2) for x in space.points},
                           space=space)
        psi = QuantumRandomVariable.constant(
            space, np.diag([0.5, 2.0 * EPS_INV]))
        with pytest.raises(QprobError):
            effect_series_identity(psi, nu)

    def test_rejects_non_hermitian(self):
        space = generate.default_space(2)
        nu = validate_povm({x: 0.5 * np.eye(2) for x in space.points},
                           space=space)
        psi = QuantumRandomVariable.constant(
            space, np.array([[0.5, 0.1], [0.0, 0.5]]))
        with pytest.raises(InvalidMatrix):
            effect_series_identity(psi, nu)

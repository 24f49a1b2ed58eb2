"""Vanishing-mean statements: classification, implications, fixtures."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_close, random_hermitian, rng
from qprob import generate
from qprob.errors import NotProbabilityMeasure, SpaceMismatch
from qprob.expectation import expectation
from qprob.linalg import max_entry_norm
from qprob.meanzero import (
    MEANZERO_TOL,
    adjoint_mean_zero,
    classify_mean_zero,
    counterexample_fixtures,
)
from qprob.povm import validate_povm
from qprob.rv import QuantumRandomVariable
from qprob.spaces import SampleSpace

FIXTURE_TOL = 1e-12
SEEDS = st.integers(min_value=0, max_value=10**6)
DIMS = st.sampled_from([2, 3, 4])


def sample_povm(seed: int, d: int = 2, n: int = 3, ranks=None):
    g = rng(seed)
    return generate.random_povm(g, generate.default_space(n), d, ranks=ranks)


class TestSeparatingFixtures:
    def test_first_fixture_mean_zero_without_vanishing_products(self):
        fx = counterexample_fixtures()
        report = classify_mean_zero(fx.psi1, fx.nu1, tol=FIXTURE_TOL)
        assert report.verdicts == {
            "A": True, "B": False, "C": False, "D": False, "E": None}
        assert report.implication_violations() == []
        assert max_entry_norm(report.witnesses["A"]) < FIXTURE_TOL

    def test_first_fixture_witnesses_are_signed_identities(self):
        fx = counterexample_fixtures()
        report = classify_mean_zero(fx.psi1, fx.nu1, tol=FIXTURE_TOL)
        eye = np.eye(2)
        assert_close(report.witnesses["C"]["x1"], eye, FIXTURE_TOL)
        assert_close(report.witnesses["C"]["x2"], -eye, FIXTURE_TOL)
        assert_close(report.witnesses["D"]["x1"], eye, FIXTURE_TOL)
        assert_close(report.witnesses["D"]["x2"], -eye, FIXTURE_TOL)

    def test_second_fixture_box_vanishes_adjoint_does_not(self):
        fx = counterexample_fixtures()
        report = classify_mean_zero(fx.psi2, fx.nu2, tol=FIXTURE_TOL)
        assert report.verdicts == {
            "A": True, "B": False, "C": False, "D": True, "E": None}
        assert report.implication_violations() == []

    def test_second_fixture_adjoint_witnesses(self):
        fx = counterexample_fixtures()
        report = classify_mean_zero(fx.psi2, fx.nu2, tol=FIXTURE_TOL)
        assert_close(report.witnesses["C"]["x1"],
                     np.array([[0.0, 0.0], [2.0, 0.0]]), FIXTURE_TOL)
        assert_close(report.witnesses["C"]["x2"],
                     np.array([[0.0, 2.0], [0.0, 0.0]]), FIXTURE_TOL)
        for x in ("x1", "x2"):
            assert max_entry_norm(report.witnesses["D"][x]) < FIXTURE_TOL


class TestPositiveEquivalence:
    @given(SEEDS, DIMS)
    def test_kernel_supported_positive_values_satisfy_all_five(self, seed, d):
        nu = sample_povm(seed, d, 3, ranks=[1] + [d] * 2)
        g = rng(seed + 1)
        psi = generate.kernel_supported_qrv(g, nu)
        report = classify_mean_zero(psi, nu)
        assert psi.is_positive
        assert report.statement_e is not None
        assert report.all_equivalent
        assert report.verdicts == {
            "A": True, "B": True, "C": True, "D": True, "E": True}

    @given(SEEDS, DIMS)
    def test_generic_positive_values_fail_all_five(self, seed, d):
        nu = sample_povm(seed, d, 3)
        g = rng(seed + 2)
        psi = generate.random_positive_qrv(g, nu.space, d)
        report = classify_mean_zero(psi, nu)
        assert report.all_equivalent
        assert report.verdicts == {
            "A": False, "B": False, "C": False, "D": False, "E": False}


class TestImplicationGraph:
    @settings(max_examples=60)
    @given(SEEDS, DIMS, st.booleans())
    def test_no_violations_on_random_instances(self, seed, d, deficient):
        ranks = [1, max(1, d - 1), d] if deficient else None
        nu = sample_povm(seed, d, 3, ranks=ranks)
        g = rng(seed + 3)
        psi = generate.random_hermitian_qrv(g, nu.space, d)
        report = classify_mean_zero(psi, nu)
        assert report.implication_violations() == []

    @settings(max_examples=60)
    @given(SEEDS, DIMS)
    def test_no_violations_on_general_complex_values(self, seed, d):
        nu = sample_povm(seed, d, 3)
        g = rng(seed + 4)
        psi = generate.random_general_qrv(g, nu.space, d)
        report = classify_mean_zero(psi, nu)
        assert report.implication_violations() == []
        assert report.statement_e is None


class TestGeneratedSeparations:
    @given(SEEDS, DIMS)
    def test_zero_mean_instances_separate_a_from_d(self, seed, d):
        nu = sample_povm(seed, d, 3)
        g = rng(seed + 5)
        psi = generate.zero_mean_instance(g, nu)
        report = classify_mean_zero(psi, nu)
        assert report.statement_a
        assert not report.statement_d
        assert report.implication_violations() == []

    @given(SEEDS, st.sampled_from([3, 4]))
    def test_cross_supported_instances_separate_d_from_c(self, seed, d):
        nu = sample_povm(seed, d, 3, ranks=[1, d, d])
        g = rng(seed + 6)
        psi = generate.cross_supported_qrv(g, nu)
        report = classify_mean_zero(psi, nu)
        assert report.statement_d
        assert not report.statement_c
        assert report.statement_a
        assert report.implication_violations() == []


class TestAdjointCondition:
    @given(SEEDS, st.sampled_from([3, 4]))
    def test_left_kernel_values_satisfy_it(self, seed, d):
        nu = sample_povm(seed, d, 3, ranks=[1, d, d])
        g = rng(seed + 7)
        psi = generate.left_kernel_qrv(g, nu)
        assert adjoint_mean_zero(psi, nu)
        # the vanishing mean is asserted inside; double-check here
        assert max_entry_norm(expectation(psi, nu)) < MEANZERO_TOL

    @given(SEEDS, DIMS)
    def test_generic_values_fail_it(self, seed, d):
        nu = sample_povm(seed, d, 3)
        psi = QuantumRandomVariable.from_values(
            nu.space,
            {x: random_hermitian(rng(seed + 8), d) + 2.0 * np.eye(d)
             for x in nu.space.points})
        assert not adjoint_mean_zero(psi, nu)


class TestInputChecks:
    def test_requires_probability(self):
        space = SampleSpace(("x1", "x2"))
        sub = validate_povm({x: 0.25 * np.eye(2) for x in space.points},
                            space=space)
        psi = QuantumRandomVariable.zero(space, 2)
        with pytest.raises(NotProbabilityMeasure):
            classify_mean_zero(psi, sub)
        with pytest.raises(NotProbabilityMeasure):
            adjoint_mean_zero(psi, sub)

    def test_space_mismatch(self):
        nu = sample_povm(0, 2, 3)
        other = QuantumRandomVariable.zero(SampleSpace(("y1",)), 2)
        with pytest.raises(SpaceMismatch):
            classify_mean_zero(other, nu)

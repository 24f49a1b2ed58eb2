"""Tests for the seeded fixture generators."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qprob import generate, serialize
from qprob.errors import InvalidMatrix
from qprob.linalg import dagger, max_entry_norm, root_psd
from qprob.expectation import expectation
from qprob.povm import principal_rn
from qprob.rv import QuantumRandomVariable

from conftest import assert_close, rng

SEEDS = st.integers(min_value=0, max_value=10_000)
DIMS = st.sampled_from([2, 3, 4])
TIGHT_TOL = 1e-10


class TestChildGenerators:
    def test_same_seed_and_kind_agree(self):
        a = generate.rng_for(42, "povm").standard_normal(8)
        b = generate.rng_for(42, "povm").standard_normal(8)
        assert np.array_equal(a, b)

    def test_kinds_have_independent_streams(self):
        draws = {
            kind: tuple(generate.rng_for(7, kind).standard_normal(4))
            for kind in generate.FIXTURE_KINDS
        }
        assert len(set(draws.values())) == len(generate.FIXTURE_KINDS)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidMatrix):
            generate.rng_for(0, "sausage")

    def test_default_space_labels(self):
        assert generate.default_space(3).points == ("x1", "x2", "x3")


class TestRandomPovm:
    @given(SEEDS, DIMS, st.sampled_from([2, 3, 5]))
    @settings(max_examples=30)
    def test_effects_sum_to_identity(self, seed, d, n):
        nu = generate.random_povm(rng(seed), generate.default_space(n), d)
        total = sum(nu.effects[x] for x in nu.space.points)
        assert max_entry_norm(total - np.eye(d)) < TIGHT_TOL
        for x in nu.space.points:
            assert float(np.linalg.eigvalsh(nu.effects[x])[0]) > -TIGHT_TOL

    @given(SEEDS)
    @settings(max_examples=30)
    def test_rank_limits_make_derivatives_singular(self, seed):
        nu = generate.random_povm(
            rng(seed), generate.default_space(3), 3, ranks=[1, 2, 3])
        w = principal_rn(nu)
        ranks = [int(np.linalg.matrix_rank(w.value(x), tol=1e-8))
                 for x in nu.space.points]
        assert ranks[0] == 1
        assert ranks[1] == 2
        assert ranks[2] == 3

    def test_wrong_rank_count_rejected(self):
        with pytest.raises(InvalidMatrix):
            generate.random_povm(
                rng(0), generate.default_space(3), 2, ranks=[1, 2])


class TestRandomOperators:
    @given(SEEDS, DIMS)
    def test_density_is_normalized(self, seed, d):
        rho = generate.random_density(rng(seed), d)
        assert abs(np.trace(rho.matrix).real - 1.0) < TIGHT_TOL
        assert float(np.linalg.eigvalsh(rho.matrix)[0]) > -TIGHT_TOL

    @given(SEEDS, DIMS)
    def test_unitary_is_unitary(self, seed, d):
        u = generate.random_unitary(rng(seed), d)
        assert max_entry_norm(dagger(u) @ u - np.eye(d)) < TIGHT_TOL

    @given(SEEDS, DIMS)
    def test_effect_qrv_spectrum_window(self, seed, d):
        psi = generate.random_effect_qrv(
            rng(seed), generate.default_space(3), d, min_eig=0.2)
        for x in psi.space.points:
            vals = np.linalg.eigvalsh(psi.values[x])
            assert vals[0] >= 0.2 - TIGHT_TOL
            assert vals[-1] <= 1.0 + TIGHT_TOL

    @given(SEEDS, DIMS)
    def test_positive_qrv_is_positive(self, seed, d):
        psi = generate.random_positive_qrv(
            rng(seed), generate.default_space(3), d)
        for x in psi.space.points:
            assert float(np.linalg.eigvalsh(psi.values[x])[0]) > -TIGHT_TOL

    @given(SEEDS, DIMS)
    def test_hermitian_qrv_is_hermitian(self, seed, d):
        psi = generate.random_hermitian_qrv(
            rng(seed), generate.default_space(3), d)
        for x in psi.space.points:
            assert max_entry_norm(psi.values[x] - dagger(psi.values[x])) == 0.0


class TestPartitionsAndFiltrations:
    @given(SEEDS, st.integers(min_value=1, max_value=5))
    def test_random_partition_block_count(self, seed, blocks):
        space = generate.default_space(5)
        p = generate.random_partition(rng(seed), space, blocks)
        assert len(p.blocks) == min(blocks, 5)
        covered = sorted(x for b in p.blocks for x in b)
        assert covered == sorted(space.points)

    @given(SEEDS, st.integers(min_value=1, max_value=4))
    @settings(max_examples=30)
    def test_refining_filtration_nests(self, seed, depth):
        space = generate.default_space(6)
        filt = generate.random_refining_filtration(rng(seed), space, depth)
        assert len(filt.stages) == max(1, depth)
        for earlier, later in zip(filt.stages, filt.stages[1:]):
            assert later.refines(earlier)

    @given(SEEDS)
    @settings(max_examples=30)
    def test_to_singletons_ends_discrete(self, seed):
        space = generate.default_space(5)
        filt = generate.random_refining_filtration(
            rng(seed), space, 3, to_singletons=True)
        assert filt.terminal().is_discrete
        assert len(filt.stages) in (3, 4)


class TestMeanAdjustment:
    @given(SEEDS, DIMS)
    @settings(max_examples=30)
    def test_unit_mean_shift_hits_identity(self, seed, d):
        g = rng(seed)
        nu = generate.random_povm(g, generate.default_space(4), d)
        base = generate.random_hermitian_qrv(g, nu.space, d)
        shifted = generate.unit_mean_shift(nu, base)
        assert_close(expectation(shifted, nu), np.eye(d), 1e-8,
                     "expectation after the shift")
        # only a constant was added
        diff0 = shifted.value("x1") - base.value("x1")
        for x in nu.space.points:
            assert_close(shifted.value(x) - base.value(x), diff0, TIGHT_TOL)

    @given(SEEDS, DIMS)
    @settings(max_examples=30)
    def test_zero_mean_instance(self, seed, d):
        g = rng(seed)
        nu = generate.random_povm(g, generate.default_space(4), d)
        psi = generate.zero_mean_instance(g, nu)
        assert max_entry_norm(expectation(psi, nu)) < 1e-8
        for x in nu.space.points:
            assert max_entry_norm(psi.value(x) - dagger(psi.value(x))) < 1e-12


class TestKernelConstructions:
    def deficient_povm(self, seed):
        return generate.random_povm(
            rng(seed), generate.default_space(3), 3, ranks=[1, 2, 3])

    @given(SEEDS)
    @settings(max_examples=30)
    def test_kernel_bases_split_the_space(self, seed):
        nu = self.deficient_povm(seed)
        w = principal_rn(nu)
        for x, (kernel, range_basis) in generate.kernel_bases(nu).items():
            assert kernel.shape[1] + range_basis.shape[1] == 3
            if kernel.shape[1]:
                assert max_entry_norm(w.value(x) @ kernel) < 1e-9
                gram = dagger(kernel) @ kernel
                assert_close(gram, np.eye(kernel.shape[1]), TIGHT_TOL)
            if range_basis.shape[1]:
                gram = dagger(range_basis) @ range_basis
                assert_close(gram, np.eye(range_basis.shape[1]), TIGHT_TOL)

    @given(SEEDS)
    @settings(max_examples=30)
    def test_kernel_supported_values_vanish_under_sandwich(self, seed):
        nu = self.deficient_povm(seed)
        psi = generate.kernel_supported_qrv(rng(seed + 1), nu)
        w = principal_rn(nu)
        for x in nu.space.points:
            s = root_psd(w.value(x))
            assert max_entry_norm(s @ psi.value(x) @ s) < 1e-9
            assert float(np.linalg.eigvalsh(psi.value(x))[0]) > -TIGHT_TOL
        assert max_entry_norm(expectation(psi, nu)) < 1e-9

    @given(SEEDS)
    @settings(max_examples=30)
    def test_cross_supported_kills_right_product_only(self, seed):
        nu = self.deficient_povm(seed)
        psi = generate.cross_supported_qrv(rng(seed + 2), nu)
        w = principal_rn(nu)
        saw_nonzero = False
        for x in nu.space.points:
            assert max_entry_norm(psi.value(x) @ w.value(x)) < 1e-9
            if max_entry_norm(w.value(x) @ psi.value(x)) > 1e-9:
                saw_nonzero = True
        assert saw_nonzero

    @given(SEEDS)
    @settings(max_examples=30)
    def test_left_kernel_kills_right_product(self, seed):
        nu = self.deficient_povm(seed)
        psi = generate.left_kernel_qrv(rng(seed + 3), nu)
        w = principal_rn(nu)
        for x in nu.space.points:
            assert max_entry_norm(psi.value(x) @ w.value(x)) < 1e-9


class TestExperimentFixtures:
    def test_martingale_fixture_shapes(self):
        psi, nu, filt = generate.martingale_fixture(5, d=3, atoms=6, depth=3)
        assert nu.space.points == generate.default_space(6).points
        assert psi.space == nu.space
        assert psi.dim == nu.dim == 3
        assert filt.terminal().is_discrete
        for x in nu.space.points:
            assert float(np.linalg.eigvalsh(psi.value(x))[0]) > -TIGHT_TOL

    def test_martingale_fixture_is_deterministic(self):
        a = generate.martingale_fixture(9, d=2, atoms=5, depth=3)
        b = generate.martingale_fixture(9, d=2, atoms=5, depth=3)
        for x in a[1].space.points:
            assert np.array_equal(a[0].value(x), b[0].value(x))
            assert np.array_equal(a[1].effects[x], b[1].effects[x])
        assert a[2].stages == b[2].stages

    def test_deficient_fixture_has_singular_derivative(self):
        _, nu, _ = generate.martingale_fixture(
            0, d=3, atoms=6, depth=3, deficient=True)
        w = principal_rn(nu)
        ranks = [int(np.linalg.matrix_rank(w.value(x), tol=1e-8))
                 for x in nu.space.points]
        assert min(ranks) < 3

    def test_dct_fixture_residual_scale(self):
        indices = [1, 2, 4, 8]
        seq, psi, eta, nu = generate.dct_fixture(3, d=2, atoms=4,
                                                 indices=indices)
        assert len(seq) == len(indices)
        assert_close(expectation(eta, nu), np.eye(2), 1e-8,
                     "disturbance expectation")
        for n, term in zip(indices, seq):
            for x in nu.space.points:
                gap = term.value(x) - psi.value(x) - eta.value(x) / n
                assert max_entry_norm(gap) < TIGHT_TOL


class TestFixtureFiles:
    @pytest.mark.parametrize("kind", generate.FIXTURE_KINDS)
    def test_every_kind_writes_and_reparses(self, kind, tmp_path):
        paths = generate.generate_fixture(kind, 11, d=2, n=4,
                                          outdir=str(tmp_path))
        assert len(paths) == 1
        obj = serialize.load_json(paths[0])
        space = generate.default_space(4)
        if kind == "povm":
            serialize.povm_from_obj(obj)
        elif kind == "refining_filtration":
            assert serialize.filtration_from_obj(obj, space).terminal().is_discrete
        elif kind == "partition":
            serialize.partition_from_obj(obj, space)
        elif kind == "density":
            m = serialize.matrix_from_obj(obj)
            assert abs(np.trace(m).real - 1.0) < TIGHT_TOL
        else:
            serialize.qrv_from_obj(obj)

    def test_output_is_byte_identical(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        for kind in generate.FIXTURE_KINDS:
            pa = generate.generate_fixture(kind, 23, d=3, n=5,
                                           outdir=str(first))[0]
            pb = generate.generate_fixture(kind, 23, d=3, n=5,
                                           outdir=str(second))[0]
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                assert fa.read() == fb.read(), kind

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(InvalidMatrix):
            generate.generate_fixture("nonsense", 0, d=2, n=3,
                                      outdir=str(tmp_path))

"""Seeded random fixtures: measures, random variables, filtrations.

Every generator takes an explicit ``numpy`` Generator. Reproducible runs
derive one child generator per fixture kind from a single seed through
``SeedSequence`` spawn keys, so adding a new kind never shifts the streams
of existing ones.
"""

from __future__ import annotations

import os

import numpy as np

from . import serialize
from .errors import InvalidMatrix
from .linalg import DensityOperator, dagger, root_psd
from .povm import Povm, induced_measure, principal_rn, validate_povm
from .rv import QuantumRandomVariable
from .spaces import Filtration, PartitionSigmaAlgebra, SampleSpace

FIXTURE_KINDS = ("povm", "positive_qrv", "effect_qrv", "refining_filtration",
                 "hermitian_qrv", "general_qrv", "partition", "density")


def rng_for(seed: int, kind: str) -> np.random.Generator:
    """Child generator for one fixture kind, derived from the run seed."""
    if kind not in FIXTURE_KINDS:
        raise InvalidMatrix(f"unknown fixture kind {kind!r}")
    key = FIXTURE_KINDS.index(kind)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(key,))))


def default_space(n: int) -> SampleSpace:
    return SampleSpace(tuple(f"x{k + 1}" for k in range(n)))


def random_complex(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols))
            + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(random_complex(rng, d, d))
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * np.conj(phases)


def random_povm(rng: np.random.Generator, space: SampleSpace, d: int,
                ranks: list[int] | None = None) -> Povm:
    """Normalize random Gram matrices so the effects sum exactly to identity.

    ``ranks`` limits the rank of each atom's Gram factor, which makes the
    principal derivative singular there.
    """
    if ranks is None:
        ranks = [d] * space.size
    if len(ranks) != space.size:
        raise InvalidMatrix("one rank per sample point required")
    grams = []
    for r in ranks:
        a = random_complex(rng, max(1, min(r, d)), d)
        grams.append(dagger(a) @ a)
    total = np.zeros((d, d), dtype=np.complex128)
    for g in grams:
        total = total + g
    vals, vecs = np.linalg.eigh(total)
    inv_root = (vecs / np.sqrt(vals)) @ dagger(vecs)
    effects = {
        x: inv_root @ grams[k] @ inv_root
        for k, x in enumerate(space.points)
    }
    return validate_povm(effects, space=space)


def random_density(rng: np.random.Generator, d: int) -> DensityOperator:
    a = random_complex(rng, d, d)
    m = a @ dagger(a)
    return DensityOperator(m / np.real(np.trace(m)))


def random_positive_qrv(rng: np.random.Generator, space: SampleSpace,
                        d: int) -> QuantumRandomVariable:
    values = {}
    for x in space.points:
        a = random_complex(rng, d, d)
        values[x] = a @ dagger(a)
    return QuantumRandomVariable(space, values)


def random_hermitian_qrv(rng: np.random.Generator, space: SampleSpace,
                         d: int) -> QuantumRandomVariable:
    values = {}
    for x in space.points:
        a = random_complex(rng, d, d)
        values[x] = 0.5 * (a + dagger(a))
    return QuantumRandomVariable(space, values)


def random_general_qrv(rng: np.random.Generator, space: SampleSpace,
                       d: int) -> QuantumRandomVariable:
    return QuantumRandomVariable(
        space, {x: random_complex(rng, d, d) for x in space.points})


def random_effect_qrv(rng: np.random.Generator, space: SampleSpace, d: int,
                      min_eig: float = 0.05) -> QuantumRandomVariable:
    """Effect-valued variable with eigenvalues in ``[min_eig, 1]``."""
    values = {}
    for x in space.points:
        u = random_unitary(rng, d)
        spec = rng.uniform(min_eig, 1.0, size=d)
        values[x] = (u * spec) @ dagger(u)
    return QuantumRandomVariable(space, values)


def random_partition(rng: np.random.Generator, space: SampleSpace,
                     n_blocks: int) -> PartitionSigmaAlgebra:
    n_blocks = max(1, min(n_blocks, space.size))
    order = [space.points[k] for k in rng.permutation(space.size)]
    blocks: list[list[str]] = [[] for _ in range(n_blocks)]
    for k, x in enumerate(order):
        blocks[k % n_blocks].append(x)
    return PartitionSigmaAlgebra(space, tuple(tuple(b) for b in blocks))


def _split_block(rng: np.random.Generator,
                 block: tuple[str, ...]) -> list[tuple[str, ...]]:
    order = [block[k] for k in rng.permutation(len(block))]
    cut = int(rng.integers(1, len(block)))
    return [tuple(order[:cut]), tuple(order[cut:])]


def random_refining_filtration(rng: np.random.Generator, space: SampleSpace,
                               depth: int, to_singletons: bool = False,
                               split_prob: float = 0.6) -> Filtration:
    """Iterated random block splitting from the trivial partition.

    Builds ``depth`` stages; with ``to_singletons`` the discrete partition is
    appended as a final stage whenever the chain did not already reach it, so
    the terminal algebra separates points.
    """
    depth = max(1, depth)
    stages = [PartitionSigmaAlgebra.trivial(space)]
    while len(stages) < depth:
        new_blocks: list[tuple[str, ...]] = []
        for block in stages[-1].blocks:
            if len(block) >= 2 and rng.random() < split_prob:
                new_blocks.extend(_split_block(rng, block))
            else:
                new_blocks.append(block)
        stages.append(PartitionSigmaAlgebra(space, tuple(new_blocks)))
    if to_singletons and not stages[-1].is_discrete:
        stages.append(PartitionSigmaAlgebra.discrete(space))
    return Filtration(tuple(stages))


def unit_mean_shift(nu: Povm, base: QuantumRandomVariable) -> QuantumRandomVariable:
    """Shift a variable by a constant so its expectation becomes the identity.

    Solves the full-space superoperator system for the constant correction;
    intended for fixtures whose measure has invertible derivative values.
    """
    d = nu.dim
    mu = induced_measure(nu)
    w = principal_rn(nu)
    superop = np.zeros((d * d, d * d), dtype=np.complex128)
    for x in nu.space.points:
        if mu.weights[x] <= 0.0:
            continue
        s = root_psd(w.value(x))
        superop = superop + mu.weights[x] * np.kron(s.T, s)
    current = nu.integrate(base)
    gap = np.eye(d) - current
    delta = np.linalg.lstsq(superop, gap.reshape(-1, order="F"), rcond=None)[0]
    delta = delta.reshape((d, d), order="F")
    delta = 0.5 * (delta + dagger(delta))
    return base + QuantumRandomVariable.constant(nu.space, delta)


def zero_mean_instance(rng: np.random.Generator, nu: Povm) -> QuantumRandomVariable:
    """Hermitian variable with vanishing expectation but nonzero box product."""
    base = random_hermitian_qrv(rng, nu.space, nu.dim)
    shifted = unit_mean_shift(nu, base)
    eye = QuantumRandomVariable.constant(nu.space, np.eye(nu.dim))
    return shifted - eye


def kernel_bases(nu: Povm) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-atom orthonormal bases of the derivative's kernel and range."""
    w = principal_rn(nu)
    out = {}
    for x in nu.space.points:
        vals, vecs = np.linalg.eigh(w.value(x))
        radius = float(np.max(np.abs(vals))) if vals.size else 0.0
        cut = 1e-10 * max(radius, 1.0)
        out[x] = (vecs[:, np.abs(vals) <= cut], vecs[:, np.abs(vals) > cut])
    return out


def kernel_supported_qrv(rng: np.random.Generator, nu: Povm,
                         hermitian: bool = True) -> QuantumRandomVariable:
    """Positive (or Hermitian) values supported inside the derivative kernels.

    Atoms with trivial kernel get the zero matrix, so every vanishing-mean
    statement holds by construction.
    """
    d = nu.dim
    values = {}
    for x, (kernel, _) in kernel_bases(nu).items():
        k = kernel.shape[1]
        if k == 0:
            values[x] = np.zeros((d, d), dtype=np.complex128)
            continue
        a = random_complex(rng, k, k)
        core = a @ dagger(a) if hermitian else a
        values[x] = kernel @ core @ dagger(kernel)
    return QuantumRandomVariable(nu.space, values)


def cross_supported_qrv(rng: np.random.Generator,
                        nu: Povm) -> QuantumRandomVariable:
    """Values mapping derivative kernels onto ranges: box product vanishes
    while the adjoint product does not."""
    d = nu.dim
    values = {}
    for x, (kernel, rng_basis) in kernel_bases(nu).items():
        if kernel.shape[1] == 0 or rng_basis.shape[1] == 0:
            values[x] = np.zeros((d, d), dtype=np.complex128)
            continue
        k = kernel @ random_complex(rng, kernel.shape[1], 1)
        r = rng_basis @ random_complex(rng, rng_basis.shape[1], 1)
        values[x] = r @ dagger(k)
    return QuantumRandomVariable(nu.space, values)


def left_kernel_qrv(rng: np.random.Generator, nu: Povm) -> QuantumRandomVariable:
    """Values killing the derivative range from the left: ``psi(x) w(x) = 0``."""
    d = nu.dim
    values = {}
    for x, (kernel, _) in kernel_bases(nu).items():
        if kernel.shape[1] == 0:
            values[x] = np.zeros((d, d), dtype=np.complex128)
            continue
        k = kernel @ random_complex(rng, kernel.shape[1], 1)
        m = random_complex(rng, d, 1)
        values[x] = m @ dagger(k)
    return QuantumRandomVariable(nu.space, values)


def martingale_fixture(seed: int, d: int, atoms: int, depth: int,
                       deficient: bool = False,
                       to_singletons: bool = True):
    """Everything one martingale experiment needs, derived from one seed."""
    space = default_space(atoms)
    ranks = None
    if deficient:
        rng_rank = rng_for(seed, "partition")
        ranks = [max(1, d - 1 - int(rng_rank.integers(0, max(1, d - 1))))
                 for _ in range(atoms)]
    nu = random_povm(rng_for(seed, "povm"), space, d, ranks=ranks)
    psi = random_positive_qrv(rng_for(seed, "positive_qrv"), space, d)
    filtration = random_refining_filtration(
        rng_for(seed, "refining_filtration"), space, depth,
        to_singletons=to_singletons)
    return psi, nu, filtration


def dct_fixture(seed: int, d: int, atoms: int, indices: list[int]):
    """Convergent sequence ``psi + eta / n`` with unit-mean disturbance.

    The disturbance is normalized so its expectation is the identity, which
    pins the per-probe expectation residual at exactly ``1/n`` for trace-one
    probes. Returns the sequence, the limit variable and the measure.
    """
    space = default_space(atoms)
    nu = random_povm(rng_for(seed, "povm"), space, d)
    psi = random_hermitian_qrv(rng_for(seed, "hermitian_qrv"), space, d)
    eta = unit_mean_shift(nu, random_hermitian_qrv(
        rng_for(seed, "general_qrv"), space, d))
    seq = [psi + (1.0 / n) * eta for n in indices]
    return seq, psi, eta, nu


def generate_fixture(kind: str, seed: int, d: int, n: int, outdir: str,
                     depth: int = 3) -> list[str]:
    """Write one fixture of the given kind to disk; returns the paths.

    Output is deterministic: the same arguments produce byte-identical
    files.
    """
    space = default_space(n)
    os.makedirs(outdir, exist_ok=True)
    stem = f"{kind}_seed{seed}_d{d}_n{n}"
    path = os.path.join(outdir, stem + ".json")
    if kind == "povm":
        obj = serialize.povm_to_obj(random_povm(rng_for(seed, kind), space, d))
    elif kind == "positive_qrv":
        obj = serialize.qrv_to_obj(
            random_positive_qrv(rng_for(seed, kind), space, d))
    elif kind == "effect_qrv":
        obj = serialize.qrv_to_obj(
            random_effect_qrv(rng_for(seed, kind), space, d))
    elif kind == "hermitian_qrv":
        obj = serialize.qrv_to_obj(
            random_hermitian_qrv(rng_for(seed, kind), space, d))
    elif kind == "general_qrv":
        obj = serialize.qrv_to_obj(
            random_general_qrv(rng_for(seed, kind), space, d))
    elif kind == "refining_filtration":
        obj = serialize.filtration_to_obj(random_refining_filtration(
            rng_for(seed, kind), space, depth, to_singletons=True))
    elif kind == "partition":
        rng = rng_for(seed, kind)
        blocks = int(rng.integers(1, n + 1))
        obj = serialize.partition_to_obj(random_partition(rng, space, blocks))
    elif kind == "density":
        obj = serialize.matrix_to_obj(
            random_density(rng_for(seed, kind), d).matrix)
    else:
        raise InvalidMatrix(f"unknown fixture kind {kind!r}")
    serialize.dump_json(path, obj)
    return [path]

"""Hermitian matrix kernel: positivity, functional calculus, geometric means.

All operations take and return plain complex ``numpy`` arrays and are pure.
Tolerance conventions used throughout the package:

* ``HERMIT_TOL`` is absolute on entries of ``m - m*``.
* ``PSD_TOL`` and ``RANK_TOL`` are relative to the largest eigenvalue
  magnitude, with a floor of 1.0 on the scale so near-zero matrices are not
  rejected for round-off in the last digits.
* Eigenvalues that are negative but within tolerance are clipped to exactly
  zero before any root or pseudo-inverse is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidMatrix, NotPositive, MeanDidNotConverge

MAX_DIM = 64  # largest supported Hilbert space dimension

HERMIT_TOL = 1e-12
PSD_TOL = 1e-10
RANK_TOL = 1e-10

# Regularization ladder for the singular geometric mean, and the max-entry
# acceptance threshold for two consecutive (extrapolated) ladder values.
GEOMEAN_EPS_SCHEDULE = tuple(10.0 ** (-2 * k) for k in range(1, 7))
GEOMEAN_TOL = 1e-8


def as_matrix(m, dim: int | None = None) -> np.ndarray:
    """Validate a square complex matrix and return a fresh complex128 copy."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[0] > MAX_DIM:
        raise InvalidMatrix(
            f"dimension {arr.shape[0]} outside supported range 1..{MAX_DIM}")
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise InvalidMatrix("matrix has non-finite entries")
    if dim is not None and arr.shape[0] != dim:
        raise DimMismatch(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr.copy()


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(m).T


def max_entry_norm(m: np.ndarray) -> float:
    """Largest entry magnitude; the norm used for all report thresholds."""
    return float(np.max(np.abs(m))) if np.asarray(m).size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERMIT_TOL) -> bool:
    """True iff ``m`` equals its conjugate transpose within ``tol``."""
    m = np.asarray(m)
    return bool(m.ndim == 2 and m.shape[0] == m.shape[1]
                and max_entry_norm(m - dagger(m)) <= tol)


def as_hermitian(m, tol: float = HERMIT_TOL, dim: int | None = None) -> np.ndarray:
    """Validate Hermiticity within ``tol`` and return the symmetrized copy.

    Symmetrizing keeps the result exactly Hermitian, which ``eigh`` assumes;
    the adjustment moves entries by at most ``tol / 2``.
    """
    arr = as_matrix(m, dim=dim)
    defect = max_entry_norm(arr - dagger(arr))
    if defect > tol:
        raise InvalidMatrix(
            f"matrix is not Hermitian: max |m - m*| = {defect:.3e} > {tol:.1e}")
    return 0.5 * (arr + dagger(arr))


def _eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an (already symmetrized) Hermitian matrix."""
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


def _psd_scale(vals: np.ndarray) -> float:
    """Tolerance scale for a spectrum: spectral radius floored at one."""
    return max(float(np.max(np.abs(vals))), 1.0) if vals.size else 1.0


def is_psd(m: np.ndarray, tol: float = PSD_TOL) -> bool:
    """True iff the Hermitian matrix ``m`` has min eigenvalue >= ``-tol``.

    ``tol`` is absolute here; callers that want the relative convention
    scale it by the spectral radius first.

    Raises
    ------
    InvalidMatrix
        If ``m`` is not Hermitian within ``HERMIT_TOL``.
    """
    h = as_hermitian(m)
    vals = np.linalg.eigvalsh(h)
    return bool(vals.size == 0 or float(vals[0]) >= -tol)


def _clipped_psd_spectrum(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a PSD matrix, clipping in-tolerance negatives to zero.

    Raises ``NotPositive`` when an eigenvalue is negative beyond the relative
    ``PSD_TOL`` threshold.
    """
    h = as_hermitian(m)
    vals, vecs = _eigh(h)
    thresh = PSD_TOL * _psd_scale(vals)
    low = float(vals[0]) if vals.size else 0.0
    if low < -thresh:
        raise NotPositive(
            f"{what}: min eigenvalue {low:.3e} below -{thresh:.1e}")
    return np.clip(vals, 0.0, None), vecs


def sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues negative within tolerance are clipped to zero first, so the
    result is exactly PSD up to round-off in the reconstruction.
    """
    vals, vecs = _clipped_psd_spectrum(m, "sqrt_psd")
    root = (vecs * np.sqrt(vals)) @ dagger(vecs)
    return 0.5 * (root + dagger(root))


def root_psd(m: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Square root of a PSD matrix with sub-rank eigenvalues zeroed first.

    Eigenvalues at or below ``rank_tol`` times the spectral radius are
    treated as exact zeros. A plain square root would amplify such round-off
    residue from rank-deficient constructions to its root (1e-16 becomes
    1e-8), so every root of a measure derivative or effect goes through this
    truncation; the root then annihilates the kernel exactly.
    """
    vals, vecs = _clipped_psd_spectrum(m, "root_psd")
    scale = float(np.max(vals)) if vals.size else 0.0
    kept = np.where(vals > rank_tol * scale, vals, 0.0)
    root = (vecs * np.sqrt(kept)) @ dagger(vecs)
    return 0.5 * (root + dagger(root))


def pinv_psd(m: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a PSD matrix via its eigendecomposition.

    Eigenvalues at or below ``rank_tol`` times the spectral radius are
    treated as zero and excluded from inversion.
    """
    vals, vecs = _clipped_psd_spectrum(m, "pinv_psd")
    scale = float(np.max(vals)) if vals.size else 0.0
    cut = rank_tol * scale
    inv = np.where(vals > cut, 1.0 / np.where(vals > cut, vals, 1.0), 0.0)
    out = (vecs * inv) @ dagger(vecs)
    return 0.5 * (out + dagger(out))


def range_projector(m: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the span of eigenvectors with |eig| > cutoff.

    The cutoff is ``rank_tol`` times the spectral radius; the zero matrix maps
    to the zero projector.
    """
    h = as_hermitian(m)
    vals, vecs = _eigh(h)
    radius = float(np.max(np.abs(vals))) if vals.size else 0.0
    if radius == 0.0:
        return np.zeros_like(h)
    keep = np.abs(vals) > rank_tol * radius
    basis = vecs[:, keep]
    proj = basis @ dagger(basis)
    return 0.5 * (proj + dagger(proj))


def column_space_projector(m: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the column space of a general matrix."""
    arr = as_matrix(m)
    u, s, _ = np.linalg.svd(arr)
    top = float(s[0]) if s.size else 0.0
    if top == 0.0:
        return np.zeros_like(arr)
    basis = u[:, s > rank_tol * top]
    proj = basis @ dagger(basis)
    return 0.5 * (proj + dagger(proj))


def _mean_of_invertible(sqrt_a: np.ndarray, inv_sqrt_a: np.ndarray,
                        b: np.ndarray) -> np.ndarray:
    """a # b = a^{1/2} (a^{-1/2} b a^{-1/2})^{1/2} a^{1/2} given roots of a."""
    inner = inv_sqrt_a @ b @ inv_sqrt_a
    # the conjugation is Hermitian in exact arithmetic, but round-off in the
    # triple product grows with ||inv_sqrt_a|| and can exceed HERMIT_TOL
    inner = 0.5 * (inner + dagger(inner))
    out = sqrt_a @ sqrt_psd(inner) @ sqrt_a
    return 0.5 * (out + dagger(out))


def aitken(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Entrywise Aitken extrapolation with a curvature guard.

    Entries whose second difference is at round-off level are already
    converged and keep their final value.
    """
    denom = v2 - 2.0 * v1 + v0
    guard = 1e-13 * np.maximum(1.0, np.abs(v2))
    safe = np.abs(denom) > guard
    num = (v2 - v1) ** 2
    corr = np.zeros_like(v2)
    np.divide(num, denom, out=corr, where=safe)
    return v2 - corr


def geometric_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Operator geometric mean of two PSD matrices.

    For invertible ``a`` this is the closed form
    ``a^{1/2} (a^{-1/2} b a^{-1/2})^{1/2} a^{1/2}``. When ``a`` is singular
    the mean is the strong limit of ``(a + eps) # (b + eps)`` as ``eps`` goes
    to zero; it is approximated down a fixed ladder of ``eps`` values. The
    leading error grows like ``sqrt(eps)``, so raw ladder values shrink too
    slowly to meet the acceptance threshold; entrywise Aitken extrapolation
    across the ladder removes that mode. Accepts once two consecutive
    (raw or extrapolated) values differ by less than ``GEOMEAN_TOL`` in
    max-entry norm.

    Raises
    ------
    NotPositive
        If either input is not PSD.
    MeanDidNotConverge
        If the ladder never settles; carries the last two iterates.
    """
    vals_a, vecs_a = _clipped_psd_spectrum(a, "geometric_mean (first operand)")
    hb = as_hermitian(b)
    if hb.shape != vecs_a.shape:
        raise DimMismatch(
            f"geometric_mean: shapes {vecs_a.shape} vs {hb.shape}")
    _clipped_psd_spectrum(hb, "geometric_mean (second operand)")

    scale = float(np.max(vals_a)) if vals_a.size else 0.0
    if scale > 0.0 and float(np.min(vals_a)) > RANK_TOL * scale:
        sqrt_a = (vecs_a * np.sqrt(vals_a)) @ dagger(vecs_a)
        inv_sqrt_a = (vecs_a / np.sqrt(vals_a)) @ dagger(vecs_a)
        return _project_psd(_mean_of_invertible(sqrt_a, inv_sqrt_a, hb))

    eye = np.eye(hb.shape[0])
    raw: list[np.ndarray] = []
    extrapolated: list[np.ndarray] = []
    for eps in GEOMEAN_EPS_SCHEDULE:
        shifted = vals_a + eps  # exact spectrum of a + eps, one eigh reused
        sqrt_a = (vecs_a * np.sqrt(shifted)) @ dagger(vecs_a)
        inv_sqrt_a = (vecs_a / np.sqrt(shifted)) @ dagger(vecs_a)
        raw.append(_mean_of_invertible(sqrt_a, inv_sqrt_a, hb + eps * eye))
        if len(raw) >= 3:
            extrapolated.append(aitken(raw[-3], raw[-2], raw[-1]))
        candidates = raw if len(raw) < 3 else extrapolated
        if len(candidates) >= 2:
            gap = max_entry_norm(candidates[-1] - candidates[-2])
            if gap < GEOMEAN_TOL:
                return _project_psd(candidates[-1])
        # a raw pair may settle even when extrapolation is still moving
        if len(raw) >= 2 and max_entry_norm(raw[-1] - raw[-2]) < GEOMEAN_TOL:
            return _project_psd(raw[-1])
    raise MeanDidNotConverge(
        "geometric mean regularization did not settle within "
        f"{GEOMEAN_TOL:.1e}", last_iterates=(raw[-2], raw[-1]))


def _project_psd(m: np.ndarray) -> np.ndarray:
    """Clamp in-tolerance negative eigenvalues so the result is exactly PSD."""
    vals, vecs = _clipped_psd_spectrum(m, "geometric_mean (result)")
    out = (vecs * vals) @ dagger(vecs)
    return 0.5 * (out + dagger(out))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A state: PSD matrix with unit trace."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = as_hermitian(self.matrix)
        vals = np.linalg.eigvalsh(arr)
        if float(vals[0]) < -PSD_TOL * _psd_scale(vals):
            raise NotPositive(
                f"density operator has eigenvalue {float(vals[0]):.3e}")
        tr = float(np.real(np.trace(arr)))
        if abs(tr - 1.0) > 1e-12:
            raise InvalidMatrix(f"density operator trace {tr!r} is not 1")
        arr.flags.writeable = False
        object.__setattr__(self, "matrix", arr)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def trace_pair(rho: DensityOperator, m: np.ndarray) -> complex:
    """tr(rho m); the scalar pairing behind every probe-state check."""
    arr = as_matrix(m)
    if arr.shape[0] != rho.dim:
        raise DimMismatch(
            f"trace_pair: state dim {rho.dim} vs matrix dim {arr.shape[0]}")
    return complex(np.einsum("ij,ji->", rho.matrix, arr))


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) real basis of d x d Hermitian matrices.

    Diagonal units first, then symmetric and antisymmetric pair combinations;
    d^2 matrices in total.
    """
    if d < 1 or d > MAX_DIM:
        raise InvalidMatrix(f"dimension {d} outside supported range 1..{MAX_DIM}")
    basis: list[np.ndarray] = []
    for i in range(d):
        e = np.zeros((d, d), dtype=np.complex128)
        e[i, i] = 1.0
        basis.append(e)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            sym = np.zeros((d, d), dtype=np.complex128)
            sym[i, j] = sym[j, i] = inv_sqrt2
            basis.append(sym)
            skew = np.zeros((d, d), dtype=np.complex128)
            skew[i, j] = -1j * inv_sqrt2
            skew[j, i] = 1j * inv_sqrt2
            basis.append(skew)
    return basis

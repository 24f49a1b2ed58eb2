"""Shared test helpers: seeded matrix factories and closeness assertions."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_complex(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (gen.standard_normal((rows, cols))
            + 1j * gen.standard_normal((rows, cols))) / np.sqrt(2.0)


def random_psd(gen: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    r = d if rank is None else max(1, min(rank, d))
    a = random_complex(gen, r, d)
    return np.conj(a).T @ a


def random_hermitian(gen: np.random.Generator, d: int) -> np.ndarray:
    a = random_complex(gen, d, d)
    return 0.5 * (a + np.conj(a).T)


def random_unitary(gen: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(random_complex(gen, d, d))
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * np.conj(phases)


def assert_close(a, b, tol: float = 1e-10, what: str = "") -> None:
    gap = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    assert gap <= tol, f"{what or 'matrices'} differ by {gap:.3e} > {tol:.1e}"


@pytest.fixture
def tmp_json(tmp_path):
    def _path(name: str) -> str:
        return str(tmp_path / name)
    return _path

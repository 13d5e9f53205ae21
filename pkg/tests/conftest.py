import numpy as np
import pytest

from envlab.hilbert import StateVector


def random_state(rng, dims) -> StateVector:
    n = int(np.prod(dims))
    amps = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return StateVector.normalized(tuple(dims), amps)


def random_unitary(rng, dim) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    # fix the QR phase ambiguity so draws are well spread
    return q * (np.diag(r) / np.abs(np.diag(r)))


def bell_pair() -> StateVector:
    return StateVector((2, 2), np.array([1, 0, 0, 1]) / np.sqrt(2))


def schmidt_form_state(coeffs, left_dim, right_dim, rng=None) -> StateVector:
    """State with prescribed biorthogonal coefficients.

    Bases are random orthonormal sets when an rng is given, canonical
    coordinate vectors otherwise.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    k = len(coeffs)
    assert k <= min(left_dim, right_dim)
    if rng is None:
        lb = np.eye(left_dim, dtype=complex)[:k]
        rb = np.eye(right_dim, dtype=complex)[:k]
    else:
        lb = random_unitary(rng, left_dim)[:k]
        rb = random_unitary(rng, right_dim)[:k]
    mat = (lb.T * coeffs) @ rb
    return StateVector.normalized((left_dim, right_dim), mat.reshape(-1))


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)

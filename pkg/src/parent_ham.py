import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import hadamard

from dicke_algebra import SymmetricBlockMatrix, check_stoquastic, dicke_vectors
from utils.config import AppConfig
from utils.errors import (
    ContractViolationError,
    DomainError,
    NotPermutationInvariantError,
    ResourceLimitError,
)
from utils.logger import Logger

logger = Logger(__name__).get_logger()
CONFIG = AppConfig().get_config()

NORM_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DickeState:
    """Real amplitudes phi_k over |D_n^k>, k = 0..n.

    Ground states of non-stoquastic blocks may carry signs; ``nonnegative`` reports
    whether the state qualifies as a stoquastic ground state.
    """

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if amps.size != self.n + 1:
            raise DomainError(f"Expected {self.n + 1} amplitudes for n={self.n}, got {amps.size}")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > 1e-9:
            raise DomainError(f"Dicke state must be normalized, got norm {norm:.12g}")
        # absorb rounding so the squared norm is one to machine precision
        amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, n: int, amplitudes) -> "DickeState":
        amps = np.asarray(amplitudes, dtype=float)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise DomainError("Cannot normalize the zero vector")
        return cls(n, amps / norm)

    @classmethod
    def ghz(cls, n: int) -> "DickeState":
        amps = np.zeros(n + 1)
        amps[[0, n]] = 1.0
        return cls.from_unnormalized(n, amps)

    @classmethod
    def basis(cls, n: int, k: int) -> "DickeState":
        if not 0 <= k <= n:
            raise DomainError(f"Excitation number {k} outside [0, {n}]")
        amps = np.zeros(n + 1)
        amps[k] = 1.0
        return cls(n, amps)

    @classmethod
    def uniform(cls, n: int) -> "DickeState":
        return cls.from_unnormalized(n, np.ones(n + 1))

    def nonnegative(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.amplitudes >= -tol))

    def to_dict(self) -> dict:
        return {"n": self.n, "amplitudes": self.amplitudes.tolist()}


@dataclass(frozen=True)
class GaussianProfile:
    mu: float
    sigma: float
    n: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"Gaussian width must be positive, got {self.sigma}")
        if self.sigma < math.exp(-1) / (2 * math.pi) or self.sigma > self.n:
            logger.debug(f"sigma={self.sigma} is outside the range where the profile is Gaussian-like")

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "n": self.n}


@dataclass(frozen=True)
class PauliWeightTerm:
    """gamma_w times T_w, the sum of every Pauli string with w = (#X, #Y, #Z)."""

    w: tuple[int, int, int]
    coefficient: float

    def __post_init__(self):
        if len(self.w) != 3 or any(c < 0 for c in self.w):
            raise DomainError(f"Weight triple must hold three nonnegative counts, got {self.w}")

    @property
    def K(self) -> int:
        return sum(self.w)

    def to_dict(self) -> dict:
        return {"w": list(self.w), "K": self.K, "coeff": self.coefficient}


def gaussian_state(profile: GaussianProfile) -> DickeState:
    k = np.arange(profile.n + 1, dtype=float)
    log_amps = -((k - profile.mu) ** 2) / (4 * profile.sigma)
    amps = np.exp(log_amps - np.max(log_amps))
    return DickeState.from_unnormalized(profile.n, amps)


def _checked_amplitudes(state: DickeState) -> np.ndarray:
    amps = state.amplitudes
    if np.any(amps < -NORM_TOLERANCE):
        raise ContractViolationError(
            f"Parent Hamiltonian needs nonnegative amplitudes, min is {float(np.min(amps)):.3e}"
        )
    return np.clip(amps, 0.0, None)


def parent_hamiltonian(state: DickeState) -> SymmetricBlockMatrix:
    """1 - |phi><phi| on the symmetric block."""
    amps = _checked_amplitudes(state)
    mat = np.eye(state.n + 1) - np.outer(amps, amps)
    block = SymmetricBlockMatrix.from_dense(mat)
    if not check_stoquastic(block, tol=0.0).stoquastic:
        raise ContractViolationError("Parent Hamiltonian has a positive off-diagonal entry")
    return block


def parent_hamiltonian_full(state: DickeState) -> sparse.csr_matrix:
    """1 - |phi><phi| on the full 2^n space, with |phi> expanded in the computational basis."""
    amps = _checked_amplitudes(state)
    vec = dicke_vectors(state.n) @ amps
    dim = 2**state.n
    return sparse.csr_matrix(np.eye(dim) - np.outer(vec, vec))


def _popcount(values: np.ndarray) -> np.ndarray:
    counts = np.zeros_like(values)
    v = values.copy()
    while np.any(v):
        counts += v & 1
        v >>= 1
    return counts


def _embed(m, n: Optional[int]) -> tuple[np.ndarray, int, Optional[np.ndarray]]:
    if isinstance(m, SymmetricBlockMatrix):
        n = m.dim - 1 if n is None else n
        if m.dim != n + 1:
            raise DomainError(f"Block of dimension {m.dim} is not the symmetric block of n={n}")
        if n > CONFIG["full_space_max_n"]:
            raise ResourceLimitError(f"Pauli decomposition is limited to n <= {CONFIG['full_space_max_n']}")
        vecs = dicke_vectors(n)
        block = m.to_dense()
        return vecs @ block @ vecs.T, n, block
    full = m.toarray() if sparse.issparse(m) else np.asarray(m)
    dim = full.shape[0]
    n_full = int(round(math.log2(dim)))
    if 2**n_full != dim or full.shape != (dim, dim):
        raise DomainError(f"Operator of shape {full.shape} is not a square 2^n matrix")
    if n_full > CONFIG["full_space_max_n"]:
        raise ResourceLimitError(f"Pauli decomposition is limited to n <= {CONFIG['full_space_max_n']}")
    return full, n_full, None


def pauli_weight_decompose(m, n: Optional[int] = None, tol: float = 1e-10) -> list[PauliWeightTerm]:
    """Pauli-string coefficients Tr(A P)/2^n aggregated per weight triple.

    ``m`` is a full-space operator (dense or sparse) or a symmetric block, which is
    first embedded as V B V^T with V the Dicke vectors.
    """
    full, n, block = _embed(m, n)
    dim = 2**n
    full = np.asarray(full, dtype=complex)
    had = hadamard(dim)
    rows = np.arange(dim)
    z_masks = np.arange(dim)

    coeffs = np.zeros((dim, dim))
    weights = np.zeros((dim, dim, 3), dtype=int)
    for x in range(dim):
        n_y = _popcount(z_masks & x)
        phase = 1j ** n_y
        v = full[rows, rows ^ x]
        c = phase * (had @ v) / dim
        if np.max(np.abs(c.imag), initial=0.0) > tol:
            raise DomainError("Operator is not Hermitian: complex Pauli coefficients")
        coeffs[x] = c.real
        weights[x, :, 0] = _popcount(np.full(dim, x) & ~z_masks & (dim - 1))
        weights[x, :, 1] = n_y
        weights[x, :, 2] = _popcount(~np.full(dim, x) & z_masks & (dim - 1))

    scale = max(1.0, float(np.max(np.abs(coeffs))))
    flat_w = weights.reshape(-1, 3)
    flat_c = coeffs.reshape(-1)
    classes: dict[tuple[int, int, int], float] = {}
    aggregated = np.zeros_like(flat_c)
    for w in {tuple(int(c) for c in row) for row in flat_w}:
        mask = np.all(flat_w == w, axis=1)
        values = flat_c[mask]
        spread = float(np.max(values) - np.min(values))
        if spread > tol * scale:
            raise NotPermutationInvariantError(
                f"Coefficients of weight class {w} vary by {spread:.3e}"
            )
        classes[w] = float(np.mean(values))
        aggregated[mask] = classes[w]

    _check_reconstruction(aggregated.reshape(dim, dim), had, full, block, n, tol * scale)
    terms = [PauliWeightTerm(w, value) for w, value in classes.items() if abs(value) > tol]
    terms.sort(key=lambda t: (t.K, t.w[0], t.w[1]))
    logger.debug(f"Decomposed n={n} operator into {len(terms)} weight classes")
    return terms


def _check_reconstruction(coeffs, had, full, block, n, tol) -> None:
    dim = 2**n
    rows = np.arange(dim)
    z_masks = np.arange(dim)
    rebuilt = np.zeros((dim, dim), dtype=complex)
    for x in range(dim):
        phase = 1j ** _popcount(z_masks & x)
        # P(x, z) has entries at (c ^ x, c) with value phase * (-1)^{z.c}
        rebuilt[rows ^ x, rows] = had @ (coeffs[x] * phase)
    if block is not None:
        vecs = dicke_vectors(n)
        error = float(np.max(np.abs(vecs.T @ rebuilt @ vecs - block)))
    else:
        error = float(np.max(np.abs(rebuilt - full)))
    if error > tol:
        raise ContractViolationError(f"Pauli reconstruction error {error:.3e} exceeds {tol:.1e}")


def max_order(terms: list[PauliWeightTerm], coeff_tol: float = 1e-10) -> int:
    orders = [t.K for t in terms if abs(t.coefficient) > coeff_tol]
    return max(orders, default=0)

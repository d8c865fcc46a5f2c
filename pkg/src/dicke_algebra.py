import itertools
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from utils.config import AppConfig
from utils.errors import (
    DomainError,
    ResourceLimitError,
    UnsupportedOperatorError,
)
from utils.logger import Logger

logger = Logger(__name__).get_logger()
CONFIG = AppConfig().get_config()

# Canonical coefficient order: alpha_i multiplies S_{SETTINGS[i]}
SETTINGS: tuple[tuple[int, ...], ...] = (
    (0,),
    (1,),
    (0, 0),
    (0, 1),
    (1, 1),
    (0, 0, 0),
    (0, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
)
SETTING_LABELS: tuple[str, ...] = tuple("".join(map(str, s)) for s in SETTINGS)
COEFF_COUNT: dict[int, int] = {1: 2, 2: 5, 3: 9}

PAULI: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def wrap_angle(x: float) -> float:
    """Map an angle onto [-pi, pi)."""
    wrapped = math.fmod(x + math.pi, 2 * math.pi)
    if wrapped < 0:
        wrapped += 2 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class MeasurementParams:
    """Angles of M0 = cos(phi) Z + sin(phi) X and M1 = cos(theta) Z + sin(theta) X."""

    phi: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.phi) and math.isfinite(self.theta)):
            raise DomainError(f"Measurement angles must be finite, got ({self.phi}, {self.theta})")
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_degrees(cls, phi: float, theta: float) -> "MeasurementParams":
        return cls(math.radians(phi), math.radians(theta))

    def angle(self, setting: int) -> float:
        match setting:
            case 0:
                return self.phi
            case 1:
                return self.theta
            case _:
                raise DomainError(f"Measurement setting must be 0 or 1, got {setting}")

    def shifted(self, delta: float) -> "MeasurementParams":
        return MeasurementParams(self.phi + delta, self.theta + delta)

    def to_dict(self) -> dict:
        return {"phi": self.phi, "theta": self.theta}


@dataclass(frozen=True)
class BlockSpec:
    """Block of total spin J = two_j / 2 inside the n-party operator."""

    n: int
    two_j: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"Party count must be positive, got {self.n}")
        if not 0 <= self.two_j <= self.n or (self.n - self.two_j) % 2:
            raise DomainError(f"2J={self.two_j} is not a valid block for n={self.n}")

    @classmethod
    def symmetric(cls, n: int) -> "BlockSpec":
        return cls(n, n)

    @classmethod
    def from_j(cls, n: int, J: float) -> "BlockSpec":
        two_j = 2 * J
        if abs(two_j - round(two_j)) > 1e-12:
            raise DomainError(f"J must be a half-integer, got {J}")
        return cls(n, int(round(two_j)))

    @property
    def J(self) -> float:
        return self.two_j / 2

    @property
    def dim(self) -> int:
        return self.two_j + 1

    @property
    def is_symmetric(self) -> bool:
        return self.two_j == self.n


def block_specs(n: int) -> list[BlockSpec]:
    """Every block J0 .. n/2, ascending."""
    return [BlockSpec(n, two_j) for two_j in range(n % 2, n + 1, 2)]


@dataclass(frozen=True, eq=False)
class BellCoefficients:
    order: int
    values: np.ndarray

    def __post_init__(self):
        if self.order not in COEFF_COUNT:
            raise DomainError(f"Operator order must be 1, 2 or 3, got {self.order}")
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != COEFF_COUNT[self.order]:
            raise DomainError(
                f"Order {self.order} needs {COEFF_COUNT[self.order]} coefficients, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("Bell coefficients must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "BellCoefficients":
        size = len(values)
        for order, count in COEFF_COUNT.items():
            if count == size:
                return cls(order, np.asarray(values, dtype=float))
        raise DomainError(f"Cannot infer operator order from {size} coefficients")

    def padded(self, order: int) -> "BellCoefficients":
        if order < self.order:
            raise DomainError(f"Cannot pad order {self.order} coefficients down to {order}")
        values = np.zeros(COEFF_COUNT[order])
        values[: self.values.size] = self.values
        return BellCoefficients(order, values)

    def scaled(self, factor: float) -> "BellCoefficients":
        return BellCoefficients(self.order, self.values * factor)

    def __len__(self) -> int:
        return self.values.size

    def to_dict(self) -> dict:
        return {"K": self.order, "alpha": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class SymmetricBlockMatrix:
    """Real symmetric banded matrix stored as its diagonal and upper bands."""

    dim: int
    bands: tuple[np.ndarray, ...]

    def __post_init__(self):
        bands = tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.bands)
        for d, band in enumerate(bands):
            if band.size != max(self.dim - d, 0):
                raise DomainError(f"Band {d} has length {band.size}, expected {self.dim - d}")
        object.__setattr__(self, "bands", bands)

    @property
    def bandwidth(self) -> int:
        return len(self.bands) - 1

    def band(self, d: int) -> np.ndarray:
        if d < len(self.bands):
            return self.bands[d]
        return np.zeros(max(self.dim - d, 0))

    def to_dense(self) -> np.ndarray:
        mat = np.diag(self.bands[0]) if self.bands else np.zeros((self.dim, self.dim))
        for d in range(1, len(self.bands)):
            if self.bands[d].size:
                mat = mat + np.diag(self.bands[d], d) + np.diag(self.bands[d], -d)
        return mat

    def to_banded_lower(self) -> np.ndarray:
        """Lower banded storage as expected by scipy.linalg.eig_banded(lower=True)."""
        ab = np.zeros((len(self.bands), self.dim))
        for d, band in enumerate(self.bands):
            ab[d, : band.size] = band
        return ab

    @classmethod
    def from_dense(cls, mat: np.ndarray, bandwidth: Optional[int] = None) -> "SymmetricBlockMatrix":
        mat = np.asarray(mat)
        if np.iscomplexobj(mat):
            if np.max(np.abs(mat.imag), initial=0.0) > 1e-10:
                raise UnsupportedOperatorError("Block matrix has a non-negligible imaginary part")
            mat = mat.real
        if not np.allclose(mat, mat.T, atol=1e-10):
            raise UnsupportedOperatorError("Block matrix is not symmetric")
        dim = mat.shape[0]
        if bandwidth is None:
            bandwidth = max(dim - 1, 0)
        return cls(dim, tuple(np.diag(mat, d).copy() for d in range(bandwidth + 1)))

    @classmethod
    def zeros(cls, dim: int, bandwidth: int) -> "SymmetricBlockMatrix":
        return cls(dim, tuple(np.zeros(max(dim - d, 0)) for d in range(bandwidth + 1)))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "bands": [band.tolist() for band in self.bands]}


@dataclass(frozen=True)
class StoqReport:
    stoquastic: bool
    worst_offender: Optional[tuple[int, int, float]]
    tolerance: float

    def to_dict(self) -> dict:
        worst = None
        if self.worst_offender is not None:
            d, k, value = self.worst_offender
            worst = {"d": d, "k": k, "value": value}
        return {"stoquastic": self.stoquastic, "worst_offender": worst, "tolerance": self.tolerance}


def _two_j(J: float) -> int:
    two_j = 2 * J
    if abs(two_j - round(two_j)) > 1e-12 or two_j < 0:
        raise DomainError(f"J must be a nonnegative half-integer, got {J}")
    return int(round(two_j))


def gamma(x: int, J: float) -> float:
    two_j = _two_j(J)
    if not 0 <= x <= two_j - 1:
        raise DomainError(f"gamma index {x} outside [0, {two_j - 1}]")
    return math.sqrt((x + 1) * (two_j - x))


def xi(x: int, J: float) -> float:
    two_j = _two_j(J)
    if not 0 <= x <= two_j:
        raise DomainError(f"xi index {x} outside [0, {two_j}]")
    return float(two_j - 2 * x)


def _gamma_vec(k: np.ndarray, two_j: int) -> np.ndarray:
    """Gamma(k) with zeros outside 0 <= k <= 2J - 1."""
    k = np.asarray(k, dtype=float)
    inside = (k >= 0) & (k <= two_j - 1)
    return np.where(inside, np.sqrt(np.clip((k + 1) * (two_j - k), 0, None)), 0.0)


def _prefactor(d: int, k: np.ndarray, two_j: int) -> np.ndarray:
    """Gamma(k) Gamma(k+1) ... Gamma(k+d-1)."""
    out = np.ones_like(np.asarray(k, dtype=float))
    for j in range(d):
        out = out * _gamma_vec(k + j, two_j)
    return out


# Collective spin operators on a Dicke block


@lru_cache(maxsize=64)
def _collective(two_j: int) -> dict[str, np.ndarray]:
    dim = two_j + 1
    k = np.arange(dim)
    g = _gamma_vec(k[:-1], two_j)
    sx = np.diag(g, 1) + np.diag(g, -1)
    sy = -1j * np.diag(g, 1) + 1j * np.diag(g, -1)
    sz = np.diag((two_j - 2 * k).astype(float))
    mats = {"I": np.eye(dim), "X": sx.astype(complex), "Y": sy, "Z": sz.astype(complex)}
    for mat in mats.values():
        mat.setflags(write=False)
    return mats


def _validate_labels(labels) -> str:
    label = "".join(labels) if not isinstance(labels, str) else labels
    label = label.replace("S", "").replace("_", "").replace(" ", "").upper()
    if not 1 <= len(label) <= 3 or any(c not in "XYZ" for c in label):
        raise UnsupportedOperatorError(f"Unsupported Pauli product {labels!r}")
    return label


@lru_cache(maxsize=512)
def _collective_product(label: str, two_j: int) -> np.ndarray:
    mats = _collective(two_j)
    out = reduce(np.matmul, (mats[c] for c in label))
    out.setflags(write=False)
    return out


def pi_pauli_product_element(labels, k: int, l: int, block: BlockSpec) -> complex:
    """Entry (k, l) of a product of collective Pauli operators, e.g. "ZX" for S_Z S_X."""
    label = _validate_labels(labels)
    if not (0 <= k <= block.two_j and 0 <= l <= block.two_j):
        raise DomainError(f"Index ({k}, {l}) outside block of dimension {block.dim}")
    return complex(_collective_product(label, block.two_j)[k, l])


def single_site_collective(a: np.ndarray, two_j: int) -> np.ndarray:
    """Sum_i a^i restricted to a Dicke block, for any 2x2 matrix a."""
    mats = _collective(two_j)
    out = np.zeros((two_j + 1, two_j + 1), dtype=complex)
    for letter, pauli in PAULI.items():
        coeff = np.trace(pauli @ a) / 2
        if letter == "I":
            out += coeff * two_j * mats["I"]
        else:
            out += coeff * mats[letter]
    return out


def pi_operator_block(ops: Sequence[np.ndarray], block: BlockSpec) -> np.ndarray:
    """Sum over distinct-party tuples of ops[0]^i ops[1]^j ..., via collective operators."""
    two_j = block.two_j
    col = [single_site_collective(np.asarray(a, dtype=complex), two_j) for a in ops]

    def prime(*mats):
        return single_site_collective(reduce(np.matmul, mats), two_j)

    match len(ops):
        case 1:
            return col[0]
        case 2:
            return col[0] @ col[1] - prime(ops[0], ops[1])
        case 3:
            a, b, c = ops
            return (
                col[0] @ col[1] @ col[2]
                - prime(a, b) @ col[2]
                - prime(a, c) @ col[1]
                - col[0] @ prime(b, c)
                + prime(a, b, c)
                + prime(a, c, b)
            )
        case _:
            raise UnsupportedOperatorError(f"Only 1- to 3-body operators are supported, got {len(ops)}")


def measurement_matrix(setting: int, params: MeasurementParams) -> np.ndarray:
    angle = params.angle(setting)
    return np.array(
        [[math.cos(angle), math.sin(angle)], [math.sin(angle), -math.cos(angle)]]
    )


# Closed-form measurement bands


def _parse_setting(setting) -> tuple[int, ...]:
    if isinstance(setting, str):
        setting = tuple(int(c) for c in setting)
    setting = tuple(int(s) for s in setting)
    if setting not in SETTINGS:
        raise UnsupportedOperatorError(f"Unsupported measurement setting {setting}")
    return setting


def x_weights(setting, params: MeasurementParams) -> np.ndarray:
    """w[m]: sum over placements of m X-factors of the sin/cos products.

    For (phi, theta) this gives w[1] = sin(phi + theta) and w[2] = sin(phi) sin(theta).
    """
    poly = np.array([1.0])
    for s in _parse_setting(setting):
        angle = params.angle(s)
        poly = np.convolve(poly, [math.cos(angle), math.sin(angle)])
    return poly


def _stripped_band(size: int, d: int, k: np.ndarray, two_j: int, w: np.ndarray) -> np.ndarray:
    """Offset-d band of S_setting divided by Gamma(k)...Gamma(k+d-1)."""
    N = float(two_j)
    k = np.asarray(k, dtype=float)
    if d > size:
        return np.zeros_like(k)
    g0 = _gamma_vec(k, two_j)
    gm = _gamma_vec(k - 1, two_j)
    xi_k = N - 2 * k
    xx_diag = g0**2 + gm**2 - N
    match (size, d):
        case (1, 0):
            return w[0] * xi_k
        case (1, 1):
            return np.full_like(k, w[1])
        case (2, 0):
            return w[0] * (xi_k**2 - N) + w[2] * xx_diag
        case (2, 1):
            return w[1] * (N - 1 - 2 * k)
        case (2, 2):
            return np.full_like(k, w[2])
        case (3, 0):
            zzz = xi_k**3 + (2 - 3 * N) * xi_k
            zxx = xi_k * (g0**2 + gm**2) + (2 - N) * xi_k + 2 * (gm**2 - g0**2)
            return w[0] * zzz + w[2] * zxx
        case (3, 1):
            q = 4 * k**2 - 4 * k * (N - 1) + N**2 - 3 * N + 2
            r = k * (N - 1 - k)
            return w[1] * q + 3 * w[3] * r
        case (3, 2):
            return w[2] * (N - 2 - 2 * k)
        case (3, 3):
            return np.full_like(k, w[3])
    raise UnsupportedOperatorError(f"No band formula for setting size {size}, offset {d}")


def stripped_band(setting, d: int, k, two_j: int, params: MeasurementParams) -> np.ndarray:
    setting = _parse_setting(setting)
    return _stripped_band(len(setting), d, np.atleast_1d(k), two_j, x_weights(setting, params))


def pi_measurement_band(setting, d: int, k: int, block: BlockSpec, params: MeasurementParams) -> float:
    """(S_setting)_{k, k+d} on the given block, with n replaced by 2J."""
    setting = _parse_setting(setting)
    if d < 0:
        raise DomainError(f"Offset must be nonnegative, got {d}")
    if not 0 <= k <= block.two_j - d:
        raise DomainError(f"Index {k} outside offset-{d} band of block dimension {block.dim}")
    if d > len(setting):
        return 0.0
    ks = np.array([k], dtype=float)
    value = _stripped_band(len(setting), d, ks, block.two_j, x_weights(setting, params))
    return float(value[0] * _prefactor(d, ks, block.two_j)[0])


@lru_cache(maxsize=4096)
def measurement_bands(params: MeasurementParams, block: BlockSpec, order: int) -> np.ndarray:
    """Table T[i, d, k] = (S_{SETTINGS[i]})_{k,k+d}, zero padded to the block dimension."""
    count = COEFF_COUNT[order]
    dim = block.dim
    table = np.zeros((count, order + 1, dim))
    for i, setting in enumerate(SETTINGS[:count]):
        w = x_weights(setting, params)
        for d in range(min(len(setting), order) + 1):
            length = dim - d
            if length <= 0:
                continue
            ks = np.arange(length, dtype=float)
            table[i, d, :length] = _stripped_band(len(setting), d, ks, block.two_j, w) * _prefactor(
                d, ks, block.two_j
            )
    table.setflags(write=False)
    return table


def build_block(
    coeffs: BellCoefficients, params: MeasurementParams, block: BlockSpec
) -> SymmetricBlockMatrix:
    table = measurement_bands(params, block, coeffs.order)
    combined = np.tensordot(coeffs.values, table, axes=1)
    dim = block.dim
    bands = tuple(combined[d, : max(dim - d, 0)].copy() for d in range(coeffs.order + 1))
    return SymmetricBlockMatrix(dim, bands)


def check_stoquastic(m: SymmetricBlockMatrix, tol: Optional[float] = None) -> StoqReport:
    if tol is None:
        tol = CONFIG["stoq_tolerance"]
    worst: Optional[tuple[int, int, float]] = None
    for d in range(1, len(m.bands)):
        band = m.bands[d]
        if band.size == 0:
            continue
        k = int(np.argmax(band))
        if worst is None or band[k] > worst[2]:
            worst = (d, k, float(band[k]))
    stoquastic = worst is None or worst[2] <= tol
    return StoqReport(stoquastic, worst, tol)


# Full Hilbert-space constructions


def _require_full_space(n: int, limit: Optional[int] = None) -> None:
    limit = CONFIG["full_space_max_n"] if limit is None else limit
    if n < 1:
        raise DomainError(f"Party count must be positive, got {n}")
    if n > limit:
        raise ResourceLimitError(f"Full-space construction is limited to n <= {limit}, got n={n}")


def _site_operator(op: np.ndarray, site: int, n: int) -> sparse.csr_matrix:
    # qubit 0 is the most significant bit
    left = sparse.identity(2**site, format="csr")
    right = sparse.identity(2 ** (n - site - 1), format="csr")
    return sparse.kron(sparse.kron(left, sparse.csr_matrix(op)), right, format="csr")


def pi_operator_full(ops: Sequence[np.ndarray], n: int) -> sparse.csr_matrix:
    """Sum over ordered tuples of distinct parties of ops[0]^i ops[1]^j ... on 2^n dimensions."""
    _require_full_space(n)
    if len(ops) > n:
        return sparse.csr_matrix((2**n, 2**n), dtype=complex)
    site_ops = [[_site_operator(np.asarray(a, dtype=complex), s, n) for s in range(n)] for a in ops]
    total = sparse.csr_matrix((2**n, 2**n), dtype=complex)
    for sites in itertools.permutations(range(n), len(ops)):
        term = site_ops[0][sites[0]]
        for slot in range(1, len(ops)):
            term = term @ site_ops[slot][sites[slot]]
        total = total + term
    return total


def pi_pauli_full(labels, n: int) -> sparse.csr_matrix:
    label = _validate_labels(labels)
    return pi_operator_full([PAULI[c] for c in label], n)


def collective_pauli(letter: str, n: int) -> sparse.csr_matrix:
    return pi_pauli_full(letter, n)


def single_site_sum(a: np.ndarray, n: int) -> sparse.csr_matrix:
    return pi_operator_full([a], n)


def measurement_operator_full(setting, params: MeasurementParams, n: int) -> sparse.csr_matrix:
    setting = _parse_setting(setting)
    return pi_operator_full([measurement_matrix(s, params) for s in setting], n)


def bell_operator_full(coeffs: BellCoefficients, params: MeasurementParams, n: int) -> sparse.csr_matrix:
    _require_full_space(n)
    total = sparse.csr_matrix((2**n, 2**n), dtype=complex)
    for alpha, setting in zip(coeffs.values, SETTINGS):
        if alpha != 0.0:
            total = total + alpha * measurement_operator_full(setting, params, n)
    return total


@lru_cache(maxsize=16)
def dicke_vectors(n: int) -> np.ndarray:
    """Columns are |D_n^k>, k = number of excitations (|1> entries)."""
    _require_full_space(n)
    dim = 2**n
    weights = np.array([bin(b).count("1") for b in range(dim)])
    vecs = np.zeros((dim, n + 1))
    for k in range(n + 1):
        vecs[weights == k, k] = 1.0 / math.sqrt(math.comb(n, k))
    vecs.setflags(write=False)
    return vecs


def brute_force_block(coeffs: BellCoefficients, params: MeasurementParams, n: int) -> np.ndarray:
    """<D^k| B |D^l> from the full 2^n operator; the oracle for build_block."""
    _require_full_space(n)
    full = bell_operator_full(coeffs, params, n)
    vecs = dicke_vectors(n)
    block = vecs.T @ (full @ vecs)
    if np.max(np.abs(block.imag), initial=0.0) > 1e-9:
        logger.warning(f"Projected block has imaginary residue {np.max(np.abs(block.imag)):.3e}")
    return np.asarray(block.real)


def _sparse_stoq_report(mat: sparse.spmatrix, tol: float) -> StoqReport:
    coo = sparse.coo_matrix(mat)
    mask = coo.row != coo.col
    values = np.real(coo.data[mask])
    if values.size == 0:
        return StoqReport(True, None, tol)
    idx = int(np.argmax(values))
    row, col = int(coo.row[mask][idx]), int(coo.col[mask][idx])
    worst = (col - row, row, float(values[idx]))
    return StoqReport(bool(values[idx] <= tol), worst, tol)


def embed_computational(
    m: SymmetricBlockMatrix, n: int, shift: float | str | None = "auto", tol: float = 1e-12
) -> tuple[sparse.csr_matrix, StoqReport]:
    """Return V (B + c 1) V^T, i.e. the symmetric block plus c times the symmetric-subspace projector."""
    _require_full_space(n)
    if m.dim != n + 1:
        raise UnsupportedOperatorError(
            f"Embedding needs the symmetric block (dimension {n + 1}), got dimension {m.dim}"
        )
    if shift is None or shift == "auto":
        c = -float(np.max(m.bands[0])) - 1.0
    else:
        c = float(shift)
        if c > 0:
            raise DomainError(f"Projector shift must be <= 0, got {c}")
    vecs = dicke_vectors(n)
    shifted = m.to_dense() + c * np.eye(m.dim)
    full = sparse.csr_matrix(vecs @ shifted @ vecs.T)
    full.eliminate_zeros()
    report = _sparse_stoq_report(full, tol)
    logger.debug(f"Embedded block with shift c={c:.6g}; stoquastic={report.stoquastic}")
    return full, report


def rotation_unitary(delta: float) -> np.ndarray:
    """U with U M(a) U^T = M(a + delta) for M(a) = cos(a) Z + sin(a) X."""
    c, s = math.cos(delta / 2), math.sin(delta / 2)
    return np.array([[c, -s], [s, c]])


def spectrum_shift_check(
    coeffs: BellCoefficients, params: MeasurementParams, delta: float, n: int
) -> float:
    """Largest deviation between sorted spectra at (phi, theta) and (phi + delta, theta + delta)."""
    _require_full_space(n, limit=7)
    before = bell_operator_full(coeffs, params, n).toarray()
    after = bell_operator_full(coeffs, params.shifted(delta), n).toarray()
    spec_before = np.linalg.eigvalsh(before)
    spec_after = np.linalg.eigvalsh(after)
    return float(np.max(np.abs(spec_before - spec_after)))


def rotation_residual(
    coeffs: BellCoefficients, params: MeasurementParams, delta: float, n: int
) -> float:
    """max |B(phi + delta, theta + delta) - U^n B(phi, theta) U^n^T|."""
    _require_full_space(n, limit=7)
    u = reduce(np.kron, [rotation_unitary(delta)] * n)
    before = bell_operator_full(coeffs, params, n).toarray()
    after = bell_operator_full(coeffs, params.shifted(delta), n).toarray()
    return float(np.max(np.abs(after - u @ before @ u.T)))

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import eig_banded, eigh

from dicke_algebra import (
    COEFF_COUNT,
    SETTINGS,
    BellCoefficients,
    BlockSpec,
    MeasurementParams,
    SymmetricBlockMatrix,
    block_specs,
    build_block,
)
from parent_ham import DickeState
from utils.config import AppConfig
from utils.errors import DomainError, ResourceLimitError
from utils.logger import Logger

logger = Logger(__name__).get_logger()
CONFIG = AppConfig().get_config()

CORRELATOR_LABELS = ("S0", "S1", "S00", "S01", "S11", "S000", "S001", "S011", "S111")


@dataclass(frozen=True, order=True)
class DeterministicStrategy:
    """Party counts per output pair: a=(+,+), b=(+,-), c=(-,+), d=(-,-) for settings (0, 1)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise DomainError(f"Strategy counts must be nonnegative, got {self}")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    def flipped(self) -> "DeterministicStrategy":
        """Every party flips both outputs."""
        return DeterministicStrategy(self.d, self.c, self.b, self.a)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True, eq=False)
class BoundsReport:
    beta_q: float
    beta_c: float
    gap: Optional[float]
    argmin_strategy: DeterministicStrategy
    ground_state: DickeState
    block_two_j: int
    classical_bound_nonnegative: bool = False

    @property
    def violation(self) -> bool:
        return self.gap is not None and self.gap > 1 + 1e-9

    def to_dict(self) -> dict:
        return {
            "beta_q": self.beta_q,
            "beta_c": self.beta_c,
            "gap": self.gap,
            "violation": self.violation,
            "classical_bound_nonnegative": self.classical_bound_nonnegative,
            "strategy": self.argmin_strategy.to_dict(),
            "block_J": self.block_two_j / 2,
            "ground_state": self.ground_state.amplitudes.tolist(),
        }


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec)))
    return -vec if vec[idx] < 0 else vec


def beta_q(m: SymmetricBlockMatrix) -> tuple[float, DickeState]:
    """Smallest eigenvalue and eigenvector of a banded symmetric block."""
    if m.dim < 1:
        raise DomainError("Cannot diagonalize an empty block")
    if m.dim <= CONFIG["dense_eig_max_dim"]:
        values, vectors = eigh(m.to_dense(), subset_by_index=[0, 0])
    else:
        # LAPACK bisection on the band storage
        values, vectors = eig_banded(m.to_banded_lower(), lower=True, select="i", select_range=(0, 0))
    vec = _canonical_sign(vectors[:, 0])
    return float(values[0]), DickeState(m.dim - 1, vec / np.linalg.norm(vec))


def strategy_correlators(s: DeterministicStrategy, n: int, K: int) -> np.ndarray:
    """Classical values of S_0 ... S_111 (up to order K) for a symmetrized deterministic strategy."""
    if s.n != n:
        raise DomainError(f"Strategy {s} does not have {n} parties")
    return _correlators(np.array([[s.a, s.b, s.c, s.d]], dtype=float), n, K)[0]


def _correlators(strategies: np.ndarray, n: int, K: int) -> np.ndarray:
    a, b, c, d = strategies.T
    s0 = a + b - c - d
    s1 = a - b + c - d
    e = a - b - c + d
    columns = [s0, s1]
    if K >= 2:
        columns += [s0**2 - n, s0 * s1 - e, s1**2 - n]
    if K >= 3:
        columns += [
            s0**3 + 2 * s0 - 3 * n * s0,
            s0**2 * s1 + 2 * s1 - n * s1 - 2 * e * s0,
            s0 * s1**2 + 2 * s0 - n * s0 - 2 * e * s1,
            s1**3 + 2 * s1 - 3 * n * s1,
        ]
    return np.column_stack(columns)


@lru_cache(maxsize=64)
def correlator_table(n: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """All compositions (a, b, c, d) of n in lexicographic order with their correlators."""
    if K not in COEFF_COUNT:
        raise DomainError(f"Order must be 1, 2 or 3, got {K}")
    r = np.arange(n + 1)
    a, b, c = (grid.reshape(-1) for grid in np.meshgrid(r, r, r, indexing="ij"))
    keep = a + b + c <= n
    strategies = np.column_stack([a[keep], b[keep], c[keep], n - a[keep] - b[keep] - c[keep]])
    table = _correlators(strategies.astype(float), n, K)
    strategies.setflags(write=False)
    table.setflags(write=False)
    return strategies, table


def beta_c(coeffs: BellCoefficients, n: int) -> tuple[float, DeterministicStrategy]:
    strategies, table = correlator_table(n, coeffs.order)
    values = table @ coeffs.values
    best = float(np.min(values))
    slack = 1e-12 * max(1.0, abs(best))
    # first index within slack is the lexicographically smallest strategy
    idx = int(np.flatnonzero(values <= best + slack)[0])
    return best, DeterministicStrategy(*(int(v) for v in strategies[idx]))


def beta_c_bruteforce(coeffs: BellCoefficients, n: int) -> float:
    """Minimum over all 4^n per-party deterministic assignments, summing over distinct party tuples."""
    if n > 6:
        raise ResourceLimitError(f"Per-party enumeration is limited to n <= 6, got {n}")
    outputs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assignments = np.array(list(itertools.product(range(4), repeat=n)))
    table = outputs[assignments]  # (4^n, n, 2)
    total = np.zeros(assignments.shape[0])
    for alpha, setting in zip(coeffs.values, SETTINGS):
        if alpha == 0.0:
            continue
        tuples = np.array(list(itertools.permutations(range(n), len(setting))))
        if tuples.size == 0:
            continue
        prod = np.ones((assignments.shape[0], tuples.shape[0]))
        for slot, x in enumerate(setting):
            prod *= table[:, tuples[:, slot], x]
        total += alpha * prod.sum(axis=1)
    return float(np.min(total))


def relabel_outcomes(coeffs: BellCoefficients, setting: int) -> BellCoefficients:
    """Coefficients after every party flips the outcome of measurement ``setting``."""
    signs = np.array([(-1.0) ** s.count(setting) for s in SETTINGS[: coeffs.values.size]])
    return BellCoefficients(coeffs.order, coeffs.values * signs)


def gap(
    coeffs: BellCoefficients,
    params: MeasurementParams,
    n: int,
    all_blocks: bool = False,
) -> BoundsReport:
    blocks = block_specs(n) if all_blocks else [BlockSpec.symmetric(n)]
    best: Optional[tuple[float, DickeState, int]] = None
    for block in blocks:
        value, state = beta_q(build_block(coeffs, params, block))
        if best is None or value < best[0]:
            best = (value, state, block.two_j)
    bq, state, two_j = best
    bc, strategy = beta_c(coeffs, n)
    nonnegative = bc >= -1e-12
    ratio = None if nonnegative else bq / bc
    if nonnegative:
        logger.debug(f"Classical bound {bc:.6g} is nonnegative; gap undefined")
    return BoundsReport(bq, bc, ratio, strategy, state, two_j, nonnegative)

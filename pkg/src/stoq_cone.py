import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space, orth, qr
from scipy.optimize import linprog, nnls

from dicke_algebra import (
    COEFF_COUNT,
    SETTINGS,
    BellCoefficients,
    MeasurementParams,
    stripped_band,
)
from utils.config import AppConfig
from utils.errors import (
    AnalyticDegenerateError,
    ContractViolationError,
    DegenerateGeometryError,
    DomainError,
)
from utils.logger import Logger

logger = Logger(__name__).get_logger()
CONFIG = AppConfig().get_config()

# Lineality dimension at non-degenerate angles
GENERIC_LINEALITY = {2: 2, 3: 3}
ANGLE_EPS = 1e-12

Label = tuple[tuple[int, int], ...]


@dataclass(frozen=True, eq=False)
class HyperplaneSet:
    """Constraints rows @ alpha <= 0, one per off-diagonal entry (d, k)."""

    rows: np.ndarray
    labels: tuple[Label, ...]
    prefactor_divided: bool = True
    n: int = 0
    order: int = 2
    params: Optional[MeasurementParams] = None
    indeterminate: tuple[bool, ...] = ()
    witnesses: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.size == 0:
            rows = rows.reshape(0, COEFF_COUNT[self.order])
        if rows.shape[0] != len(self.labels):
            raise DomainError(f"{rows.shape[0]} rows but {len(self.labels)} labels")
        object.__setattr__(self, "rows", rows)
        if not self.indeterminate:
            object.__setattr__(self, "indeterminate", (False,) * rows.shape[0])

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def normalized_rows(self) -> np.ndarray:
        norms = np.linalg.norm(self.rows, axis=1, keepdims=True)
        return self.rows / np.where(norms > 0, norms, 1.0)

    def subset(self, idx, indeterminate=None, witnesses=None) -> "HyperplaneSet":
        idx = list(idx)
        flags = tuple(self.indeterminate[i] for i in idx) if indeterminate is None else tuple(indeterminate)
        return HyperplaneSet(
            self.rows[idx],
            tuple(self.labels[i] for i in idx),
            self.prefactor_divided,
            self.n,
            self.order,
            self.params,
            flags,
            witnesses,
        )

    def to_dict(self) -> dict:
        return {
            "rows": self.rows.tolist(),
            "labels": [[list(pair) for pair in label] for label in self.labels],
            "indeterminate": list(self.indeterminate),
        }


@dataclass(frozen=True, eq=False)
class ConeDescription:
    hyperplanes: HyperplaneSet
    rays: np.ndarray
    lines: np.ndarray
    tolerance: float
    degenerate: bool = False

    def __post_init__(self):
        dim = self.hyperplanes.dim
        object.__setattr__(self, "rays", np.asarray(self.rays, dtype=float).reshape(-1, dim))
        object.__setattr__(self, "lines", np.asarray(self.lines, dtype=float).reshape(-1, dim))

    @property
    def n(self) -> int:
        return self.hyperplanes.n

    @property
    def order(self) -> int:
        return self.hyperplanes.order

    @property
    def params(self) -> Optional[MeasurementParams]:
        return self.hyperplanes.params

    @property
    def ray_count(self) -> int:
        return self.rays.shape[0]

    @property
    def line_count(self) -> int:
        return self.lines.shape[0]

    @property
    def generator_count(self) -> int:
        return self.ray_count + self.line_count

    def summary(self) -> str:
        return f"{self.ray_count} rays, {self.line_count} lines"

    def to_dict(self) -> dict:
        params = self.params or MeasurementParams(0.0, 0.0)
        return {
            "n": self.n,
            "K": self.order,
            "phi": params.phi,
            "theta": params.theta,
            "hyperplanes": self.hyperplanes.rows.tolist(),
            "labels": [[list(pair) for pair in label] for label in self.hyperplanes.labels],
            "rays": self.rays.tolist(),
            "lines": self.lines.tolist(),
            "tolerance": self.tolerance,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConeDescription":
        try:
            order = int(payload["K"])
            rows = np.asarray(payload["hyperplanes"], dtype=float).reshape(-1, COEFF_COUNT[order])
            labels = payload.get("labels") or [[[0, i]] for i in range(rows.shape[0])]
            hyperplanes = HyperplaneSet(
                rows,
                tuple(tuple((int(d), int(k)) for d, k in label) for label in labels),
                True,
                int(payload["n"]),
                order,
                MeasurementParams(float(payload["phi"]), float(payload["theta"])),
            )
            tolerance = payload.get("tolerance")
            return cls(
                hyperplanes,
                np.asarray(payload.get("rays", []), dtype=float),
                np.asarray(payload.get("lines", []), dtype=float),
                float(tolerance) if tolerance is not None else CONFIG["feasibility_tolerance"],
                bool(payload.get("degenerate", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DomainError(f"Malformed cone description: {e}") from e


@dataclass(frozen=True, eq=False)
class ConeCoordinates:
    ray_weights: np.ndarray
    line_weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ray_weights", np.asarray(self.ray_weights, dtype=float).reshape(-1))
        object.__setattr__(self, "line_weights", np.asarray(self.line_weights, dtype=float).reshape(-1))

    @classmethod
    def from_vector(cls, vector, ray_count: int) -> "ConeCoordinates":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:ray_count], vector[ray_count:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.ray_weights, self.line_weights])

    def to_dict(self) -> dict:
        return {"ray_weights": self.ray_weights.tolist(), "line_weights": self.line_weights.tolist()}


def hyperplane_matrix(n: int, K: int, params: MeasurementParams, collapse: bool = True) -> HyperplaneSet:
    """Prefactor-stripped off-diagonal entries of every S_setting on the symmetric block."""
    if K not in GENERIC_LINEALITY:
        raise DomainError(f"Cone construction supports K in {{2, 3}}, got {K}")
    if n < 2:
        raise DomainError(f"Cone construction needs n >= 2, got {n}")
    count = COEFF_COUNT[K]
    rows, labels = [], []
    for d in range(1, K + 1):
        ks = np.arange(n + 1 - d)
        if ks.size == 0:
            continue
        block = np.zeros((ks.size, count))
        for i, setting in enumerate(SETTINGS[:count]):
            if len(setting) >= d:
                block[:, i] = stripped_band(setting, d, ks, n, params)
        rows.append(block)
        labels.extend(((d, int(k)),) for k in ks)
    h = HyperplaneSet(np.vstack(rows), tuple(labels), True, n, K, params)
    if collapse:
        h = collapse_duplicates(h)
    logger.debug(f"Hyperplane matrix n={n} K={K}: {h.count} rows")
    return h


def collapse_duplicates(h: HyperplaneSet, tol: float = 1e-10) -> HyperplaneSet:
    """Drop zero rows and merge rows that are positive multiples of each other."""
    norms = np.linalg.norm(h.rows, axis=1)
    unit = h.normalized_rows()
    kept: list[int] = []
    merged: dict[int, list[tuple[int, int]]] = {}
    for i in range(h.count):
        if norms[i] <= tol:
            continue
        for j in kept:
            if np.max(np.abs(unit[i] - unit[j])) <= tol:
                merged[j].extend(h.labels[i])
                break
        else:
            kept.append(i)
            merged[i] = list(h.labels[i])
    return HyperplaneSet(
        h.rows[kept],
        tuple(tuple(merged[i]) for i in kept),
        h.prefactor_divided,
        h.n,
        h.order,
        h.params,
    )


def _violation_witness(unit: np.ndarray, j: int, others: list[int], tol: float) -> Optional[np.ndarray]:
    """Point satisfying every other row but violating row j, or None."""
    a_ub = unit[others] if others else None
    b_ub = np.zeros(len(others)) if others else None
    res = linprog(
        -unit[j],
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(-1.0, 1.0)] * unit.shape[1],
        method="highs",
    )
    if res.status != 0 or -res.fun <= tol:
        return None
    return res.x


def reduce_irredundant(h: HyperplaneSet, tol: Optional[float] = None) -> HyperplaneSet:
    """Keep only rows that are not conical combinations of the others; certify each with a witness."""
    tol = CONFIG["redundancy_tolerance"] if tol is None else tol
    h = collapse_duplicates(h)
    unit = h.normalized_rows()
    keep = list(range(h.count))
    indeterminate: dict[int, bool] = {}
    for j in range(h.count):
        others = [i for i in keep if i != j]
        if not others:
            continue
        _, residual = nnls(unit[others].T, unit[j])
        if residual <= tol:
            keep.remove(j)
            logger.debug(f"Row {h.labels[j]} redundant (residual {residual:.2e})")
        elif residual <= 100 * tol:
            indeterminate[j] = True
            logger.warning(f"Row {h.labels[j]} redundancy indeterminate (residual {residual:.2e})")

    witnesses = np.full((len(keep), h.dim), np.nan)
    for pos, j in enumerate(keep):
        witness = _violation_witness(unit, j, [i for i in keep if i != j], tol)
        if witness is None:
            indeterminate[j] = True
            logger.warning(f"No violation witness found for row {h.labels[j]}")
        else:
            witnesses[pos] = witness
    reduced = h.subset(keep, [indeterminate.get(j, False) for j in keep], witnesses)
    logger.info(f"Reduced {h.count} hyperplanes to {reduced.count} irredundant")
    return reduced


def _canonical_sign(vectors: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    out = vectors.copy()
    for i, v in enumerate(out):
        nonzero = np.flatnonzero(np.abs(v) > eps)
        if nonzero.size and v[nonzero[0]] < 0:
            out[i] = -v
    return out


def lines(h: HyperplaneSet, rtol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis (as rows) of the kernel of the hyperplane matrix."""
    rtol = CONFIG["rank_rtol"] if rtol is None else rtol
    if h.count == 0:
        return np.eye(h.dim)
    basis = null_space(h.normalized_rows(), rcond=rtol).T
    return _canonical_sign(basis)


def _check_lineality(h: HyperplaneSet, line_count: int, strict: bool) -> bool:
    expected = GENERIC_LINEALITY.get(h.order, line_count)
    if line_count <= expected:
        return False
    message = (
        f"Lineality {line_count} exceeds the generic {expected} for K={h.order}"
        f" at {h.params}; retry with strict=False"
    )
    if strict:
        raise DegenerateGeometryError(message)
    logger.warning(message)
    return True


def _degenerate_angles(params: MeasurementParams) -> bool:
    sp, _, st, _ = _sines(params)
    return min(abs(sp), abs(st), abs(math.sin(params.phi - params.theta))) < ANGLE_EPS


def _pivot_rows(b: np.ndarray, p: int) -> list[int]:
    _, r, piv = qr(b.T, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size < p or diag[p - 1] <= 1e-10 * max(diag[0], 1.0):
        raise DegenerateGeometryError("Projected hyperplane matrix is rank deficient")
    return [int(i) for i in piv[:p]]


def _double_description(b: np.ndarray, tol: float) -> np.ndarray:
    """Extreme rays of the pointed cone {y : b @ y <= 0} by incremental insertion."""
    m, p = b.shape
    basis = _pivot_rows(b, p)
    rays_ = -np.linalg.inv(b[basis]).T
    rays_ /= np.linalg.norm(rays_, axis=1, keepdims=True)
    inserted = list(basis)

    for row in (i for i in range(m) if i not in set(basis)):
        s = rays_ @ b[row]
        pos = np.flatnonzero(s > tol)
        neg = np.flatnonzero(s < -tol)
        if pos.size == 0:
            inserted.append(row)
            continue
        zero = np.flatnonzero(np.abs(s) <= tol)
        tight = np.abs(b[inserted] @ rays_.T) <= tol
        new = [rays_[neg], rays_[zero]]
        if p >= 2:
            for i in pos:
                for j in neg:
                    common = tight[:, i] & tight[:, j]
                    if common.sum() < p - 2:
                        continue
                    if np.linalg.matrix_rank(b[inserted][common], tol=1e-8) != p - 2:
                        continue
                    ray = s[i] * rays_[j] - s[j] * rays_[i]
                    new.append((ray / np.linalg.norm(ray))[None, :])
        rays_ = np.vstack(new) if any(part.size for part in new) else np.zeros((0, p))
        inserted.append(row)
        logger.debug(f"DD insert row {row}: {pos.size}+/{neg.size}- -> {rays_.shape[0]} rays")
        if rays_.shape[0] == 0:
            break
    return rays_


def _combinatorial(b: np.ndarray, tol: float, rtol: float) -> np.ndarray:
    """Extreme rays from every (p-1)-subset of rows with a one-dimensional kernel."""
    m, p = b.shape
    candidates = []
    if p == 1:
        trial = [np.array([1.0]), np.array([-1.0])]
        return np.array([y for y in trial if np.all(b @ y <= tol)]).reshape(-1, 1)
    for subset in itertools.combinations(range(m), p - 1):
        kernel = null_space(b[list(subset)], rcond=rtol)
        if kernel.shape[1] != 1:
            continue
        y = kernel[:, 0]
        for cand in (y, -y):
            if np.all(b @ cand <= tol):
                candidates.append(cand)
    return np.array(candidates).reshape(-1, p)


def _dedupe_sort(vectors: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    unique: list[np.ndarray] = []
    for v in vectors:
        if not any(np.max(np.abs(v - u)) <= tol for u in unique):
            unique.append(v)
    if not unique:
        return np.zeros((0, vectors.shape[1] if vectors.ndim == 2 else 0))
    out = np.array(unique)
    order = np.lexsort(np.round(out, 6).T[::-1])
    return out[order]


def rays(
    h: HyperplaneSet,
    method: str = "dd",
    tol: Optional[float] = None,
    strict: bool = True,
) -> np.ndarray:
    """Unit extreme rays (as rows), orthogonal to the lineality space."""
    tol = CONFIG["feasibility_tolerance"] if tol is None else tol
    basis_lines = lines(h)
    _check_lineality(h, basis_lines.shape[0], strict)
    q = null_space(basis_lines) if basis_lines.size else np.eye(h.dim)
    p = q.shape[1]
    if p == 0:
        return np.zeros((0, h.dim))
    b = h.normalized_rows() @ q
    b_norms = np.linalg.norm(b, axis=1, keepdims=True)
    b = b / np.where(b_norms > 0, b_norms, 1.0)

    match method:
        case "dd":
            y = _double_description(b, tol)
        case "combinatorial":
            y = _combinatorial(b, tol, CONFIG["rank_rtol"])
        case _:
            raise DomainError(f"Unknown ray method {method!r}")

    if y.size == 0:
        return np.zeros((0, h.dim))
    v = y @ q.T
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return _dedupe_sort(v)


def _cross_validate(full: HyperplaneSet, ray_rows: np.ndarray, line_rows: np.ndarray, tol: float) -> None:
    unit = full.normalized_rows()
    if ray_rows.size:
        worst = float(np.max(unit @ ray_rows.T))
        if worst > tol:
            raise ContractViolationError(f"Ray violates an unreduced hyperplane by {worst:.3e}")
    if line_rows.size:
        worst = float(np.max(np.abs(unit @ line_rows.T)))
        if worst > tol:
            raise ContractViolationError(f"Line leaves the hyperplane kernel by {worst:.3e}")


def cone_description(
    n: int,
    K: int,
    params: MeasurementParams,
    method: str = "dd",
    strict: bool = True,
    tol: Optional[float] = None,
) -> ConeDescription:
    tol = CONFIG["feasibility_tolerance"] if tol is None else tol
    full = hyperplane_matrix(n, K, params)
    reduced = reduce_irredundant(full)
    basis_lines = lines(reduced)
    degenerate = _check_lineality(reduced, basis_lines.shape[0], strict)
    if _degenerate_angles(params) and not degenerate:
        logger.warning(f"Angles {params} sit on a degenerate locus; the rank may change nearby")
        degenerate = True
    ray_rows = rays(reduced, method=method, tol=tol, strict=False)
    _cross_validate(full, ray_rows, basis_lines, tol)
    cone = ConeDescription(reduced, ray_rows, basis_lines, tol, degenerate)
    logger.info(f"Cone n={n} K={K} at ({params.phi:.6f}, {params.theta:.6f}): {cone.summary()}")
    return cone


def membership(alpha: BellCoefficients, h: HyperplaneSet, tol: Optional[float] = None) -> tuple[bool, float]:
    tol = CONFIG["feasibility_tolerance"] if tol is None else tol
    if alpha.order < h.order:
        alpha = alpha.padded(h.order)
    if alpha.values.size != h.dim:
        raise DomainError(f"Coefficient length {alpha.values.size} does not match hyperplane dimension {h.dim}")
    if h.count == 0:
        return True, 0.0
    margin = float(np.max(h.rows @ alpha.values))
    return margin <= tol, margin


def coords_to_alpha(coords: ConeCoordinates, cone: ConeDescription, check: bool = True) -> BellCoefficients:
    if coords.ray_weights.size != cone.ray_count or coords.line_weights.size != cone.line_count:
        raise DomainError(
            f"Expected {cone.ray_count} ray and {cone.line_count} line weights, "
            f"got {coords.ray_weights.size} and {coords.line_weights.size}"
        )
    if np.any(coords.ray_weights < 0):
        raise ContractViolationError(f"Ray weights must be nonnegative, got {coords.ray_weights.tolist()}")
    alpha = np.zeros(cone.hyperplanes.dim)
    if cone.ray_count:
        alpha += coords.ray_weights @ cone.rays
    if cone.line_count:
        alpha += coords.line_weights @ cone.lines
    coeffs = BellCoefficients(cone.order, alpha)
    if check:
        scale = max(1.0, float(np.max(np.abs(cone.hyperplanes.rows), initial=0.0)) * float(np.max(np.abs(alpha), initial=0.0)))
        member, margin = membership(coeffs, cone.hyperplanes, tol=cone.tolerance * scale)
        if not member:
            raise ContractViolationError(f"Reconstructed coefficients leave the cone (margin {margin:.3e})")
    return coeffs


def ray_count_upper_bound(m: int, d: int) -> int:
    """At most C(m, d-1) extreme rays for m irredundant hyperplanes in a d-dimensional pointed cone."""
    return math.comb(m, d - 1)


# Closed-form two- and three-body geometry


def _sines(params: MeasurementParams) -> tuple[float, float, float, float]:
    return math.sin(params.phi), math.cos(params.phi), math.sin(params.theta), math.cos(params.theta)


def two_body_hyperplanes(n: int, params: MeasurementParams) -> HyperplaneSet:
    """The three irredundant rows: d=1 at k=0 and k=n-1, and the shared d=2 row."""
    sp, _, st, _ = _sines(params)
    v = np.array([math.sin(2 * params.phi), math.sin(params.phi + params.theta), math.sin(2 * params.theta)])
    rows = np.array(
        [
            [sp, st, *((n - 1) * v)],
            [sp, st, *((1 - n) * v)],
            [0.0, 0.0, sp**2, sp * st, st**2],
        ]
    )
    labels = (((1, 0),), ((1, n - 1),), tuple((2, k) for k in range(n - 1)))
    return HyperplaneSet(rows, labels, True, n, 2, params)


def two_body_line_formulas(params: MeasurementParams) -> np.ndarray:
    sp, _, st, _ = _sines(params)
    if abs(sp) < ANGLE_EPS:
        raise AnalyticDegenerateError("Two-body lines need sin(phi) != 0")
    ratio = st / sp
    return np.array(
        [
            [-ratio, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, ratio**2, -2 * ratio, 1.0],
        ]
    )


def two_body_ray_formulas(n: int, params: MeasurementParams) -> np.ndarray:
    """Closed-form rays with unit free parameter, before orientation and projection."""
    phi, theta = params.phi, params.theta
    sp, cp, st, ct = _sines(params)
    if abs(sp) < ANGLE_EPS or abs(st) < ANGLE_EPS:
        raise AnalyticDegenerateError("Two-body rays need sin(phi) != 0 and sin(theta) != 0")
    csc_p, csc_t = 1 / sp, 1 / st
    ratio = st * csc_p

    e = (
        24 * math.sin(theta - phi)
        + 4 * math.sin(3 * (theta - phi))
        - 12 * math.sin(3 * theta - phi)
        + math.sin(5 * theta - phi)
        + 3 * math.sin(3 * theta + phi)
        - 3 * math.sin(theta + 3 * phi)
        - 12 * math.sin(theta - 3 * phi)
        + math.sin(theta - 5 * phi)
    )
    denom_first = 4 * (math.cos(2 * theta) + math.cos(2 * phi) - 2) * (2 * math.cos(2 * theta) + math.cos(2 * phi) - 3)
    denom_second = 16 * (2 * ratio**4 + 3 * ratio**2 + 1)
    if abs(denom_first) < ANGLE_EPS:
        raise AnalyticDegenerateError("Vanishing denominator in the first two-body ray")
    first = (n - 1) * csc_t * e / denom_first
    second = (n - 1) * csc_p**5 * e / denom_second
    third = -st * sp * (csc_t**4 - csc_p**4) / (csc_t**2 + 2 * csc_p**2)
    fourth = -(ratio**2 + 2) / (2 * ratio**2 + 1)

    denom_r3 = math.sin(theta + phi) + 4 * st**2 * ct * csc_p
    if abs(denom_r3) < ANGLE_EPS:
        raise AnalyticDegenerateError("sin(theta + phi) + 4 sin^2(theta) cos(theta) csc(phi) vanishes")
    r3_mid = (2 * st**3 * ct * csc_p**2 - math.sin(2 * phi)) / denom_r3
    r3_last = -ratio * (ratio * math.sin(theta + phi) + 2 * math.sin(2 * phi)) / denom_r3

    return np.array(
        [
            [-first, -second, 1.0, third, fourth],
            [first, second, 1.0, third, fourth],
            [0.0, 0.0, 1.0, r3_mid, r3_last],
        ]
    )


def _project_out(vectors: np.ndarray, line_rows: np.ndarray) -> np.ndarray:
    basis = orth(line_rows.T)
    return vectors - (vectors @ basis) @ basis.T


def analytic_two_body(n: int, params: MeasurementParams, tol: Optional[float] = None) -> ConeDescription:
    tol = CONFIG["feasibility_tolerance"] if tol is None else tol
    hyperplanes = two_body_hyperplanes(n, params)
    raw_lines = two_body_line_formulas(params)
    raw_rays = two_body_ray_formulas(n, params)
    unit = hyperplanes.normalized_rows()

    oriented = []
    for i, ray in enumerate(raw_rays):
        products = unit @ ray / max(np.linalg.norm(ray), 1.0)
        if np.all(products <= tol):
            oriented.append(ray)
        elif np.all(-products <= tol):
            oriented.append(-ray)
        else:
            raise AnalyticDegenerateError(f"Ray {i + 1} cannot be oriented into the cone")

    projected = _project_out(np.array(oriented), raw_lines)
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    if np.any(norms < 1e-10):
        raise AnalyticDegenerateError("A two-body ray collapses onto the lineality space")
    ray_rows = _dedupe_sort(projected / norms)
    line_rows = _canonical_sign(orth(raw_lines.T).T)
    return ConeDescription(hyperplanes, ray_rows, line_rows, tol)


def two_body_witness_points(n: int, params: MeasurementParams) -> np.ndarray:
    """Row i violates only the i-th irredundant two-body hyperplane."""
    phi, theta = params.phi, params.theta
    sp, cp, st, ct = _sines(params)
    if abs(st) < ANGLE_EPS or abs(ct) < ANGLE_EPS:
        raise AnalyticDegenerateError("Witness points need sin(theta) != 0 and cos(theta) != 0")
    shift = 2 * (n - 1) * math.sin(theta - phi) / st
    tail = -(sp / st) ** 2
    p1 = np.array([0.0, 0.0, 1.0, 0.0, -sp * cp / (st * ct)])
    p2 = np.array([-shift, 0.0, 1.0, 0.0, tail])
    p3 = np.array([shift, 0.0, 1.0, 0.0, tail])

    rows = two_body_hyperplanes(n, params).rows
    points = []
    for target, point in ((0, p3), (1, p2), (2, p1)):
        value = float(rows[target] @ point)
        if abs(value) < ANGLE_EPS:
            raise AnalyticDegenerateError(f"Witness for hyperplane {target + 1} is degenerate")
        points.append(point if value > 0 else -point)
    return np.array(points)


def analytic_three_body_lines(params: MeasurementParams) -> np.ndarray:
    sp, _, st, _ = _sines(params)
    if abs(sp) < ANGLE_EPS:
        raise AnalyticDegenerateError("Three-body lines need sin(phi) != 0")
    r = st / sp
    return np.array(
        [
            [-r, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, r**2, -2 * r, 1, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, -(r**3), 3 * r**2, -3 * r, 1],
        ],
        dtype=float,
    )


def three_body_witness(n: int, params: MeasurementParams, margin: float = 1.0) -> BellCoefficients:
    """Member of the K=3 cone using only S_0, S_00 and S_000."""
    h = hyperplane_matrix(n, 3, params, collapse=False)
    sp = math.sin(params.phi)
    alpha = np.zeros(COEFF_COUNT[3])
    if abs(sp) < ANGLE_EPS:
        alpha[[0, 2, 5]] = (-margin, -margin, -1.0)
        return BellCoefficients(3, alpha)

    alpha[5] = -math.copysign(1.0, sp**3)
    offsets = np.array([label[0][0] for label in h.labels])

    second = h.rows[offsets == 2]
    c2 = second[0, 2]
    alpha[2] = min(float(np.min(-second[:, 5] * alpha[5] / c2)), 0.0) - margin

    first = h.rows[offsets == 1]
    rest = first[:, 2] * alpha[2] + first[:, 5] * alpha[5]
    bound = -rest / first[:, 0]
    if sp > 0:
        alpha[0] = min(float(np.min(bound)), 0.0) - margin
    else:
        alpha[0] = max(float(np.max(bound)), 0.0) + margin
    return BellCoefficients(3, alpha)

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import curve_fit, linprog

from bounds import beta_c, beta_q, correlator_table
from dicke_algebra import (
    BellCoefficients,
    BlockSpec,
    MeasurementParams,
    build_block,
    measurement_bands,
)
from parent_ham import DickeState, GaussianProfile
from stoq_cone import ConeCoordinates, ConeDescription, coords_to_alpha, membership
from utils.config import AppConfig
from utils.errors import ContractViolationError, DomainError
from utils.logger import Logger
from utils.serialization import format_sig

logger = Logger(__name__).get_logger()

SIGMA_FLOOR = 1e-3
# coordinate box handed to the linear program before rescaling into the sweep intervals
SEESAW_BOUND = 1e4
CSV_HEADER = ("phi", "theta", "beta_q", "beta_c", "gap", "violation")

Objective = Callable[[BellCoefficients], float]


@dataclass(frozen=True)
class SweepConfig:
    # None gives every unit ray the interval [0, 1]
    ray_upper: Optional[tuple[float, ...]] = None
    line_bound: float = 1.0
    grid_points_per_sweep: int = 101
    max_passes: int = 30
    convergence_tol: float = 1e-10
    rng_seed: int = 20240611
    restarts: int = 8
    refine_factor: int = 10
    seesaw_iterations: int = 50
    threads: Optional[int] = None

    def __post_init__(self):
        if self.grid_points_per_sweep < 3:
            raise DomainError(f"Need at least 3 grid points, got {self.grid_points_per_sweep}")
        if self.line_bound <= 0:
            raise DomainError("Line weight interval must be nonempty")
        if self.ray_upper is not None and any(u <= 0 for u in self.ray_upper):
            raise DomainError("Ray weight intervals must be nonempty")
        if self.max_passes < 1 or self.restarts < 1:
            raise DomainError("max_passes and restarts must be positive")
        if self.seesaw_iterations < 0:
            raise DomainError(f"seesaw_iterations must be >= 0, got {self.seesaw_iterations}")

    def to_dict(self) -> dict:
        return {
            "ray_upper": list(self.ray_upper) if self.ray_upper is not None else None,
            "line_bound": self.line_bound,
            "grid_points_per_sweep": self.grid_points_per_sweep,
            "max_passes": self.max_passes,
            "convergence_tol": self.convergence_tol,
            "rng_seed": self.rng_seed,
            "restarts": self.restarts,
            "refine_factor": self.refine_factor,
            "seesaw_iterations": self.seesaw_iterations,
        }


@dataclass
class SweepTrace:
    entries: list[tuple[int, int, float, float]] = field(default_factory=list)

    def record(self, pass_index: int, coordinate: int, value: float, gap: float) -> None:
        self.entries.append((pass_index, coordinate, value, gap))

    @property
    def gaps(self) -> list[float]:
        return [entry[3] for entry in self.entries]

    def is_monotone(self) -> bool:
        gaps = self.gaps
        return all(b >= a for a, b in zip(gaps, gaps[1:]))

    def to_list(self) -> list[list[float]]:
        return [[p, c, v if math.isfinite(v) else None, g if math.isfinite(g) else None] for p, c, v, g in self.entries]


@dataclass(frozen=True, eq=False)
class SweepResult:
    coords: ConeCoordinates
    alpha: BellCoefficients
    gap: Optional[float]
    trace: SweepTrace
    seed: int
    restart: int
    status: str

    def to_dict(self) -> dict:
        return {
            "coords": self.coords.as_vector().tolist(),
            "alpha": self.alpha.values.tolist(),
            "gap": self.gap,
            "trace": self.trace.to_list(),
            "seed": self.seed,
            "restart": self.restart,
            "status": self.status,
        }


@dataclass(frozen=True)
class ScanRow:
    phi: float
    theta: float
    beta_q: float
    beta_c: float
    gap: Optional[float]
    violation: bool


@dataclass(frozen=True)
class GaussianFit:
    profile: GaussianProfile
    amplitude: float
    rms_residual: float
    sigma_floored: bool

    def to_dict(self) -> dict:
        return {
            **self.profile.to_dict(),
            "amplitude": self.amplitude,
            "rms_residual": self.rms_residual,
            "sigma_floored": self.sigma_floored,
        }


def default_intervals(cone: ConeDescription, config: Optional[SweepConfig] = None) -> tuple[np.ndarray, np.ndarray]:
    config = config or SweepConfig()
    if config.ray_upper is not None:
        if len(config.ray_upper) != cone.ray_count:
            raise DomainError(f"Expected {cone.ray_count} ray bounds, got {len(config.ray_upper)}")
        ray_hi = np.asarray(config.ray_upper, dtype=float)
    else:
        ray_hi = np.ones(cone.ray_count)
    lo = np.concatenate([np.zeros(cone.ray_count), np.full(cone.line_count, -config.line_bound)])
    hi = np.concatenate([ray_hi, np.full(cone.line_count, config.line_bound)])
    return lo, hi


def objective_gap(
    alpha: BellCoefficients, n: int, params: MeasurementParams, block: Optional[BlockSpec] = None
) -> float:
    """beta_Q / beta_C, or -inf when the classical bound is not negative."""
    bc, _ = beta_c(alpha, n)
    if bc >= -1e-12:
        return -math.inf
    bq, _ = beta_q(build_block(alpha, params, block or BlockSpec.symmetric(n)))
    return bq / bc


class _Evaluator:
    """Objective over cone coordinates; remembers the lowest beta_Q seen."""

    def __init__(self, cone: ConeDescription, n: int, objective: Optional[Objective]):
        self.cone = cone
        self.n = n
        self.block = BlockSpec.symmetric(n)
        self.objective = objective
        self.best_beta_q = math.inf
        self.best_beta_q_x: Optional[np.ndarray] = None
        self._cache: dict[bytes, float] = {}

    def alpha(self, x: np.ndarray) -> BellCoefficients:
        return coords_to_alpha(ConeCoordinates.from_vector(x, self.cone.ray_count), self.cone, check=False)

    def __call__(self, x: np.ndarray) -> float:
        key = x.tobytes()
        if key in self._cache:
            return self._cache[key]
        alpha = self.alpha(x)
        if self.objective is not None:
            value = float(self.objective(alpha))
        else:
            bc, _ = beta_c(alpha, self.n)
            bq, _ = beta_q(build_block(alpha, self.cone.params, self.block))
            if bq < self.best_beta_q:
                self.best_beta_q, self.best_beta_q_x = bq, x.copy()
            value = bq / bc if bc < -1e-12 else -math.inf
        self._cache[key] = value
        return value


def _sweep_coordinate(f, x, c, grid, value):
    vals = []
    for g in grid:
        trial = x.copy()
        trial[c] = g
        vals.append(f(trial))
    best = int(np.argmax(vals))  # lowest index wins ties
    if vals[best] > value:
        x = x.copy()
        x[c] = grid[best]
        value = vals[best]
    return x, value


def _single_run(cone, n, config, objective, seed, restart):
    lo, hi = default_intervals(cone, config)
    rng = np.random.default_rng([seed, restart])
    f = _Evaluator(cone, n, objective)
    x = rng.uniform(lo, hi)
    value = f(x)
    trace = SweepTrace()
    trace.record(0, -1, float("nan"), value)
    dim = lo.size

    for pass_index in range(config.max_passes):
        start = value
        for c in range(dim):
            grid = np.linspace(lo[c], hi[c], config.grid_points_per_sweep)
            x, value = _sweep_coordinate(f, x, c, grid, value)
            trace.record(pass_index, c, float(x[c]), value)
        if not (value - start >= config.convergence_tol):
            break

    step = (hi - lo) / (config.grid_points_per_sweep - 1)
    refine_pass = pass_index + 1
    for c in range(dim):
        local = np.linspace(
            max(lo[c], x[c] - step[c]), min(hi[c], x[c] + step[c]), 2 * config.refine_factor + 1
        )
        x, value = _sweep_coordinate(f, x, c, local, value)
        trace.record(refine_pass, c, float(x[c]), value)
    if objective is None and config.seesaw_iterations:
        x, value = _seesaw(cone, n, config, f, x, value, trace, refine_pass + 1, lo, hi)
    logger.debug(f"Restart {restart}: gap {value:.8g} after {refine_pass} passes")
    return x, value, trace, f


def _expectations(psi: np.ndarray, params: MeasurementParams, block: BlockSpec, order: int) -> np.ndarray:
    """<psi|S_x|psi> for every setting of the given order."""
    table = measurement_bands(params, block, order)
    values = table[:, 0, :] @ (psi * psi)
    for d in range(1, min(order, psi.size - 1) + 1):
        values = values + 2.0 * table[:, d, : psi.size - d] @ (psi[:-d] * psi[d:])
    return values


def _seesaw(cone, n, config, f, x, value, trace, pass_index, lo, hi):
    """Alternate ground states and linear programs over the cone cut by beta_C >= -1.

    For a fixed state the best coefficients are a vertex of that polytope, and the
    gap of the new vertex is at least the old one, so the rounds climb monotonically.
    """
    _, table = correlator_table(n, cone.order)
    generators = np.vstack([cone.rays, cone.lines])
    a_ub = -(table @ generators.T)
    b_ub = np.ones(a_ub.shape[0])
    bounds = [(0.0, SEESAW_BOUND)] * cone.ray_count + [(-SEESAW_BOUND, SEESAW_BOUND)] * cone.line_count
    box = np.maximum(np.abs(lo), np.abs(hi))

    for _ in range(config.seesaw_iterations):
        _, state = beta_q(build_block(f.alpha(x), cone.params, f.block))
        expectations = _expectations(state.amplitudes, cone.params, f.block, cone.order)
        lp = linprog(generators @ expectations, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if lp.status != 0:
            logger.debug(f"See-saw stopped: {lp.message}")
            break
        scale = float(np.max(np.abs(lp.x) / box))
        if scale <= 0:
            break
        # gap is invariant under positive rescaling
        trial = np.clip(lp.x / scale, lo, hi)
        trial_value = f(trial)
        if not trial_value > value:
            break
        improvement = trial_value - value
        x, value = trial, trial_value
        trace.record(pass_index, -1, float("nan"), value)
        if improvement < config.convergence_tol:
            break
    return x, value


def sweep_optimize(
    cone: ConeDescription,
    n: int,
    config: Optional[SweepConfig] = None,
    objective: Optional[Objective] = None,
) -> SweepResult:
    """Coordinate sweeps over cone coordinates maximizing the quantum-classical gap."""
    config = config or SweepConfig()
    if cone.generator_count == 0:
        raise DomainError("Cone has no generators to optimize over")
    if cone.params is None and objective is None:
        raise DomainError("Cone carries no measurement angles")

    threads = config.threads or AppConfig().worker_count()
    runs = range(config.restarts)
    if threads > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=min(threads, config.restarts)) as pool:
            results = list(pool.map(lambda r: _single_run(cone, n, config, objective, config.rng_seed, r), runs))
    else:
        results = [_single_run(cone, n, config, objective, config.rng_seed, r) for r in runs]

    best_restart = max(range(len(results)), key=lambda r: (results[r][1], -r))
    x, value, trace, evaluator = results[best_restart]
    status = "ok"
    if not math.isfinite(value):
        status = "no_violation"
        candidates = [(res[3].best_beta_q, r) for r, res in enumerate(results) if res[3].best_beta_q_x is not None]
        if candidates:
            _, best_restart = min(candidates)
            evaluator = results[best_restart][3]
            x, trace = evaluator.best_beta_q_x, results[best_restart][2]
        logger.warning("No candidate produced a negative classical bound")

    coords = ConeCoordinates.from_vector(x, cone.ray_count)
    alpha = coords_to_alpha(coords, cone, check=False)
    member, margin = membership(alpha, cone.hyperplanes, tol=cone.tolerance * max(1.0, float(np.max(np.abs(alpha.values)))))
    if not member:
        raise ContractViolationError(f"Optimized coefficients left the cone (margin {margin:.3e})")
    gap_value = value if math.isfinite(value) else None
    logger.info(f"Best gap {gap_value} from restart {best_restart} of {config.restarts}")
    return SweepResult(coords, alpha, gap_value, trace, config.rng_seed, best_restart, status)


def _axis(values, resolution: int) -> np.ndarray:
    lo, hi = values
    return np.linspace(lo, hi, resolution)


def grid_scan(
    alpha: BellCoefficients,
    n: int,
    phi_range: tuple[float, float],
    theta_range: tuple[float, float],
    resolution: int | tuple[int, int],
) -> list[ScanRow]:
    """Gap over a (phi, theta) grid, phi outer."""
    res_phi, res_theta = (resolution, resolution) if isinstance(resolution, int) else resolution
    if res_phi < 2 or res_theta < 2:
        raise DomainError(f"Resolution must be at least 2 per axis, got {resolution}")
    bc, _ = beta_c(alpha, n)
    block = BlockSpec.symmetric(n)
    rows = []
    for phi in _axis(phi_range, res_phi):
        for theta in _axis(theta_range, res_theta):
            bq, _ = beta_q(build_block(alpha, MeasurementParams(phi, theta), block))
            ratio = bq / bc if bc < -1e-12 else None
            rows.append(ScanRow(float(phi), float(theta), bq, bc, ratio, ratio is not None and ratio > 1 + 1e-9))
    logger.info(f"Scanned {len(rows)} angle pairs; {sum(r.violation for r in rows)} violate")
    return rows


def scan_to_csv(rows: list[ScanRow], path: Optional[str | Path] = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(
            [
                format_sig(row.phi),
                format_sig(row.theta),
                format_sig(row.beta_q),
                format_sig(row.beta_c),
                format_sig(row.gap) if row.gap is not None else "nan",
                "true" if row.violation else "false",
            ]
        )
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _normal_profile(k, amplitude, mu, sigma):
    return amplitude * np.exp(-((k - mu) ** 2) / (2 * sigma))


def gaussian_fit(state: DickeState) -> GaussianFit:
    """Least-squares fit of phi_k^2 to A exp(-(k - mu)^2 / (2 sigma))."""
    k = np.arange(state.n + 1, dtype=float)
    probs = state.amplitudes**2
    mu0 = float(k @ probs)
    var0 = float(((k - mu0) ** 2) @ probs)
    p0 = [float(np.max(probs)), mu0, max(var0, SIGMA_FLOOR)]
    if np.count_nonzero(probs > 1e-12) <= 1:
        logger.warning(f"All weight sits on k={int(np.argmax(probs))}; width floored at sigma={SIGMA_FLOOR}")
        amplitude, mu = float(np.max(probs)), float(np.argmax(probs))
        rms = float(np.sqrt(np.mean((probs - _normal_profile(k, amplitude, mu, SIGMA_FLOOR)) ** 2)))
        return GaussianFit(GaussianProfile(mu, SIGMA_FLOOR, state.n), amplitude, rms, True)
    try:
        popt, _ = curve_fit(
            _normal_profile,
            k,
            probs,
            p0=p0,
            bounds=([0.0, -state.n, SIGMA_FLOOR], [np.inf, 2.0 * state.n, np.inf]),
        )
    except (RuntimeError, ValueError) as e:
        logger.warning(f"Gaussian fit did not converge ({e}); using moments")
        popt = np.array(p0)
    amplitude, mu, sigma = (float(v) for v in popt)
    floored = sigma <= SIGMA_FLOOR * (1 + 1e-9)
    if floored:
        logger.warning(f"Fitted width hit the floor sigma={SIGMA_FLOOR}")
    rms = float(np.sqrt(np.mean((probs - _normal_profile(k, amplitude, mu, sigma)) ** 2)))
    return GaussianFit(GaussianProfile(mu, sigma, state.n), amplitude, rms, floored)

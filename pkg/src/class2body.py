import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dicke_algebra import (
    BellCoefficients,
    MeasurementParams,
    block_specs,
    build_block,
    check_stoquastic,
    wrap_angle,
)
from utils.errors import DomainError, ResourceLimitError
from utils.logger import Logger

logger = Logger(__name__).get_logger()

CONDITION_C_TOL = 1e-10
CONDITION_A_TOL = 1e-12


@dataclass(frozen=True)
class ClassParams:
    """Integer parameters of the tangent two-body family."""

    x: int
    y: int
    mu: int
    sigma: int
    tau: int

    def __post_init__(self):
        if self.x < 1 or self.y < 1:
            raise DomainError(f"x and y must be positive, got x={self.x}, y={self.y}")
        if self.mu < 0:
            raise DomainError(f"mu must be nonnegative, got {self.mu}")
        if self.sigma not in (-1, 1) or self.tau not in (-1, 1):
            raise DomainError(f"sigma and tau must be +-1, got {self.sigma}, {self.tau}")

    def parity_ok(self, n: int) -> bool:
        partner = self.x if n % 2 == 0 else self.y
        return (self.mu + partner) % 2 == 1

    def check_parity(self, n: int) -> bool:
        ok = self.parity_ok(n)
        if not ok:
            partner = "x" if n % 2 == 0 else "y"
            logger.warning(
                f"mu={self.mu} and {partner} share parity for n={n}; "
                "the inequality may not be tight"
            )
        return ok

    def raw_coefficients(self) -> tuple[int, int, int, int, int]:
        """(alpha, beta, gamma, delta, epsilon) before the halving of gamma and epsilon."""
        alpha = self.x * (self.sigma * self.mu + self.tau * (self.x + self.y))
        beta = self.mu * self.y
        gamma = self.x**2
        delta = self.sigma * self.x * self.y
        epsilon = self.y**2
        return alpha, beta, gamma, delta, epsilon

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "mu": self.mu, "sigma": self.sigma, "tau": self.tau}


@dataclass(frozen=True)
class ClassConditionReport:
    A_prime: float
    C: float
    D: float
    condition_C_met: bool
    condition_A_met: bool
    per_block_stoquastic: list[tuple[float, bool]] = field(default_factory=list)
    parity_ok: Optional[bool] = None

    @property
    def conditions_met(self) -> bool:
        return self.condition_C_met and self.condition_A_met

    @property
    def all_blocks_stoquastic(self) -> bool:
        return bool(self.per_block_stoquastic) and all(ok for _, ok in self.per_block_stoquastic)

    def to_dict(self) -> dict:
        return {
            "A_prime": self.A_prime,
            "C": self.C,
            "D": self.D,
            "condition_C_met": self.condition_C_met,
            "condition_A_met": self.condition_A_met,
            "parity_ok": self.parity_ok,
            "per_block": [{"J": J, "stoquastic": ok} for J, ok in self.per_block_stoquastic],
            "all_blocks_stoquastic": self.all_blocks_stoquastic,
        }


def class_to_coeffs(p: ClassParams) -> BellCoefficients:
    alpha, beta, gamma, delta, epsilon = p.raw_coefficients()
    return BellCoefficients(2, np.array([alpha, beta, gamma / 2, delta, epsilon / 2], dtype=float))


def stoq_conditions(p: ClassParams, params: MeasurementParams) -> ClassConditionReport:
    alpha, beta, gamma, delta, epsilon = p.raw_coefficients()
    sp, cp = math.sin(params.phi), math.cos(params.phi)
    st, ct = math.sin(params.theta), math.cos(params.theta)
    a_prime = alpha * sp + beta * st
    c = gamma * sp**2 + 2 * delta * sp * st + epsilon * st**2
    d = gamma * cp * sp + delta * (cp * st + ct * sp) + epsilon * ct * st
    condition_c = abs(p.x * sp + p.sigma * p.y * st) <= CONDITION_C_TOL
    condition_a = p.x * p.tau * (p.x + p.y) * sp <= CONDITION_A_TOL
    return ClassConditionReport(a_prime, c, d, condition_c, condition_a)


def solve_theta(p: ClassParams, phi: float) -> list[float]:
    """Every theta in [-pi, pi) with x sin(phi) + sigma y sin(theta) = 0."""
    target = -p.x * math.sin(phi) / (p.sigma * p.y)
    if abs(target) > 1 + 1e-15:
        return []
    first = math.asin(max(-1.0, min(1.0, target)))
    roots = sorted({wrap_angle(first), wrap_angle(math.pi - first)})
    if len(roots) == 2 and abs(roots[1] - roots[0]) < 1e-14:
        roots = roots[:1]
    return roots


def verify_all_blocks(
    p: ClassParams, params: MeasurementParams, n: int, tol: float = 1e-10
) -> ClassConditionReport:
    if n > 16:
        raise ResourceLimitError(f"All-block verification is limited to n <= 16, got {n}")
    base = stoq_conditions(p, params)
    coeffs = class_to_coeffs(p)
    verdicts = []
    for block in block_specs(n):
        report = check_stoquastic(build_block(coeffs, params, block), tol)
        verdicts.append((block.J, report.stoquastic))
        if not report.stoquastic:
            logger.debug(f"Block J={block.J} not stoquastic: worst {report.worst_offender}")
    result = ClassConditionReport(
        base.A_prime,
        base.C,
        base.D,
        base.condition_C_met,
        base.condition_A_met,
        verdicts,
        p.check_parity(n),
    )
    if result.conditions_met and not result.all_blocks_stoquastic:
        logger.warning(f"Stoquasticity conditions hold for {p} but a block failed at tol={tol}")
    return result

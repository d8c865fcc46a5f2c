import math

import numpy as np
import pytest
from scipy.optimize import nnls

from dicke_algebra import BellCoefficients, BlockSpec, MeasurementParams, build_block, check_stoquastic
from stoq_cone import (
    ConeCoordinates,
    ConeDescription,
    analytic_three_body_lines,
    analytic_two_body,
    collapse_duplicates,
    coords_to_alpha,
    cone_description,
    hyperplane_matrix,
    lines,
    membership,
    ray_count_upper_bound,
    rays,
    reduce_irredundant,
    three_body_witness,
    two_body_hyperplanes,
    two_body_witness_points,
)
from utils.errors import ContractViolationError, DegenerateGeometryError, DomainError


def projector(rows: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(rows.T)
    return q @ q.T


def matched(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    return a.shape == b.shape and all(np.min(np.linalg.norm(b - row, axis=1)) <= tol for row in a)


def generic_angles(rng, count: int, floor: float = 0.2) -> list[MeasurementParams]:
    """Random angles kept away from the closed-form singularities."""
    found = []
    while len(found) < count:
        phi, theta = rng.uniform(-math.pi, math.pi, 2)
        sp, st = math.sin(phi), math.sin(theta)
        if min(abs(sp), abs(st)) <= floor:
            continue
        third_denominator = math.sin(theta + phi) + 4 * st**2 * math.cos(theta) / sp
        if min(abs(math.sin(phi - theta)), abs(math.cos(theta)), abs(third_denominator)) > floor:
            found.append(MeasurementParams(phi, theta))
    return found


def literal_two_body_generators(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Rays and lines of the two-body cone at (pi/6, 5pi/6) in closed form."""
    s = math.sqrt(3) * (n - 1)
    literal_rays = np.array([[-s, 0, 1, -1, 0], [-s, 0, -1, 1, 0], [0, 0, 0, -1, 0]], dtype=float)
    literal_lines = np.array([[-1, 1, 0, 0, 0], [0, 0, 1, -2, 1]], dtype=float)
    return literal_rays, literal_lines


class TestHyperplanes:
    def test_row_count_before_collapse(self, reference_params):
        h = hyperplane_matrix(10, 3, reference_params, collapse=False)
        assert h.count == 10 + 9 + 8
        assert h.dim == 9

    def test_two_body_irredundant_count(self, reference_params):
        for n in (10, 20):
            assert reduce_irredundant(hyperplane_matrix(n, 2, reference_params)).count == 3

    def test_collapse_is_idempotent(self, reference_params):
        h = hyperplane_matrix(10, 2, reference_params)
        assert collapse_duplicates(h).count == h.count

    def test_rejects_unsupported_order(self, reference_params):
        with pytest.raises(DomainError):
            hyperplane_matrix(10, 1, reference_params)

    def test_closed_form_rows_span_same_cone(self, reference_params):
        n = 10
        reduced = reduce_irredundant(hyperplane_matrix(n, 2, reference_params))
        closed = two_body_hyperplanes(n, reference_params)
        for row in closed.normalized_rows():
            assert np.min(np.linalg.norm(reduced.normalized_rows() - row, axis=1)) <= 1e-8

    def test_witness_points_violate_one_hyperplane_each(self, reference_params):
        n = 10
        rows = two_body_hyperplanes(n, reference_params).rows
        values = rows @ two_body_witness_points(n, reference_params).T
        assert np.all(np.diag(values) > 0)
        off = values[~np.eye(3, dtype=bool)]
        assert np.all(off <= 1e-9)


class TestTwoBodyCone:
    @pytest.mark.parametrize("n", [10, 20])
    def test_counts(self, n, reference_params):
        cone = cone_description(n, 2, reference_params)
        assert (cone.ray_count, cone.line_count) == (3, 2)
        assert cone.summary() == "3 rays, 2 lines"

    @pytest.mark.parametrize("n", [10, 20])
    def test_closed_form_matches_enumeration(self, n, reference_params):
        numeric = cone_description(n, 2, reference_params)
        closed = analytic_two_body(n, reference_params)
        assert matched(closed.rays, numeric.rays, 1e-8)
        assert np.allclose(projector(closed.lines), projector(numeric.lines), atol=1e-8)

    def test_reference_operator_is_member(self, reference_alpha, reference_params):
        cone = cone_description(10, 2, reference_params)
        member, margin = membership(reference_alpha, cone.hyperplanes)
        assert member
        assert margin <= 1e-9

    def test_positive_sx_is_not_member(self, reference_params):
        cone = cone_description(10, 2, reference_params)
        member, margin = membership(BellCoefficients(2, np.array([1.0, 0, 0, 0, 0])), cone.hyperplanes)
        assert not member
        assert margin > 0

    def test_methods_agree(self, reference_params):
        h = reduce_irredundant(hyperplane_matrix(10, 2, reference_params))
        assert np.allclose(rays(h, method="dd"), rays(h, method="combinatorial"), atol=1e-9)

    def test_degenerate_angles_raise_when_strict(self):
        params = MeasurementParams(math.pi / 6, math.pi / 6)
        with pytest.raises(DegenerateGeometryError):
            cone_description(8, 2, params)

    def test_degenerate_angles_flagged_when_lenient(self):
        params = MeasurementParams(math.pi / 6, math.pi / 6)
        cone = cone_description(8, 2, params, strict=False)
        assert cone.degenerate
        assert cone.line_count > 2

    @pytest.mark.parametrize("angles", [(0.0, 1.0), (1.0, 0.0)])
    def test_vanishing_sine_is_flagged(self, angles):
        assert cone_description(6, 2, MeasurementParams(*angles)).degenerate

    @pytest.mark.parametrize("n", [4, 10, 25])
    def test_closed_form_matches_enumeration_at_random_angles(self, n, rng):
        for params in generic_angles(rng, 20):
            numeric = cone_description(n, 2, params)
            closed = analytic_two_body(n, params)
            assert matched(closed.rays, numeric.rays, 1e-8), params
            assert np.allclose(projector(closed.lines), projector(numeric.lines), atol=1e-8), params

    @pytest.mark.parametrize("n", [10, 20])
    def test_literal_generators_at_reference_angles(self, n, reference_params):
        cone = cone_description(n, 2, reference_params)
        literal_rays, literal_lines = literal_two_body_generators(n)
        assert np.allclose(projector(literal_lines), projector(cone.lines), atol=1e-8)
        projected = literal_rays - literal_rays @ projector(cone.lines)
        projected /= np.linalg.norm(projected, axis=1, keepdims=True)
        assert matched(projected, cone.rays, 1e-8)

    @pytest.mark.parametrize("n, K", [(10, 2), (20, 2), (10, 3)])
    def test_rays_are_extreme(self, n, K, reference_params):
        cone = cone_description(n, K, reference_params)
        for i, ray in enumerate(cone.rays):
            others = np.vstack([np.delete(cone.rays, i, axis=0), cone.lines, -cone.lines])
            _, residual = nnls(others.T, ray)
            assert residual > 1e-6, i


class TestThreeBodyCone:
    @pytest.mark.parametrize("n, expected", [(10, 13), (20, 23), (30, 33)])
    def test_ray_counts(self, n, expected, reference_params):
        cone = cone_description(n, 3, reference_params)
        assert cone.ray_count == expected
        assert cone.line_count == 3

    def test_lines_match_closed_form(self, reference_params):
        cone = cone_description(10, 3, reference_params)
        closed = analytic_three_body_lines(reference_params)
        assert np.allclose(projector(cone.lines), projector(closed), atol=1e-8)

    def test_methods_agree(self, reference_params):
        h = reduce_irredundant(hyperplane_matrix(10, 3, reference_params))
        assert np.allclose(rays(h, method="dd"), rays(h, method="combinatorial"), atol=1e-8)

    def test_ray_count_below_upper_bound(self, reference_params):
        cone = cone_description(10, 3, reference_params)
        pointed_dim = cone.hyperplanes.dim - cone.line_count
        assert cone.ray_count <= ray_count_upper_bound(cone.hyperplanes.count, pointed_dim)

    def test_rays_respect_every_unreduced_row(self, reference_params):
        cone = cone_description(10, 3, reference_params)
        full = hyperplane_matrix(10, 3, reference_params, collapse=False)
        assert np.max(full.normalized_rows() @ cone.rays.T) <= 1e-9

    def test_every_ray_is_stoquastic(self, reference_params):
        cone = cone_description(10, 3, reference_params)
        block = BlockSpec.symmetric(10)
        for ray in cone.rays:
            report = check_stoquastic(build_block(BellCoefficients(3, ray), reference_params, block), tol=1e-8)
            assert report.stoquastic

    @pytest.mark.parametrize("params", [MeasurementParams(math.pi / 6, 5 * math.pi / 6), MeasurementParams(-1.0, 0.4)])
    def test_witness_is_member(self, params):
        witness = three_body_witness(10, params)
        member, _ = membership(witness, hyperplane_matrix(10, 3, params, collapse=False))
        assert member

    @pytest.mark.parametrize("n", [6, 11])
    def test_witness_is_member_at_random_angles(self, n, rng):
        for params in generic_angles(rng, 20):
            witness = three_body_witness(n, params)
            scale = max(1.0, float(np.max(np.abs(witness.values))))
            member, margin = membership(witness, hyperplane_matrix(n, 3, params, collapse=False), tol=1e-9 * scale)
            assert member, (params, margin)


class TestCoordinates:
    def test_line_moves_leave_bands_unchanged(self, rng, reference_params):
        for K in (2, 3):
            cone = cone_description(10, K, reference_params)
            block = BlockSpec.symmetric(10)
            for _ in range(50):
                coords = ConeCoordinates(rng.uniform(0, 1, cone.ray_count), rng.uniform(-1, 1, cone.line_count))
                base = coords_to_alpha(coords, cone)
                shift = rng.uniform(-1, 1, cone.line_count) @ cone.lines
                moved = BellCoefficients(K, base.values + shift)
                before = build_block(base, reference_params, block)
                after = build_block(moved, reference_params, block)
                for d in range(1, K + 1):
                    assert np.allclose(before.band(d), after.band(d), atol=1e-10)

    def test_literal_coordinates_reconstruct_reference_coefficients(self, reference_params):
        literal_rays, literal_lines = literal_two_body_generators(10)
        numeric = cone_description(10, 2, reference_params)
        cone = ConeDescription(numeric.hyperplanes, literal_rays, literal_lines, numeric.tolerance)
        coords = ConeCoordinates(np.array([6.95e-2, 7.11e-2, 1.24e-5]), np.array([1.71e-3, 5.50e-1]))
        alpha = coords_to_alpha(coords, cone)
        assert alpha.values == pytest.approx([-2.20, 0.00171, 0.548, -1.10, 0.550], abs=1e-2)
        assert membership(alpha, numeric.hyperplanes)[0]

    def test_negative_ray_weight_rejected(self, reference_params):
        cone = cone_description(10, 2, reference_params)
        coords = ConeCoordinates(np.array([1.0, -0.5, 0.0]), np.zeros(2))
        with pytest.raises(ContractViolationError):
            coords_to_alpha(coords, cone)

    def test_wrong_coordinate_count_rejected(self, reference_params):
        cone = cone_description(10, 2, reference_params)
        with pytest.raises(DomainError):
            coords_to_alpha(ConeCoordinates(np.ones(2), np.zeros(2)), cone)

    def test_serialized_cone_keeps_membership(self, rng, reference_params):
        cone = cone_description(10, 2, reference_params)
        restored = ConeDescription.from_dict(cone.to_dict())
        assert restored.summary() == cone.summary()
        for _ in range(20):
            alpha = BellCoefficients(2, rng.normal(size=5))
            assert membership(alpha, restored.hyperplanes)[0] == membership(alpha, cone.hyperplanes)[0]

    def test_malformed_cone_payload(self):
        with pytest.raises(DomainError):
            ConeDescription.from_dict({"n": 10})

    def test_lines_of_empty_system_span_everything(self, reference_params):
        h = hyperplane_matrix(10, 2, reference_params).subset([])
        assert lines(h).shape == (5, 5)

import math

import numpy as np
import pytest
from scipy import sparse

from dicke_algebra import (
    COEFF_COUNT,
    PAULI,
    SETTINGS,
    BellCoefficients,
    BlockSpec,
    MeasurementParams,
    SymmetricBlockMatrix,
    block_specs,
    brute_force_block,
    build_block,
    check_stoquastic,
    collective_pauli,
    embed_computational,
    gamma,
    measurement_matrix,
    measurement_operator_full,
    pi_measurement_band,
    pi_operator_block,
    pi_pauli_full,
    pi_pauli_product_element,
    rotation_residual,
    rotation_unitary,
    single_site_sum,
    spectrum_shift_check,
    stripped_band,
    x_weights,
    xi,
)
from utils.errors import DomainError, ResourceLimitError, UnsupportedOperatorError


def random_case(rng, n_max=7):
    K = int(rng.integers(1, 4))
    n = int(rng.integers(max(K, 2), n_max + 1))
    coeffs = BellCoefficients(K, rng.normal(size=COEFF_COUNT[K]))
    params = MeasurementParams(*rng.uniform(-math.pi, math.pi, size=2))
    return coeffs, params, n


class TestMeasurementParams:
    def test_angles_wrap_into_half_open_interval(self):
        params = MeasurementParams(3 * math.pi / 2, math.pi)
        assert params.phi == pytest.approx(-math.pi / 2)
        assert params.theta == pytest.approx(-math.pi)

    def test_from_degrees(self):
        params = MeasurementParams.from_degrees(30, 150)
        assert params.phi == pytest.approx(math.pi / 6)
        assert params.theta == pytest.approx(5 * math.pi / 6)

    def test_non_finite_angle_rejected(self):
        with pytest.raises(DomainError):
            MeasurementParams(float("nan"), 0.0)


class TestBlockSpec:
    def test_block_ladder_even(self):
        assert [b.two_j for b in block_specs(4)] == [0, 2, 4]

    def test_block_ladder_odd(self):
        assert [b.J for b in block_specs(5)] == [0.5, 1.5, 2.5]

    @pytest.mark.parametrize("n, two_j", [(4, 3), (4, 6), (5, 0)])
    def test_invalid_blocks(self, n, two_j):
        with pytest.raises(DomainError):
            BlockSpec(n, two_j)


class TestBellCoefficients:
    def test_order_inferred_from_length(self):
        assert BellCoefficients.from_values([1, 2, 3, 4, 5]).order == 2

    def test_wrong_length_rejected(self):
        with pytest.raises(DomainError):
            BellCoefficients(2, np.zeros(4))

    def test_padding_keeps_prefix(self):
        padded = BellCoefficients(1, np.array([1.0, -1.0])).padded(3)
        assert padded.values.tolist() == [1.0, -1.0, 0, 0, 0, 0, 0, 0, 0]


class TestScalarFunctions:
    def test_gamma_values(self):
        assert gamma(0, 1.0) == pytest.approx(math.sqrt(2))
        assert gamma(1, 1.5) == pytest.approx(2.0)
        assert gamma(9, 5.0) == pytest.approx(math.sqrt(10))

    def test_gamma_outside_range(self):
        with pytest.raises(DomainError):
            gamma(10, 5.0)

    def test_xi_values(self):
        assert xi(0, 5.0) == 10
        assert xi(10, 5.0) == -10

    def test_gamma_rejects_non_half_integer(self):
        with pytest.raises(DomainError):
            gamma(0, 0.3)


class TestCollectiveProducts:
    def test_sz_extreme(self):
        assert pi_pauli_product_element("Z", 0, 0, BlockSpec(10, 10)) == pytest.approx(10)

    def test_sx_first_entry(self):
        assert pi_pauli_product_element("X", 1, 0, BlockSpec(10, 10)) == pytest.approx(math.sqrt(10))

    def test_sy_is_hermitian(self):
        block = BlockSpec(6, 6)
        upper = pi_pauli_product_element("Y", 2, 3, block)
        lower = pi_pauli_product_element("Y", 3, 2, block)
        assert upper == pytest.approx(np.conj(lower))
        assert upper.imag != 0

    def test_sx_squared_diagonal(self):
        block = BlockSpec(6, 6)
        for k in range(7):
            expected = (gamma(k, 3.0) if k < 6 else 0.0) ** 2 + (gamma(k - 1, 3.0) if k > 0 else 0.0) ** 2
            assert pi_pauli_product_element("XX", k, k, block).real == pytest.approx(expected)

    def test_unsupported_label(self):
        with pytest.raises(UnsupportedOperatorError):
            pi_pauli_product_element("XXXX", 0, 0, BlockSpec(4, 4))


class TestMeasurementBands:
    def test_x_weights_two_body(self, reference_params):
        w = x_weights((0, 1), reference_params)
        assert w[1] == pytest.approx(math.sin(reference_params.phi + reference_params.theta))
        assert w[2] == pytest.approx(math.sin(reference_params.phi) * math.sin(reference_params.theta))

    def test_band_beyond_setting_size_is_zero(self, reference_params):
        assert pi_measurement_band((0,), 2, 0, BlockSpec(6, 6), reference_params) == 0.0

    def test_stripped_band_matches_scaled_entry(self, reference_params):
        block = BlockSpec(8, 8)
        for k in range(7):
            full = pi_measurement_band((0, 1), 1, k, block, reference_params)
            stripped = stripped_band((0, 1), 1, k, 8, reference_params)[0]
            assert full == pytest.approx(stripped * gamma(k, 4.0))

    def test_reference_operator_bands(self, reference_alpha, reference_params):
        n = 10
        block = build_block(reference_alpha, reference_params, BlockSpec.symmetric(n))
        expected = -np.array([gamma(k, n / 2) for k in range(n)])
        assert np.allclose(block.band(1), expected, atol=1e-12)
        assert np.allclose(block.band(2), 0.0, atol=1e-12)

    def test_sx_makes_positive_band(self):
        coeffs = BellCoefficients(2, np.array([1.0, 0, 0, 0, 0]))
        block = build_block(coeffs, MeasurementParams(math.pi / 2, 0.0), BlockSpec.symmetric(10))
        report = check_stoquastic(block)
        assert not report.stoquastic
        assert report.worst_offender[0] == 1


class TestBuildBlock:
    def test_agrees_with_full_space_projection(self, rng):
        worst = 0.0
        for _ in range(200):
            coeffs, params, n = random_case(rng)
            banded = build_block(coeffs, params, BlockSpec.symmetric(n)).to_dense()
            worst = max(worst, float(np.max(np.abs(banded - brute_force_block(coeffs, params, n)))))
        assert worst <= 1e-10

    def test_agrees_with_collective_identities(self, rng):
        for _ in range(40):
            coeffs, params, n = random_case(rng, n_max=9)
            for block in block_specs(n):
                expected = np.zeros((block.dim, block.dim), dtype=complex)
                for alpha, setting in zip(coeffs.values, SETTINGS):
                    ops = [measurement_matrix(s, params) for s in setting]
                    expected += alpha * pi_operator_block(ops, block)
                banded = build_block(coeffs, params, block).to_dense()
                assert np.allclose(banded, expected.real, atol=1e-9)
                assert np.max(np.abs(expected.imag)) < 1e-9

    def test_lower_block_equals_smaller_symmetric_block(self, rng):
        coeffs, params, _ = random_case(rng)
        coeffs = coeffs.padded(3)
        lower = build_block(coeffs, params, BlockSpec(9, 5)).to_dense()
        reference = build_block(coeffs, params, BlockSpec.symmetric(5)).to_dense()
        assert np.allclose(lower, reference, atol=1e-12)

    def test_bandwidth_tracks_order(self, reference_alpha, reference_params):
        assert build_block(reference_alpha, reference_params, BlockSpec.symmetric(6)).bandwidth == 2

    def test_banded_storage_round_trip(self, reference_alpha, reference_params):
        block = build_block(reference_alpha, reference_params, BlockSpec.symmetric(6))
        rebuilt = SymmetricBlockMatrix.from_dense(block.to_dense(), bandwidth=2)
        assert np.allclose(rebuilt.to_banded_lower(), block.to_banded_lower())


class TestFullSpace:
    def test_resource_limit(self, reference_alpha, reference_params):
        with pytest.raises(ResourceLimitError):
            brute_force_block(reference_alpha, reference_params, 9)

    def test_embedding_is_stoquastic(self, reference_alpha, reference_params):
        for n in (4, 5, 6):
            block = build_block(reference_alpha, reference_params, BlockSpec.symmetric(n))
            _, report = embed_computational(block, n)
            assert report.stoquastic
            assert report.worst_offender[2] <= 1e-12

    def test_embedding_rejects_positive_shift(self, reference_alpha, reference_params):
        block = build_block(reference_alpha, reference_params, BlockSpec.symmetric(4))
        with pytest.raises(DomainError):
            embed_computational(block, 4, shift=1.0)

    def test_embedding_rejects_lower_block(self, reference_alpha, reference_params):
        block = build_block(reference_alpha, reference_params, BlockSpec(4, 2))
        with pytest.raises(UnsupportedOperatorError):
            embed_computational(block, 4)

    def test_rotation_conjugates_measurements(self):
        params = MeasurementParams(0.3, -1.1)
        u = rotation_unitary(0.7)
        for s in (0, 1):
            rotated = u @ measurement_matrix(s, params) @ u.T
            assert np.allclose(rotated, measurement_matrix(s, params.shifted(0.7)))

    def test_spectrum_invariant_under_common_shift(self, rng):
        for _ in range(50):
            coeffs, params, n = random_case(rng, n_max=6)
            delta = float(rng.uniform(-math.pi, math.pi))
            assert spectrum_shift_check(coeffs, params, delta, n) <= 1e-8

    def test_rotation_residual_vanishes(self, reference_alpha, reference_params):
        assert rotation_residual(reference_alpha, reference_params, 0.4, 4) <= 1e-10


def same_operator(a, b) -> bool:
    return np.allclose(sparse.csr_matrix(a).toarray(), sparse.csr_matrix(b).toarray(), atol=1e-10)


class TestCollectiveIdentities:
    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_two_body_paulis(self, n):
        eye = sparse.identity(2**n, format="csr")
        sx, sy, sz = (collective_pauli(letter, n) for letter in "XYZ")
        assert same_operator(pi_pauli_full("ZZ", n), sz @ sz - n * eye)
        assert same_operator(pi_pauli_full("XX", n), sx @ sx - n * eye)
        # ZX = iY on a single site
        assert same_operator(pi_pauli_full("ZX", n), sz @ sx - 1j * sy)

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_three_body_paulis(self, n):
        sx, sy, sz = (collective_pauli(letter, n) for letter in "XYZ")
        assert same_operator(pi_pauli_full("ZZZ", n), sz @ sz @ sz - (3 * n - 2) * sz)
        assert same_operator(pi_pauli_full("ZZX", n), sz @ sz @ sx - (n + 2) * sx - 2j * sy @ sz)

    def test_collective_is_single_site_sum(self):
        for letter in "XYZ":
            assert same_operator(collective_pauli(letter, 4), single_site_sum(PAULI[letter], 4))

    @pytest.mark.parametrize("n", [3, 5])
    def test_measurement_expansions(self, n, reference_params):
        m0, m1 = (measurement_matrix(s, reference_params) for s in (0, 1))
        s0, s1 = single_site_sum(m0, n), single_site_sum(m1, n)
        eye = sparse.identity(2**n, format="csr")
        assert same_operator(measurement_operator_full((0,), reference_params, n), s0)
        assert same_operator(measurement_operator_full((0, 0), reference_params, n), s0 @ s0 - n * eye)
        assert same_operator(measurement_operator_full((0, 1), reference_params, n), s0 @ s1 - single_site_sum(m0 @ m1, n))
        assert same_operator(measurement_operator_full((0, 0, 0), reference_params, n), s0 @ s0 @ s0 - (3 * n - 2) * s0)

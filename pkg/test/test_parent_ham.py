import math

import numpy as np
import pytest

from bounds import beta_q
from dicke_algebra import PAULI, check_stoquastic
from parent_ham import (
    DickeState,
    GaussianProfile,
    PauliWeightTerm,
    gaussian_state,
    max_order,
    parent_hamiltonian,
    parent_hamiltonian_full,
    pauli_weight_decompose,
)
from utils.errors import (
    ContractViolationError,
    DomainError,
    NotPermutationInvariantError,
    ResourceLimitError,
)


def weights(terms):
    return {t.w: t.coefficient for t in terms}


class TestDickeState:
    def test_normalization_enforced(self):
        with pytest.raises(DomainError):
            DickeState(2, [1.0, 1.0, 0.0])

    def test_from_unnormalized(self):
        state = DickeState.from_unnormalized(2, [1.0, 1.0, 0.0])
        assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)

    def test_wrong_length(self):
        with pytest.raises(DomainError):
            DickeState(3, [1.0, 0.0])

    def test_ghz(self):
        state = DickeState.ghz(4)
        assert state.amplitudes[0] == pytest.approx(1 / math.sqrt(2))
        assert state.amplitudes[4] == pytest.approx(1 / math.sqrt(2))

    def test_amplitudes_are_read_only(self):
        with pytest.raises(ValueError):
            DickeState.uniform(3).amplitudes[0] = 0.0


class TestGaussianState:
    def test_profile(self):
        state = gaussian_state(GaussianProfile(5.0, 2.0, 10))
        amps = state.amplitudes
        assert int(np.argmax(amps)) == 5
        assert amps[6] / amps[5] == pytest.approx(math.exp(-1 / 8))

    def test_zero_width_rejected(self):
        with pytest.raises(DomainError):
            GaussianProfile(5.0, 0.0, 10)

    def test_far_tails_stay_finite(self):
        state = gaussian_state(GaussianProfile(0.0, 0.5, 200))
        assert np.all(np.isfinite(state.amplitudes))
        assert int(np.argmax(state.amplitudes)) == 0


class TestParentHamiltonian:
    @pytest.mark.parametrize(
        "state",
        [DickeState.ghz(6), DickeState.uniform(5), DickeState.basis(4, 2), gaussian_state(GaussianProfile(10, 3, 20))],
        ids=["ghz", "uniform", "basis", "gaussian"],
    )
    def test_exactly_stoquastic_with_target_ground_state(self, state):
        h = parent_hamiltonian(state)
        assert check_stoquastic(h, tol=0.0).stoquastic
        energy, ground = beta_q(h)
        assert energy == pytest.approx(0.0, abs=1e-10)
        assert abs(ground.amplitudes @ state.amplitudes) == pytest.approx(1.0, abs=1e-10)
        assert np.max(np.abs(h.to_dense() @ state.amplitudes)) < 1e-12

    def test_signed_state_rejected(self):
        with pytest.raises(ContractViolationError):
            parent_hamiltonian(DickeState(2, [0.6, -0.8, 0.0]))


class TestPauliDecomposition:
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_ghz_needs_full_weight(self, n):
        terms = pauli_weight_decompose(parent_hamiltonian_full(DickeState.ghz(n)))
        assert max_order(terms) == n
        assert any(t.K == n and abs(t.coefficient) > 1e-10 for t in terms)

    def test_basis_state_is_diagonal(self):
        terms = pauli_weight_decompose(parent_hamiltonian_full(DickeState.basis(2, 0)))
        assert weights(terms) == pytest.approx({(0, 0, 0): 0.75, (0, 0, 1): -0.25, (0, 0, 2): -0.25})
        assert all(t.w[0] == 0 and t.w[1] == 0 for t in terms)

    def test_terms_sorted_by_order(self):
        terms = pauli_weight_decompose(parent_hamiltonian_full(DickeState.uniform(3)))
        keys = [(t.K, t.w[0], t.w[1]) for t in terms]
        assert keys == sorted(keys)

    def test_block_input_embeds(self):
        terms = pauli_weight_decompose(parent_hamiltonian(DickeState.ghz(3)))
        assert max_order(terms) == 3

    def test_collective_field(self):
        z_sum = np.kron(PAULI["Z"], np.eye(2)) + np.kron(np.eye(2), PAULI["Z"])
        assert weights(pauli_weight_decompose(z_sum)) == pytest.approx({(0, 0, 1): 1.0})

    def test_single_site_field_rejected(self):
        with pytest.raises(NotPermutationInvariantError):
            pauli_weight_decompose(np.kron(PAULI["Z"], np.eye(2)))

    def test_non_power_of_two(self):
        with pytest.raises(DomainError):
            pauli_weight_decompose(np.eye(3))

    def test_resource_limit(self):
        with pytest.raises(ResourceLimitError):
            pauli_weight_decompose(parent_hamiltonian(DickeState.ghz(9)))

    def test_weight_term_validation(self):
        assert PauliWeightTerm((1, 1, 0), 0.5).K == 2
        with pytest.raises(DomainError):
            PauliWeightTerm((1, -1, 0), 0.5)

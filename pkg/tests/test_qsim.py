import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from qfin.qsim import (MAX_QUBITS, Gate, Statevector, apply_gate, apply_gates, apply_hadamard_all,
                       apply_matrix_batch, classical_fidelity, kl_divergence, new_zero_state,
                       probabilities, rotation_matrices, sample, total_variation)

import oracles

ANGLE = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def random_gate(rng, n):
    kinds = ["H", "RX", "RY", "RZ"] + (["CRX", "CRZ", "CZ", "CX"] if n > 1 else [])
    kind = kinds[rng.integers(len(kinds))]
    target = int(rng.integers(n))
    angle = float(rng.uniform(-np.pi, np.pi)) if kind in ("RX", "RY", "RZ", "CRX", "CRZ") else None
    control = None
    if kind.startswith("C"):
        control = int((target + 1 + rng.integers(n - 1)) % n)
    return Gate(kind, target, angle, control)


def random_state(rng, n, depth=20):
    state = apply_hadamard_all(new_zero_state(n))
    return apply_gates(state, [random_gate(rng, n) for _ in range(depth)])


def gate_oracle(n, gate):
    u = {"H": oracles.H, "CX": np.array([[0, 1], [1, 0]], dtype=complex),
         "CZ": np.diag([1, -1]).astype(complex)}.get(gate.kind)
    if u is None:
        u = oracles.rot(gate.kind.lstrip("C") if gate.kind != "CX" else "RX", gate.angle)
    if gate.control is None:
        return oracles.single(n, gate.target, u)
    return oracles.controlled(n, gate.control, gate.target, u)


class TestZeroState:
    def test_one_qubit(self):
        np.testing.assert_array_equal(new_zero_state(1).amplitudes, [1, 0])

    def test_three_qubits(self):
        s = new_zero_state(3)
        assert s.amplitudes.size == 8 and s.amplitudes[0] == 1 and np.all(s.amplitudes[1:] == 0)

    @pytest.mark.parametrize("n", [0, 17, -1])
    def test_size_bounds(self, n):
        with pytest.raises(ValueError):
            new_zero_state(n)

    def test_cap(self):
        assert new_zero_state(MAX_QUBITS).dim == 2 ** 16

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            Statevector(1, [1, 1])

    def test_immutable(self):
        s = new_zero_state(2)
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0


class TestApplyGate:
    def test_rx_pi_flips(self):
        out = apply_gate(new_zero_state(1), Gate("RX", 0, math.pi))
        np.testing.assert_allclose(probabilities(out), [0, 1], atol=1e-15)
        np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-15)

    @pytest.mark.parametrize("theta", [0.0, 0.3, math.pi, -2.0, 10.0])
    def test_rz_on_basis_state(self, theta):
        out = apply_gate(new_zero_state(1), Gate("RZ", 0, theta))
        np.testing.assert_allclose(probabilities(out), [1, 0], atol=1e-15)

    def test_h_involution(self):
        s = apply_gate(apply_gate(new_zero_state(1), Gate("H", 0)), Gate("H", 0))
        np.testing.assert_allclose(s.amplitudes, [1, 0], atol=1e-12)

    def test_input_unmodified(self):
        s = apply_hadamard_all(new_zero_state(2))
        before = s.amplitudes.copy()
        apply_gate(s, Gate("RX", 1, 0.7))
        np.testing.assert_array_equal(s.amplitudes, before)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            apply_gate(new_zero_state(2), Gate("RX", 2, 0.1))
        with pytest.raises(IndexError):
            apply_gate(new_zero_state(2), Gate("CX", 0, control=5))

    def test_gate_validation(self):
        with pytest.raises(ValueError):
            Gate("CX", 1, control=1)
        with pytest.raises(ValueError):
            Gate("RX", 0)
        with pytest.raises(ValueError):
            Gate("CRZ", 0, 0.1)

    def test_qubit_zero_is_lsb(self):
        out = apply_gate(new_zero_state(3), Gate("RX", 0, math.pi))
        assert np.argmax(probabilities(out)) == 1
        out = apply_gate(new_zero_state(3), Gate("RX", 2, math.pi))
        assert np.argmax(probabilities(out)) == 4

    def test_cx_truth_table(self):
        # |control=1, target=0> = index 1 (control is qubit 0) -> index 3
        s = apply_gate(new_zero_state(2), Gate("RX", 0, math.pi))
        out = apply_gate(s, Gate("CX", 1, control=0))
        np.testing.assert_allclose(probabilities(out), [0, 0, 0, 1], atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_matches_dense_oracle(self, n):
        rng = np.random.default_rng(n)
        for _ in range(25):
            state = random_state(rng, n, depth=5)
            gate = random_gate(rng, n)
            expected = gate_oracle(n, gate) @ state.amplitudes
            np.testing.assert_allclose(apply_gate(state, gate).amplitudes, expected, atol=1e-12)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    def test_norm_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        state = new_zero_state(n)
        for _ in range(30):
            state = apply_gate(state, random_gate(rng, n))
            assert abs(state.norm_squared() - 1) < 1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    def test_round_trip(self, n, seed):
        rng = np.random.default_rng(seed)
        state = random_state(rng, n, depth=8)
        gate = random_gate(rng, n)
        back = apply_gate(apply_gate(state, gate), gate.inverse())
        np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_single_qubit_gate_locality(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(20):
            state = random_state(rng, n)
            q = int(rng.integers(n))
            kind = ["H", "RX", "RY", "RZ"][rng.integers(4)]
            gate = Gate(kind, q, None if kind == "H" else float(rng.uniform(-3, 3)))
            before, after = probabilities(state), probabilities(apply_gate(state, gate))
            for other in range(n):
                if other == q:
                    continue
                marginal = lambda p: [sum(p[i] for i in range(2 ** n) if (i >> other) & 1 == b) for b in (0, 1)]
                np.testing.assert_allclose(marginal(after), marginal(before), atol=1e-12)

    def test_probabilities_sum_random_circuits(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            p = probabilities(random_state(rng, n))
            assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-10

    @settings(max_examples=40, deadline=None)
    @given(ANGLE)
    def test_parametrized_gates_unitary(self, theta):
        for kind in ("RX", "RY", "RZ", "CRX", "CRZ"):
            u = Gate(kind, 0, theta, control=1 if kind.startswith("C") else None).matrix()
            np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


def test_hadamard_all():
    np.testing.assert_allclose(probabilities(apply_hadamard_all(new_zero_state(2))), [0.25] * 4)
    np.testing.assert_allclose(probabilities(apply_hadamard_all(new_zero_state(3))), [1 / 8] * 8)
    twice = apply_hadamard_all(apply_hadamard_all(new_zero_state(3)))
    np.testing.assert_allclose(twice.amplitudes, new_zero_state(3).amplitudes, atol=1e-12)


def test_probabilities_modulus():
    s = Statevector(1, [1 / math.sqrt(2), -1j / math.sqrt(2)])
    np.testing.assert_allclose(probabilities(s), [0.5, 0.5])


def test_batched_application_matches_single():
    rng = np.random.default_rng(3)
    n = 3
    states = [random_state(rng, n) for _ in range(4)]
    amps = np.stack([s.amplitudes for s in states])
    for kind, control in (("RX", None), ("RY", None), ("RZ", None), ("CRX", 2), ("CRZ", 0)):
        angles = rng.uniform(-3, 3, 4)
        target = 1
        out = apply_matrix_batch(amps, n, rotation_matrices(kind, angles), target, control)
        for b in range(4):
            ref = apply_gate(states[b], Gate(kind, target, angles[b], control))
            np.testing.assert_allclose(out[b], ref.amplitudes, atol=1e-12)


class TestSample:
    def test_deterministic_state(self):
        assert sample(new_zero_state(1), 100, seed=1) == {0: 100}

    def test_binomial_bound(self):
        shots = 100_000
        counts = sample(apply_hadamard_all(new_zero_state(2)), shots, seed=123)
        sigma = math.sqrt(shots * 0.25 * 0.75)
        assert sum(counts.values()) == shots
        for i in range(4):
            assert abs(counts.get(i, 0) - 25_000) < 5 * sigma

    def test_reproducible(self):
        s = random_state(np.random.default_rng(5), 3)
        assert sample(s, 1000, 42) == sample(s, 1000, 42)

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            sample(new_zero_state(1), 0, seed=0)

    def test_chi_square_consistency(self):
        state = random_state(np.random.default_rng(11), 3)
        p = probabilities(state)
        shots = 100_000
        counts = sample(state, shots, seed=2024)
        observed = np.array([counts.get(i, 0) for i in range(8)])
        assert chisquare(observed, p * shots).pvalue > 0.001


class TestFidelityKl:
    def test_identical(self):
        assert classical_fidelity([0.5, 0.5], [0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        assert classical_fidelity([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        expected = (math.sqrt(0.25 * 0.75) * 2) ** 2
        assert expected == pytest.approx(0.75)
        assert classical_fidelity([0.25, 0.75], [0.75, 0.25]) == pytest.approx(0.75, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8), st.integers(0, 1000))
    def test_symmetric_bounded(self, raw, seed):
        p = np.array(raw) / np.sum(raw)
        q = np.random.default_rng(seed).dirichlet(np.ones(p.size))
        f = classical_fidelity(p, q)
        assert 0 <= f <= 1
        assert f == pytest.approx(classical_fidelity(q, p), abs=1e-12)
        assert classical_fidelity(p, p) == pytest.approx(1.0, abs=1e-10)

    def test_argument_errors(self):
        with pytest.raises(ValueError):
            classical_fidelity([0.5, 0.5], [1.0])
        with pytest.raises(ValueError):
            classical_fidelity([0.5, 0.6], [0.5, 0.5])
        with pytest.raises(ValueError):
            kl_divergence([1.0], [0.5, 0.5])

    def test_kl_identities(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-15)
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
        expected = 0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-12)
        assert expected == pytest.approx(13.1224, abs=1e-4)
        assert kl_divergence([0.5, 0.5], [1, 0], clamp=1e-12) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 10_000))
    def test_kl_nonnegative(self, dim, seed):
        rng = np.random.default_rng(seed)
        p, q = rng.dirichlet(np.ones(dim)), rng.dirichlet(np.ones(dim))
        assert kl_divergence(p, q) >= -1e-12

    def test_total_variation(self):
        assert total_variation([1, 0], [0, 1]) == 1.0
        assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0

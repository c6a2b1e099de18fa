"""Dense statevector simulator.

Qubit 0 is the least-significant bit of the basis index, so basis index
``i`` has qubit ``q`` in state ``(i >> q) & 1``.  Rotations follow
``R_P(theta) = exp(-i theta P / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

MAX_QUBITS = 16
NORM_TOL = 1e-10
PROB_TOL = 1e-8

_SQRT_HALF = 1.0 / np.sqrt(2.0)
H_MATRIX = np.array([[_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]], dtype=np.complex128)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Z_MATRIX = np.array([[1, 0], [0, -1]], dtype=np.complex128)

SINGLE_KINDS = frozenset({"H", "RX", "RY", "RZ"})
CONTROLLED_KINDS = frozenset({"CRX", "CRZ", "CZ", "CX"})
PARAMETRIZED_KINDS = frozenset({"RX", "RY", "RZ", "CRX", "CRZ"})


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=np.complex128)


@dataclass(frozen=True)
class Gate:
    """One- or two-qubit gate.  ``control`` is required for CRX/CRZ/CZ/CX."""

    kind: str
    target: int
    angle: Optional[float] = None
    control: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SINGLE_KINDS | CONTROLLED_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind in PARAMETRIZED_KINDS and self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")
        if self.kind in CONTROLLED_KINDS:
            if self.control is None:
                raise ValueError(f"{self.kind} needs a control qubit")
            if self.control == self.target:
                raise ValueError("control and target must differ")

    def matrix(self) -> np.ndarray:
        """2x2 action on the target (applied when the control, if any, is 1)."""
        kind = self.kind
        if kind == "H":
            return H_MATRIX
        if kind in ("RX", "CRX"):
            return rx(self.angle)
        if kind == "RY":
            return ry(self.angle)
        if kind in ("RZ", "CRZ"):
            return rz(self.angle)
        if kind == "CZ":
            return Z_MATRIX
        return X_MATRIX

    def inverse(self) -> "Gate":
        if self.angle is None:
            return self
        return Gate(self.kind, self.target, -self.angle, self.control)


@dataclass(frozen=True, eq=False)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_size(self.n_qubits)
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 2 ** self.n_qubits:
            raise ValueError(f"expected {2 ** self.n_qubits} amplitudes, got {amps.shape[0]}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def _check_size(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")


def _unchecked(n_qubits: int, amps: np.ndarray) -> Statevector:
    # Gate outputs are unitary images of valid states; skip re-validation cost.
    state = object.__new__(Statevector)
    amps.setflags(write=False)
    object.__setattr__(state, "n_qubits", n_qubits)
    object.__setattr__(state, "amplitudes", amps)
    return state


def new_zero_state(n_qubits: int) -> Statevector:
    _check_size(n_qubits)
    amps = np.zeros(2 ** n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return _unchecked(n_qubits, amps)


def _axis(n_qubits: int, qubit: int) -> int:
    # C-order reshape puts the most significant bit on axis 0.
    return n_qubits - 1 - qubit


def _check_qubit(n_qubits: int, qubit: int, role: str) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"{role} qubit {qubit} out of range for {n_qubits} qubits")


def apply_matrix(amps: np.ndarray, n_qubits: int, matrix: np.ndarray, target: int,
                 control: Optional[int] = None) -> np.ndarray:
    """Apply a 2x2 ``matrix`` on ``target`` (optionally controlled); returns a new array."""
    psi = amps.reshape((2,) * n_qubits)
    if control is None:
        out = np.tensordot(matrix, psi, axes=([1], [_axis(n_qubits, target)]))
        out = np.moveaxis(out, 0, _axis(n_qubits, target))
        return np.ascontiguousarray(out).reshape(-1)
    out = psi.copy()
    ac, at = _axis(n_qubits, control), _axis(n_qubits, target)
    view = np.moveaxis(out, (ac, at), (0, 1))
    view[1] = np.tensordot(matrix, view[1], axes=([1], [0]))
    return out.reshape(-1)


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    n = state.n_qubits
    _check_qubit(n, gate.target, "target")
    if gate.control is not None:
        _check_qubit(n, gate.control, "control")
    amps = apply_matrix(state.amplitudes, n, gate.matrix(), gate.target, gate.control)
    return _unchecked(n, amps)


def apply_gates(state: Statevector, gates: Iterable[Gate]) -> Statevector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def apply_hadamard_all(state: Statevector) -> Statevector:
    return apply_gates(state, (Gate("H", q) for q in range(state.n_qubits)))


def probabilities(state: Statevector) -> np.ndarray:
    amps = state.amplitudes
    return amps.real ** 2 + amps.imag ** 2


def sample(state: Statevector, shots: int, seed: int) -> dict[int, int]:
    """Draw ``shots`` basis-state measurements; same seed and state give the same counts."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = probabilities(state)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, p / p.sum())
    return {int(i): int(c) for i, c in enumerate(counts) if c}


def counts_to_probabilities(counts: Mapping[int, int], dim: int) -> np.ndarray:
    out = np.zeros(dim)
    for index, c in counts.items():
        out[index] += c
    return out / out.sum()


def _as_distribution(p: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D probability vector")
    if np.any(arr < -PROB_TOL):
        raise ValueError(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} sums to {arr.sum()!r}, not 1")
    return np.clip(arr, 0.0, None)


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p, q = _as_distribution(p, "p"), _as_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def classical_fidelity(p: Sequence[float], q: Sequence[float]) -> float:
    """Squared Bhattacharyya coefficient ``(sum_i sqrt(p_i q_i))^2``."""
    p, q = _pair(p, q)
    return float(min(1.0, np.sum(np.sqrt(p * q)) ** 2))


def kl_divergence(p: Sequence[float], q: Sequence[float], clamp: float = 1e-12) -> float:
    """``sum_i p_i ln(p_i / max(clamp, q_i))`` with ``0 ln 0 = 0``."""
    if clamp <= 0:
        raise ValueError("clamp must be positive")
    p, q = _pair(p, q)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(clamp, q[mask]))))


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    p, q = _pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def rotation_matrices(kind: str, angles: np.ndarray) -> np.ndarray:
    """Stack of 2x2 matrices, shape (B, 2, 2), for a rotation kind at each angle."""
    half = 0.5 * np.asarray(angles, dtype=float)
    c, s = np.cos(half), np.sin(half)
    out = np.zeros(half.shape + (2, 2), dtype=np.complex128)
    if kind in ("RX", "CRX"):
        out[..., 0, 0] = out[..., 1, 1] = c
        out[..., 0, 1] = out[..., 1, 0] = -1j * s
    elif kind == "RY":
        out[..., 0, 0] = out[..., 1, 1] = c
        out[..., 0, 1], out[..., 1, 0] = -s, s
    elif kind in ("RZ", "CRZ"):
        out[..., 0, 0] = c - 1j * s
        out[..., 1, 1] = c + 1j * s
    else:
        raise ValueError(f"{kind} is not a rotation")
    return out


def apply_matrix_batch(amps: np.ndarray, n_qubits: int, matrices: np.ndarray, target: int,
                       control: Optional[int] = None) -> np.ndarray:
    """Batched :func:`apply_matrix`: ``amps`` is (B, 2**n), ``matrices`` (B, 2, 2) or (2, 2)."""
    batch = amps.shape[0]
    if matrices.ndim == 2:
        matrices = np.broadcast_to(matrices, (batch, 2, 2))
    if control is None:
        psi = amps.reshape(batch, 2 ** (n_qubits - 1 - target), 2, 2 ** target)
        return np.einsum("bij,bhjl->bhil", matrices, psi).reshape(batch, -1)
    shape = (batch,) + (2,) * n_qubits
    ac, at = 1 + _axis(n_qubits, control), 1 + _axis(n_qubits, target)
    view = np.moveaxis(amps.reshape(shape), (ac, at), (1, 2))
    moved_shape = view.shape
    work = view.reshape(batch, 2, 2, -1).copy()
    work[:, 1] = np.einsum("bij,bjr->bir", matrices, work[:, 1])
    out = np.moveaxis(work.reshape(moved_shape), (1, 2), (ac, at))
    return np.ascontiguousarray(out).reshape(batch, -1)

"""Parametrized circuit families for the qGAN generator and the Born machine.

Generator layer layout (5n parameters, in order): RZ on every qubit, RX on
every qubit, RZ, RX, then a ring of CRX gates with control ``j`` and target
``(j + 1) % n``.  On a single qubit the ring is undefined; its parameter is
still reserved (so the count stays 5nL) but has no effect.

Born-machine layers alternate: odd layers (1st, 3rd, ...) apply the
per-qubit ``rotations`` template, even layers apply a ring of ``entangler``
gates.  Both families start from the uniform superposition ``H^n |0...0>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .qsim import (Gate, Statevector, apply_gates, apply_hadamard_all, apply_matrix_batch,
                   new_zero_state, probabilities, rotation_matrices)

GENERATOR_SUBLAYERS = ("RZ", "RX", "RZ", "RX")


def _ring(n_qubits: int) -> list[tuple[int, int]]:
    if n_qubits < 2:
        return []
    return [(j, (j + 1) % n_qubits) for j in range(n_qubits)]


def _bind(template, theta: np.ndarray) -> list[Gate]:
    return [Gate(kind, t, float(theta[i]), control=c) for kind, t, c, i in template]


def _check_theta(theta: Sequence[float], expected: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != expected:
        raise ValueError(f"expected {expected} parameters, got {theta.size}")
    return theta


@dataclass(frozen=True)
class GeneratorAnsatz:
    n_qubits: int
    n_layers: int = 1

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("n_qubits and n_layers must be positive")

    @property
    def n_params(self) -> int:
        return generator_param_count(self)

    def template(self) -> list[tuple[str, int, Optional[int], int]]:
        """Gate slots as (kind, target, control, parameter index)."""
        n = self.n_qubits
        out = []
        k = 0
        for _ in range(self.n_layers):
            for kind in GENERATOR_SUBLAYERS:
                out.extend((kind, q, None, k + q) for q in range(n))
                k += n
            out.extend(("CRX", t, c, k + c) for c, t in _ring(n))
            k += n
        return out

    def gates(self, theta: Sequence[float]) -> list[Gate]:
        return _bind(self.template(), _check_theta(theta, self.n_params))


def controlled_mask(ansatz) -> np.ndarray:
    """True for parameters that drive a controlled rotation."""
    mask = np.zeros(ansatz.n_params, dtype=bool)
    for _, _, control, index in ansatz.template():
        if control is not None:
            mask[index] = True
    return mask


def generator_param_count(ansatz: GeneratorAnsatz) -> int:
    return 5 * ansatz.n_qubits * ansatz.n_layers


def _run(n_qubits: int, gates: list[Gate]) -> Statevector:
    return apply_gates(apply_hadamard_all(new_zero_state(n_qubits)), gates)


def generator_state(ansatz: GeneratorAnsatz, theta: Sequence[float]) -> Statevector:
    return _run(ansatz.n_qubits, ansatz.gates(theta))


def generator_probs(ansatz: GeneratorAnsatz, theta: Sequence[float]) -> np.ndarray:
    return probabilities(generator_state(ansatz, theta))


@dataclass(frozen=True)
class QcbmAnsatz:
    n_qubits: int
    n_layers: int = 5
    rotations: tuple[str, ...] = ("RX", "RZ")
    entangler: str = "CRZ"

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("n_qubits and n_layers must be positive")
        if not self.rotations or any(k not in ("RX", "RY", "RZ") for k in self.rotations):
            raise ValueError(f"rotations must be drawn from RX/RY/RZ, got {self.rotations!r}")
        if self.entangler not in ("CRX", "CRZ"):
            raise ValueError(f"entangler must be CRX or CRZ, got {self.entangler!r}")

    def layer_param_counts(self) -> list[int]:
        n = self.n_qubits
        return [n * len(self.rotations) if layer % 2 == 0 else n for layer in range(self.n_layers)]

    @property
    def n_params(self) -> int:
        return sum(self.layer_param_counts())

    def template(self) -> list[tuple[str, int, Optional[int], int]]:
        n = self.n_qubits
        out = []
        k = 0
        for layer in range(self.n_layers):
            if layer % 2 == 0:
                for kind in self.rotations:
                    out.extend((kind, q, None, k + q) for q in range(n))
                    k += n
            else:
                out.extend((self.entangler, t, c, k + c) for c, t in _ring(n))
                k += n
        return out

    def gates(self, theta: Sequence[float]) -> list[Gate]:
        return _bind(self.template(), _check_theta(theta, self.n_params))


def qcbm_state(ansatz: QcbmAnsatz, theta: Sequence[float]) -> Statevector:
    return _run(ansatz.n_qubits, ansatz.gates(theta))


def qcbm_probs(ansatz: QcbmAnsatz, theta: Sequence[float]) -> np.ndarray:
    return probabilities(qcbm_state(ansatz, theta))


def batch_probs(ansatz, thetas) -> np.ndarray:
    """Output distributions for a stack of parameter vectors, shape (B, 2**n).

    Same circuit as ``ansatz.gates`` but every gate is applied to the whole
    batch at once.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != ansatz.n_params:
        raise ValueError(f"expected {ansatz.n_params} parameters, got {thetas.shape[1]}")
    n = ansatz.n_qubits
    amps = np.full((thetas.shape[0], 2 ** n), 2 ** (-n / 2), dtype=np.complex128)
    for kind, target, control, index in ansatz.template():
        amps = apply_matrix_batch(amps, n, rotation_matrices(kind, thetas[:, index]), target, control)
    return amps.real ** 2 + amps.imag ** 2

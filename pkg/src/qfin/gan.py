"""Hybrid qGAN: quantum generator, classical feed-forward discriminator.

In exact-expectation mode the generated side of both losses is the
p_theta-weighted expectation over every joint bin, and the discriminator
loss weights the real and generated halves equally:

    L_D = -1/2 [ E_real log D(x) + E_{p_theta} log(1 - D(x)) ]
    L_G = -E_{p_theta} log D(x)

The discriminator sees each joint bin as its per-feature bin indices
rescaled to [0, 1].
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ansatz import GeneratorAnsatz, batch_probs, controlled_mask, generator_probs, generator_state
from .data import Histogram, unpack_all
from .optim import AdamState, parameter_shift_batch, parameter_shift_gradient
from .qsim import classical_fidelity, kl_divergence, sample

LN2 = float(np.log(2.0))
LOG_FLOOR = 1e-12
# keeps saturated sigmoid outputs strictly inside (0, 1) in float64
_EDGE = np.finfo(float).eps / 2


def _sigmoid(z):
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), _EDGE, 1.0 - _EDGE)


def _safe_log(x):
    return np.log(np.maximum(x, LOG_FLOOR))


@dataclass(frozen=True)
class Discriminator:
    layer_sizes: tuple[int, ...] = (1, 50, 20, 1)
    leak: float = 0.2

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise ValueError("layer_sizes must start with the feature count and end with 1")

    @classmethod
    def for_features(cls, n_features: int, hidden: Sequence[int] = (50, 20), leak: float = 0.2):
        return cls((n_features, *hidden, 1), leak)

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        chunks = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out + fan_out))
        return np.concatenate(chunks)

    def unpack(self, phi: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        phi = np.asarray(phi, dtype=float)
        if phi.size != self.n_params:
            raise ValueError(f"expected {self.n_params} discriminator parameters, got {phi.size}")
        layers, k = [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = phi[k:k + fan_in * fan_out].reshape(fan_in, fan_out)
            k += fan_in * fan_out
            layers.append((w, phi[k:k + fan_out]))
            k += fan_out
        return layers

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return x

    def _forward(self, phi, x):
        acts, pre = [x], []
        h = x
        layers = self.unpack(phi)
        for i, (w, b) in enumerate(layers):
            z = h @ w + b
            pre.append(z)
            h = z if i == len(layers) - 1 else np.where(z > 0, z, self.leak * z)
            acts.append(h)
        return layers, acts, pre

    def logits(self, phi, x) -> np.ndarray:
        return self._forward(phi, self._check_x(x))[2][-1][:, 0]

    def forward(self, phi, x) -> np.ndarray:
        """D_phi(x) for a batch (N, F); returns shape (N,)."""
        return _sigmoid(self.logits(phi, x))

    def backward(self, phi, x, dlogits) -> np.ndarray:
        """Gradient w.r.t. phi of ``sum_i dlogits[i] * logit_i(x_i)``."""
        x = self._check_x(x)
        layers, acts, pre = self._forward(phi, x)
        delta = np.asarray(dlogits, dtype=float).reshape(-1, 1)
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            grads.append((acts[i].T @ delta).reshape(-1))
            grads.append(delta.sum(axis=0))
            if i:
                delta = (delta @ w.T) * np.where(pre[i - 1] > 0, 1.0, self.leak)
        # grads were collected last layer first as (dW, db) pairs
        pairs = [(grads[j], grads[j + 1]) for j in range(0, len(grads), 2)][::-1]
        return np.concatenate([np.concatenate([dw, db]) for dw, db in pairs])

    def output_gradient(self, phi, x) -> np.ndarray:
        """dD_phi(x)/dphi for a single input."""
        d = self.forward(phi, x)
        return self.backward(phi, x, d * (1 - d))


def discriminator_forward(disc: Discriminator, phi, x) -> np.ndarray:
    return disc.forward(phi, x)


def _weights(n: int, w) -> np.ndarray:
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float)
    return w / w.sum()


def discriminator_loss(disc: Discriminator, phi, real_x, gen_x,
                       real_weights=None, gen_weights=None) -> float:
    """Binary cross-entropy of real (label 1) vs generated (label 0).

    Without weights this is the pooled batch mean over |X| + |S| points.
    With weights each side is a weighted mean and the two halves count 1/2.
    """
    d_real = disc.forward(phi, real_x)
    d_gen = disc.forward(phi, gen_x)
    if real_weights is None and gen_weights is None:
        total = _safe_log(d_real).sum() + _safe_log(1 - d_gen).sum()
        return float(-total / (d_real.size + d_gen.size))
    wr, wg = _weights(d_real.size, real_weights), _weights(d_gen.size, gen_weights)
    return float(-0.5 * (wr @ _safe_log(d_real) + wg @ _safe_log(1 - d_gen)))


def discriminator_loss_gradient(disc: Discriminator, phi, real_x, gen_x,
                                real_weights=None, gen_weights=None) -> np.ndarray:
    real_x, gen_x = disc._check_x(real_x), disc._check_x(gen_x)
    if real_weights is None and gen_weights is None:
        n = real_x.shape[0] + gen_x.shape[0]
        wr = np.full(real_x.shape[0], 1.0 / n)
        wg = np.full(gen_x.shape[0], 1.0 / n)
    else:
        wr = 0.5 * _weights(real_x.shape[0], real_weights)
        wg = 0.5 * _weights(gen_x.shape[0], gen_weights)
    d_real, d_gen = disc.forward(phi, real_x), disc.forward(phi, gen_x)
    # d(-log D)/dz = D - 1, d(-log(1 - D))/dz = D
    return disc.backward(phi, real_x, wr * (d_real - 1)) + disc.backward(phi, gen_x, wg * d_gen)


def generator_loss_from(p_theta, d_values, saturating: bool = False) -> float:
    """Expectation of -log D over p_theta, or of log(1 - D) if ``saturating``."""
    p = np.asarray(p_theta, dtype=float)
    d = np.asarray(d_values, dtype=float)
    if saturating:
        return float(p @ _safe_log(1 - d))
    return float(-(p @ _safe_log(d)))


@dataclass
class GanConfig:
    batch_size: int = 1000
    epochs: int = 2000
    generator_lr: float = 0.01
    discriminator_lr: float = 0.02
    d_steps: int = 5
    seed: int = 0
    mode: str = "exact"
    saturating: bool = False
    init_range: float = 0.1

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.d_steps < 1:
            raise ValueError("batch_size and d_steps must be >= 1 and epochs >= 0")
        if self.generator_lr <= 0 or self.discriminator_lr <= 0:
            raise ValueError("learning rates must be positive")


class QGAN:
    """A generator ansatz and a discriminator sharing one joint-bin grid."""

    def __init__(self, ansatz: GeneratorAnsatz, disc: Discriminator, resolutions: Sequence[int]):
        resolutions = tuple(int(k) for k in resolutions)
        if sum(resolutions) != ansatz.n_qubits:
            raise ValueError(f"resolutions {resolutions} need {sum(resolutions)} qubits, "
                             f"ansatz has {ansatz.n_qubits}")
        if disc.n_features != len(resolutions):
            raise ValueError(f"discriminator takes {disc.n_features} features, data has {len(resolutions)}")
        self.ansatz = ansatz
        self.disc = disc
        self.resolutions = resolutions
        scale = np.array([2 ** k - 1 for k in resolutions], dtype=float)
        self.grid = unpack_all(resolutions) / scale
        self.controlled = controlled_mask(ansatz)

    @property
    def dim(self) -> int:
        return 2 ** self.ansatz.n_qubits

    def probs(self, theta) -> np.ndarray:
        return generator_probs(self.ansatz, theta)

    def d_grid(self, phi) -> np.ndarray:
        return self.disc.forward(phi, self.grid)

    def discriminator_loss(self, phi, real_weights, gen_weights) -> float:
        return discriminator_loss(self.disc, phi, self.grid, self.grid, real_weights, gen_weights)

    def discriminator_gradient(self, phi, real_weights, gen_weights) -> np.ndarray:
        return discriminator_loss_gradient(self.disc, phi, self.grid, self.grid, real_weights, gen_weights)

    def generator_loss(self, theta, phi, saturating: bool = False) -> float:
        return generator_loss_from(self.probs(theta), self.d_grid(phi), saturating)

    def generator_gradient(self, theta, phi, saturating: bool = False, probs_fn=None) -> np.ndarray:
        """dL_G/dtheta_j = -sum_i (dp_i/dtheta_j) log D(x_i), dp/dtheta by parameter shift."""
        if probs_fn is None:
            jac = parameter_shift_batch(lambda t: batch_probs(self.ansatz, t), theta, self.controlled)
        else:
            jac = parameter_shift_gradient(probs_fn, theta, self.controlled)
        d = self.d_grid(phi)
        weights = _safe_log(1 - d) if saturating else -_safe_log(d)
        return jac @ weights


@dataclass
class TrainingTrace:
    epoch: list[int] = field(default_factory=list)
    loss_d: list[float] = field(default_factory=list)
    loss_g: list[float] = field(default_factory=list)
    fidelity: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)
    initial_fidelity: float = float("nan")
    initial_kl: float = float("nan")
    theta: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.epoch)

    def append(self, epoch: int, loss_d: float, loss_g: float, fidelity: float, kl: float) -> None:
        self.epoch.append(epoch)
        self.loss_d.append(loss_d)
        self.loss_g.append(loss_g)
        self.fidelity.append(fidelity)
        self.kl.append(kl)

    def to_csv(self) -> str:
        lines = ["epoch,loss_d,loss_g,fidelity,kl"]
        for row in zip(self.epoch, self.loss_d, self.loss_g, self.fidelity, self.kl):
            lines.append(f"{row[0]}," + ",".join(repr(float(v)) for v in row[1:]))
        return "\n".join(lines) + "\n"


def _sampled_probs(ansatz: GeneratorAnsatz, shots: int, seed: int):
    calls = [0]

    def probs(theta):
        calls[0] += 1
        counts = sample(generator_state(ansatz, theta), shots, seed + calls[0])
        out = np.zeros(2 ** ansatz.n_qubits)
        for i, c in counts.items():
            out[i] = c
        return out / shots

    return probs


def qgan_train(config: GanConfig, target: Histogram, gen: GeneratorAnsatz,
               disc: Discriminator, resolutions: Optional[Sequence[int]] = None,
               theta0=None, phi0=None) -> TrainingTrace:
    """Alternate discriminator Adam steps on L_D with one generator Adam step on L_G."""
    target_p = np.asarray(target.probabilities, dtype=float)
    if target_p.size != 2 ** gen.n_qubits:
        raise ValueError(f"target has {target_p.size} bins, generator spans {2 ** gen.n_qubits}")
    model = QGAN(gen, disc, resolutions or (gen.n_qubits,))
    rng = np.random.default_rng(config.seed)
    theta = (rng.uniform(-config.init_range, config.init_range, gen.n_params)
             if theta0 is None else np.array(theta0, dtype=float))
    phi = disc.init_params(rng) if phi0 is None else np.array(phi0, dtype=float)
    adam_g = AdamState(learning_rate=config.generator_lr)
    adam_d = AdamState(learning_rate=config.discriminator_lr)

    trace = TrainingTrace(config=asdict(config))
    p = model.probs(theta)
    trace.initial_fidelity = classical_fidelity(p, target_p)
    trace.initial_kl = kl_divergence(p, target_p)

    for epoch in range(config.epochs):
        real_w = rng.multinomial(config.batch_size, target_p) / config.batch_size
        if config.mode == "sampled":
            probs_fn = _sampled_probs(gen, config.batch_size, int(rng.integers(2 ** 31)))
            gen_w = probs_fn(theta)
        else:
            probs_fn = None
            gen_w = model.probs(theta)
        for _ in range(config.d_steps):
            phi = adam_d.step(phi, model.discriminator_gradient(phi, real_w, gen_w))
        theta = adam_g.step(theta, model.generator_gradient(theta, phi, config.saturating, probs_fn))

        p = model.probs(theta)
        d = model.d_grid(phi)
        loss_d = float(-0.5 * (real_w @ _safe_log(d) + p @ _safe_log(1 - d)))
        loss_g = generator_loss_from(p, d)
        trace.append(epoch + 1, loss_d, loss_g, classical_fidelity(p, target_p),
                     kl_divergence(p, target_p))
    trace.theta, trace.phi = theta, phi
    return trace


def equilibrium_check(trace: TrainingTrace, window: int, tol: float) -> bool:
    """True iff the final-window means of both losses are within ``tol`` of ln 2."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(trace):
        raise ValueError(f"window {window} exceeds trace length {len(trace)}")
    mean_d = float(np.mean(trace.loss_d[-window:]))
    mean_g = float(np.mean(trace.loss_g[-window:]))
    return abs(mean_d - LN2) <= tol and abs(mean_g - LN2) <= tol

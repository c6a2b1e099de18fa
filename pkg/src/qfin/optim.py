"""Adam, SPSA, COBYLA and Nelder-Mead, plus the parameter-shift gradient.

Every derivative-free minimizer returns an :class:`OptimizerReport` whose
``cost_trace`` holds one entry per objective evaluation, in call order, so
equal-budget comparisons line up evaluation for evaluation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

Objective = Callable[[np.ndarray], float]

SHIFT = np.pi / 2


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stability: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0

    def step(self, params: Sequence[float], gradient: Sequence[float]) -> np.ndarray:
        """Bias-corrected Adam update; advances the moments in place."""
        params = np.asarray(params, dtype=float)
        gradient = np.asarray(gradient, dtype=float)
        if params.shape != gradient.shape:
            raise ValueError(f"shape mismatch: params {params.shape} vs gradient {gradient.shape}")
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        elif self.m.shape != params.shape:
            raise ValueError(f"state holds moments of shape {self.m.shape}, got {params.shape}")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * gradient
        self.v = self.beta2 * self.v + (1 - self.beta2) * gradient ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon_stability)


def adam_step(state: AdamState, params, gradient) -> tuple[np.ndarray, AdamState]:
    return state.step(params, gradient), state


# Controlled rotations have generator eigenvalues {0, +-1/2}; their exact
# rule needs shifts at +-pi/2 and +-3pi/2.
_C_NEAR = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C_FAR = (np.sqrt(2) - 1) / (4 * np.sqrt(2))


def _shift_plan(n: int, controlled) -> tuple[list[tuple[int, float, float]], np.ndarray]:
    """(param, shift, coefficient) terms; gradient_i = sum coeff * f(theta + shift e_i)."""
    mask = np.zeros(n, dtype=bool) if controlled is None else np.asarray(controlled, dtype=bool)
    if mask.size != n:
        raise ValueError(f"controlled mask has {mask.size} entries for {n} parameters")
    terms = []
    for i in range(n):
        if mask[i]:
            terms += [(i, SHIFT, _C_NEAR), (i, -SHIFT, -_C_NEAR),
                      (i, 3 * SHIFT, -_C_FAR), (i, -3 * SHIFT, _C_FAR)]
        else:
            terms += [(i, SHIFT, 0.5), (i, -SHIFT, -0.5)]
    return terms, mask


def parameter_shift_gradient(f: Callable[[np.ndarray], Any], theta: Sequence[float],
                             controlled=None) -> np.ndarray:
    """Exact gradient for rotation-generated parameters.

    Plain rotations use ``[f(theta + pi/2) - f(theta - pi/2)] / 2``.  Entries
    flagged in ``controlled`` (controlled rotations) use the four-term rule.
    ``f`` may return a scalar or an array; the result has shape
    ``(len(theta),) + shape(f(theta))``.
    """
    theta = np.asarray(theta, dtype=float)
    terms, _ = _shift_plan(theta.size, controlled)
    grad = None
    for i, shift, coeff in terms:
        shifted = theta.copy()
        shifted[i] += shift
        value = coeff * np.asarray(f(shifted), dtype=float)
        if grad is None:
            grad = np.zeros((theta.size,) + value.shape)
        grad[i] += value
    return grad


def parameter_shift_batch(f_batch: Callable[[np.ndarray], np.ndarray], theta: Sequence[float],
                          controlled=None) -> np.ndarray:
    """Vectorized :func:`parameter_shift_gradient`.

    ``f_batch`` maps a (B, P) stack of parameter vectors to (B, ...) outputs
    and is called once with every shifted point.
    """
    theta = np.asarray(theta, dtype=float)
    terms, _ = _shift_plan(theta.size, controlled)
    points = np.repeat(theta[None, :], len(terms), axis=0)
    for row, (i, shift, _) in enumerate(terms):
        points[row, i] += shift
    values = np.asarray(f_batch(points), dtype=float)
    grad = np.zeros((theta.size,) + values.shape[1:])
    for row, (i, _, coeff) in enumerate(terms):
        grad[i] += coeff * values[row]
    return grad


@dataclass
class OptimizerReport:
    method: str
    best_params: np.ndarray
    best_cost: float
    cost_trace: list[float]
    evaluations: int
    settings: dict = field(default_factory=dict)
    message: str = ""

    def running_best(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.cost_trace, dtype=float))


class BudgetExhausted(Exception):
    pass


class _Recorder:
    """Counts evaluations, keeps the best point, and enforces a hard budget."""

    def __init__(self, f: Objective, max_evals: Optional[int]):
        self.f = f
        self.max_evals = max_evals
        self.trace: list[float] = []
        self.best_cost = np.inf
        self.best_params: Optional[np.ndarray] = None

    def __call__(self, x) -> float:
        if self.max_evals is not None and len(self.trace) >= self.max_evals:
            raise BudgetExhausted
        x = np.array(x, dtype=float)
        cost = float(self.f(x))
        self.trace.append(cost)
        if cost < self.best_cost:
            self.best_cost, self.best_params = cost, x
        return cost

    def report(self, method: str, settings: dict, message: str = "") -> OptimizerReport:
        return OptimizerReport(method, self.best_params, float(self.best_cost), list(self.trace),
                               len(self.trace), settings, message)


@dataclass
class SpsaConfig:
    a0: float = 0.2
    c0: float = 0.1
    alpha: float = 0.602
    gamma: float = 0.101
    max_iters: int = 500
    seed: int = 0

    def gains(self, k: int) -> tuple[float, float]:
        return self.a0 / (k + 1) ** self.alpha, self.c0 / (k + 1) ** self.gamma


def spsa_minimize(f: Objective, theta0: Sequence[float], config: SpsaConfig = SpsaConfig(),
                  max_evals: Optional[int] = None) -> OptimizerReport:
    """Simultaneous-perturbation descent with seeded Rademacher directions.

    Uses ``1 + 2 * max_iters + 1`` evaluations: the start point, the two
    probes per iteration, and the final iterate.  ``max_evals`` caps the total.
    """
    if config.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(config.seed)
    rec = _Recorder(f, max_evals)
    theta = np.array(theta0, dtype=float)
    message = "max_iters reached"
    try:
        rec(theta)
        for k in range(config.max_iters):
            a_k, c_k = config.gains(k)
            delta = rng.choice((-1.0, 1.0), size=theta.size)
            diff = rec(theta + c_k * delta) - rec(theta - c_k * delta)
            theta = theta - a_k * diff / (2 * c_k) * delta
        rec(theta)
    except BudgetExhausted:
        message = "evaluation budget exhausted"
    return rec.report("spsa", asdict(config) | {"max_evals": max_evals}, message)


def cobyla_minimize(f: Objective, theta0: Sequence[float], rho_begin: float = 0.5,
                    rho_end: float = 1e-6, max_evals: int = 1000) -> OptimizerReport:
    """Powell's COBYLA (scipy) used without constraints."""
    if not rho_begin > rho_end > 0:
        raise ValueError("need rho_begin > rho_end > 0")
    rec = _Recorder(f, max_evals)
    try:
        res = minimize(rec, np.asarray(theta0, dtype=float), method="COBYLA",
                       options={"rhobeg": rho_begin, "tol": rho_end, "maxiter": max_evals})
        message = str(res.message)
    except BudgetExhausted:
        message = "evaluation budget exhausted"
    settings = {"rho_begin": rho_begin, "rho_end": rho_end, "max_evals": max_evals}
    return rec.report("cobyla", settings, message)


@dataclass
class NelderMeadConfig:
    initial_step: float = 0.1
    xatol: float = 1e-6
    fatol: float = 1e-8
    max_evals: int = 1000


def nelder_mead_minimize(f: Objective, theta0: Sequence[float],
                         config: NelderMeadConfig = NelderMeadConfig()) -> OptimizerReport:
    """Standard simplex (reflection 1, expansion 2, contraction 0.5, shrink 0.5) via scipy."""
    x0 = np.asarray(theta0, dtype=float).reshape(-1)
    if x0.size < 1:
        raise ValueError("dimension must be >= 1")
    simplex = np.vstack([x0, x0 + config.initial_step * np.eye(x0.size)])
    rec = _Recorder(f, config.max_evals)
    try:
        res = minimize(rec, x0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": config.xatol,
                                "fatol": config.fatol, "maxfev": config.max_evals,
                                "maxiter": 10 * config.max_evals, "adaptive": False})
        message = str(res.message)
    except BudgetExhausted:
        message = "evaluation budget exhausted"
    return rec.report("nelder-mead", asdict(config), message)

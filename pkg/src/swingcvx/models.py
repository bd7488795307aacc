"""Log-normal multi-factor forward-curve models.

The forward curve follows

    dF(t, T) / F(t, T) = sum_i vol_i * exp(-alpha_i (T - t)) dW^i_t

with equicorrelated Brownian drivers. The spot price is driven by the
Ornstein-Uhlenbeck factors X^i_t = int_0^t exp(-alpha_i (t - s)) dW^i_s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters."""


def _rho_bounds(q: int) -> tuple[float, float]:
    lower = -1.0 / (q - 1) if q > 1 else -1.0
    return lower, 1.0


def check_rho(rho: float, q: int) -> None:
    lower, upper = _rho_bounds(q)
    if not (lower < rho < upper):
        raise ModelError(f"rho={rho} outside the open interval ({lower:.6g}, {upper}) for q={q}")


def gamma_matrix(rho: float, q: int) -> np.ndarray:
    """Equicorrelation matrix with unit diagonal and ``rho`` off the diagonal."""
    if q < 2:
        raise ModelError("gamma_matrix needs q >= 2")
    check_rho(rho, q)
    return rho + (1.0 - rho) * np.eye(q)


def cholesky_explicit(rho: float, q: int) -> np.ndarray:
    """Closed-form lower Cholesky factor of ``gamma_matrix(rho, q)``.

    Column j below the diagonal is constant (``ell_j``), the diagonal is
    ``d_j``; with d_1 = 1, ell_1 = rho and for j >= 2

        d_j = sqrt(d_{j-1}^2 - ell_{j-1}^2),   ell_j = (rho - 1) / d_j + d_j.
    """
    if q < 2:
        raise ModelError("cholesky_explicit needs q >= 2")
    check_rho(rho, q)
    L = np.zeros((q, q))
    d, ell = 1.0, rho
    L[0, 0] = d
    L[1:, 0] = ell
    for j in range(1, q):
        d2 = d * d - ell * ell
        if d2 <= 0.0:
            raise ModelError(f"non-positive pivot {d2} at column {j + 1}; rho={rho} not admissible")
        d = np.sqrt(d2)
        ell = (rho - 1.0) / d + d
        L[j, j] = d
        L[j + 1:, j] = ell
    return L


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the q-factor log-normal forward model.

    ``initial_curve`` is either a positive scalar (flat curve) or a callable
    ``t -> F(0, t)``. alpha is in 1/years, vols in 1/sqrt(years).
    """

    mean_reversions: tuple[float, ...]
    vols: tuple[float, ...]
    rho: float = 0.0
    initial_curve: float | Callable[[float], float] = 20.0

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.atleast_1d(self.mean_reversions))
        vols = tuple(float(s) for s in np.atleast_1d(self.vols))
        object.__setattr__(self, "mean_reversions", alphas)
        object.__setattr__(self, "vols", vols)
        if len(alphas) == 0 or len(alphas) != len(vols):
            raise ModelError("mean_reversions and vols must be non-empty and of equal length")
        if any(a <= 0 for a in alphas):
            raise ModelError("all mean reversions must be > 0")
        if any(s < 0 for s in vols):
            raise ModelError("all vols must be >= 0")
        if len(alphas) > 1:
            check_rho(self.rho, len(alphas))
        if not callable(self.initial_curve) and not float(self.initial_curve) > 0:
            raise ModelError("initial forward price must be > 0")

    @property
    def factor_count(self) -> int:
        return len(self.mean_reversions)

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.mean_reversions)

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.vols)

    @property
    def flat_curve(self) -> bool:
        return not callable(self.initial_curve)

    def forward(self, t):
        """Initial forward price F(0, t); vectorised over t."""
        if callable(self.initial_curve):
            vals = np.vectorize(self.initial_curve, otypes=[float])(t)
            if np.any(vals <= 0):
                raise ModelError("initial curve must be positive")
            return vals
        return np.full(np.shape(t), float(self.initial_curve)) if np.ndim(t) else float(self.initial_curve)

    def correlation(self) -> np.ndarray:
        q = self.factor_count
        if q == 1:
            return np.ones((1, 1))
        return gamma_matrix(self.rho, q)

    def cholesky(self) -> np.ndarray:
        q = self.factor_count
        if q == 1:
            return np.ones((1, 1))
        return cholesky_explicit(self.rho, q)

    def with_curve(self, f0) -> "ModelSpec":
        return ModelSpec(self.mean_reversions, self.vols, self.rho, f0)


@dataclass(frozen=True)
class FactorState:
    time: float
    factors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "factors", np.atleast_1d(np.asarray(self.factors, dtype=float)))


def lambda_sq(t, model: ModelSpec):
    """Variance of <vol, X_t>, the log-spot compensator; vectorised over t."""
    t = np.asarray(t, dtype=float)
    a, s = model.alpha, model.sigma
    G = model.correlation()
    asum = a[:, None] + a[None, :]
    coef = G * np.outer(s, s) / asum
    decay = 1.0 - np.exp(-np.multiply.outer(t, asum))
    out = np.sum(coef * decay, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def spot_price(state: FactorState, model: ModelSpec):
    """S_t = F(0, t) * exp(<vol, X_t> - lambda_t^2 / 2).

    ``state.factors`` may carry leading path dimensions; the last axis is
    the factor axis.
    """
    x = np.asarray(state.factors, dtype=float)
    if x.shape[-1] != model.factor_count:
        raise ModelError(f"state dimension {x.shape[-1]} != factor count {model.factor_count}")
    expo = x @ model.sigma - 0.5 * lambda_sq(state.time, model)
    return model.forward(state.time) * np.exp(expo)


def factor_transition(model: ModelSpec, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step law of the OU factors over ``dt``.

    Returns the per-factor decay ``exp(-alpha dt)`` and the covariance of
    the Gaussian innovation.
    """
    a = model.alpha
    asum = a[:, None] + a[None, :]
    cov = model.correlation() * (1.0 - np.exp(-asum * dt)) / asum
    return np.exp(-a * dt), cov


@dataclass(frozen=True)
class VolField:
    """Matrix-valued volatility field ``(step, x) -> d x q``.

    ``structural_form`` is ``"row_diag_orthogonal"`` when ``structure(step)``
    returns ``(A, lambdas, O)`` with ``sigma(x) = A @ diag(lambdas(x)) @ O``,
    ``"scalar"`` for d = q = 1 fields, and ``"opaque"`` otherwise.
    """

    evaluate: Callable[[int, float], np.ndarray]
    shape: tuple[int, int]
    structural_form: str = "opaque"
    structure: Callable[[int], tuple] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.structural_form not in ("row_diag_orthogonal", "scalar", "opaque"):
            raise ValueError(f"unknown structural form {self.structural_form!r}")
        if self.structural_form == "row_diag_orthogonal" and self.structure is None:
            raise ValueError("row_diag_orthogonal fields need a structure callable")

    def __call__(self, step, x):
        return self.evaluate(step, x)


def scalar_field(func: Callable, name: str | None = None) -> VolField:
    """Wrap a time-homogeneous scalar function as a 1x1 VolField."""
    return VolField(lambda step, x: np.array([[float(func(x))]]), (1, 1), "scalar")


def uniform_times(maturity: float, n: int) -> np.ndarray:
    return maturity * np.arange(n + 1) / n


def vol_field_multifactor(model: ModelSpec, maturity: float, times: Sequence[float]) -> VolField:
    """Row field x -> (x sqrt(dt_k) vol_j exp(-alpha_j (T - t_k)))_j @ L(rho).

    One-step (ARCH) form: the sqrt(dt_k) scaling is inside the field.
    """
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    L = model.cholesky()
    a, s = model.alpha, model.sigma
    q = model.factor_count

    def row(k):
        return s * np.exp(-a * (maturity - times[k])) @ L

    def evaluate(k, x):
        return (float(x) * np.sqrt(dts[k]) * row(k))[None, :]

    def structure(k):
        lam_scale = np.sqrt(dts[k])
        return row(k)[None, :], (lambda x: np.full(q, float(x) * lam_scale)), np.eye(q)

    return VolField(evaluate, (1, q), "row_diag_orthogonal", structure)


def one_factor_price_vol(model: ModelSpec, maturity: float):
    """Per-sqrt(time) price volatility ``(t, x) -> vol * exp(-alpha (T - t)) * x``.

    The Euler step multiplies this by sqrt(h).
    """
    if model.factor_count != 1:
        raise ModelError("one-factor model required")
    a, s = model.alpha[0], model.sigma[0]

    def coef(t):
        return s * np.exp(-a * (maturity - np.asarray(t, dtype=float)))

    return coef

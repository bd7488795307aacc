"""Convex-order and matrix pre-order checks.

Sample-based verdicts carry a 3-standard-error margin inside the violation,
so they hold when the worst violation is <= 0. Deterministic verdicts use
an absolute tolerance scaled by the size of the objects compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .models import VolField

SE_MARGIN = 3.0


@dataclass(frozen=True)
class OrderVerdict:
    """``holds`` is None when the check cannot decide (opaque fields)."""

    holds: bool | None
    worst_violation: float
    witness: object
    tolerance: float
    detail: str = ""

    @property
    def status(self) -> str:
        if self.holds is None:
            return "indeterminate"
        return "holds" if self.holds else "fails"

    def __str__(self) -> str:
        return (f"{self.status}: worst violation {self.worst_violation:.3e} "
                f"(tolerance {self.tolerance:.3e}) at {self.witness}")


def _verdict(worst: float, witness, tol: float, detail: str = "") -> OrderVerdict:
    return OrderVerdict(bool(worst <= tol), float(worst), witness, float(tol), detail)


def psd_order(A, B, tol: float = 1e-12) -> OrderVerdict:
    """A <= B iff B B^T - A A^T is positive semidefinite.

    The smallest eigenvalue of the symmetrised difference is compared with
    ``-tol (1 + ||B B^T||)``; the witness is its eigenvector.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    BB = B @ B.T
    D = BB - A @ A.T
    D = 0.5 * (D + D.T)
    w, v = np.linalg.eigh(D)
    tol_eff = tol * (1.0 + np.linalg.norm(BB, 2))
    return _verdict(max(0.0, -w[0]), v[:, 0], tol_eff, f"min eigenvalue {w[0]:.6g}")


def _mean_se(fu: np.ndarray, fv: np.ndarray, paired: bool) -> tuple[float, float]:
    if paired:
        d = fu - fv
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(len(d)))
    se = np.sqrt(fu.var(ddof=1) / len(fu) + fv.var(ddof=1) / len(fv))
    return float(fu.mean() - fv.mean()), float(se)


def convex_order_1d(samples_u, samples_v, thresholds=None, mode: str = "cvx",
                    n_thresholds: int = 41) -> OrderVerdict:
    """Empirical U <= V in convex (cvx), increasing convex (icx) or decreasing convex (dcx) order.

    Uses the call potentials E(X - k)_+ (put potentials E(k - X)_+ for dcx)
    on a threshold grid spanning the pooled sample range; cvx also requires
    equal means. Each comparison is allowed 3 combined standard errors.
    """
    u = np.asarray(samples_u, dtype=float).ravel()
    v = np.asarray(samples_v, dtype=float).ravel()
    if u.size < 2 or v.size < 2:
        raise ValueError("need at least two samples on each side")
    if mode not in ("cvx", "icx", "dcx"):
        raise ValueError(f"unknown mode {mode!r}")
    paired = u.size == v.size and np.shares_memory(u, v)
    if thresholds is None:
        pooled = np.concatenate([u, v])
        thresholds = np.linspace(pooled.min(), pooled.max(), n_thresholds)
    thresholds = np.asarray(thresholds, dtype=float)
    worst, witness = 0.0, None
    if mode == "cvx":
        diff, se = _mean_se(u, v, paired)
        viol = abs(diff) - SE_MARGIN * se
        if viol > worst:
            worst, witness = viol, ("mean", diff)
    for k in thresholds:
        if mode == "dcx":
            fu, fv = np.maximum(k - u, 0.0), np.maximum(k - v, 0.0)
        else:
            fu, fv = np.maximum(u - k, 0.0), np.maximum(v - k, 0.0)
        diff, se = _mean_se(fu, fv, paired)
        viol = diff - SE_MARGIN * se
        if viol > worst:
            worst, witness = viol, ("threshold", float(k))
    return _verdict(worst, witness, 0.0, mode)


def sphere_directions(count: int, dim: int, seed: int = 0) -> np.ndarray:
    g = rng.substream(seed, rng.TESTS, 0)
    u = g.standard_normal((count, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def gaussian_convex_order_check(A, B, sample_size: int = 200_000, directions: int = 16,
                                thresholds: Sequence[float] = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
                                seed: int = 0) -> OrderVerdict:
    """Empirical A Z <= B Z in convex order over a finite convex test family.

    Family: the 1-, 2- and sup-norms and (<u, .> - k s_u)_+ for directions u
    on the sphere, where s_u is the pooled std of <u, .> and k runs over
    ``thresholds``. A Z and B Z use independent normal samples.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    d, q = A.shape
    zu = rng.substream(seed, rng.TESTS, 1).standard_normal((sample_size, q))
    zv = rng.substream(seed, rng.TESTS, 2).standard_normal((sample_size, q))
    U, V = zu @ A.T, zv @ B.T
    tests: list[tuple[object, Callable[[np.ndarray], np.ndarray]]] = [
        ("norm1", lambda X: np.abs(X).sum(axis=1)),
        ("norm2", lambda X: np.linalg.norm(X, axis=1)),
        ("norm_inf", lambda X: np.abs(X).max(axis=1)),
    ]
    for i, dirn in enumerate(sphere_directions(directions, d, seed)):
        pu, pv = U @ dirn, V @ dirn
        s = np.sqrt(0.5 * (pu.var() + pv.var()))
        for k in thresholds:
            tests.append(((i, float(k)), lambda X, dirn=dirn, c=k * s: np.maximum(X @ dirn - c, 0.0)))
    worst, witness = 0.0, None
    for name, f in tests:
        diff, se = _mean_se(f(U), f(V), False)
        viol = diff - SE_MARGIN * se
        if viol > worst:
            worst, witness = viol, name
    return _verdict(worst, witness, 0.0, f"{len(tests)} test functions")


# --- convexity of volatility fields -----------------------------------------


def chord_violation(f: Callable[[float], float], x_samples, lambda_samples) -> tuple[float, tuple | None]:
    """max over sample pairs x < y and weights t of f(t x + (1-t) y) - t f(x) - (1-t) f(y).

    Ties are resolved towards the narrowest chord.
    """
    xs = np.unique(np.asarray(x_samples, dtype=float))
    lams = np.asarray(lambda_samples, dtype=float)
    fx = np.array([f(x) for x in xs])
    i, j = np.triu_indices(len(xs), k=1)
    best, witness, best_span = -np.inf, None, np.inf
    for t in lams:
        mid = t * xs[i] + (1 - t) * xs[j]
        fm = np.array([f(z) for z in mid])
        viol = fm - t * fx[i] - (1 - t) * fx[j]
        span = xs[j] - xs[i]
        top = viol.max()
        scale_tol = 1e-12 * (1.0 + np.abs(fx).max())
        cand = np.flatnonzero(viol >= top - scale_tol)
        c = cand[np.argmin(span[cand])]
        if top > best + scale_tol or (abs(top - best) <= scale_tol and span[c] < best_span):
            best, best_span = float(top), float(span[c])
            witness = (float(xs[i[c]]), float(xs[j[c]]), float(t))
    return max(best, 0.0), witness


def check_matrix_field_convexity(field: VolField, x_samples, lambda_samples=None, tol: float = 1e-10,
                                 steps: Sequence[int] = (0,)) -> OrderVerdict:
    """Certify convexity of a matrix field with respect to the PSD pre-order.

    ``row_diag_orthogonal`` fields sigma = A diag(l_1..l_q) O are certified
    by convexity of each |l_i|; ``scalar`` fields by convexity of |sigma|;
    ``opaque`` fields give an indeterminate verdict.
    """
    if lambda_samples is None:
        lambda_samples = np.linspace(0.1, 0.9, 9)
    xs = np.asarray(x_samples, dtype=float)
    if field.structural_form == "opaque":
        return OrderVerdict(None, float("nan"), None, tol, "opaque field: no certificate")
    worst, witness, scale = 0.0, None, 0.0
    for step in steps:
        if field.structural_form == "scalar":
            comps = [lambda x, s=step: abs(float(np.asarray(field(s, x)).ravel()[0]))]
        else:
            _, lam, _ = field.structure(step)
            q = len(np.atleast_1d(lam(xs[0])))
            comps = [lambda x, i=i: abs(float(np.atleast_1d(lam(x))[i])) for i in range(q)]
        for ci, f in enumerate(comps):
            scale = max(scale, max(abs(f(x)) for x in xs))
            viol, wit = chord_violation(f, xs, lambda_samples)
            if viol > worst:
                worst, witness = viol, {"step": step, "component": ci, "chord": wit}
    return _verdict(worst, witness, tol * (1.0 + scale), field.structural_form)


# --- semi-convexity and drift monotonicity -----------------------------------


@dataclass(frozen=True)
class SemiConvexityReport:
    a_sigma: float
    grid: tuple[float, float, int]
    argmin: float


def _grid(x_min: float, x_max: float, points: int) -> np.ndarray:
    if points < 1000:
        raise ValueError("grid needs at least 1000 nodes")
    return np.linspace(x_min, x_max, points)


def estimate_semiconvexity(sigma: Callable, x_min: float = -3.0, x_max: float = 3.0,
                           points: int = 6001) -> SemiConvexityReport:
    """a = inf{a >= 0 : sigma^2 + a x^2 convex}, from centred second differences."""
    x = _grid(x_min, x_max, points)
    s = np.asarray(np.vectorize(sigma, otypes=[float])(x))
    if not np.all(np.isfinite(s)):
        raise ValueError("sigma is not finite on the grid")
    dx = x[1] - x[0]
    s2 = s * s
    d2 = (s2[2:] - 2 * s2[1:-1] + s2[:-2]) / dx ** 2
    i = int(np.argmin(d2))
    return SemiConvexityReport(max(0.0, -float(d2[i])) / 2.0, (x_min, x_max, points), float(x[i + 1]))


def drift_monotonicity_coefficient(beta: Callable, x_min: float = -3.0, x_max: float = 3.0,
                                   points: int = 6001) -> float:
    """c = inf{c >= 0 : beta(x) + c x non-decreasing}, from forward difference quotients."""
    x = _grid(x_min, x_max, points)
    b = np.asarray(np.vectorize(beta, otypes=[float])(x))
    if not np.all(np.isfinite(b)):
        raise ValueError("beta is not finite on the grid")
    return max(0.0, -float(np.min(np.diff(b) / np.diff(x))))


# --- Lipschitz chain bound ----------------------------------------------------


@dataclass(frozen=True)
class LipschitzBound:
    bound: float
    C_h: float
    powers: np.ndarray
    envelope: np.ndarray

    @property
    def envelope_holds(self) -> bool:
        return bool(np.all(self.powers <= self.envelope * (1 + 1e-14)))


def lipschitz_chain_bound(k: int, m: int, h: float, kappa_sup: float, sigma_lip: float,
                          payoff_lips: Sequence[float], penalty_lip: float) -> LipschitzBound:
    """sum_{i=k}^{n-1} C^{m i} [payoff_i] + C^{m n} [penalty], C = 1 + h (kappa_sup + sigma_lip^2 / 2).

    ``powers[i] = C^{m i}`` and ``envelope[i] = exp(t_i (kappa_sup + sigma_lip^2/2))``
    with t_i = i m h, for i = 0..n.
    """
    if not h > 0:
        raise ValueError("h must be > 0")
    n = len(payoff_lips)
    if not 0 <= k <= n:
        raise ValueError("k outside 0..n")
    c_rate = kappa_sup + 0.5 * sigma_lip ** 2
    C = 1.0 + h * c_rate
    i = np.arange(n + 1)
    powers = C ** (m * i)
    envelope = np.exp(i * m * h * c_rate)
    lips = np.asarray(payoff_lips, dtype=float)
    bound = float(np.sum(powers[k:n] * lips[k:]) + powers[n] * penalty_lip)
    return LipschitzBound(bound, C, powers, envelope)

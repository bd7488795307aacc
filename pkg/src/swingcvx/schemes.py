"""Euler schemes, truncated-noise Euler schemes and quadrature transitions.

The state is scalar and driven by ``noise_dim`` Brownian motions:

    dX_t = kappa(t) (X_t - zeta) dt + sigma(t, X_t) dW_t

The Euler step over ``h`` is ``x + h kappa (x - zeta) + sqrt(h) sigma(x) z``.
The truncated scheme replaces ``z`` by ``z 1{|z| <= s_h}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from . import rng
from ._kernels import euler_affine_paths, transition_matrix

MAX_TRUNCATION_LAMBDA = 1.0 / (2.0 + np.sqrt(2.0))
DEFAULT_TRUNCATION_LAMBDA = 0.25


class SchemeError(ValueError):
    """Invalid scheme configuration."""


class SimulationError(ArithmeticError):
    """A simulated state became non-finite."""

    def __init__(self, path: int, step: int):
        super().__init__(f"non-finite state at path {path}, sub-step {step}")
        self.path = path
        self.step = step


def _as_time_fn(v) -> Callable[[float], float]:
    if callable(v):
        return v
    c = float(v)
    return lambda t: c


@dataclass(frozen=True)
class Diffusion:
    """Scalar diffusion with linear drift and a row volatility.

    ``vol(t, x)`` maps an array of states of shape (P,) to (P,) when
    ``noise_dim == 1`` or to (P, q). ``affine_vol`` = (slope, intercept) as
    functions of t declares ``vol(t, x) = slope(t) x + intercept(t)`` and
    enables the compiled path kernel. ``sigma_lip`` and ``a_sigma`` feed the
    truncation threshold.
    """

    vol: Callable
    kappa: Callable[[float], float] | float = 0.0
    zeta: float = 0.0
    noise_dim: int = 1
    affine_vol: tuple[Callable, Callable] | None = None
    sigma_lip: float = 0.0
    a_sigma: float = 0.0
    kappa_sup: float | None = None

    def kappa_at(self, t: float) -> float:
        return float(_as_time_fn(self.kappa)(t))

    def vol_row(self, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        v = np.asarray(self.vol(t, x), dtype=float)
        return v.reshape(len(x), self.noise_dim)

    def vol_norm(self, t: float, x) -> np.ndarray:
        return np.linalg.norm(self.vol_row(t, x), axis=1)

    def drifted(self, t: float, x, h: float):
        return x + h * self.kappa_at(t) * (x - self.zeta)


def affine_diffusion(slope, intercept=0.0, kappa=0.0, zeta: float = 0.0,
                     sigma_lip: float | None = None, a_sigma: float = 0.0,
                     kappa_sup: float | None = None) -> Diffusion:
    """``sigma(t, x) = slope(t) x + intercept(t)`` with one noise.

    ``sigma_lip`` defaults to |slope(0)|, which is exact for constant slopes.
    """
    sl, ic = _as_time_fn(slope), _as_time_fn(intercept)
    lip = abs(float(sl(0.0))) if sigma_lip is None else float(sigma_lip)
    if kappa_sup is None and not callable(kappa):
        kappa_sup = abs(float(kappa))
    return Diffusion(vol=lambda t, x: sl(t) * x + ic(t), kappa=kappa, zeta=zeta, noise_dim=1,
                     affine_vol=(sl, ic), sigma_lip=lip, a_sigma=a_sigma, kappa_sup=kappa_sup)


def price_diffusion(model, maturity: float) -> Diffusion:
    """Driftless forward-price dynamics of a q-factor model with flat curve.

    ``sigma(t, x) = x (vol_j exp(-alpha_j (T - t)))_j L(rho)``; the Lipschitz
    constant is the row norm at t = T.
    """
    a, s = model.alpha, model.sigma
    L = model.cholesky()

    def row(t):
        return (s * np.exp(-a * (maturity - t))) @ L

    lip = float(np.linalg.norm(row(maturity)))
    if model.factor_count == 1:
        return affine_diffusion(lambda t: float(row(t)[0]), 0.0, sigma_lip=lip, kappa_sup=0.0)
    q = model.factor_count
    return Diffusion(vol=lambda t, x: np.outer(x, row(t)), noise_dim=q, sigma_lip=lip, kappa_sup=0.0)


def ou_factor_diffusion(alpha: float) -> Diffusion:
    """OU factor ``dX = -alpha X dt + dW`` (constant unit volatility)."""
    return affine_diffusion(0.0, 1.0, kappa=-float(alpha), sigma_lip=0.0, kappa_sup=float(alpha))


@dataclass(frozen=True)
class SchemeConfig:
    n: int
    maturity: float
    m: int = 1
    truncation_lambda: float | None = None
    seed: int = 0
    path_count: int = 10_000
    quad_nodes: int = 32

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise SchemeError("n and m must be positive integers")
        if not self.maturity > 0:
            raise SchemeError("maturity must be > 0")
        if self.path_count < 1:
            raise SchemeError("path_count must be positive")
        if self.quad_nodes < 8:
            raise SchemeError("quad_nodes must be >= 8")
        lam = self.truncation_lambda
        if lam is not None and not (0.0 < lam < MAX_TRUNCATION_LAMBDA):
            raise SchemeError(f"truncation_lambda={lam} outside (0, {MAX_TRUNCATION_LAMBDA:.7f})")

    @property
    def substeps(self) -> int:
        return self.m * self.n

    @property
    def h(self) -> float:
        return self.maturity / self.substeps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.maturity, self.substeps + 1)


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray
    m: int

    def __post_init__(self):
        self.states.setflags(write=False)
        self.times.setflags(write=False)

    def exercise_slice(self, k: int) -> int:
        return k * self.m

    def exercise_states(self) -> np.ndarray:
        """States at the exercise dates, shape (paths, n + 1, d)."""
        return self.states[:, ::self.m, :]


def euler_step(x, step: int, z, kappa, zeta: float, vol, h: float):
    """``x + h kappa (x - zeta) + sqrt(h) vol(step, x) z``.

    ``kappa`` is a scalar or a function of the step index; ``vol(step, x)``
    returns a d x q matrix.
    """
    x = np.asarray(x, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k = kappa(step) if callable(kappa) else float(kappa)
    s = np.atleast_2d(np.asarray(vol(step, x), dtype=float))
    out = x + h * k * (x - zeta) + np.sqrt(h) * (s @ z).reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def truncate_noise(z, s_h: float):
    """Zero the whole noise vector when its Euclidean norm exceeds ``s_h``.

    A trailing axis of length q is the noise dimension for arrays of
    vectors; scalars and 1-D inputs are treated as q = 1 draws.
    """
    if not s_h > 0:
        raise SchemeError("s_h must be > 0")
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return float(z) if abs(z) <= s_h else 0.0
    if z.ndim == 1:
        return np.where(np.abs(z) <= s_h, z, 0.0)
    keep = np.linalg.norm(z, axis=-1) <= s_h
    return z * keep[..., None]


def truncation_threshold(h: float, sigma_lip: float, a_sigma: float, lam: float) -> float:
    """``s_h = lam / sqrt(h (sigma_lip^2 + a_sigma))``."""
    if not h > 0:
        raise SchemeError("h must be > 0")
    if not (0.0 < lam < MAX_TRUNCATION_LAMBDA):
        raise SchemeError(f"lambda={lam} outside (0, {MAX_TRUNCATION_LAMBDA:.7f})")
    if sigma_lip < 0 or a_sigma < 0:
        raise SchemeError("sigma_lip and a_sigma must be >= 0")
    c = sigma_lip ** 2 + a_sigma
    if c == 0:
        raise SchemeError("constant volatility: no truncation threshold")
    return lam / np.sqrt(h * c)


def sub_step_normals(seed: int, paths: int, steps: int, q: int = 1) -> np.ndarray:
    """The normals ``simulate_paths`` uses, shape (paths, steps, q)."""
    return rng.normals(seed, rng.PATHS, paths, (steps, q))


def _simulate_block(diffusion: Diffusion, x0: np.ndarray, z: np.ndarray, times: np.ndarray,
                    h: float, s_h: float) -> np.ndarray:
    L = z.shape[1]
    if diffusion.affine_vol is not None and diffusion.noise_dim == 1:
        sl, ic = diffusion.affine_vol
        t = times[:L]
        kap = np.array([diffusion.kappa_at(ti) for ti in t])
        a = np.array([float(sl(ti)) for ti in t])
        b = np.array([float(ic(ti)) for ti in t])
        return euler_affine_paths(x0, kap, diffusion.zeta, a, b, z[:, :, 0], h, s_h)
    P = z.shape[0]
    out = np.empty((P, L + 1))
    out[:, 0] = x0
    x = x0.copy()
    sq = np.sqrt(h)
    for ell in range(L):
        zl = z[:, ell, :]
        if np.isfinite(s_h):
            zl = zl * (np.linalg.norm(zl, axis=1) <= s_h)[:, None]
        t = times[ell]
        x = diffusion.drifted(t, x, h) + sq * np.einsum("pq,pq->p", diffusion.vol_row(t, x), zl)
        out[:, ell + 1] = x
    return out


def simulate_paths(config: SchemeConfig, diffusion: Diffusion, x0, truncated: bool = False,
                   workers: int = 1) -> PathEnsemble:
    """Euler (or truncated Euler) paths on the grid ``l T / (m n)``.

    Path blocks of fixed size draw from their own counter-based substream,
    so the output does not depend on ``workers``.
    """
    P, L, q = config.path_count, config.substeps, diffusion.noise_dim
    times = config.times()
    h = config.h
    s_h = np.inf
    if truncated:
        lam = config.truncation_lambda
        if lam is None:
            raise SchemeError("truncated simulation needs truncation_lambda")
        s_h = truncation_threshold(h, diffusion.sigma_lip, diffusion.a_sigma, lam)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (P,)).copy()

    def run(b, s, e):
        z = rng.substream(config.seed, rng.PATHS, b).standard_normal((e - s, L, q))
        return _simulate_block(diffusion, x0[s:e], z, times, h, s_h)

    states = np.concatenate(rng.map_blocks(run, P, workers), axis=0)
    bad = ~np.isfinite(states)
    if bad.any():
        p, ell = np.argwhere(bad)[0]
        raise SimulationError(int(p), int(ell))
    return PathEnsemble(times, states[:, :, None], config.m)


def exact_ou_step(x, alpha: float, dt: float, z):
    """Exact OU transition ``exp(-alpha dt) x + sqrt((1 - exp(-2 alpha dt)) / (2 alpha)) z``."""
    if not (alpha > 0 and dt > 0):
        raise SchemeError("alpha and dt must be > 0")
    return np.exp(-alpha * dt) * x + np.sqrt(-np.expm1(-2.0 * alpha * dt) / (2.0 * alpha)) * z


# --- quadrature transitions -------------------------------------------------


@dataclass(frozen=True)
class UniformGrid:
    x_min: float
    x_max: float
    points: int

    def __post_init__(self):
        if self.points < 3 or not self.x_max > self.x_min:
            raise SchemeError("grid needs x_max > x_min and at least 3 points")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)


def gauss_hermite(node_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights for a standard normal expectation."""
    z, w = np.polynomial.hermite_e.hermegauss(node_count)
    return z, w / w.sum()


def truncated_gauss_rule(node_count: int, s_h: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``E g(Z 1{|Z| <= s_h})``: Gauss-Legendre on [-s_h, s_h] plus an atom at 0."""
    u, w = np.polynomial.legendre.leggauss(node_count)
    z = s_h * u
    wz = s_h * w * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    atom = 2.0 * ndtr(-s_h)
    return np.append(z, 0.0), np.append(wz, atom)


@dataclass(frozen=True)
class TransitionOperator:
    matrix: np.ndarray
    outside_mass: np.ndarray

    @property
    def extrapolated(self) -> bool:
        return bool(np.any(self.outside_mass > 0))

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f


def transition_operator(grid: UniformGrid, t: float, diffusion: Diffusion, h: float,
                        node_count: int = 32, s_h: float | None = None) -> TransitionOperator:
    """Matrix of ``f -> E f(x + h kappa (x - zeta) + sqrt(h) sigma(t, x) Z)`` on the grid.

    Values between nodes are linearly interpolated; beyond the grid the end
    segments are continued linearly. With ``s_h`` the noise is truncated.
    For a row volatility only its norm matters since ``sigma Z`` is scalar
    Gaussian.
    """
    x = grid.nodes
    z, w = gauss_hermite(node_count) if s_h is None else truncated_gauss_rule(node_count, s_h)
    centre = diffusion.drifted(t, x, h)
    scale = np.sqrt(h) * diffusion.vol_norm(t, x)
    targets = centre[:, None] + scale[:, None] * z[None, :]
    T, outside = transition_matrix(grid.x_min, grid.dx, targets, w)
    return TransitionOperator(T, outside)


def multi_step_operator(grid: UniformGrid, first_step: int, steps: int, diffusion: Diffusion,
                        h: float, node_count: int = 32, s_h: float | None = None) -> TransitionOperator:
    """Composition ``P_i o P_{i+1} o ... o P_{i+steps-1}`` as one matrix."""
    M = np.eye(grid.points)
    outside = np.zeros(grid.points)
    for ell in range(first_step, first_step + steps):
        op = transition_operator(grid, ell * h, diffusion, h, node_count, s_h)
        M = M @ op.matrix
        outside = np.maximum(outside, op.outside_mass)
    return TransitionOperator(M, outside)


@dataclass(frozen=True)
class QuadratureResult:
    values: np.ndarray
    outside_mass: float
    extrapolated: bool


def quadrature_transition(f, grid: UniformGrid, step_index: int, diffusion: Diffusion, h: float,
                          node_count: int = 32) -> QuadratureResult:
    """One Euler transition ``P_l f`` of grid values ``f`` by Gauss-Hermite quadrature."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.points,) or not np.all(np.isfinite(f)):
        raise SchemeError("f must be finite and sampled on the grid")
    if node_count < 8:
        raise SchemeError("node_count must be >= 8")
    op = transition_operator(grid, step_index * h, diffusion, h, node_count)
    return QuadratureResult(op.apply(f), float(op.outside_mass.max()), op.extrapolated)


# --- truncated scheme studies ------------------------------------------------


@dataclass(frozen=True)
class GapTable:
    """``gaps[i, j]``: max over exercise dates of ||X_trunc - X_plain||_u, for m_values[i], x_values[j]."""

    m_values: tuple[int, ...]
    x_values: np.ndarray
    gaps: np.ndarray
    thresholds: np.ndarray
    u: float

    @property
    def sup_gap(self) -> np.ndarray:
        return self.gaps.max(axis=1)

    @property
    def ratio(self) -> np.ndarray:
        return self.gaps / (1.0 + np.abs(self.x_values))[None, :]

    @property
    def linear_constants(self) -> np.ndarray:
        """c_m = max_x gap / (1 + |x|)."""
        return self.ratio.max(axis=1)


def truncated_plain_gap(diffusion: Diffusion, maturity: float, n: int, m_values, x_values,
                        u: float = 2.0, paths: int = 100_000, seed: int = 0,
                        lam: float = DEFAULT_TRUNCATION_LAMBDA, workers: int = 1) -> GapTable:
    """Coupled truncated vs plain Euler: same normals, one scheme truncated."""
    if u < 1:
        raise SchemeError("moment order u must be >= 1")
    x_values = np.asarray(x_values, dtype=float)
    m_values = tuple(int(m) for m in m_values)
    gaps = np.zeros((len(m_values), len(x_values)))
    thresholds = np.zeros(len(m_values))
    for i, m in enumerate(m_values):
        cfg = SchemeConfig(n=n, maturity=maturity, m=m, truncation_lambda=lam, seed=seed, path_count=paths)
        thresholds[i] = truncation_threshold(cfg.h, diffusion.sigma_lip, diffusion.a_sigma, lam)
        for j, x in enumerate(x_values):
            plain = simulate_paths(cfg, diffusion, x, False, workers).exercise_states()[:, :, 0]
            trunc = simulate_paths(cfg, diffusion, x, True, workers).exercise_states()[:, :, 0]
            norms = np.mean(np.abs(trunc - plain) ** u, axis=0) ** (1.0 / u)
            gaps[i, j] = norms.max()
    return GapTable(m_values, x_values, gaps, thresholds, u)


def truncated_stein_residual(fprime: Callable, fsecond: Callable, x: float, h: float, sigma_x: float,
                             s_h: float, kappa: float = 0.0, zeta: float = 0.0,
                             nodes: int = 256) -> tuple[float, float, float]:
    """Both sides of the truncated Gaussian integration-by-parts identity.

    lhs = int_{-s}^{s} f'(E(x, z)) z phi(z) dz
    rhs = int_{-s}^{s} f''(E(x, z)) sqrt(h) sigma(x) (phi(z) - phi(s)) dz
    where E(x, z) = x + h kappa (x - zeta) + sqrt(h) sigma(x) z.
    Returns (lhs, rhs, |lhs - rhs|).
    """
    u, w = np.polynomial.legendre.leggauss(nodes)
    z = s_h * u
    w = s_h * w
    phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    phi_s = np.exp(-0.5 * s_h * s_h) / np.sqrt(2.0 * np.pi)
    vol = np.sqrt(h) * sigma_x
    y = x + h * kappa * (x - zeta) + vol * z
    lhs = float(np.sum(w * fprime(y) * z * phi))
    rhs = float(np.sum(w * fsecond(y) * vol * (phi - phi_s)))
    return lhs, rhs, abs(lhs - rhs)


def euler_min_slope(diffusion: Diffusion, t: float, h: float, z_values, x_values,
                    s_h: float | None = None, dx: float = 1e-6) -> float:
    """Smallest finite-difference slope of x -> E(x, z~) over the sampled (x, z)."""
    x = np.asarray(x_values, dtype=float)
    zs = np.asarray(z_values, dtype=float)
    if s_h is not None:
        zs = truncate_noise(zs, s_h)
    sq = np.sqrt(h)
    worst = np.inf
    for z in zs:
        def step(y):
            return diffusion.drifted(t, y, h) + sq * diffusion.vol_row(t, y)[:, 0] * z
        worst = min(worst, float(np.min((step(x + dx) - step(x - dx)) / (2 * dx))))
    return worst

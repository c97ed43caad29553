"""Model builders for the worked examples, wired to their structured fast paths.

* Probit regression: the joint Gaussian over (coefficients, latent signs)
  has a block precision whose covariance factor applies in O(N p) through
  the stored regressor matrix, instead of O((N+p)^2).
* Brownian bridge: pinned random walk with a tridiagonal precision, banded
  factor, O(T) applies, and a sub-barrier constraint per step.
* Quantized Gaussian process: stationary kernel on a uniform grid gives a
  Toeplitz covariance, so velocity draws cost O(N log N) via the circulant
  embedding; per-point quantization intervals become box constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import LinearConstraint
from .engine import TmgModel
from .errors import DegeneratePrior, DimensionMismatch
from .linalg import CholeskyFactor, GaussianSpec

__all__ = [
    "ProbitData",
    "BridgeSpec",
    "QuantizedGpData",
    "build_probit",
    "build_bridge",
    "build_quantized_gp",
    "squared_exp_row",
    "synthetic_probit_data",
    "synthetic_quantized_gp_data",
]


# -- probit ------------------------------------------------------------------


@dataclass(frozen=True)
class ProbitData:
    """Binary labels (+-1) with their regressor rows and the prior variance."""

    labels: np.ndarray
    regressors: np.ndarray
    prior_variance: float = 1.0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float).ravel()
        regressors = np.atleast_2d(np.asarray(self.regressors, dtype=float))
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        if not np.all(np.isfinite(regressors)):
            raise ValueError("regressors must be finite")
        if regressors.shape[0] != labels.size:
            raise DimensionMismatch("one regressor row per label required")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "regressors", regressors)

    @property
    def n_obs(self):
        return self.labels.size

    @property
    def n_coef(self):
        return self.regressors.shape[1]


class ProbitFactor(CholeskyFactor):
    """Composite whitening factor for the probit joint Gaussian.

    With B the p x N matrix of regressor columns and s the prior standard
    deviation, the covariance factors as Z^T Z with

        Z^T = [[I_p, 0], [-B^T, I_N]] [[s I_p, 0], [0, I_N]],

    so every apply touches the regressors once: O(N p), never O((N+p)^2).
    """

    structure = "probit"

    def __init__(self, regressors, prior_variance):
        self._z = np.asarray(regressors, dtype=float)  # N x p, rows are z_i
        self._sigma = math.sqrt(prior_variance)
        self._p = self._z.shape[1]
        n_total = self._z.shape[0] + self._p
        super().__init__(n_total, np.zeros(n_total))

    def _split(self, x):
        return x[: self._p], x[self._p:]

    def unwhiten_apply(self, y):
        y = self._check(y)
        top, bottom = self._split(y)
        return np.concatenate(
            [self._sigma * top, bottom - self._sigma * (self._z @ top)]
        )

    def whiten_apply(self, x):
        x = self._check(x)
        top, bottom = self._split(x)
        return np.concatenate([top / self._sigma, bottom + self._z @ top])

    def normal_transform(self, f):
        f = self._check(f)
        top, bottom = self._split(f)
        return np.concatenate(
            [self._sigma * (top - self._z.T @ bottom), bottom]
        )

    def cov_apply(self, v):
        return self.unwhiten_apply(self.normal_transform(v))

    def prec_apply(self, v):
        v = self._check(v)
        top, bottom = self._split(v)
        zb = self._z.T @ bottom
        zt = self._z @ top
        return np.concatenate(
            [top / self._sigma**2 + self._z.T @ zt + zb, zt + bottom]
        )


def probit_precision(data):
    """The dense block precision of the joint (coefficients, latents)."""
    p, n = data.n_coef, data.n_obs
    b = data.regressors.T  # p x N
    m = np.zeros((p + n, p + n))
    m[:p, :p] = np.eye(p) / data.prior_variance + b @ b.T
    m[:p, p:] = b
    m[p:, :p] = b.T
    m[p:, p:] = np.eye(n)
    return m


def build_probit(data):
    """Joint TMG over (coefficients, latent variables) for probit regression.

    The latent signs must match the labels, giving one single-coordinate
    linear constraint per observation. Runs in the canonical frame; all
    per-sample factor work goes through :class:`ProbitFactor`.
    """
    if not math.isfinite(data.prior_variance):
        raise DegeneratePrior(
            "a flat prior leaves the coefficient directions unconstrained; "
            "the joint precision would be singular"
        )
    if data.prior_variance <= 0:
        raise ValueError("prior variance must be positive")
    p, n = data.n_coef, data.n_obs
    spec = GaussianSpec(probit_precision(data), form="precision")
    constraints = []
    for i in range(n):
        f = np.zeros(p + n)
        f[p + i] = data.labels[i]
        constraints.append(LinearConstraint(f=f, g=0.0))
    names = tuple(f"beta{j + 1}" for j in range(p)) + tuple(
        f"w{i + 1}" for i in range(n)
    )
    return TmgModel(
        gaussian=spec,
        constraints=tuple(constraints),
        frame="canonical",
        factor=ProbitFactor(data.regressors, data.prior_variance),
        names=names,
    )


def probit_feasible_init(data):
    """Zero coefficients with latents on the observed side of each wall."""
    return np.concatenate([np.zeros(data.n_coef), data.labels.astype(float)])


def synthetic_probit_data(n_obs, coefficients=(-9.0, 20.0, 27.0), prior_variance=1.0,
                          seed=0):
    """Three-regressor design: intercept, uniform, and Gaussian regressors."""
    rng = np.random.default_rng(seed)
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.size != 3:
        raise ValueError("this generator uses exactly three regressors")
    z = np.column_stack(
        [
            np.ones(n_obs),
            rng.uniform(-5.0, 5.0, size=n_obs),
            rng.normal(-4.0, 4.0, size=n_obs),
        ]
    )
    latent = -z @ coefficients + rng.standard_normal(n_obs)
    labels = np.where(latent >= 0, 1.0, -1.0)
    return ProbitData(labels=labels, regressors=z, prior_variance=prior_variance)


# -- Brownian bridge -----------------------------------------------------------


@dataclass(frozen=True)
class BridgeSpec:
    """Random walk pinned at both ends, constrained under a barrier."""

    start: float
    barrier: float
    steps: int
    noise_var: float = 1.0

    def __post_init__(self):
        if self.start > self.barrier:
            raise ValueError("start must not exceed the barrier")
        if self.steps < 2:
            raise ValueError("need at least two steps")
        if self.noise_var <= 0:
            raise ValueError("noise variance must be positive")


def build_bridge(spec):
    """(T-1)-dimensional TMG for the interior path of a pinned walk.

    The precision is tridiagonal (diagonal 2, off-diagonal -1, scaled by the
    inverse noise variance), so the banded factor is bidiagonal and applies
    in O(T). Each interior point carries a barrier constraint; the endpoint
    values enter only through the linear term.
    """
    d = spec.steps - 1
    m = (2.0 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1)) / spec.noise_var
    r = np.zeros(d)
    r[0] += spec.start / spec.noise_var
    r[-1] += spec.barrier / spec.noise_var
    gaussian = GaussianSpec(
        m, form="precision", linear_term=r, structure="banded", bandwidth=1
    )
    constraints = []
    for t in range(d):
        f = np.zeros(d)
        f[t] = -1.0
        constraints.append(LinearConstraint(f=f, g=spec.barrier))
    names = tuple(f"V{t + 1}" for t in range(d))
    return TmgModel(
        gaussian=gaussian,
        constraints=tuple(constraints),
        frame="canonical",
        names=names,
    )


def bridge_feasible_init(spec):
    """The straight line from start to barrier, strictly below the barrier."""
    d = spec.steps - 1
    ts = np.arange(1, d + 1) / spec.steps
    path = spec.start + (spec.barrier - spec.start) * ts
    if spec.start == spec.barrier:
        path = path - 1e-3
    return path


# -- quantized Gaussian process -------------------------------------------------


def squared_exp_row(grid, variance, length_sq):
    """First covariance row of a squared-exponential kernel on a uniform grid."""
    lags = np.asarray(grid, dtype=float) - float(grid[0])
    return variance * np.exp(-(lags**2) / (2.0 * length_sq))


@dataclass(frozen=True)
class QuantizedGpData:
    """Quantized observations of a stationary Gaussian process.

    ``levels`` are the K+1 interval thresholds (the ends may be infinite);
    ``observed[i] = k`` records ``levels[k] <= y(x_i) < levels[k+1]``.
    """

    grid: np.ndarray
    kernel_variance: float
    kernel_length_sq: float
    levels: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        levels = np.asarray(self.levels, dtype=float).ravel()
        observed = np.asarray(self.observed, dtype=int).ravel()
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid locations must be increasing")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("level thresholds must be strictly increasing")
        if observed.size != grid.size:
            raise DimensionMismatch("one observed level per grid point required")
        if observed.min() < 0 or observed.max() >= levels.size - 1:
            raise ValueError("observed level indices out of range")
        if self.kernel_variance <= 0 or self.kernel_length_sq <= 0:
            raise ValueError("kernel parameters must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "observed", observed)

    @property
    def n_points(self):
        return self.grid.size


def build_quantized_gp(data):
    """N-dimensional TMG posterior over the latent process values.

    A uniform grid gives a Toeplitz covariance and the O(N log N) circulant
    sampling path; non-uniform grids fall back to a dense covariance with a
    warning flag on the model. Runs in the general frame, where the box
    constraints stay one-coordinate sparse.
    """
    n = data.n_points
    spacings = np.diff(data.grid)
    uniform = n < 2 or np.all(
        np.abs(spacings - spacings[0]) <= 1e-9 * max(abs(spacings[0]), 1e-30)
    )
    warnings = ()
    if uniform:
        row = squared_exp_row(data.grid, data.kernel_variance, data.kernel_length_sq)
        gaussian = GaussianSpec(row, form="covariance", structure="toeplitz")
    else:
        diffs = np.abs(data.grid[:, None] - data.grid[None, :])
        cov = data.kernel_variance * np.exp(
            -(diffs**2) / (2.0 * data.kernel_length_sq)
        )
        gaussian = GaussianSpec(cov, form="covariance")
        warnings = ("non-uniform grid: dense covariance fallback",)

    constraints = []
    for i in range(n):
        lo = data.levels[data.observed[i]]
        hi = data.levels[data.observed[i] + 1]
        if np.isfinite(lo):
            f = np.zeros(n)
            f[i] = 1.0
            constraints.append(LinearConstraint(f=f, g=-lo))
        if np.isfinite(hi):
            f = np.zeros(n)
            f[i] = -1.0
            constraints.append(LinearConstraint(f=f, g=hi))
    names = tuple(f"y{i + 1}" for i in range(n))
    return TmgModel(
        gaussian=gaussian,
        constraints=tuple(constraints),
        frame="general",
        names=names,
        warnings=warnings,
    )


def quantized_gp_feasible_init(data):
    """Midpoint of each observed interval (one unit inside infinite ends)."""
    lo = data.levels[data.observed]
    hi = data.levels[data.observed + 1]
    init = np.empty(data.n_points)
    for i, (a, b) in enumerate(zip(lo, hi)):
        if np.isfinite(a) and np.isfinite(b):
            init[i] = 0.5 * (a + b)
        elif np.isfinite(a):
            init[i] = a + 1.0
        elif np.isfinite(b):
            init[i] = b - 1.0
        else:
            init[i] = 0.0
    return init


def synthetic_quantized_gp_data(n_points=200, spacing=0.25, kernel_variance=0.6,
                                kernel_length_sq=0.2,
                                levels=(-math.inf, -0.5, 0.0, 0.5, math.inf),
                                seed=0):
    """Draw a true path from the prior and quantize it into the levels."""
    from .linalg import sample_gaussian

    rng = np.random.default_rng(seed)
    grid = np.arange(n_points) * spacing
    row = squared_exp_row(grid, kernel_variance, kernel_length_sq)
    truth = sample_gaussian(
        GaussianSpec(row, form="covariance", structure="toeplitz"), rng
    )
    levels = np.asarray(levels, dtype=float)
    observed = np.clip(np.searchsorted(levels, truth, side="right") - 1, 0,
                       levels.size - 2)
    data = QuantizedGpData(
        grid=grid,
        kernel_variance=kernel_variance,
        kernel_length_sq=kernel_length_sq,
        levels=levels,
        observed=observed,
    )
    return data, truth

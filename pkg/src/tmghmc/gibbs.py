"""Slice-augmented Gibbs sampler for linearly truncated Gaussians.

The reference baseline: one auxiliary uniform variable turns every
coordinate conditional of the whitened Gaussian into a uniform distribution
over an interval, intersected with the interval the linear constraints
induce given the other coordinates. Runs in the canonical frame; the chain
runner whitens the model and maps samples back.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .constraints import LinearConstraint
from .engine import FEASIBILITY_TOL, canonicalized, check_feasible_init
from .errors import EmptyConditionalInterval, TmgError
from .linalg import whiten

_INTERVAL_SLACK = 1e-9


@dataclass(frozen=True)
class GibbsState:
    """Canonical-frame position plus the slice level ``-2 log u``."""

    position: np.ndarray
    auxiliary: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


def _linear_rows(constraints):
    rows = []
    offsets = []
    for c in constraints:
        if not isinstance(c, LinearConstraint):
            raise TmgError("the Gibbs baseline supports linear constraints only")
        rows.append(c.f)
        offsets.append(c.g)
    if not rows:
        return None, None
    return np.stack(rows), np.array(offsets)


def gibbs_sweep(model, state, rng):
    """One full sweep over the coordinates of a whitened model.

    ``model`` must already be in the canonical frame (standard Gaussian)
    with linear constraints only; ``state.position`` is the current
    canonical point. The slice level is redrawn first, then each coordinate
    is drawn uniformly from its conditional interval.
    """
    f_mat, g_vec = _linear_rows(model.constraints)
    x = state.position.copy()
    norm_sq = float(x @ x)
    # -2 log u with u ~ U(0, exp(-|x|^2/2)), kept in log scale
    slice_level = norm_sq - 2.0 * math.log(1.0 - rng.random())
    residual = f_mat @ x + g_vec if f_mat is not None else None

    for i in range(x.size):
        xi = x[i]
        bound = math.sqrt(max(slice_level - (norm_sq - xi * xi), 0.0))
        lo, hi = -bound, bound
        if f_mat is not None:
            fi = f_mat[:, i]
            cut = fi * xi - residual  # feasibility: fi * x_new >= cut
            pos = fi > 0
            if pos.any():
                lo = max(lo, float(np.max(cut[pos] / fi[pos])))
            neg = fi < 0
            if neg.any():
                hi = min(hi, float(np.min(cut[neg] / fi[neg])))
        if lo > hi:
            if lo - hi > _INTERVAL_SLACK * max(1.0, abs(lo), abs(hi)):
                raise EmptyConditionalInterval(
                    f"coordinate {i}: interval [{lo:.6g}, {hi:.6g}]"
                )
            hi = lo
        new = rng.uniform(lo, hi)
        if f_mat is not None:
            residual += fi * (new - xi)
        norm_sq += new * new - xi * xi
        x[i] = new
    return GibbsState(position=x, auxiliary=slice_level)


@dataclass(frozen=True)
class GibbsResult:
    samples: np.ndarray
    seed: int
    wall_clock: float
    cpu_seconds: float


def run_gibbs_chain(model, n, burn_in=0, init=None, seed=0):
    """Run the Gibbs baseline on a TMG model with linear constraints.

    The model is whitened internally; emitted samples are in the original
    frame. Deterministic given ``seed``.
    """
    from .engine import find_interior_point
    from .linalg import unwhiten

    wall_start = time.perf_counter()
    if init is None:
        init = find_interior_point(model)
    init = check_feasible_init(model, init)
    canon, factor = canonicalized(model)
    _linear_rows(canon.constraints)  # reject unsupported kinds up front

    rng = np.random.default_rng(seed)
    state = GibbsState(position=whiten(factor, init))
    samples = np.empty((n, model.dim))

    cpu_start = time.thread_time()
    for it in range(burn_in + n):
        state = gibbs_sweep(canon, state, rng)
        if it >= burn_in:
            samples[it - burn_in] = unwhiten(factor, state.position)
    cpu_seconds = time.thread_time() - cpu_start

    return GibbsResult(
        samples=samples,
        seed=seed,
        wall_clock=time.perf_counter() - wall_start,
        cpu_seconds=cpu_seconds,
    )

"""Event-driven exact HMC for truncated Gaussians.

Each iteration refreshes the velocity, then advances the analytic trajectory
for a fixed travel time, chaining segments at wall bounces: the first
constraint hit is located exactly, the velocity is reflected elastically
against the constraint gradient, and the trajectory continues. Energy is
conserved exactly up to rounding, so there is no accept/reject step.

Chains run either in the canonical frame (the model is whitened internally,
constraints transformed, and emitted samples mapped back) or in the general
frame (original coordinates, velocity drawn with the spec covariance,
reflections taken in the metric of the mass matrix).
"""

from __future__ import annotations

import math
import time
import weakref
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    EPS_GUARD,
    HitEvent,
    LinearConstraint,
    ProductConstraint,
    QuadraticConstraint,
    Trajectory,
    evaluate,
    product_hit_time,
    quadratic_hit_time,
    reflect,
)
from .errors import BounceLimitExceeded, InfeasibleInit, InfeasibleState
from .linalg import GaussianSpec, factorize

BOUNCE_LIMIT = 10_000
FEASIBILITY_TOL = -1e-9
DEFAULT_TRAVEL_TIME = math.pi / 2
FRAMES = ("canonical", "general")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class TmgModel:
    """A truncated multivariate Gaussian ready for sampling.

    ``factor`` optionally overrides the spec's own factorization with a
    structured implementation (model builders use this to wire in fast
    paths). ``names`` are coordinate labels for emitted samples.
    """

    gaussian: GaussianSpec
    constraints: tuple = ()
    frame: str = "canonical"
    travel_time: float = DEFAULT_TRAVEL_TIME
    factor: object = None
    names: tuple | None = None
    warnings: tuple = ()

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        if not self.travel_time > 0.0:
            raise ValueError("travel_time must be positive")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        d = self.gaussian.dim
        for c in self.constraints:
            if c.dim != d:
                raise ValueError(
                    f"constraint dimension {c.dim} does not match model dimension {d}"
                )
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != d:
                raise ValueError("one name per coordinate required")
            object.__setattr__(self, "names", names)

    @property
    def dim(self):
        return self.gaussian.dim


@dataclass(frozen=True)
class ParticleState:
    """Position/velocity in the frame the chain runs in."""

    position: np.ndarray
    velocity: np.ndarray
    segment_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


@dataclass(frozen=True)
class IterationStats:
    bounces: int
    energy_start: float
    energy_end: float
    events: tuple = ()


@dataclass(frozen=True)
class ChainResult:
    samples: np.ndarray
    bounce_counts: np.ndarray
    energies: np.ndarray  # (n, 2) start/end Hamiltonian per iteration
    seed: int
    wall_clock: float
    cpu_seconds: float


def transform_constraint(factor, constraint):
    """Map a constraint to the whitened frame of the given factor.

    Values are preserved pointwise: the transformed constraint evaluated at
    ``whiten(factor, x)`` equals the original evaluated at ``x``.
    """
    mean = factor.mean
    if isinstance(constraint, LinearConstraint):
        return LinearConstraint(
            f=factor.normal_transform(constraint.f),
            g=constraint.g + float(constraint.f @ mean),
        )
    if isinstance(constraint, QuadraticConstraint):
        a, b, c = constraint.a, constraint.b, constraint.c
        a_mu = a @ mean
        c_new = c + float(b @ mean) + float(mean @ a_mu)
        b_shift = b + 2.0 * a_mu
        d = b.size
        half = np.column_stack(
            [factor.normal_transform(a[:, j]) for j in range(d)]
        )
        a_new = np.column_stack(
            [factor.normal_transform(half.T[:, j]) for j in range(d)]
        ).T
        a_new = 0.5 * (a_new + a_new.T)
        return QuadraticConstraint(
            a=a_new, b=factor.normal_transform(b_shift), c=c_new
        )
    if isinstance(constraint, ProductConstraint):
        return ProductConstraint(
            factors=tuple(transform_constraint(factor, f) for f in constraint.factors)
        )
    raise TypeError(f"not a constraint: {constraint!r}")


class _Workspace:
    """Per-model compiled state: run-frame constraints and frame operations."""

    def __init__(self, model):
        self.model = model
        self.factor = model.factor if model.factor is not None else factorize(
            model.gaussian
        )
        self.canonical = model.frame == "canonical"
        d = model.dim
        if self.canonical:
            run_constraints = [
                transform_constraint(self.factor, c) for c in model.constraints
            ]
            self.center = np.zeros(d)
        else:
            run_constraints = list(model.constraints)
            self.center = np.asarray(self.factor.mean, dtype=float)
        self.run_constraints = run_constraints

        lin_rows, lin_g, lin_idx = [], [], []
        self.quads = []
        self.prods = []
        for i, c in enumerate(run_constraints):
            if isinstance(c, LinearConstraint):
                lin_rows.append(c.f)
                lin_g.append(c.g)
                lin_idx.append(i)
            elif isinstance(c, QuadraticConstraint):
                self.quads.append((i, c))
            else:
                self.prods.append((i, c))
        if lin_rows:
            self.lin_f = np.ascontiguousarray(np.stack(lin_rows))
            self.lin_idx = np.array(lin_idx)
            self.lin_g = np.array(lin_g)
            # the trajectory center is constant over a chain: fold it in
            self.lin_g_eff = self.lin_g + self.lin_f @ self.center
            # reflection directions for the fixed linear walls, precomputed:
            # canonical frame reflects along the normal itself, the general
            # frame along M^-1 times the normal (the mass-matrix metric)
            if self.canonical:
                self.lin_push = self.lin_f
            else:
                self.lin_push = np.stack(
                    [self.factor.cov_apply(row) for row in self.lin_f]
                )
            self.lin_gram = self.lin_f @ self.lin_push.T
            self.lin_neg_g = -self.lin_g_eff
        else:
            self.lin_f = None

    # -- frame operations ------------------------------------------------
    def to_run_frame(self, x):
        if self.canonical:
            return self.factor.whiten_apply(x - self.factor.mean)
        return np.array(x, dtype=float)

    def emit(self, y):
        if self.canonical:
            return self.factor.unwhiten_apply(y) + self.factor.mean
        return y.copy()

    def refresh(self, rng):
        if self.canonical:
            return rng.standard_normal(self.model.dim)
        return self.factor.draw(rng)

    def reflect_velocity(self, velocity, normal):
        if self.canonical:
            return reflect(velocity, normal)
        pushed = self.factor.cov_apply(normal)
        alpha = float(normal @ velocity) / float(normal @ pushed)
        return velocity - 2.0 * alpha * pushed

    def energy(self, y, v):
        if self.canonical:
            return 0.5 * (float(y @ y) + float(v @ v))
        dx = y - self.center
        return 0.5 * (
            float(dx @ self.factor.prec_apply(dx))
            + float(v @ self.factor.prec_apply(v))
        )

    # -- constraint scans ------------------------------------------------
    def min_constraint_value(self, y):
        """Smallest run-frame constraint value (equals the original value)."""
        worst = math.inf
        if self.lin_f is not None:
            worst = float(np.min(self.lin_f @ y + self.lin_g))
        for _, c in self.quads:
            worst = min(worst, evaluate(c, y))
        for _, c in self.prods:
            worst = min(worst, evaluate(c, y))
        return worst

def _lin_scan(fa, fb, neg_g, guard=EPS_GUARD):
    """Lean per-segment version of :func:`first_linear_roots`.

    Same mathematics, but shaped for the hot loop: full-array ufuncs, no
    masked extraction. Unreachable walls come out as NaN from the arccos
    and are mapped to inf at the end.
    """
    u = np.hypot(fa, fb)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(neg_g / u)
    phi = np.arctan2(-fa, fb)
    t1 = np.mod(theta - phi, TWO_PI)
    t1 = np.where(t1 > guard, t1, t1 + TWO_PI)
    t2 = np.mod(-theta - phi, TWO_PI)
    t2 = np.where(t2 > guard, t2, t2 + TWO_PI)
    np.minimum(t1, t2, out=t1)
    t1 = np.nan_to_num(t1, copy=False, nan=np.inf)
    k = int(np.argmin(t1))
    return float(t1[k]), k


_WORKSPACES = weakref.WeakKeyDictionary()


def _workspace(model):
    ws = _WORKSPACES.get(model)
    if ws is None:
        ws = _Workspace(model)
        _WORKSPACES[model] = ws
    return ws


def _advance(ws, position, velocity, travel_time, bounce_limit,
             record_events=True):
    """Advance one travel time, bouncing as needed; run-frame coordinates.

    The per-wall trig coefficients of the linear constraints are rotated
    incrementally across segments instead of recomputed by matrix-vector
    products, and reflections against fixed linear walls use precomputed
    push directions; the cost per segment is O(m + d) plus whatever the
    quadratic and product constraints need. With ``record_events=False``
    only the bounce count is tracked (returned in place of the event list).
    """
    center = ws.center
    lin = ws.lin_f is not None
    if lin:
        fa = ws.lin_f @ velocity
        fb = ws.lin_f @ (position - center)
    a_vec = velocity
    b_vec = position - center
    remaining = travel_time
    consumed = 0.0
    n_bounces = 0
    events = []
    with np.errstate(invalid="ignore", divide="ignore"):
        while True:
            best_t = math.inf
            best_idx = -1
            lin_k = -1
            best_grad = None
            if lin:
                t_lin, k = _lin_scan(fa, fb, ws.lin_neg_g)
                if t_lin < best_t:
                    best_t = t_lin
                    best_idx = int(ws.lin_idx[k])
                    lin_k = k
            if ws.quads or ws.prods:
                traj = Trajectory(mu=center, a=a_vec, b=b_vec)
                for i, c in ws.quads:
                    t = quadratic_hit_time(traj, c)
                    if t is not None and (
                        t < best_t or (t == best_t and i < best_idx)
                    ):
                        best_t, best_idx, lin_k = t, i, -1
                        best_grad = lambda x, c=c: 2.0 * c.a @ x + c.b
                for i, c in ws.prods:
                    event = product_hit_time(traj, c)
                    if event is not None and (
                        event.time < best_t
                        or (event.time == best_t and i < best_idx)
                    ):
                        best_t, best_idx, lin_k = event.time, i, -1
                        best_grad = lambda _x, g=event.gradient: g
            if best_t >= remaining:
                sin_t, cos_t = math.sin(remaining), math.cos(remaining)
                position = center + a_vec * sin_t + b_vec * cos_t
                velocity = a_vec * cos_t - b_vec * sin_t
                return position, velocity, events if record_events else n_bounces

            sin_t, cos_t = math.sin(best_t), math.cos(best_t)
            position = center + a_vec * sin_t + b_vec * cos_t
            velocity = a_vec * cos_t - b_vec * sin_t
            consumed += best_t
            remaining -= best_t
            if lin_k >= 0:
                normal = ws.lin_f[lin_k]
                if lin:
                    fa, fb = fa * cos_t - fb * sin_t, fa * sin_t + fb * cos_t
                alpha = fa[lin_k] / ws.lin_gram[lin_k, lin_k]
                velocity = velocity - 2.0 * alpha * ws.lin_push[lin_k]
                fa -= 2.0 * alpha * ws.lin_gram[:, lin_k]
            else:
                normal = best_grad(position)
                if lin:
                    fa, fb = fa * cos_t - fb * sin_t, fa * sin_t + fb * cos_t
                velocity = ws.reflect_velocity(velocity, normal)
                if lin:
                    fa = ws.lin_f @ velocity
            a_vec = velocity
            b_vec = position - center
            n_bounces += 1
            if record_events:
                events.append(
                    HitEvent(
                        time=consumed, constraint_index=best_idx, gradient=normal
                    )
                )
            if n_bounces > bounce_limit:
                raise BounceLimitExceeded(
                    f"more than {bounce_limit} reflections in one iteration "
                    f"(constraint {best_idx} at t={consumed:.6g})"
                )


def refresh_velocity(model, rng):
    """Draw a fresh momentum/velocity for the model's frame.

    Canonical frame: i.i.d. standard normal. General frame: zero-mean draw
    with the spec covariance (the velocity covariance of the Hamiltonian
    with mass matrix equal to the precision).
    """
    return _workspace(model).refresh(rng)


def integrate_step(model, state, bounce_limit=BOUNCE_LIMIT):
    """Advance exactly one travel time; returns final state and hit events."""
    ws = _workspace(model)
    if ws.min_constraint_value(state.position) < FEASIBILITY_TOL:
        raise InfeasibleState(
            "integrate_step called from an infeasible position"
        )
    position, velocity, events = _advance(
        ws, state.position, state.velocity, model.travel_time, bounce_limit
    )
    new_state = ParticleState(
        position=position,
        velocity=velocity,
        segment_time=state.segment_time + model.travel_time,
    )
    return new_state, events


def hmc_iteration(model, position, rng, bounce_limit=BOUNCE_LIMIT):
    """One exact-HMC iteration from ``position`` (run-frame coordinates)."""
    ws = _workspace(model)
    velocity = ws.refresh(rng)
    h_start = ws.energy(position, velocity)
    new_position, new_velocity, events = _advance(
        ws, position, velocity, model.travel_time, bounce_limit
    )
    h_end = ws.energy(new_position, new_velocity)
    stats = IterationStats(
        bounces=len(events),
        energy_start=h_start,
        energy_end=h_end,
        events=tuple(events),
    )
    return new_position, stats


def check_feasible_init(model, init):
    """Validate an original-frame starting point; raises InfeasibleInit."""
    init = np.asarray(init, dtype=float)
    if init.shape != (model.dim,):
        raise InfeasibleInit(
            -1, math.nan, f"init has shape {init.shape}, expected ({model.dim},)"
        )
    for i, c in enumerate(model.constraints):
        if isinstance(c, ProductConstraint):
            for fac in c.factors:
                if evaluate(fac, init) <= 0.0:
                    raise InfeasibleInit(
                        i,
                        evaluate(fac, init),
                        f"product constraint {i} has a non-positive factor at the "
                        "initial point; all factors must start strictly positive",
                    )
        else:
            value = evaluate(c, init)
            if value < FEASIBILITY_TOL:
                raise InfeasibleInit(i, value)
    return init


def run_chain(model, n, burn_in=0, init=None, seed=0, bounce_limit=BOUNCE_LIMIT):
    """Run an exact-HMC chain; returns original-frame samples.

    ``init`` must be feasible under the original (untransformed)
    constraints; ``None`` invokes the deterministic interior-point search.
    The chain is deterministic given ``seed``.
    """
    wall_start = time.perf_counter()
    ws = _workspace(model)
    if init is None:
        init = find_interior_point(model)
    init = check_feasible_init(model, init)
    rng = np.random.default_rng(seed)
    position = ws.to_run_frame(init)

    d = model.dim
    samples = np.empty((n, d))
    bounce_counts = np.zeros(n, dtype=int)
    energies = np.empty((n, 2))

    cpu_start = time.thread_time()
    for it in range(burn_in + n):
        velocity = ws.refresh(rng)
        h_start = ws.energy(position, velocity)
        position, velocity, n_bounces = _advance(
            ws, position, velocity, model.travel_time, bounce_limit,
            record_events=False,
        )
        if it < burn_in:
            continue
        k = it - burn_in
        # feasibility is invariant under the frame maps; check in run frame
        value = ws.min_constraint_value(position)
        if value < FEASIBILITY_TOL:
            raise InfeasibleState(
                f"emitted sample {k} violates a constraint by {value:.3e}"
            )
        samples[k] = ws.emit(position)
        bounce_counts[k] = n_bounces
        energies[k, 0] = h_start
        energies[k, 1] = ws.energy(position, velocity)
    cpu_seconds = time.thread_time() - cpu_start

    return ChainResult(
        samples=samples,
        bounce_counts=bounce_counts,
        energies=energies,
        seed=seed,
        wall_clock=time.perf_counter() - wall_start,
        cpu_seconds=cpu_seconds,
    )


def find_interior_point(model, sweeps=100):
    """Deterministic interior point: coordinate descent on the minimum slack.

    Starts from the unconstrained mean; fails with InfeasibleInit if no
    strictly feasible point is found.
    """
    x = np.array(model.gaussian.mean, dtype=float)
    cons = model.constraints
    if not cons:
        return x

    def min_slack(z):
        worst = math.inf
        for c in cons:
            if isinstance(c, ProductConstraint):
                worst = min(worst, min(evaluate(f, z) for f in c.factors))
            else:
                worst = min(worst, evaluate(c, z))
        return worst

    best = min_slack(x)
    d = x.size
    scale = 1.0 + float(np.max(np.abs(x)))
    steps = [scale * 2.0**-k for k in range(0, 12)]
    for _ in range(sweeps):
        improved = False
        for i in range(d):
            for step in steps:
                for delta in (step, -step):
                    trial = x.copy()
                    trial[i] += delta
                    slack = min_slack(trial)
                    if slack > best:
                        best = slack
                        x = trial
                        improved = True
        if not improved:
            break
    if best <= 0.0:
        raise InfeasibleInit(
            -1, best, "interior-point search failed to find a feasible start"
        )
    return x


def canonicalized(model):
    """The whitened twin of a model: standard Gaussian, transformed constraints.

    Returns ``(canonical_model, factor)``; map points with
    ``whiten``/``unwhiten`` from :mod:`tmghmc.linalg` using the factor.
    """
    ws = _workspace(model)
    factor = ws.factor
    transformed = tuple(
        transform_constraint(factor, c) for c in model.constraints
    )
    canon = TmgModel(
        gaussian=GaussianSpec.standard(model.dim),
        constraints=transformed,
        frame="canonical",
        travel_time=model.travel_time,
        names=model.names,
    )
    return canon, factor

"""Constraint types, exact hit times along sinusoidal trajectories, reflection.

Trajectories have the closed form ``x(t) = mu + a sin(t) + b cos(t)``, so a
linear constraint value along the path is ``u cos(t + phi) + g`` and a
quadratic constraint value is a trigonometric polynomial whose zeros reduce
to a quartic in ``cos(t)``. All hit-time searches cover one period and apply
a dead zone ``EPS_GUARD`` after t = 0 so a just-bounced wall is not
immediately re-detected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, QuarticSolverFailure, ZeroNormal
from .quartic import solve_quartic

__all__ = [
    "EPS_GUARD",
    "LinearConstraint",
    "QuadraticConstraint",
    "ProductConstraint",
    "Trajectory",
    "HitEvent",
    "evaluate",
    "gradient",
    "linear_hit_time",
    "quadratic_hit_time",
    "product_hit_time",
    "first_linear_roots",
    "reflect",
    "solve_quartic",
]

EPS_GUARD = 1e-10
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LinearConstraint:
    """Half-space ``f . x + g >= 0``."""

    f: np.ndarray
    g: float

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        if not np.any(f != 0.0):
            raise ValueError("linear constraint normal is the zero vector")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", float(self.g))

    @property
    def dim(self):
        return self.f.size


@dataclass(frozen=True)
class QuadraticConstraint:
    """Region ``x^T A x + b . x + c >= 0`` with symmetric A."""

    a: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape[0] != a.shape[1] or a.shape[0] != b.size:
            raise DimensionMismatch("quadratic constraint shapes are inconsistent")
        scale = max(np.max(np.abs(a)), 1.0)
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise ValueError("quadratic constraint matrix is not symmetric")
        if not (np.any(a != 0.0) or np.any(b != 0.0)):
            raise ValueError("quadratic constraint has neither A nor B")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self):
        return self.b.size


@dataclass(frozen=True)
class ProductConstraint:
    """Region ``prod_j Q_j(x) >= 0``; hit when any factor reaches zero."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product constraint needs at least one factor")
        for fac in factors:
            if not isinstance(fac, (LinearConstraint, QuadraticConstraint)):
                raise TypeError("product factors must be linear or quadratic")
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self):
        return self.factors[0].dim


Constraint = (LinearConstraint, QuadraticConstraint, ProductConstraint)


@dataclass(frozen=True)
class Trajectory:
    """``x(t) = mu + a sin(t) + b cos(t)``; a is the initial velocity."""

    mu: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("mu", "a", "b"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )

    @classmethod
    def from_state(cls, position, velocity, center=None):
        position = np.asarray(position, dtype=float)
        if center is None:
            center = np.zeros_like(position)
        return cls(mu=center, a=np.asarray(velocity, dtype=float), b=position - center)

    def position(self, t):
        return self.mu + self.a * math.sin(t) + self.b * math.cos(t)

    def velocity(self, t):
        return self.a * math.cos(t) - self.b * math.sin(t)


@dataclass(frozen=True)
class HitEvent:
    time: float
    constraint_index: int
    gradient: np.ndarray


def _check_dim(expected, got, what):
    if expected != got:
        raise DimensionMismatch(f"{what}: dimension {got}, expected {expected}")


def evaluate(constraint, x):
    """Constraint value at ``x`` (positive means feasible)."""
    x = np.asarray(x, dtype=float)
    if isinstance(constraint, LinearConstraint):
        _check_dim(constraint.dim, x.size, "linear constraint")
        return float(constraint.f @ x + constraint.g)
    if isinstance(constraint, QuadraticConstraint):
        _check_dim(constraint.dim, x.size, "quadratic constraint")
        return float(x @ constraint.a @ x + constraint.b @ x + constraint.c)
    if isinstance(constraint, ProductConstraint):
        value = 1.0
        for fac in constraint.factors:
            value *= evaluate(fac, x)
        return value
    raise TypeError(f"not a constraint: {constraint!r}")


def gradient(constraint, x):
    """Gradient of the constraint value at ``x``."""
    x = np.asarray(x, dtype=float)
    if isinstance(constraint, LinearConstraint):
        _check_dim(constraint.dim, x.size, "linear constraint")
        return constraint.f.copy()
    if isinstance(constraint, QuadraticConstraint):
        _check_dim(constraint.dim, x.size, "quadratic constraint")
        return 2.0 * constraint.a @ x + constraint.b
    if isinstance(constraint, ProductConstraint):
        values = [evaluate(fac, x) for fac in constraint.factors]
        total = np.zeros_like(x)
        for j, fac in enumerate(constraint.factors):
            partial = 1.0
            for k, val in enumerate(values):
                if k != j:
                    partial *= val
            total += partial * gradient(fac, x)
        return total
    raise TypeError(f"not a constraint: {constraint!r}")


def first_linear_roots(fa, fb, g_eff, guard=EPS_GUARD):
    """Vectorized smallest root in ``(guard, 2 pi)`` of ``u cos(t+phi) + g``.

    ``fa``, ``fb`` are the sine/cosine coefficients of each constraint value
    and ``g_eff`` the offsets. Unreachable walls (``u <= |g|``) get ``inf``.
    """
    fa = np.atleast_1d(np.asarray(fa, dtype=float))
    fb = np.atleast_1d(np.asarray(fb, dtype=float))
    g_eff = np.atleast_1d(np.asarray(g_eff, dtype=float))
    u = np.hypot(fa, fb)
    out = np.full(u.shape, np.inf)
    ok = u > np.abs(g_eff)
    if not ok.any():
        return out
    phi = np.arctan2(-fa[ok], fb[ok])
    theta = np.arccos(-g_eff[ok] / u[ok])
    best = np.full(theta.shape, np.inf)
    for sign in (1.0, -1.0):
        t = np.mod(sign * theta - phi, TWO_PI)
        t[t <= guard] += TWO_PI
        np.minimum(best, t, out=best)
    best[best >= TWO_PI] = np.inf
    out[ok] = best
    return out


def linear_hit_time(traj, constraint):
    """Smallest ``t > EPS_GUARD`` with the constraint value zero, else None.

    The wall is reachable only when the oscillation amplitude exceeds the
    offset, ``u > |g|``; the search covers one period.
    """
    f = constraint.f
    fa = float(f @ traj.a)
    fb = float(f @ traj.b)
    g_eff = constraint.g + float(f @ traj.mu)
    t = first_linear_roots(fa, fb, g_eff)[0]
    return None if math.isinf(t) else float(t)


def _trig_coefficients(traj, constraint):
    """q1..q5 of ``K(t) = q1 c^2 + q2 c + q3 + s (q4 c + q5)``, c=cos, s=sin.

    The trajectory center is folded into the quadratic first (A unchanged,
    B -> B + 2 A mu, C -> C + mu.A.mu + B.mu) so the centered-trajectory
    formulas apply.
    """
    a_mat, b_vec, c_val = constraint.a, constraint.b, constraint.c
    mu = traj.mu
    if np.any(mu != 0.0):
        a_mu = a_mat @ mu
        c_val = c_val + float(mu @ a_mu) + float(b_vec @ mu)
        b_vec = b_vec + 2.0 * a_mu
    a_vec, b_traj = traj.a, traj.b
    a_aa = float(a_vec @ a_mat @ a_vec)
    b_ab = float(b_traj @ a_mat @ b_traj)
    a_ab = float(a_vec @ a_mat @ b_traj)
    q1 = b_ab - a_aa
    q2 = float(b_vec @ b_traj)
    q3 = c_val + a_aa
    q4 = 2.0 * a_ab
    q5 = float(b_vec @ a_vec)
    return q1, q2, q3, q4, q5


def _trig_value(q, t):
    q1, q2, q3, q4, q5 = q
    c = math.cos(t)
    s = math.sin(t)
    return q1 * c * c + q2 * c + q3 + s * (q4 * c + q5)


def _trig_derivative(q, t):
    q1, q2, q3, q4, q5 = q
    c = math.cos(t)
    s = math.sin(t)
    return -s * (2.0 * q1 * c + q2) + q4 * (c * c - s * s) + q5 * c


def _centered_hit(q):
    """Closed form when the linear terms vanish: q1 + 2 q3 + u sin(2t+phi) = 0."""
    q1, _, q3, q4, _ = q
    amp = math.hypot(q1, q4)
    offset = q1 + 2.0 * q3
    if amp <= abs(offset):
        return None
    phi = math.atan2(q1, q4)
    theta = math.asin(-offset / amp)
    best = None
    for base in (theta, math.pi - theta):
        for k in range(-2, 4):
            t = (base + TWO_PI * k - phi) / 2.0
            if EPS_GUARD < t < TWO_PI and (best is None or t < best):
                best = t
    return best


def _polish_time(q, t, lo, hi, scale):
    """Newton-polish a hit time inside (lo, hi); bisection fallback."""
    for _ in range(60):
        val = _trig_value(q, t)
        if abs(val) < 1e-12 * scale:
            return t
        slope = _trig_derivative(q, t)
        if slope == 0.0:
            break
        step = t - val / slope
        if not (lo < step < hi):
            break
        t = step
    if abs(_trig_value(q, t)) < 1e-10 * scale:
        return t
    # bracketed bisection: value is positive at lo and negative at hi
    a, b = lo, hi
    if not (_trig_value(q, a) > 0.0 > _trig_value(q, b)):
        raise QuarticSolverFailure(
            "hit-time polish failed; quadratic constraint is ill-conditioned"
        )
    for _ in range(90):
        mid = 0.5 * (a + b)
        if _trig_value(q, mid) > 0.0:
            a = mid
        else:
            b = mid
    t = 0.5 * (a + b)
    if abs(_trig_value(q, t)) < 1e-10 * scale:
        return t
    raise QuarticSolverFailure(
        "hit-time polish failed; quadratic constraint is ill-conditioned"
    )


def quadratic_hit_time(traj, constraint):
    """Smallest ``t > EPS_GUARD`` with the quadratic constraint zero, else None.

    Centered constraints (no linear trigonometric terms) use the sine closed
    form directly. Otherwise the squared equation gives a quartic in cos(t);
    candidate times from its roots are screened by the sign of the original
    (un-squared) constraint value just past each candidate, which drops the
    spurious solutions the squaring introduced and treats tangential grazes
    as non-crossings.
    """
    q = _trig_coefficients(traj, constraint)
    q1, q2, q3, q4, q5 = q
    scale = max(abs(q1), abs(q2), abs(q3), abs(q4), abs(q5))
    if scale == 0.0:
        return None
    if max(abs(q2), abs(q5)) <= 1e-13 * scale:
        return _centered_hit(q)

    r4 = q1 * q1 + q4 * q4
    r3 = 2.0 * q1 * q2 + 2.0 * q4 * q5
    r2 = q2 * q2 + 2.0 * q1 * q3 + q5 * q5 - q4 * q4
    r1 = 2.0 * q2 * q3 - 2.0 * q4 * q5
    r0 = q3 * q3 - q5 * q5
    roots = solve_quartic(r4, r3, r2, r1, r0)

    times = []
    for root in roots:
        if abs(root) > 1.0 + 1e-9:
            continue
        base = math.acos(min(1.0, max(-1.0, root)))
        for t in (base, TWO_PI - base):
            if EPS_GUARD < t < TWO_PI:
                times.append(t)
    if not times:
        return None
    times.sort()
    deduped = [times[0]]
    for t in times[1:]:
        if t - deduped[-1] > 1e-9:
            deduped.append(t)

    # sign probe: the first candidate past which the constraint value goes
    # negative is the genuine first crossing; earlier probes double as a
    # verified-positive bracket endpoint for the bisection fallback
    bounds = deduped[1:] + [TWO_PI]
    lo = EPS_GUARD
    for t, nxt in zip(deduped, bounds):
        probe = 0.5 * (t + nxt)
        if _trig_value(q, probe) < 0.0:
            return _polish_time(q, t, lo, probe, scale)
        lo = probe
    return None


def product_hit_time(traj, constraint):
    """First time any factor vanishes; gradient is the vanishing factor's.

    Assumes every factor is strictly positive at t = 0 (the engine rejects
    mixed-sign factor configurations at chain start).
    """
    best_t = math.inf
    best_idx = -1
    for idx, fac in enumerate(constraint.factors):
        if isinstance(fac, LinearConstraint):
            t = linear_hit_time(traj, fac)
        else:
            t = quadratic_hit_time(traj, fac)
        if t is not None and t < best_t:
            best_t = t
            best_idx = idx
    if best_idx < 0:
        return None
    x_hit = traj.position(best_t)
    return HitEvent(
        time=best_t,
        constraint_index=best_idx,
        gradient=gradient(constraint.factors[best_idx], x_hit),
    )


def reflect(velocity, normal):
    """Elastic reflection: negate the normal component, keep the tangential."""
    velocity = np.asarray(velocity, dtype=float)
    normal = np.asarray(normal, dtype=float)
    norm_sq = float(normal @ normal)
    if norm_sq == 0.0:
        raise ZeroNormal("cannot reflect against a zero normal")
    alpha = float(normal @ velocity) / norm_sq
    return velocity - 2.0 * alpha * normal

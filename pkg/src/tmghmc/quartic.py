"""Real roots of low-degree polynomials via closed forms plus Newton polish.

The closed forms (Ferrari for quartics, Cardano/trigonometric for cubics)
only supply starting points; every returned root is Newton-polished against
the original polynomial until the residual is below ``POLISH_TOL`` relative
to the largest coefficient. Raw closed forms lose digits near repeated
roots, so the polish is the accuracy contract.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateAllZero

POLISH_TOL = 1e-12
_MAX_NEWTON = 80
# Leading coefficients below this (relative) threshold are treated as zero
# when picking the closed form; the polish still runs on the full polynomial.
_DEGREE_EPS = 1e-13


def _real_roots_quadratic(b, c):
    """Real roots of x^2 + b x + c, numerically stable split."""
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    if b >= 0.0:
        big = -(b + sq) / 2.0
    else:
        big = -(b - sq) / 2.0
    if big == 0.0:
        return [0.0, 0.0]
    return [big, c / big]


def _real_roots_cubic(b, c, d):
    """Real roots of x^3 + b x^2 + c x + d (one or three)."""
    shift = b / 3.0
    p = c - b * b / 3.0
    q = d - b * c / 3.0 + 2.0 * b ** 3 / 27.0
    if p == 0.0 and q == 0.0:
        return [-shift]
    disc = -4.0 * p ** 3 - 27.0 * q * q
    if disc >= 0.0:
        # three real roots; p < 0 is implied (up to rounding at disc == 0)
        m = 2.0 * math.sqrt(max(-p / 3.0, 0.0))
        if m == 0.0:
            return [-shift]
        arg = 3.0 * q / (p * m)
        arg = min(1.0, max(-1.0, arg))
        theta = math.acos(arg)
        return [
            m * math.cos((theta - 2.0 * math.pi * k) / 3.0) - shift
            for k in range(3)
        ]
    half_q = q / 2.0
    rad = math.sqrt(half_q * half_q + p ** 3 / 27.0)
    u = -half_q + rad
    v = -half_q - rad
    root = math.copysign(abs(u) ** (1.0 / 3.0), u) + math.copysign(
        abs(v) ** (1.0 / 3.0), v
    )
    return [root - shift]


def _ferrari_candidates(p3, p2, p1, p0):
    """Starting points for a monic quartic x^4 + p3 x^3 + p2 x^2 + p1 x + p0."""
    shift = p3 / 4.0
    # depressed quartic y^4 + p y^2 + q y + r, y = x + shift
    p = p2 - 3.0 * p3 * p3 / 8.0
    q = p1 - p3 * p2 / 2.0 + p3 ** 3 / 8.0
    r = p0 - p3 * p1 / 4.0 + p3 * p3 * p2 / 16.0 - 3.0 * p3 ** 4 / 256.0

    scale = max(abs(p), abs(q), abs(r), 1.0)
    cands = []
    if abs(q) <= 1e-14 * scale:
        # biquadratic: z^2 + p z + r with y^2 = z
        for z in _real_roots_quadratic(p, r):
            if z >= -1e-12 * scale:
                y = math.sqrt(max(z, 0.0))
                cands.extend([y, -y])
    else:
        # resolvent in u = w^2: u^3 + 2p u^2 + (p^2 - 4r) u - q^2 = 0 has a
        # positive real root; pick the largest for a stable factor split
        us = [u for u in _real_roots_cubic(2.0 * p, p * p - 4.0 * r, -q * q) if u > 0.0]
        if us:
            u = max(us)
            w = math.sqrt(u)
            # (y^2 + w y + A)(y^2 - w y + B) with A + B = p + u, B - A = q / w
            a_term = ((p + u) - q / w) / 2.0
            b_term = ((p + u) + q / w) / 2.0
            cands.extend(_real_roots_quadratic(w, a_term))
            cands.extend(_real_roots_quadratic(-w, b_term))
    return [y - shift for y in cands]


def _polish(coeffs, x, scale):
    """Newton-polish a root candidate; returns (root, ok)."""
    deriv = np.polyder(coeffs)
    best_x = x
    best_f = abs(np.polyval(coeffs, x))
    for _ in range(_MAX_NEWTON):
        if best_f < POLISH_TOL * scale:
            return best_x, True
        f = np.polyval(coeffs, x)
        fp = np.polyval(deriv, x)
        if fp == 0.0:
            break
        x = x - f / fp
        fx = abs(np.polyval(coeffs, x))
        if fx < best_f:
            best_f = fx
            best_x = x
        elif fx > 4.0 * best_f:
            break
    return best_x, best_f < POLISH_TOL * scale


def solve_quartic(r4, r3, r2, r1, r0):
    """All real roots of ``r4 c^4 + r3 c^3 + r2 c^2 + r1 c + r0``, sorted.

    Degree degrades gracefully when leading coefficients vanish. Repeated
    roots are reported once. Raises :class:`DegenerateAllZero` when every
    coefficient is zero.
    """
    coeffs = np.array([r4, r3, r2, r1, r0], dtype=float)
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        raise DegenerateAllZero("all quartic coefficients are zero")

    if abs(r4) > _DEGREE_EPS * scale:
        cands = _ferrari_candidates(r3 / r4, r2 / r4, r1 / r4, r0 / r4)
    elif abs(r3) > _DEGREE_EPS * scale:
        cands = _real_roots_cubic(r2 / r3, r1 / r3, r0 / r3)
    elif abs(r2) > _DEGREE_EPS * scale:
        cands = _real_roots_quadratic(r1 / r2, r0 / r2)
    elif abs(r1) > _DEGREE_EPS * scale:
        cands = [-r0 / r1]
    else:
        return []

    roots = []
    for x in cands:
        if not math.isfinite(x):
            continue
        root, ok = _polish(coeffs, x, scale)
        if ok:
            roots.append(root)
    roots.sort()

    merged: list[float] = []
    for root in roots:
        if merged and abs(root - merged[-1]) <= 1e-7 * max(1.0, abs(root)):
            continue
        merged.append(root)
    return merged

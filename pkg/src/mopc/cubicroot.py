"""Largest real root of a cubic a3*r^3 + a2*r^2 + a1*r + a0.

Closed form (trigonometric when three roots are real, Cardano otherwise), then
the remaining quadratic factor is solved so that near-degenerate discriminants
cannot hide a larger root, and every candidate gets Newton polishing.
"""
from __future__ import annotations

import math
from typing import NamedTuple


class Cubic(NamedTuple):
    a3: float
    a2: float
    a1: float
    a0: float

    def __call__(self, r: float) -> float:
        return ((self.a3 * r + self.a2) * r + self.a1) * r + self.a0

    def deriv(self, r: float) -> float:
        return (3.0 * self.a3 * r + 2.0 * self.a2) * r + self.a1

    def term_scale(self, r: float) -> float:
        """Magnitude of the largest monomial at r."""
        return max(abs(self.a3 * r ** 3), abs(self.a2 * r * r), abs(self.a1 * r), abs(self.a0))


class CubicRootError(ArithmeticError):
    pass


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _polish(c: Cubic, r: float, steps: int = 6) -> float:
    best, best_res = r, abs(c(r))
    for _ in range(steps):
        d = c.deriv(r)
        if d == 0.0 or not math.isfinite(d):
            break
        r_new = r - c(r) / d
        res = abs(c(r_new))
        if not math.isfinite(r_new):
            break
        r = r_new
        if res < best_res:
            best, best_res = r, res
        elif res >= best_res:
            break
    return best


def _real_roots(c: Cubic) -> list[float]:
    b, cc, d = c.a2 / c.a3, c.a1 / c.a3, c.a0 / c.a3
    shift = b / 3.0
    p = cc - b * shift
    q = (2.0 * b * b * b) / 27.0 - b * cc / 3.0 + d
    half_q = 0.5 * q
    third_p = p / 3.0
    disc = half_q * half_q + third_p ** 3
    if p == 0.0 and q == 0.0:
        return [-shift]
    if disc <= 0.0 and p < 0.0:
        m = 2.0 * math.sqrt(-third_p)
        arg = max(-1.0, min(1.0, (3.0 * q) / (p * m)))
        phi = math.acos(arg) / 3.0
        roots = [m * math.cos(phi - 2.0 * math.pi * j / 3.0) - shift for j in range(3)]
        r0 = _polish(c, max(roots, key=abs))
    else:
        # one dominant real root; sign-stable Cardano form
        A = -_cbrt(half_q + math.copysign(math.sqrt(max(disc, 0.0)), half_q))
        B = -third_p / A if A != 0.0 else 0.0
        r0 = _polish(c, A + B - shift)
        roots = [r0]
    # deflate by the largest root: quotient r^2 + e r + f from the leading side
    # and from the constant side; one of the two avoids cancellation whichever
    # root dominates, so small roots survive a large shift
    factors = [(b + r0, cc + (b + r0) * r0)]
    if r0 != 0.0:
        f = -d / r0
        factors.append((-(cc - f) / r0, f))
    for e, f in factors:
        roots.extend(_quadratic_roots(e, f))
    return roots


def _quadratic_roots(e: float, f: float) -> list[float]:
    qd = e * e - 4.0 * f
    if qd < -1e-10 * max(e * e, abs(f), 1e-300):
        return []
    sq = math.sqrt(max(qd, 0.0))
    t = -0.5 * (e + math.copysign(sq, e))
    if t == 0.0:
        return [-0.5 * e]
    return [t, f / t]


def max_real_root(c: Cubic | tuple) -> float:
    """Largest real root of the cubic, Newton-polished."""
    c = Cubic(*map(float, c))
    if not math.isfinite(c.a3) or c.a3 == 0.0:
        raise ValueError("leading coefficient must be nonzero")
    others = max(abs(c.a2), abs(c.a1), abs(c.a0))
    if others > 0 and abs(c.a3) < 1e-300 * others:
        raise ValueError("leading coefficient is numerically zero")
    cands = sorted((_polish(c, r) for r in _real_roots(c)), reverse=True)
    # a polished candidate may coincide with a smaller root; keep the largest that solves the cubic
    for r in cands:
        if abs(c(r)) <= 1e-9 * max(1.0, c.term_scale(r)):
            return r
    return cands[0]


def breakpoint_cubic(mu: float, beta: float, s_k: float, S: float, m: int) -> Cubic:
    """mu*z*(S + m z)^2 - beta*(S + m z) - s_k expanded in z."""
    return Cubic(
        mu * m * m,
        2.0 * mu * S * m,
        mu * S * S - beta * m,
        -(beta * S + s_k),
    )


def solve_breakpoint_cubic(mu: float, beta: float, s_k: float, partial_sum_nu: float, m: int) -> float:
    """Largest zeta with mu*zeta*(S + m*zeta)^2 = beta*(S + m*zeta) + s_k, where S = partial_sum_nu.

    The total u = S + m*zeta of the returned root is strictly positive.
    """
    if not (mu > 0 and beta >= 0 and s_k > 0 and m >= 1):
        raise ValueError("need mu > 0, beta >= 0, s_k > 0, m >= 1")
    S = float(partial_sum_nu)
    if S < 0:
        # u = S + m*zeta would cancel; solve for the total u > 0 instead, then
        # zeta = (u - S)/m is a sum of positive terms
        u = _solve_total(mu, beta, s_k, S, m)
        zeta = (u - S) / m
    else:
        zeta = max_real_root(breakpoint_cubic(mu, beta, s_k, S, m))
        u = S + m * zeta
    if not (u > 0 and zeta > 0):
        raise CubicRootError(f"no admissible root (S={S}, m={m}, mu={mu}, beta={beta}, s={s_k})")
    return zeta


def _solve_total(mu: float, beta: float, s_k: float, S: float, m: int) -> float:
    # mu*u^2*(u - S) - m*(beta*u + s_k) = 0 has exactly one positive root
    return max_real_root(Cubic(mu, -mu * S, -m * beta, -m * s_k))

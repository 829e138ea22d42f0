"""Per-flow x-subproblems and the y-subproblems of the two ADMM variants.

The x-subproblem for flow k is

    min_{x >= 0, ||x||_0 <= w}  -U(sum(x)) + mu/2 ||x - nu||^2 .

Without an effective cap its solution is x_i = max(0, nu_i + zeta) with
mu*zeta = U'(sum_i max(0, nu_i + zeta)). A cap w keeps only the w largest
entries of nu, and w = 1 reduces to one cubic on the argmax entry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .cubicroot import Cubic, max_real_root, solve_breakpoint_cubic
from .utility import UtilityParams

T_XATOL = 1e-8
T_MAXEVAL = 500


@dataclass(frozen=True)
class ProxInput:
    nu_k: np.ndarray
    mu: float
    params: UtilityParams
    w_k: int

    def __post_init__(self):
        nu = np.asarray(self.nu_k, dtype=float)
        object.__setattr__(self, "nu_k", nu)
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 1 <= self.w_k <= nu.size:
            raise ValueError(f"cardinality cap {self.w_k} outside [1, {nu.size}]")


@dataclass(frozen=True)
class YProxInput:
    theta: np.ndarray
    capacities: np.ndarray
    alpha: float
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if np.any(np.asarray(self.capacities) <= 0):
            raise ValueError("capacities must be positive")


def breakpoint_zeta(nu_desc: np.ndarray, mu: float, beta: float, s: float) -> tuple[float, int]:
    """Threshold zeta for entries sorted in descending order, and the number m of active entries.

    Scans candidates zeta = -nu_i (i >= 2) for the first sign change of
    mu*zeta - U'(sum_j max(0, nu_j + zeta)); the root lies in the bracket
    ending there, where exactly the first m entries are positive.
    """
    n = nu_desc.size
    cs = np.cumsum(nu_desc)
    m = n
    if n > 1:
        idx = np.arange(1, n)
        cand = nu_desc[1:]
        total = cs[:-1] - idx * cand
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = np.where(total > 0, beta / total + s / (total * total), np.inf)
        hit = np.flatnonzero(-mu * cand >= grad)
        if hit.size:
            m = int(hit[0]) + 1
    zeta = solve_breakpoint_cubic(mu, beta, s, float(cs[m - 1]), m)
    return zeta, m


def _prox_uncapped(nu: np.ndarray, mu: float, beta: float, s: float) -> np.ndarray:
    order = np.argsort(-nu, kind="stable")
    zeta, _ = breakpoint_zeta(nu[order], mu, beta, s)
    return np.maximum(0.0, nu + zeta)


def _prox_one(nu: np.ndarray, mu: float, beta: float, s: float) -> np.ndarray:
    i = int(np.argmax(nu))  # lowest index among ties
    out = np.zeros_like(nu)
    out[i] = max_real_root(Cubic(mu, -mu * nu[i], -beta, -s))
    return out


def _prox_capped(nu: np.ndarray, mu: float, beta: float, s: float, w: int) -> np.ndarray:
    order = np.argsort(-nu, kind="stable")
    top = order[:w]
    zeta, _ = breakpoint_zeta(nu[top], mu, beta, s)
    out = np.zeros_like(nu)
    out[top] = np.maximum(0.0, nu[top] + zeta)
    return out


def prox_block(nu: np.ndarray, mu: float, beta: float, s: float, w: int) -> np.ndarray:
    """Dispatch on the cap as in the MOPC x-update: w = 1, 1 < w < P, w = P."""
    P = nu.size
    if w == 1:
        return _prox_one(nu, mu, beta, s)
    if w < P:
        return _prox_capped(nu, mu, beta, s, w)
    return _prox_uncapped(nu, mu, beta, s)


def prox_no_card(inp: ProxInput) -> np.ndarray:
    if inp.w_k != inp.nu_k.size:
        raise ValueError("prox_no_card requires w_k = P_k")
    return _prox_uncapped(inp.nu_k, inp.mu, inp.params.beta, inp.params.s_k)


def prox_card_one(inp: ProxInput) -> np.ndarray:
    if inp.w_k != 1:
        raise ValueError("prox_card_one requires w_k = 1")
    return _prox_one(inp.nu_k, inp.mu, inp.params.beta, inp.params.s_k)


def prox_card_w(inp: ProxInput) -> np.ndarray:
    if not 1 < inp.w_k < inp.nu_k.size:
        raise ValueError("prox_card_w requires 1 < w_k < P_k")
    return _prox_capped(inp.nu_k, inp.mu, inp.params.beta, inp.params.s_k, inp.w_k)


def prox_objective(x: np.ndarray, nu: np.ndarray, mu: float, params: UtilityParams) -> float:
    """-U(sum x) + mu/2 ||x - nu||^2 (infinite when sum x <= 0)."""
    t = float(np.sum(x))
    if not t > 0:
        return np.inf
    d = x - nu
    return -(params.beta * np.log(t) - params.s_k / t) + 0.5 * mu * float(d @ d)


# --- y-subproblems -------------------------------------------------------------------------


def project_y_num(theta, c) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c = np.asarray(c, dtype=float)
    if theta.shape != c.shape:
        raise ValueError("theta and c must have the same length")
    return np.minimum(theta, c)


def y_of_t(theta: np.ndarray, c: np.ndarray, t: float) -> np.ndarray:
    return np.clip(theta, 0.0, min(t, 1.0) * c)


def phi(t: float, theta: np.ndarray, c: np.ndarray, alpha: float, rho: float) -> float:
    d = y_of_t(theta, c, t) - theta
    return alpha * t + 0.5 * rho * float(d @ d)


def _piece_minimizer(t: float, theta: np.ndarray, c: np.ndarray, alpha: float, rho: float) -> float:
    # on the piece where {l : theta_l > t c_l} is fixed, Phi is a quadratic in t
    act = theta > t * c
    ca = c[act]
    denom = rho * float(ca @ ca)
    if denom == 0.0:
        return float(np.max(np.maximum(theta, 0.0) / c).clip(0.0, 1.0))
    return min(1.0, max(0.0, (rho * float(ca @ theta[act]) - alpha) / denom))


def solve_y_mopc(inp: YProxInput) -> tuple[float, np.ndarray]:
    """Minimize alpha*max(y/c) + rho/2 ||y - theta||^2 over 0 <= y <= c.

    Reduces to the scalar convex function Phi(t) on [0, 1]; Brent's bounded
    search (golden section with parabolic steps) locates t, then the exact
    minimizer of the quadratic piece containing it is taken when it is better.
    """
    theta = np.asarray(inp.theta, dtype=float)
    c = np.asarray(inp.capacities, dtype=float)
    alpha, rho = float(inp.alpha), float(inp.rho)
    if alpha == 0.0:
        y = np.clip(theta, 0.0, c)
        return float(np.max(y / c)), y
    f = lambda t: phi(t, theta, c, alpha, rho)  # noqa: E731
    res = minimize_scalar(f, bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": T_XATOL, "maxiter": T_MAXEVAL})
    best_t, best_f = float(res.x), float(res.fun)
    cands = [0.0, 1.0]
    t = best_t
    for _ in range(3):
        t = _piece_minimizer(t, theta, c, alpha, rho)
        cands.append(t)
    for t in cands:
        v = f(t)
        if v < best_f or (v == best_f and t < best_t):
            best_t, best_f = t, v
    return best_t, y_of_t(theta, c, best_t)

"""Per-flow utility U(t) = beta*log(t) - s/t, its derivative, and Lagrangian evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityParams:
    beta: float
    s_k: float

    def __post_init__(self):
        # beta = 0 is admitted here so the prox layer can be exercised on the pure delay utility
        if not self.beta >= 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        if not self.s_k > 0:
            raise DomainError(f"flow size must be positive, got {self.s_k}")


def utility_value(p: UtilityParams, t: float) -> float:
    if not t > 0:
        raise DomainError(f"utility undefined at t={t}")
    return p.beta * math.log(t) - p.s_k / t


def utility_grad(p: UtilityParams, t: float) -> float:
    if not t > 0:
        raise DomainError(f"utility derivative undefined at t={t}")
    return p.beta / t + p.s_k / (t * t)


def neg_utility_sum(instance: ProblemInstance, x: np.ndarray) -> float:
    """sum_k -U_k(||x_k||_1), with the 1-norm taken as a plain sum."""
    sums = instance.flow_sums(x)
    bad = np.flatnonzero(~(sums > 0))
    if bad.size:
        raise DomainError(f"x: flow index {int(bad[0])} has zero total rate")
    return float(np.sum(instance.flow_sizes / sums - instance.beta * np.log(sums)))


def objective(instance: ProblemInstance, x: np.ndarray, kind: str) -> float:
    """NUM objective, or MOPC objective with the worst-case utilization term."""
    val = neg_utility_sum(instance, x)
    if kind == "mopc":
        val += instance.alpha * float(np.max((instance.routing @ x) / instance.capacities))
    return val


def augmented_lagrangian(instance: ProblemInstance, x, y, z, rho: float, kind: str,
                         *, check: bool = True) -> float:
    """Augmented Lagrangian of the split problem y = Rx.

    Indicator terms are enforced as preconditions: x >= 0, and y <= c (NUM) or
    0 <= y <= c (MOPC). ``kind`` is "num" or "mopc".
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if kind not in ("num", "mopc"):
        raise ValueError(f"unknown problem kind {kind!r}")
    if check:
        if np.any(x < 0):
            raise DomainError("x: outside the nonnegative orthant")
        c = instance.capacities
        if np.any(y > c * (1 + 1e-12)):
            raise DomainError("y: outside the capacity set y <= c")
        if kind == "mopc" and np.any(y < 0):
            raise DomainError("y: outside the box 0 <= y <= c")
    r = y - instance.routing @ x
    val = neg_utility_sum(instance, x)
    if kind == "mopc":
        val += instance.alpha * float(np.max(y / instance.capacities))
    return val + float(z @ r) + 0.5 * rho * float(r @ r)

"""Seeded synthetic instances shaped like a backbone WAN dataset.

Each aggregate flow is the sum of N sub-flows whose sizes come from a
log-normal, Pareto or user-supplied empirical distribution. Paths are random
simple link lists; nothing about the topology is meant to be realistic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import InstanceError, ProblemInstance

DISTRIBUTIONS = ("lognormal", "pareto", "empirical")


class GenConfigError(ValueError):
    pass


def load_empirical_cdf(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (value, cumulative probability) table, comma or whitespace separated."""
    text = Path(path).read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise GenConfigError(f"empirical CDF: expected two columns, got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            if rows:
                raise GenConfigError(f"empirical CDF: bad row {line!r}") from None
            continue  # header
    table = np.array(rows, dtype=float)
    return _check_cdf(table[:, 0], table[:, 1]) if table.size else _check_cdf(np.empty(0), np.empty(0))


def _check_cdf(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if values.size < 2:
        raise GenConfigError("empirical CDF needs at least two points")
    if np.any(np.diff(values) < 0) or np.any(np.diff(probs) < 0):
        raise GenConfigError("empirical CDF must be nondecreasing in both columns")
    if probs[0] < 0 or probs[-1] != 1.0:
        raise GenConfigError("empirical CDF probabilities must lie in [0, 1] and end at 1")
    if values[0] <= 0:
        raise GenConfigError("sub-flow sizes must be positive")
    return values, probs


@dataclass(frozen=True)
class GenConfig:
    num_flows: int = 20
    num_links: int = 40
    paths_per_flow: tuple[int, int] = (4, 100)
    capacity_range: tuple[float, float] = (1.024e9, 2.048e11)  # bits/sec
    path_length: tuple[int, int] = (2, 6)
    subflow_count: tuple[int, int] = (1_000, 10_000)
    distribution: str = "lognormal"
    lognormal_median: float = 1e6  # bits
    lognormal_sigma: float = 1.5
    pareto_shape: float = 1.5
    pareto_scale: float = 2e5  # bits
    empirical_cdf: tuple | None = None  # (values, probs)
    cap_choices: tuple[int, ...] = (1, 2, 3)
    cap_weights: tuple[float, ...] | None = None
    target_total_paths: int | None = None
    alpha: float = 500.0
    beta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.paths_per_flow
        if not 1 <= lo <= hi:
            raise GenConfigError("paths_per_flow must satisfy 1 <= p_min <= p_max")
        clo, chi = self.capacity_range
        if not 0 < clo <= chi:
            raise GenConfigError("capacity range must be positive and nonempty")
        a, b = self.path_length
        if not 1 <= a <= b:
            raise GenConfigError("path length range must satisfy 1 <= min <= max")
        if b > self.num_links:
            raise GenConfigError(f"path length {b} exceeds the number of links {self.num_links}")
        n0, n1 = self.subflow_count
        if not 1 <= n0 <= n1:
            raise GenConfigError("sub-flow count range must satisfy 1 <= min <= max")
        if self.num_flows < 1 or self.num_links < 1:
            raise GenConfigError("need at least one flow and one link")
        if self.distribution not in DISTRIBUTIONS:
            raise GenConfigError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.distribution == "empirical":
            if self.empirical_cdf is None:
                raise GenConfigError("empirical distribution needs an empirical_cdf table")
            v, p = (np.asarray(a, dtype=float) for a in self.empirical_cdf)
            _check_cdf(v, p)
        if not self.cap_choices or min(self.cap_choices) < 1:
            raise GenConfigError("cardinality cap choices must be positive integers")
        if self.cap_weights is not None:
            w = np.asarray(self.cap_weights, dtype=float)
            if w.shape != (len(self.cap_choices),) or np.any(w < 0) or w.sum() <= 0:
                raise GenConfigError("cap_weights must be nonnegative, one per choice")
        if self.target_total_paths is not None:
            t = self.target_total_paths
            if not self.num_flows * lo <= t <= self.num_flows * hi:
                raise GenConfigError("target_total_paths outside the attainable range")
        for name in ("lognormal_median", "lognormal_sigma", "pareto_shape", "pareto_scale"):
            if not getattr(self, name) > 0:
                raise GenConfigError(f"{name} must be positive")


def wan_scale() -> GenConfig:
    """Dimensions of the reference WAN (P_k skewed so that the total is near 19751)."""
    return GenConfig(num_flows=561, num_links=460, target_total_paths=19_751)


def desk_scale(seed: int = 0, **kw) -> GenConfig:
    """Small instances that solve in about a second."""
    base = dict(num_flows=8, num_links=16, paths_per_flow=(4, 10), path_length=(1, 4),
                subflow_count=(1_000, 10_000), seed=seed)
    base.update(kw)
    return GenConfig(**base)


def _path_counts(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    lo, hi = cfg.paths_per_flow
    K = cfg.num_flows
    if cfg.target_total_paths is None:
        return rng.integers(lo, hi + 1, size=K)
    # skew a uniform draw by a power so the total lands near the target
    u = rng.random(K)
    target = cfg.target_total_paths

    def counts(a):
        return np.clip(np.floor(lo + (hi - lo + 1) * u ** a), lo, hi).astype(np.int64)

    a_lo, a_hi = 1e-3, 1e3
    for _ in range(200):
        mid = np.sqrt(a_lo * a_hi)
        if counts(mid).sum() > target:
            a_lo = mid
        else:
            a_hi = mid
    best = min((counts(a_lo), counts(a_hi)), key=lambda c: abs(int(c.sum()) - target))
    return best


def _draw_subflows(cfg: GenConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if cfg.distribution == "lognormal":
        return rng.lognormal(np.log(cfg.lognormal_median), cfg.lognormal_sigma, n)
    if cfg.distribution == "pareto":
        return cfg.pareto_scale * (1.0 + rng.pareto(cfg.pareto_shape, n))
    values, probs = (np.asarray(a, dtype=float) for a in cfg.empirical_cdf)
    return sample_empirical(values, probs, rng.random(n))


def sample_empirical(values: np.ndarray, probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling with linear interpolation between table points."""
    return np.interp(u, probs, values)


def _random_paths(cfg: GenConfig, rng: np.random.Generator, count: int) -> list[list[int]]:
    a, b = cfg.path_length
    seen: set[frozenset] = set()
    out = []
    for _ in range(count):
        for _attempt in range(1000):
            length = int(rng.integers(a, b + 1))
            p = [int(v) for v in rng.choice(cfg.num_links, size=length, replace=False)]
            key = frozenset(p)
            if key not in seen:
                break
        else:
            raise GenConfigError("could not draw distinct paths; widen the path length range or add links")
        seen.add(key)
        out.append(p)
    return out


def generate_instance(cfg: GenConfig) -> ProblemInstance:
    rng = np.random.default_rng(cfg.seed)
    K = cfg.num_flows
    clo, chi = cfg.capacity_range
    caps = np.exp(rng.uniform(np.log(clo), np.log(chi), cfg.num_links))
    counts = _path_counts(cfg, rng)
    paths = [_random_paths(cfg, rng, int(n)) for n in counts]
    n0, n1 = cfg.subflow_count
    sizes = np.array([_draw_subflows(cfg, rng, int(rng.integers(n0, n1 + 1))).sum() for _ in range(K)])
    weights = None
    if cfg.cap_weights is not None:
        weights = np.asarray(cfg.cap_weights, dtype=float)
        weights = weights / weights.sum()
    w = rng.choice(np.asarray(cfg.cap_choices), size=K, p=weights)
    w = np.minimum(w, counts)  # a cap cannot exceed the path count
    try:
        return ProblemInstance(capacities=caps, flow_sizes=sizes, cardinality_caps=w, paths=paths,
                               alpha=cfg.alpha, beta=cfg.beta)
    except InstanceError as exc:
        raise GenConfigError(f"generated an invalid instance: {exc}") from exc

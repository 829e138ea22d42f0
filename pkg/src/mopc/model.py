"""Instance data model, file I/O, routing-matrix helpers and performance metrics.

An instance holds K flows over L directed links. Flow k owns P_k candidate
paths, each a list of link indices. The routing matrix R (L x P) has a one at
(l, i) iff global path i traverses link l; columns of flow k form a contiguous
block, so an allocation vector x of length P splits into per-flow blocks x_k.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import jsonschema
import numpy as np
import scipy.sparse as sp

FORMAT_NAME = "mopc-instance"
FORMAT_VERSION = 1
UNITS = {"capacity": "bits/sec", "size": "bits"}


class InstanceError(ValueError):
    """Raised when an instance fails to parse or violates a model invariant."""


class DuplicatePathWarning(UserWarning):
    pass


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Validated, immutable MOPC/NUM instance.

    ``paths[k][i]`` lists the link indices (0-based rows of R) of path i of
    flow k. Capacities are in bits/sec, flow sizes in bits.
    """

    capacities: np.ndarray
    flow_sizes: np.ndarray
    cardinality_caps: np.ndarray
    paths: tuple
    alpha: float = 500.0
    beta: float = 0.05
    link_ids: tuple = ()
    flow_ids: tuple = ()
    routing: sp.csr_matrix = field(init=False, repr=False)
    routing_t: sp.csr_matrix = field(init=False, repr=False)
    paths_per_flow: np.ndarray = field(init=False)
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        paths = tuple(tuple(tuple(int(l) for l in p) for p in flow) for flow in self.paths)
        set_(self, "paths", paths)
        set_(self, "capacities", _frozen(self.capacities, float))
        set_(self, "flow_sizes", _frozen(self.flow_sizes, float))
        set_(self, "cardinality_caps", _frozen(self.cardinality_caps, np.int64))
        set_(self, "alpha", float(self.alpha))
        set_(self, "beta", float(self.beta))
        L, K = self.capacities.size, len(paths)
        if not self.link_ids:
            set_(self, "link_ids", tuple(range(1, L + 1)))
        if not self.flow_ids:
            set_(self, "flow_ids", tuple(range(1, K + 1)))
        set_(self, "link_ids", tuple(self.link_ids))
        set_(self, "flow_ids", tuple(self.flow_ids))
        self._validate()

        ppf = _frozen([len(f) for f in paths], np.int64)
        offsets = _frozen(np.concatenate([[0], np.cumsum(ppf)]), np.int64)
        rows, cols = [], []
        col = 0
        for flow in paths:
            for p in flow:
                rows.extend(p)
                cols.extend([col] * len(p))
                col += 1
        R = sp.csr_matrix(
            (np.ones(len(rows)), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
            shape=(L, col),
        )
        R.sort_indices()
        set_(self, "paths_per_flow", ppf)
        set_(self, "offsets", offsets)
        set_(self, "routing", R)
        set_(self, "routing_t", R.T.tocsr())

    def _validate(self):
        L, K = self.capacities.size, len(self.paths)
        if L < 1:
            raise InstanceError("links: at least one link is required")
        if K < 1:
            raise InstanceError("flows: at least one flow is required")
        if self.capacities.ndim != 1:
            raise InstanceError("capacities: must be a vector")
        if self.flow_sizes.shape != (K,):
            raise InstanceError(f"flow_sizes: expected {K} entries, got {self.flow_sizes.size}")
        if self.cardinality_caps.shape != (K,):
            raise InstanceError(f"cardinality_caps: expected {K} entries, got {self.cardinality_caps.size}")
        if len(self.link_ids) != L or len(set(self.link_ids)) != L:
            raise InstanceError("links: ids must be unique, one per link")
        if len(self.flow_ids) != K or len(set(self.flow_ids)) != K:
            raise InstanceError("flows: ids must be unique, one per flow")
        for l, c in enumerate(self.capacities):
            if not (math.isfinite(c) and c > 0):
                raise InstanceError(f"capacities[{l}]: capacity must be positive and finite, got {c}")
        for k, s in enumerate(self.flow_sizes):
            if not (math.isfinite(s) and s > 0):
                raise InstanceError(f"flow_sizes[{k}]: size must be positive and finite, got {s}")
        for k, flow in enumerate(self.paths):
            if len(flow) == 0:
                raise InstanceError(f"paths[{k}]: flow has no paths")
            w = int(self.cardinality_caps[k])
            if w < 1:
                raise InstanceError(f"cardinality_caps[{k}]: cap must be at least 1, got {w}")
            if w > len(flow):
                raise InstanceError(
                    f"cardinality_caps[{k}]: cardinality cap exceeds path count ({w} > {len(flow)})"
                )
            seen = set()
            for i, p in enumerate(flow):
                if len(p) == 0:
                    raise InstanceError(f"paths[{k}][{i}]: path traverses no link")
                if len(set(p)) != len(p):
                    raise InstanceError(f"paths[{k}][{i}]: path repeats a link")
                for l in p:
                    if not 0 <= l < L:
                        raise InstanceError(f"paths[{k}][{i}]: unknown link index {l}")
                key = frozenset(p)
                if key in seen:
                    warnings.warn(
                        f"flow {self.flow_ids[k]!r} path {i} duplicates the link set of an earlier path",
                        DuplicatePathWarning,
                        stacklevel=4,
                    )
                seen.add(key)
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise InstanceError(f"alpha: load weight must be nonnegative, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InstanceError(f"beta: fairness weight must be positive, got {self.beta}")

    @property
    def num_flows(self) -> int:
        return len(self.paths)

    @property
    def num_links(self) -> int:
        return int(self.capacities.size)

    @property
    def total_paths(self) -> int:
        return int(self.offsets[-1])

    def block(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def flow_index(self) -> np.ndarray:
        """Flow index of every global path (length P)."""
        return np.repeat(np.arange(self.num_flows), self.paths_per_flow)

    @property
    def is_uncapped(self) -> bool:
        """True when every cardinality cap equals its path count (the convex case)."""
        return bool(np.all(self.cardinality_caps == self.paths_per_flow))

    def replace(self, **changes) -> "ProblemInstance":
        keep = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}
        keep.update(changes)
        return ProblemInstance(**keep)

    def flow_sums(self, x: np.ndarray) -> np.ndarray:
        """Per-flow totals sum_i x_{k,i}."""
        return np.add.reduceat(x, self.offsets[:-1]) if x.size else np.zeros(self.num_flows)


@dataclass(frozen=True)
class Allocation:
    """Rate vector x (bits/sec), viewable per flow."""

    x: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        if x.size != int(self.offsets[-1]):
            raise ValueError("allocation length does not match the flow partition")
        if np.any(x < 0):
            raise ValueError("allocation must be nonnegative")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @classmethod
    def for_instance(cls, instance: ProblemInstance, x) -> "Allocation":
        return cls(np.maximum(np.asarray(x, dtype=float), 0.0), instance.offsets)

    def block(self, k: int) -> np.ndarray:
        return self.x[self.offsets[k]:self.offsets[k + 1]]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(k) for k in range(len(self.offsets) - 1)]

    def support_sizes(self) -> np.ndarray:
        return np.array([int(np.count_nonzero(b)) for b in self.blocks()])


@dataclass(frozen=True)
class Metrics:
    delay: float
    fairness: float
    load: float
    obj: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


class ZeroRateError(ValueError):
    pass


def compute_metrics(instance: ProblemInstance, x) -> Metrics:
    """Total completion time, proportional fairness, worst link utilization and objective."""
    x = x.x if isinstance(x, Allocation) else np.asarray(x, dtype=float)
    sums = instance.flow_sums(x)
    for k, t in enumerate(sums):
        if not t > 0:
            raise ZeroRateError(f"flow {instance.flow_ids[k]!r} (index {k}) has zero total rate")
    delay = float(np.sum(instance.flow_sizes / sums))
    fairness = float(instance.beta * np.sum(np.log(sums)))
    load = float(np.max((instance.routing @ x) / instance.capacities))
    obj = delay - fairness + instance.alpha * load
    return Metrics(delay, fairness, load, obj)


def cardinality_ok(instance: ProblemInstance, x) -> bool:
    x = x.x if isinstance(x, Allocation) else np.asarray(x)
    nnz = np.add.reduceat((x > 0).astype(np.int64), instance.offsets[:-1])
    return bool(np.all(nnz <= instance.cardinality_caps))


# --- spectral norm -------------------------------------------------------------------------


class NormEstimate(NamedTuple):
    value: float
    iterations: int
    converged: bool


def estimate_spectral_norm_sq(R, *, tol: float = 1e-13, max_iter: int = 10_000, seed: int = 0) -> NormEstimate:
    """Power iteration on R^T R from a fixed positive start vector.

    Returns the Rayleigh quotient estimate of ||R||_2^2. If the iteration cap is
    reached the squared Frobenius norm (an upper bound) is returned instead and
    ``converged`` is False.
    """
    if R.shape[0] == 0 or R.shape[1] == 0:
        raise ValueError("spectral norm of an empty matrix")
    R = sp.csr_matrix(R)
    Rt = R.T.tocsr()
    v = np.random.default_rng(seed).uniform(0.5, 1.5, R.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    streak = 0
    for it in range(1, max_iter + 1):
        w = Rt @ (R @ v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return NormEstimate(0.0, it, True)
        v = w / nw
        if abs(lam_new - lam) <= tol * lam_new:
            streak += 1
            if streak >= 3:
                return NormEstimate(lam_new, it, True)
        else:
            streak = 0
        lam = lam_new
    return NormEstimate(float(R.multiply(R).sum()), max_iter, False)


def spectral_norm_sq(R) -> float:
    est = estimate_spectral_norm_sq(R)
    if not est.converged:
        warnings.warn("power iteration did not converge; using the Frobenius bound", RuntimeWarning)
    return est.value


# --- capacity normalisation ----------------------------------------------------------------


def normalize(instance: ProblemInstance, scale: float | None = None) -> tuple[ProblemInstance, float]:
    """Rescale rates by ``scale`` (default: the largest capacity).

    Under x = scale * x_hat the objective changes only by the constant
    K * beta * log(scale) when sizes are divided by the same factor, so the
    solvers work on O(1) numbers and map results back.
    """
    if scale is None:
        scale = float(np.max(instance.capacities))
    return (
        instance.replace(
            capacities=instance.capacities / scale,
            flow_sizes=instance.flow_sizes / scale,
        ),
        float(scale),
    )


# --- file I/O ------------------------------------------------------------------------------


def _schema() -> dict:
    return json.loads(resources.files("mopc").joinpath("instance.schema.json").read_text())


def instance_to_dict(instance: ProblemInstance) -> dict:
    lid = instance.link_ids
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "units": dict(UNITS),
        "links": [
            {"id": lid[l], "capacity_bps": float(c)} for l, c in enumerate(instance.capacities)
        ],
        "flows": [
            {
                "id": instance.flow_ids[k],
                "size_bits": float(instance.flow_sizes[k]),
                "cardinality_cap": int(instance.cardinality_caps[k]),
                "paths": [[lid[l] for l in p] for p in flow],
            }
            for k, flow in enumerate(instance.paths)
        ],
        "weights": {"alpha": instance.alpha, "beta": instance.beta},
    }


def instance_from_dict(doc: Any) -> ProblemInstance:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InstanceError(f"{where}: {exc.message}") from None
    link_ids = tuple(l["id"] for l in doc["links"])
    index = {lid: l for l, lid in enumerate(link_ids)}
    if len(index) != len(link_ids):
        raise InstanceError("links: duplicate link id")
    paths = []
    for k, f in enumerate(doc["flows"]):
        flow = []
        for i, p in enumerate(f["paths"]):
            try:
                flow.append([index[lid] for lid in p])
            except KeyError as exc:
                raise InstanceError(f"flows[{k}].paths[{i}]: unknown link id {exc.args[0]!r}") from None
        paths.append(flow)
    return ProblemInstance(
        capacities=[l["capacity_bps"] for l in doc["links"]],
        flow_sizes=[f["size_bits"] for f in doc["flows"]],
        cardinality_caps=[f["cardinality_cap"] for f in doc["flows"]],
        paths=paths,
        alpha=doc["weights"]["alpha"],
        beta=doc["weights"]["beta"],
        link_ids=link_ids,
        flow_ids=tuple(f["id"] for f in doc["flows"]),
    )


def dumps_instance(instance: ProblemInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def save_instance(instance: ProblemInstance, path) -> None:
    Path(path).write_text(dumps_instance(instance))


def load_instance(path) -> ProblemInstance:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error: {exc}") from None
    return instance_from_dict(doc)


# --- solve reports -------------------------------------------------------------------------


@dataclass
class TraceRecord:
    iter: int
    rho: float
    mu: float
    p_res: float
    d_res: float
    y_dif: float
    vio: float
    L_rho: float
    obj: float
    gap: float = math.nan


@dataclass
class SolveReport:
    """Outcome of one solver run. Vectors are in the instance's own units."""

    scheme: str
    kind: str
    final: Allocation
    y_final: np.ndarray
    z_final: np.ndarray
    trace: list[TraceRecord]
    status: str
    metrics: Metrics | None
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    # the fifth trace column depends on the solver kind
    @property
    def residual_column(self) -> str:
        return {"convex": "d_res", "nonconvex": "y_dif", "fw": "gap"}[self.kind]

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "kind": self.kind,
            "status": self.status,
            "message": self.message,
            "iterations": self.iterations,
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "x": self.final.x.tolist(),
            "y": np.asarray(self.y_final).tolist(),
            "z": np.asarray(self.z_final).tolist(),
            "extras": _jsonable(self.extras),
        }


TRACE_COLUMNS = ("iter", "rho", "mu", "p_res", "{res}", "vio", "L_rho", "obj")


def trace_columns(kind: str) -> list[str]:
    res = {"convex": "d_res", "nonconvex": "y_dif", "fw": "gap"}[kind]
    return [c.format(res=res) for c in TRACE_COLUMNS]


def trace_rows(report: SolveReport) -> list[list]:
    col = report.residual_column
    return [
        [r.iter, r.rho, r.mu, r.p_res, getattr(r, col), r.vio, r.L_rho, r.obj]
        for r in report.trace
    ]


def write_trace(report: SolveReport, path) -> None:
    """Delimited trace: iter, rho, mu, p_res, d_res|y_dif|gap, vio, L_rho, obj."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_columns(report.kind))
    for row in trace_rows(report):
        w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    Path(path).write_text(buf.getvalue())


def read_trace(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def example_network(capacities: Sequence[float] = (10.0, 10.0, 10.0, 10.0, 10.0), **kw) -> ProblemInstance:
    """The five-link, two-flow example network (links numbered 1..5)."""
    paths = [[[0, 1], [2]], [[2, 4], [3]]]
    kw.setdefault("cardinality_caps", [2, 2])
    kw.setdefault("flow_sizes", [1.0, 1.0])
    return ProblemInstance(capacities=capacities, paths=paths, **kw)

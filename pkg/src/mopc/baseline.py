"""Conditional-gradient baselines on the linear relaxation of the path caps.

The relaxed problem over (x, t) is

    min  -sum_k U_k(sum_i x_{k,i}) + alpha * t
    s.t. Rx <= t c,   sum_i x_{k,i} / chat_{k,i} <= w_k,   x >= 0,   0 <= t <= 1,

with chat_{k,i} the bottleneck capacity of path i of flow k. Dropping the
cardinality rows gives the convex MOPC problem itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import (
    Allocation,
    ProblemInstance,
    SolveReport,
    TraceRecord,
    compute_metrics,
    normalize,
)
from .utility import objective


class SimplexError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RelaxedInstance:
    base: ProblemInstance
    bottleneck_caps: np.ndarray
    cardinality: bool = True


def bottleneck_capacities(instance: ProblemInstance) -> np.ndarray:
    c = instance.capacities
    return np.array([min(c[l] for l in p) for flow in instance.paths for p in flow], dtype=float)


def build_relaxed(instance: ProblemInstance, cardinality: bool = True) -> RelaxedInstance:
    chat = bottleneck_capacities(instance)
    chat.setflags(write=False)
    return RelaxedInstance(instance, chat, cardinality)


# --- linear minimization oracle ------------------------------------------------------------


class DenseSimplex:
    """Primal simplex for  min c^T v  s.t.  A v <= b, v >= 0  with b >= 0.

    The slack basis is feasible, so no phase one is needed. Pricing is
    Dantzig's rule until the first degenerate pivot, after which Bland's rule
    is used for the rest of the solve. The tableau is rebuilt from the basis
    every 50 pivots, and a basis is accepted only after a fresh factorisation
    confirms it is optimal. The final basis warm-starts the next cost vector.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, tol: float = 1e-11, pivot_tol: float = 1e-9):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(b < 0):
            raise ValueError("right-hand side must be nonnegative")
        self.m, self.n = A.shape
        self.full = np.hstack([A, np.eye(self.m)])
        self.b = b
        self.tol = tol
        self.pivot_tol = pivot_tol  # relative to the largest entry of the entering column
        self.basis = np.arange(self.n, self.n + self.m)
        self.pivots = 0
        self._verified = None  # (basis bytes, tableau, rhs) of the last accepted basis

    def _tableau(self, basis):
        if self._verified is not None and self._verified[0] == basis.tobytes():
            return self._verified[1].copy(), self._verified[2].copy()
        if np.array_equal(basis, np.arange(self.n, self.n + self.m)):
            return self.full.copy(), self.b.copy()
        try:
            B = self.full[:, basis]
            T = np.linalg.solve(B, self.full)
            rhs = np.linalg.solve(B, self.b)
        except np.linalg.LinAlgError:
            return None
        if np.any(rhs < -1e-9) or not np.all(np.isfinite(T)):
            return None
        np.maximum(rhs, 0.0, out=rhs)
        return T, rhs

    def solve(self, cost: np.ndarray) -> tuple[np.ndarray, float]:
        cost = np.asarray(cost, dtype=float)
        cfull = np.concatenate([cost, np.zeros(self.m)])
        scale = max(1.0, float(np.max(np.abs(cost))))
        tol = self.tol * scale
        basis = self.basis.copy()
        budget = 50 * (self.m + self.n) + 1000
        bland, rejected = False, 0
        while True:
            tab = self._tableau(basis)
            if tab is None:
                basis = np.arange(self.n, self.n + self.m)
                tab = self._tableau(basis)
            T, rhs = tab
            basis, budget, bland, done = self._pivot(T, rhs, basis, cfull, tol, budget, bland)
            if not done:
                continue
            # accept only what a fresh factorisation of the basis confirms
            self._verified = None
            fresh = self._tableau(basis)
            if fresh is not None:
                T, rhs = fresh
                red = cfull - cfull[basis] @ T
                red[basis] = 0.0
                if not np.any(red < -tol):
                    self._verified = (basis.tobytes(), T, rhs)
                    break
            rejected += 1
            if rejected > 3:
                raise SimplexError("simplex failed to reach a verified optimal basis")
        self.basis = basis
        v = np.zeros(self.n + self.m)
        v[basis] = rhs
        v = v[: self.n]
        return v, float(cost @ v)

    def _pivot(self, T, rhs, basis, cfull, tol, budget, bland, refactor_every: int = 50):
        """Pivot in place until optimal, out of budget, or due for a refactorisation.

        Dantzig pricing switches to Bland's rule at the first degenerate pivot
        and the flag survives refactorisations, so cycling is impossible.
        """
        red = cfull - cfull[basis] @ T
        for count in range(budget):
            if count and count % refactor_every == 0:
                return basis, budget - count, bland, False
            neg = red < -tol
            neg[basis] = False
            if not neg.any():
                return basis, budget - count, bland, True
            j = int(np.flatnonzero(neg)[0]) if bland else int(np.argmin(np.where(neg, red, 0.0)))
            col = T[:, j]
            rows = np.flatnonzero(col > self.pivot_tol * max(1.0, float(np.max(np.abs(col)))))
            if rows.size == 0:
                raise SimplexError("linear program is unbounded")
            ratios = rhs[rows] / col[rows]
            rmin = ratios.min()
            ties = rows[ratios <= rmin + 1e-12 * max(1.0, rmin)]
            if bland:
                p = int(ties[np.argmin(basis[ties])])
            else:
                p = int(ties[np.argmax(col[ties])])
            if rmin <= 1e-12:
                bland = True
            piv = T[p, j]
            T[p] /= piv
            rhs[p] /= piv
            others = np.flatnonzero(T[:, j])
            others = others[others != p]
            f = T[others, j].copy()
            T[others] -= np.outer(f, T[p])
            rhs[others] -= f * rhs[p]
            np.maximum(rhs, 0.0, out=rhs)
            red -= red[j] * T[p]
            basis[p] = j
            self.pivots += 1
        raise SimplexError("simplex iteration limit reached")


def _constraints(relaxed: RelaxedInstance) -> tuple[np.ndarray, np.ndarray]:
    inst = relaxed.base
    L, P, K = inst.num_links, inst.total_paths, inst.num_flows
    rows = [np.hstack([inst.routing.toarray(), -inst.capacities[:, None]])]
    rhs = [np.zeros(L)]
    if relaxed.cardinality:
        card = np.zeros((K, P + 1))
        fi = inst.flow_index()
        card[fi, np.arange(P)] = 1.0 / relaxed.bottleneck_caps
        rows.append(card)
        rhs.append(inst.cardinality_caps.astype(float))
    top = np.zeros((1, P + 1))
    top[0, P] = 1.0
    rows.append(top)
    rhs.append(np.ones(1))
    return np.vstack(rows), np.concatenate(rhs)


class LinearOracle:
    """Vertex of the relaxed polytope minimizing a linear form over (x, t)."""

    def __init__(self, relaxed: RelaxedInstance):
        self.relaxed = relaxed
        A, b = _constraints(relaxed)
        self.A, self.b = A, b
        self.simplex = DenseSimplex(A, b)

    def __call__(self, gradient: np.ndarray) -> tuple[np.ndarray, float]:
        g = np.asarray(gradient, dtype=float)
        if g.shape != (self.A.shape[1],) or not np.all(np.isfinite(g)):
            raise ValueError("gradient must be a finite vector over (x, t)")
        v, _ = self.simplex.solve(g)
        x = np.maximum(v[:-1], 0.0)
        t = min(max(float(v[-1]), 0.0), 1.0)
        return x, t


def lmo(relaxed: RelaxedInstance, gradient: np.ndarray) -> tuple[np.ndarray, float]:
    return LinearOracle(relaxed)(gradient)


# --- Frank-Wolfe ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FwOptions:
    max_iters: int = 3000
    step: str = "pairwise"  # "line_search" (vanilla), "open_loop" 2/(m+2), or "pairwise"
    gap_tol: float = 1e-6  # relative to |objective|
    floor: float = 1e-12  # per-flow total kept above floor * min chat
    normalize: bool = True

    def __post_init__(self):
        if self.step not in ("line_search", "open_loop", "pairwise"):
            raise ValueError("step must be 'line_search', 'open_loop' or 'pairwise'")
        if self.max_iters < 1 or not self.gap_tol > 0:
            raise ValueError("need max_iters >= 1 and gap_tol > 0")


def relaxed_objective(inst: ProblemInstance, x: np.ndarray, t: float) -> float:
    S = inst.flow_sums(x)
    return float(np.sum(inst.flow_sizes / S - inst.beta * np.log(S))) + inst.alpha * t


def _gradient(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
    S = inst.flow_sums(x)
    g = -(inst.beta / S + inst.flow_sizes / (S * S))
    return np.concatenate([np.repeat(g, inst.paths_per_flow), [inst.alpha]])


def _line_search(inst, x, dx, dt, eta_max):
    S = inst.flow_sums(x)
    D = inst.flow_sums(dx)
    s, beta, alpha = inst.flow_sizes, inst.beta, inst.alpha

    def dphi(eta):
        Se = S + eta * D
        return float(np.sum(-(beta / Se + s / (Se * Se)) * D)) + alpha * dt

    if dphi(0.0) >= 0:
        return 0.0
    if dphi(eta_max) <= 0:
        return eta_max
    return brentq(dphi, 0.0, eta_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _step_limit(inst, x, dx, floor: float) -> float:
    # keep every flow total above the floor so the utility stays finite
    S, D = inst.flow_sums(x), inst.flow_sums(dx)
    shrinking = D < 0
    if not shrinking.any():
        return math.inf
    return max(0.0, float(np.min((S[shrinking] - floor) / -D[shrinking])))


class _ActiveSet:
    """Current iterate as a convex combination of feasible atoms (x, t).

    Atoms are rows of a growing matrix over (x, t); ``index`` maps an atom key
    to its row and ``weights`` holds the convex weights (zero for retired rows).
    """

    def __init__(self, x, t):
        self.rows = np.zeros((16, x.size + 1))
        self.rows[0] = np.append(x, t)
        self.weights = np.zeros(16)
        self.weights[0] = 1.0
        self.index = {b"start": 0}
        self.count = 1

    def add(self, key, x, t) -> int:
        if key in self.index:
            return self.index[key]
        if self.count == self.rows.shape[0]:
            self.rows = np.vstack([self.rows, np.zeros_like(self.rows)])
            self.weights = np.concatenate([self.weights, np.zeros_like(self.weights)])
        i = self.count
        self.rows[i] = np.append(x, t)
        self.index[key] = i
        self.count += 1
        return i

    def away(self, g) -> int:
        live = np.flatnonzero(self.weights[: self.count] > 0.0)
        return int(live[np.argmax(self.rows[live] @ g)])

    def atom(self, i):
        return self.rows[i, :-1], float(self.rows[i, -1])

    def shift(self, src: int, dst: int, eta: float) -> None:
        self.weights[src] -= eta
        self.weights[dst] += eta
        if self.weights[src] <= 1e-15:
            self.weights[src] = 0.0

    def scale_toward(self, dst: int, eta: float) -> None:
        self.weights[: self.count] *= 1.0 - eta
        self.weights[dst] += eta
        self.weights[self.weights <= 1e-15] = 0.0

    def point(self):
        w = self.weights[: self.count]
        v = (w / w.sum()) @ self.rows[: self.count]
        return np.maximum(v[:-1], 0.0), min(max(float(v[-1]), 0.0), 1.0)


def fw_solve(relaxed: RelaxedInstance, opts: FwOptions | None = None, scheme: str | None = None) -> SolveReport:
    """Frank-Wolfe on the relaxed problem from a strictly feasible interior point.

    The reported gap is the Frank-Wolfe gap <grad f, (x, t) - v>, nonnegative
    and an upper bound on the suboptimality. The pairwise variant moves weight
    from the worst atom of the active set to the oracle vertex.
    """
    opts = opts or FwOptions()
    base = relaxed.base
    inst, sigma = normalize(base) if opts.normalize else (base, 1.0)
    rel = RelaxedInstance(inst, relaxed.bottleneck_caps / sigma, relaxed.cardinality)
    oracle = LinearOracle(rel)
    shift = -inst.num_flows * inst.beta * math.log(sigma)
    P = inst.total_paths
    floor = opts.floor * float(np.min(rel.bottleneck_caps))

    x = np.full(P, float(np.min(inst.capacities)) / (2.0 * P))
    t = float(np.max((inst.routing @ x) / inst.capacities))
    active = _ActiveSet(x, t) if opts.step == "pairwise" else None
    trace: list[TraceRecord] = []
    status, message = "max_iters", ""
    best_gap = math.inf
    for m in range(opts.max_iters):
        g = _gradient(inst, x)
        vx, vt = oracle(g)
        dx, dt = vx - x, vt - t
        gap = -float(g[:-1] @ dx + g[-1] * dt)
        f = relaxed_objective(inst, x, t)
        best_gap = min(best_gap, gap)
        vio = float(np.linalg.norm(np.maximum(inst.routing @ x - inst.capacities, 0.0))
                    / max(math.sqrt(inst.num_links), np.linalg.norm(inst.capacities)))
        trace.append(TraceRecord(m, math.nan, math.nan, math.nan, math.nan, math.nan, vio,
                                 f + shift, objective(inst, x, "mopc") + shift, gap))
        if gap <= opts.gap_tol * abs(f + shift):
            status = "converged"
            break
        if active is not None:
            dst = active.add(oracle.simplex.basis.tobytes(), vx, vt)
            src = active.away(g)
            ax, at = active.atom(src)
            dx, dt = vx - ax, vt - at
            eta_max = min(active.weights[src], _step_limit(inst, x, dx, floor))
            eta = _line_search(inst, x, dx, dt, eta_max)
            if eta <= 0.0 and src != dst:
                # fall back to a plain Frank-Wolfe step
                dx, dt = vx - x, vt - t
                eta = _line_search(inst, x, dx, dt, min(1.0, _step_limit(inst, x, dx, floor)))
                if eta > 0:
                    active.scale_toward(dst, eta)
            elif eta > 0.0:
                active.shift(src, dst, eta)
        else:
            eta_max = min(1.0, _step_limit(inst, x, dx, floor))
            if opts.step == "line_search":
                eta = _line_search(inst, x, dx, dt, eta_max)
            else:
                eta = min(2.0 / (m + 2.0), eta_max)
        if eta <= 0.0:
            message = f"no descent along the oracle direction at iteration {m} (gap {gap:.3e})"
            break
        if active is not None:
            # rebuild from the weights so the iterate never drifts off the hull
            x, t = active.point()
        else:
            x = np.maximum(x + eta * dx, 0.0)
            t = min(max(t + eta * dt, 0.0), 1.0)

    x_orig = x * sigma
    name = scheme or ("fw-relaxed" if relaxed.cardinality else "fw")
    extras = {"t": t, "best_gap": best_gap, "lp_pivots": oracle.simplex.pivots, "sigma": sigma,
              "step": opts.step}
    return SolveReport(
        scheme=name, kind="fw", final=Allocation.for_instance(base, x_orig),
        y_final=base.routing @ x_orig, z_final=np.zeros(base.num_links), trace=trace,
        status=status, metrics=compute_metrics(base, x_orig), message=message, extras=extras,
    )


def project_cardinality(x, caps, offsets=None) -> Allocation:
    """Keep the w_k largest entries of every block (lowest index wins ties)."""
    if isinstance(x, Allocation):
        offsets = x.offsets if offsets is None else offsets
        x = x.x
    x = np.asarray(x, dtype=float)
    if offsets is None:
        raise ValueError("offsets are required for a plain vector")
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    offsets = np.asarray(offsets)
    out = np.zeros_like(x)
    for k in range(len(offsets) - 1):
        a, b = int(offsets[k]), int(offsets[k + 1])
        keep = np.argsort(-x[a:b], kind="stable")[: int(caps[k])]
        out[a + keep] = x[a + keep]
    return Allocation(out, offsets)


def projected(report: SolveReport, instance: ProblemInstance, scheme: str) -> SolveReport:
    """A baseline report with its allocation projected onto the cardinality caps."""
    alloc = project_cardinality(report.final, instance.cardinality_caps)
    return SolveReport(
        scheme=scheme, kind=report.kind, final=alloc, y_final=instance.routing @ alloc.x,
        z_final=report.z_final, trace=report.trace, status=report.status,
        metrics=compute_metrics(instance, alloc.x), message=report.message,
        extras=dict(report.extras, projected_from=report.scheme),
    )


# scheme -> (cardinality rows, project afterwards)
BASELINE_SCHEMES = {
    "fw": (False, False),
    "fw-relaxed": (True, False),
    "fw-projected": (False, True),
    "fw-relaxed-projected": (True, True),
}


def run_baseline(instance: ProblemInstance, scheme: str, opts: FwOptions | None = None) -> SolveReport:
    """fw, fw-relaxed, fw-projected or fw-relaxed-projected."""
    if scheme not in BASELINE_SCHEMES:
        raise ValueError(f"unknown baseline scheme {scheme!r}")
    card, proj = BASELINE_SCHEMES[scheme]
    rep = fw_solve(build_relaxed(instance, cardinality=card), opts)
    return projected(rep, instance, scheme) if proj else rep

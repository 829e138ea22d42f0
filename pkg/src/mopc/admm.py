"""Linearized proximal ADMM for NUM and MOPC.

Both drivers split y = Rx. The x-update linearizes the coupling term at x^j
and adds (mu/2)||x - x^j||^2, so it separates into per-flow prox problems on

    nu = x + (rho/mu) R^T (y - Rx + z/rho),      mu > rho ||R||_2^2 .

Internally the instance is rescaled by its largest capacity (see
``model.normalize``); iterates, rho, mu and objectives are reported in the
caller's units. The convex residual columns of the trace (p_res, d_res, vio)
are those of the rescaled problem, because that is where they are tested.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from . import prox
from .model import (
    Allocation,
    ProblemInstance,
    SolveReport,
    TraceRecord,
    cardinality_ok,
    compute_metrics,
    estimate_spectral_norm_sq,
    normalize,
)
from .utility import augmented_lagrangian, objective

log = logging.getLogger(__name__)

SCHEDULES = ("auto", "adaptive", "increasing", "fixed")
INITS = ("first", "uniform", "bottleneck")


@dataclass(frozen=True)
class SolveOptions:
    rho0: float = 5.0  # in units of rho_unit on the capacity-normalised problem
    rho_unit: str = "alpha"  # "alpha": rho0 * max(alpha, 1) for MOPC; "absolute": rho0
    mu_factor: float = 1.1
    gamma: float = 1.618  # convex path only
    max_iters: int = 1500
    eps_abs: float = 1e-4
    eps_rel: float = 1e-4
    eps_tol: float = 1e-10
    eps_tol1: float = 1e-4
    eps_tol2: float = 1e-10
    rho_schedule: str = "auto"
    rho_factor: float = 1.5
    rho_period: int = 100
    rho_ceiling: float = 1e8  # relative to rho0
    adapt_ratio: float = 10.0
    adapt_scale: float = 2.0
    adapt_relative: bool = True
    adapt_period: int = 10  # residual balancing only at multiples of this iteration count
    adapt_until: int | None = None  # freeze rho after this iteration (None: never)
    audit_decrease: bool = True
    audit_tol: float = 1e-8
    divergence_ceiling: float = 1e12
    normalize: bool = True
    init: str = "uniform"
    seed: int | None = None

    def __post_init__(self):
        if not self.mu_factor > 1:
            raise ValueError("mu_factor must exceed 1")
        if not 0 < self.gamma < 2:
            raise ValueError("gamma must lie in (0, 2)")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        for name in ("eps_abs", "eps_rel", "eps_tol", "eps_tol1", "eps_tol2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rho_unit not in ("alpha", "absolute"):
            raise ValueError("rho_unit must be 'alpha' or 'absolute'")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.rho_schedule not in SCHEDULES:
            raise ValueError(f"rho_schedule must be one of {SCHEDULES}")
        if not (self.rho_factor > 1 and self.rho_period >= 1):
            raise ValueError("increasing schedule needs factor > 1 and period >= 1")
        if not (self.adapt_ratio > 1 and self.adapt_scale > 1 and self.adapt_period >= 1):
            raise ValueError("adaptive schedule needs ratio > 1, scale > 1 and period >= 1")
        if self.adapt_until is not None and self.adapt_until < 0:
            raise ValueError("adapt_until must be nonnegative")


@dataclass(frozen=True)
class AdmmState:
    """Iterate (x, y, z) with the (rho, mu) that produced it and the last differences."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    rho: float
    mu: float
    iter: int = 0
    last_dx: np.ndarray | None = None
    last_dy: np.ndarray | None = None
    last_dz: np.ndarray | None = None

    def scaled(self, sigma: float) -> "AdmmState":
        """Map a state of the problem normalised by ``sigma`` back to original units."""
        if sigma == 1.0:
            return self
        f = lambda v, a: None if v is None else v * a  # noqa: E731
        return AdmmState(
            self.x * sigma, self.y * sigma, self.z / sigma,
            self.rho / sigma ** 2, self.mu / sigma ** 2, self.iter,
            f(self.last_dx, sigma), f(self.last_dy, sigma), f(self.last_dz, 1 / sigma),
        )


@dataclass(frozen=True)
class Residuals:
    p_res: float
    d_res: float
    vio: float
    y_dif: float
    eps_pri: float = math.nan
    eps_dual: float = math.nan
    pri_scale: float = math.nan  # max(||y||, ||Rx||)
    dual_scale: float = math.nan  # ||R^T z||
    lin_res: float = math.nan  # ||rho R^T dy + (mu I - rho R^T R) dx||, the linearised dual residual


@dataclass(frozen=True)
class AuditRecord:
    iter: int
    lhs: float
    rhs: float
    slack: float
    scale: float
    ok: bool


def compute_residuals(state: AdmmState, instance: ProblemInstance, kind: str,
                      opts: SolveOptions | None = None) -> Residuals:
    """Stopping quantities. ``kind`` is "convex" or "nonconvex"."""
    opts = opts or SolveOptions()
    R, c = instance.routing, instance.capacities
    L, P = instance.num_links, instance.total_paths
    Rx = R @ state.x
    r = state.y - Rx
    dy = state.last_dy if state.last_dy is not None else np.zeros_like(state.y)
    vio = float(np.linalg.norm(np.maximum(Rx - c, 0.0)) / max(math.sqrt(L), np.linalg.norm(c)))
    d_res = float(np.linalg.norm(state.rho * (instance.routing_t @ dy)))
    y_prev = state.y - dy
    y_dif = float(np.linalg.norm(dy) / max(math.sqrt(L), np.linalg.norm(y_prev)))
    nr = float(np.linalg.norm(r))
    pri_scale = float(max(np.linalg.norm(state.y), np.linalg.norm(Rx)))
    dual_scale = float(np.linalg.norm(instance.routing_t @ state.z))
    if kind == "convex":
        eps_pri = math.sqrt(L) * opts.eps_abs + opts.eps_rel * pri_scale
        eps_dual = math.sqrt(P) * opts.eps_abs + opts.eps_rel * dual_scale
        # with a saturated link y stops moving while x still drifts under the
        # proximal term, so d_res alone can vanish away from the optimum
        s = state.rho * (instance.routing_t @ dy)
        if state.last_dx is not None:
            dx = state.last_dx
            s = s + state.mu * dx - state.rho * (instance.routing_t @ (R @ dx))
        lin = float(np.linalg.norm(s))
        return Residuals(nr, d_res, vio, y_dif, eps_pri, eps_dual, pri_scale, dual_scale, lin)
    if kind == "nonconvex":
        return Residuals(nr / max(math.sqrt(L), np.linalg.norm(state.y)), d_res, vio, y_dif,
                         pri_scale=pri_scale, dual_scale=dual_scale)
    raise ValueError(f"unknown residual kind {kind!r}")


def converged(res: Residuals, kind: str, opts: SolveOptions) -> bool:
    if kind == "convex":
        return (res.p_res <= res.eps_pri and res.d_res <= res.eps_dual and res.lin_res <= res.eps_dual
                and res.vio <= opts.eps_tol)
    return res.p_res <= opts.eps_tol1 and res.y_dif <= opts.eps_tol1 and res.vio <= opts.eps_tol2


def audit_decrease(state_prev: AdmmState, state_next: AdmmState, instance: ProblemInstance,
                   *, norm_sq: float, problem: str = "mopc", tol: float = 1e-8,
                   L_prev: float | None = None, L_next: float | None = None) -> AuditRecord:
    """Check the per-step decrease inequality of the augmented Lagrangian.

    L(prev) - L(next) + ||dz||^2/rho >= (mu - rho ||R||^2)/2 ||dx||^2 + rho/2 ||dy||^2,
    evaluated with the (rho, mu) that produced ``state_next``.
    """
    rho, mu = state_next.rho, state_next.mu
    if L_prev is None:
        L_prev = augmented_lagrangian(instance, state_prev.x, state_prev.y, state_prev.z, rho, problem, check=False)
    if L_next is None:
        L_next = augmented_lagrangian(instance, state_next.x, state_next.y, state_next.z, rho, problem, check=False)
    dx = state_next.x - state_prev.x
    dy = state_next.y - state_prev.y
    dz = state_next.z - state_prev.z
    lhs = L_prev - L_next + float(dz @ dz) / rho
    rhs = 0.5 * (mu - rho * norm_sq) * float(dx @ dx) + 0.5 * rho * float(dy @ dy)
    slack = lhs - rhs
    scale = max(1.0, abs(L_prev))
    return AuditRecord(state_next.iter, lhs, rhs, slack, scale, slack >= -tol * scale)


def _adapt_now(it: int, opts: SolveOptions) -> bool:
    if opts.adapt_until is not None and it > opts.adapt_until:
        return False
    return it % opts.adapt_period == 0


def update_rho(state: AdmmState, residuals: Residuals, opts: SolveOptions, kind: str,
               *, norm_sq: float, schedule: str | None = None, rho_start: float | None = None) -> AdmmState:
    """Penalty schedule; mu is always reset to mu_factor * rho * ||R||^2.

    adaptive: double rho when p_res > 10 d_res, halve it when d_res > 10 p_res.
    The linearised dual residual stands in for d_res when it is available.
    With ``adapt_relative`` the two residuals are first divided by their
    scales max(||y||, ||Rx||) and ||R^T z||, which makes the rule independent
    of the units of the objective.
    increasing: multiply by rho_factor every rho_period iterations, up to
    rho_ceiling times the initial penalty.
    """
    schedule = schedule or opts.rho_schedule
    rho_start = opts.rho0 if rho_start is None else rho_start
    if schedule == "auto":
        schedule = "adaptive" if kind == "convex" else "increasing"
    rho = state.rho
    if schedule == "adaptive" and _adapt_now(state.iter, opts):
        p, d = residuals.p_res, residuals.d_res
        if not math.isnan(residuals.lin_res):
            d = residuals.lin_res
        if opts.adapt_relative:
            tiny = np.finfo(float).tiny
            p = p / max(residuals.pri_scale, tiny)
            d = d / max(residuals.dual_scale, tiny)
        if p > opts.adapt_ratio * d:
            rho *= opts.adapt_scale
        elif d > opts.adapt_ratio * p:
            rho /= opts.adapt_scale
    elif schedule == "increasing":
        if state.iter > 0 and state.iter % opts.rho_period == 0:
            rho = min(rho * opts.rho_factor, opts.rho_ceiling * rho_start)
    if rho == state.rho:
        return state
    return replace(state, rho=rho, mu=opts.mu_factor * rho * norm_sq)


def initial_rho(instance: ProblemInstance, opts: SolveOptions, problem: str) -> float:
    """rho0 in the configured unit.

    On the capacity-normalised problem the y-subproblem trades alpha * t
    against rho/2 ||y - theta||^2 with y = O(1), so alpha is the natural
    penalty unit for MOPC. NUM has no load term and uses rho0 as given.
    """
    if opts.rho_unit == "alpha" and problem == "mopc":
        return opts.rho0 * max(instance.alpha, 1.0)
    return opts.rho0


def initial_state(instance: ProblemInstance, opts: SolveOptions, norm_sq: float, problem: str) -> AdmmState:
    """Starting iterate with entries c_min/(2P), so Rx0 <= c/2.

    init="first": the first w_k paths of each flow (all paths for NUM).
    init="uniform": every path.
    init="bottleneck": the w_k paths with the largest bottleneck capacity,
    ties to the lower index.
    With a seed the entries are multiplied by uniform(0.5, 1] draws.
    """
    P = instance.total_paths
    x = np.zeros(P)
    base = float(np.min(instance.capacities)) / (2.0 * P)
    rng = np.random.default_rng(opts.seed) if opts.seed is not None else None
    c = instance.capacities
    for k in range(instance.num_flows):
        blk = instance.block(k)
        Pk = int(instance.paths_per_flow[k])
        n = Pk if problem == "num" or opts.init == "uniform" else int(instance.cardinality_caps[k])
        if opts.init == "bottleneck":
            cap = np.array([min(c[l] for l in p) for p in instance.paths[k]])
            idx = np.sort(np.argsort(-cap, kind="stable")[:n])
        else:
            idx = np.arange(n)
        vals = np.full(n, base)
        if rng is not None:
            vals *= rng.uniform(0.5, 1.0, n)
        x[blk.start + idx] = vals
    y = np.clip(instance.routing @ x, 0.0, instance.capacities)
    rho = initial_rho(instance, opts, problem)
    return AdmmState(x, y, np.zeros(instance.num_links), rho, opts.mu_factor * rho * norm_sq)


def _x_update(inst: ProblemInstance, nu: np.ndarray, mu: float, caps: np.ndarray) -> np.ndarray:
    out = np.empty_like(nu)
    beta = inst.beta
    off = inst.offsets
    for k in range(inst.num_flows):
        a, b = off[k], off[k + 1]
        out[a:b] = prox.prox_block(nu[a:b], mu, beta, float(inst.flow_sizes[k]), int(caps[k]))
    return out


def _kkt_residuals(inst, prev: AdmmState, nxt: AdmmState) -> tuple[float, float]:
    # realized-subgradient residuals of the x and y stationarity conditions at (x+, y+, z+)
    R, Rt = inst.routing, inst.routing_t
    rho, mu = nxt.rho, nxt.mu
    g = Rt @ (rho * (prev.y - R @ prev.x) + prev.z - nxt.z) - mu * (nxt.x - prev.x)
    h = rho * (nxt.y - R @ nxt.x) + prev.z - nxt.z
    return float(np.linalg.norm(g)), float(np.linalg.norm(h))


def _run(instance: ProblemInstance, opts: SolveOptions, problem: str, scheme: str,
         callback: Callable[[AdmmState], None] | None = None) -> SolveReport:
    inst, sigma = normalize(instance) if opts.normalize else (instance, 1.0)
    K = inst.num_flows
    shift = -K * inst.beta * math.log(sigma)  # objective offset between the two scalings
    norm_est = estimate_spectral_norm_sq(inst.routing)
    norm_sq = norm_est.value
    convex = problem == "num" or inst.is_uncapped
    kind = "convex" if convex else "nonconvex"
    gamma = opts.gamma if convex else 1.0
    caps = inst.paths_per_flow if problem == "num" else inst.cardinality_caps
    R, c = inst.routing, inst.capacities
    obj_kind = "num" if problem == "num" else "mopc"

    state = initial_state(inst, opts, norm_sq, problem)
    rho_start = state.rho
    L_cur = augmented_lagrangian(inst, state.x, state.y, state.z, state.rho, problem)
    L_init = max(1.0, abs(L_cur))
    trace: list[TraceRecord] = []
    audits: list[AuditRecord] = []
    status, message = "max_iters", ""
    sum_dz_sq, max_z = 0.0, 0.0
    kkt = (math.nan, math.nan)
    prev = state
    rho_final = None

    for j in range(1, opts.max_iters + 1):
        prev = state
        rho, mu = state.rho, state.mu
        Rx = R @ state.x
        nu = state.x + (rho / mu) * (inst.routing_t @ (state.y - Rx + state.z / rho))
        try:
            x = _x_update(inst, nu, mu, caps)
        except ArithmeticError as exc:
            status, message = "error", f"x-update failed at iteration {j}: {exc}"
            break
        Rx = R @ x
        theta = Rx - state.z / rho
        if problem == "num":
            y = prox.project_y_num(theta, c)
        else:
            _, y = prox.solve_y_mopc(prox.YProxInput(theta, c, inst.alpha, rho))
        z = state.z + gamma * rho * (y - Rx)
        state = AdmmState(x, y, z, rho, mu, j, x - prev.x, y - prev.y, z - prev.z)
        orig = state.scaled(sigma)
        if callback is not None:
            callback(orig)

        L_next = augmented_lagrangian(inst, x, y, z, rho, problem, check=False)
        if problem == "mopc" and opts.audit_decrease:
            audits.append(audit_decrease(prev, state, inst, norm_sq=norm_sq, problem=problem,
                                         tol=opts.audit_tol, L_prev=L_cur, L_next=L_next))
        dz = state.last_dz / sigma
        sum_dz_sq += float(dz @ dz)
        max_z = max(max_z, float(np.linalg.norm(z)) / sigma)

        # the convex thresholds mix absolute and relative parts and d_res has
        # units of 1/capacity, so they are tested on the normalised problem;
        # the nonconvex quantities are ratios and use the caller's units
        res = compute_residuals(state, inst, kind, opts) if convex else compute_residuals(orig, instance, kind, opts)
        trace.append(TraceRecord(
            j, orig.rho, orig.mu, res.p_res, res.d_res, res.y_dif, res.vio,
            L_next + shift, objective(inst, x, obj_kind) + shift,
        ))
        if not math.isfinite(L_next) or abs(L_next) > opts.divergence_ceiling * L_init:
            status, message = "error", f"augmented Lagrangian diverged at iteration {j} (|L| = {abs(L_next):.3e})"
            break
        if converged(res, kind, opts):
            status = "converged"
            kkt = _kkt_residuals(inst, prev, state)
            break
        if j == opts.max_iters:
            kkt = _kkt_residuals(inst, prev, state)
        res_hat = res if convex or sigma == 1.0 else compute_residuals(state, inst, kind, opts)
        new = update_rho(state, res_hat, opts, kind, norm_sq=norm_sq, rho_start=rho_start)
        if j == opts.max_iters:
            # the schedule still fires on the last iteration; only rho_final sees it
            rho_final = new.rho
            break
        if new.rho != state.rho:
            L_next = augmented_lagrangian(inst, x, y, z, new.rho, problem, check=False)
        state = new
        L_cur = L_next

    final = state.scaled(sigma)
    if rho_final is None:
        rho_final = state.rho
    x_final = np.maximum(final.x, 0.0)
    extras = {
        "sigma": sigma,
        "norm_sq": norm_sq,  # R is unchanged by the capacity scaling
        "norm_converged": norm_est.converged,
        "gamma": gamma,
        "rho_final": rho_final / sigma ** 2,
        "kkt_x": kkt[0] / sigma,
        "kkt_y": kkt[1] / sigma,
        "sum_dz_sq": sum_dz_sq,
        "max_z_norm": max_z,
    }
    if audits:
        rel = [a.slack / a.scale for a in audits]
        bad = [a.iter for a in audits if not a.ok]
        extras["audit_min_rel_slack"] = float(min(rel))
        extras["audit_violations"] = bad
        extras["audit_rel_slack"] = rel
        if bad:
            log.warning("decrease inequality violated at %d iteration(s), first %d", len(bad), bad[0])
    if problem == "mopc" and status != "error":
        tol = opts.eps_tol if convex else opts.eps_tol2
        if not cardinality_ok(instance, x_final):
            status, message = "error", "final allocation violates a cardinality cap"
        elif status != "converged" and trace and trace[-1].vio > tol:
            status, message = "error", f"final allocation infeasible (vio = {trace[-1].vio:.3e} > {tol:.1e})"
    try:
        metrics = compute_metrics(instance, x_final)
    except ValueError as exc:
        metrics = None
        status, message = "error", str(exc)
    return SolveReport(
        scheme=scheme, kind=kind, final=Allocation.for_instance(instance, x_final),
        y_final=final.y, z_final=final.z, trace=trace, status=status, metrics=metrics,
        message=message, extras=extras,
    )


def solve_num(instance: ProblemInstance, opts: SolveOptions | None = None,
              callback: Callable[[AdmmState], None] | None = None) -> SolveReport:
    """ADMM for NUM: capacity constraints only, cardinality caps ignored.

    ``callback`` receives every iterate, in the instance's own units.
    """
    return _run(instance, opts or SolveOptions(), "num", "num", callback)


def solve_mopc(instance: ProblemInstance, opts: SolveOptions | None = None,
               callback: Callable[[AdmmState], None] | None = None) -> SolveReport:
    """ADMM for MOPC.

    When every cap equals its path count the problem is convex and the
    convex settings apply (adaptive rho, gamma step, convex stopping rules);
    otherwise rho increases on a fixed schedule and gamma is 1.
    """
    scheme = "cvx-mopc" if instance.is_uncapped else "mopc"
    return _run(instance, opts or SolveOptions(), "mopc", scheme, callback)

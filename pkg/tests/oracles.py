"""Independent reference computations used by the test suite.

Nothing here calls into the solver internals; each routine recomputes its
answer by a different route (dense algebra, generic solvers, brute force).
"""
from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from mopc.model import ProblemInstance, normalize


# --- scalar / polynomial -----------------------------------------------------------------


def companion_max_root(coeffs) -> float:
    """Largest real root from the eigenvalues of the companion matrix."""
    r = np.roots(np.asarray(coeffs, dtype=float))
    real = r[np.abs(r.imag) <= 1e-7 * np.maximum(1.0, np.abs(r))].real
    return float(real.max())


def bisect(f, lo: float, hi: float, tol: float = 1e-14, iters: int = 400) -> float:
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# --- per-flow x-subproblem ---------------------------------------------------------------


def prox_obj(x, nu, mu, beta, s) -> float:
    t = float(np.sum(x))
    if not t > 0:
        return math.inf
    d = np.asarray(x) - nu
    return -(beta * math.log(t) - s / t) + 0.5 * mu * float(d @ d)


def restricted_prox_pg(nu, mu, beta, s, support, iters: int = 20000, tol: float = 1e-13) -> np.ndarray:
    """Projected gradient (Barzilai-Borwein steps, backtracking) on the coordinates in ``support``."""
    nu = np.asarray(nu, dtype=float)
    idx = np.asarray(support, dtype=int)
    v = nu[idx]

    def f(u):
        return prox_obj(u, v, mu, beta, s)

    def grad(u):
        t = u.sum()
        return -(beta / t + s / (t * t)) + mu * (u - v)

    u = np.maximum(v, 0.0) + max(1.0, float(np.abs(v).max(initial=0.0)))
    fu, g = f(u), grad(u)
    step = 1.0 / mu
    for _ in range(iters):
        while True:
            cand = np.maximum(u - step * g, 0.0)
            if cand.sum() > 0:
                fc = f(cand)
                if fc <= fu - 1e-4 * float(g @ (u - cand)) or step < 1e-20:
                    break
            step *= 0.5
        gc = grad(cand)
        du, dg = cand - u, gc - g
        moved = float(np.abs(du).max())
        u, fu, g = cand, fc, gc
        if moved <= tol * max(1.0, float(np.abs(u).max())):
            break
        curv = float(du @ dg)
        step = float(du @ du) / curv if curv > 0 else 1.0 / mu
    x = np.zeros_like(nu)
    x[idx] = u
    return x


def exhaustive_prox(nu, mu, beta, s, w) -> tuple[np.ndarray, float]:
    """Best restricted solution over every support of size min(w, P).

    Supports of exactly that size suffice: a smaller support is a face of a
    larger one, so its optimum is feasible there too.
    """
    nu = np.asarray(nu, dtype=float)
    m = min(int(w), nu.size)
    best, best_val = None, math.inf
    for sup in itertools.combinations(range(nu.size), m):
        x = restricted_prox_pg(nu, mu, beta, s, sup)
        val = prox_obj(x, nu, mu, beta, s)
        if val < best_val:
            best, best_val = x, val
    return best, best_val


# --- y-subproblem ------------------------------------------------------------------------


def phi_dense(t, theta, c, alpha, rho):
    """Phi evaluated on an array of t values."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    y = np.clip(theta[None, :], 0.0, np.minimum(t, 1.0)[:, None] * c[None, :])
    d = y - theta[None, :]
    return alpha * t + 0.5 * rho * np.einsum("ij,ij->i", d, d)


def phi_grid_oracle(theta, c, alpha, rho, h: float = 1e-5) -> tuple[float, float]:
    """Grid search with spacing h on [0, 1], then ternary refinement around the best node."""
    theta = np.asarray(theta, dtype=float)
    c = np.asarray(c, dtype=float)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / h)) + 1)
    vals = np.concatenate([phi_dense(chunk, theta, c, alpha, rho) for chunk in np.array_split(grid, 20)])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    for _ in range(100):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        f1, f2 = phi_dense([m1, m2], theta, c, alpha, rho)
        if f1 <= f2:
            hi = m2
        else:
            lo = m1
    t = 0.5 * (lo + hi)
    ft = float(phi_dense(t, theta, c, alpha, rho)[0])
    if vals[i] < ft:
        return float(grid[i]), float(vals[i])
    return t, ft


# --- instance-level recomputations -------------------------------------------------------


def dense_routing(inst: ProblemInstance) -> np.ndarray:
    R = np.zeros((inst.num_links, inst.total_paths))
    col = 0
    for flow in inst.paths:
        for path in flow:
            for l in path:
                R[l, col] = 1.0
            col += 1
    return R


def dense_metrics(inst: ProblemInstance, x) -> dict:
    R = dense_routing(inst)
    sums, col = [], 0
    for flow in inst.paths:
        sums.append(sum(x[col + i] for i in range(len(flow))))
        col += len(flow)
    delay = sum(s / t for s, t in zip(inst.flow_sizes, sums))
    fairness = inst.beta * sum(math.log(t) for t in sums)
    load = max((R[l] @ x) / inst.capacities[l] for l in range(inst.num_links))
    return {"delay": delay, "fairness": fairness, "load": load, "obj": delay - fairness + inst.alpha * load}


def dense_lagrangian(inst: ProblemInstance, x, y, z, rho, kind) -> float:
    R = dense_routing(inst)
    sums = [np.sum(x[inst.block(k)]) for k in range(inst.num_flows)]
    val = sum(s / t - inst.beta * math.log(t) for s, t in zip(inst.flow_sizes, sums))
    if kind == "mopc":
        val += inst.alpha * max(y[l] / inst.capacities[l] for l in range(inst.num_links))
    r = y - R @ x
    return val + float(z @ r) + 0.5 * rho * float(r @ r)


def bottleneck_scan(inst: ProblemInstance) -> np.ndarray:
    out = []
    for flow in inst.paths:
        for path in flow:
            m = math.inf
            for l in path:
                m = min(m, inst.capacities[l])
            out.append(m)
    return np.array(out)


def relaxed_polytope(inst: ProblemInstance, chat, cardinality: bool = True):
    """(A, b) of  [R | -c] (x, t) <= 0,  sum x/chat <= w,  t <= 1  with (x, t) >= 0."""
    R = dense_routing(inst)
    L, P, K = inst.num_links, inst.total_paths, inst.num_flows
    A = [np.hstack([R, -inst.capacities[:, None]])]
    b = [np.zeros(L)]
    if cardinality:
        card = np.zeros((K, P + 1))
        for k in range(K):
            blk = inst.block(k)
            card[k, blk] = 1.0 / chat[blk]
        A.append(card)
        b.append(inst.cardinality_caps.astype(float))
    top = np.zeros((1, P + 1))
    top[0, P] = 1.0
    A.append(top)
    b.append([1.0])
    return np.vstack(A), np.concatenate(b)


def lp_oracle(A, b, cost) -> float:
    res = linprog(cost, A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


# --- convex programs through a generic conic solver --------------------------------------


def _cvx_common(inst: ProblemInstance):
    n, sigma = normalize(inst)
    x = cp.Variable(n.total_paths, nonneg=True)
    S = cp.hstack([cp.sum(x[n.block(k)]) for k in range(n.num_flows)])
    util = cp.sum(cp.multiply(n.flow_sizes, cp.inv_pos(S))) - n.beta * cp.sum(cp.log(S))
    shift = -n.num_flows * n.beta * math.log(sigma)
    return n, sigma, x, util, shift


def _solve(problem: cp.Problem) -> float:
    problem.solve(solver=cp.CLARABEL)
    assert problem.status in ("optimal", "optimal_inaccurate"), problem.status
    return float(problem.value)


def cvx_num(inst: ProblemInstance) -> float:
    n, _, x, util, shift = _cvx_common(inst)
    return _solve(cp.Problem(cp.Minimize(util), [n.routing @ x <= n.capacities])) + shift


def cvx_mopc_convex(inst: ProblemInstance) -> float:
    """MOPC with the cardinality caps dropped."""
    n, _, x, util, shift = _cvx_common(inst)
    load = cp.max(cp.multiply(1.0 / n.capacities, n.routing @ x))
    return _solve(cp.Problem(cp.Minimize(util + n.alpha * load), [n.routing @ x <= n.capacities])) + shift


def cvx_relaxed(inst: ProblemInstance, chat) -> float:
    n, sigma, x, util, shift = _cvx_common(inst)
    t = cp.Variable(nonneg=True)
    cons = [n.routing @ x <= t * n.capacities, t <= 1]
    for k in range(n.num_flows):
        blk = n.block(k)
        cons.append(cp.sum(cp.multiply(sigma / chat[blk], x[blk])) <= n.cardinality_caps[k])
    return _solve(cp.Problem(cp.Minimize(util + n.alpha * t), cons)) + shift


def random_instance(rng: np.random.Generator, L: int, K: int, pmax: int = 4, caps=None,
                    alpha: float = 500.0, beta: float = 0.05, cap_scale: float = 1e9) -> ProblemInstance:
    """Small random instance with distinct paths; capacities spread over two decades."""
    c = cap_scale * np.exp(rng.uniform(0.0, math.log(100.0), L))
    paths, w = [], []
    for k in range(K):
        P = int(rng.integers(1, pmax + 1))
        seen, flow = set(), []
        while len(flow) < P:
            n = int(rng.integers(1, min(3, L) + 1))
            p = tuple(sorted(int(v) for v in rng.choice(L, size=n, replace=False)))
            if p not in seen:
                seen.add(p)
                flow.append(list(p))
        paths.append(flow)
        w.append(P if caps is None else int(min(P, rng.choice(caps))))
    s = cap_scale * rng.uniform(0.05, 1.0, K)
    return ProblemInstance(capacities=c, flow_sizes=s, cardinality_caps=w, paths=paths, alpha=alpha, beta=beta)

"""Independent reference values for product-state optimisation on small instances.

* `seesaw`: alternating exact eigenvector updates; a one-sided bound.
* `exhaustive_product_net`: pure-state grid on all parties but one, the last
  solved exactly; within a Lipschitz slack of the optimum.
* `ppt_bound`: the positive-partial-transpose relaxation; the other side of
  the bracket (exact on 2x2 and 2x3).
* `sdp_distance`: the l1 distance to an image set as a semidefinite program.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import ProductStateWitness, _entries, opnorm

EXHAUSTIVE_CAP = 5_000_000


@dataclass
class OracleResult:
    """Oracle value with the product vectors that attain it.

    ``meta`` holds method-specific data (restarts, grid, slack, histories).
    """

    value: float
    witness: ProductStateWitness
    method: str
    meta: dict = field(default_factory=dict)


def _check_dims(a: np.ndarray, dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != a.shape[0]:
        raise ValueError(f"dims {dims} inconsistent with operator of size {a.shape[0]}")
    return dims


def product_value(Q, vectors) -> float:
    """``<v_1 ... v_k| Q |v_1 ... v_k>``."""
    a = _entries(Q)
    psi = np.ones(1, dtype=complex)
    for v in vectors:
        psi = np.kron(psi, v)
    return float(np.real(psi.conj() @ a @ psi))


def contract(a: np.ndarray, dims, fixed: dict) -> np.ndarray:
    """Contract the parties in `fixed` (index -> vector) and return the operator on the rest.

    The remaining parties keep their original order.
    """
    k = len(dims)
    T = a.reshape(tuple(dims) * 2)
    out_idx = [chr(97 + t) for t in range(k)]
    in_idx = [chr(65 + t) for t in range(k)]
    subs = ["".join(out_idx + in_idx)]
    ops = [T]
    for t, v in fixed.items():
        subs += [out_idx[t], in_idx[t]]
        ops += [np.conj(v), v]
    rest = [t for t in range(k) if t not in fixed]
    res = "".join(out_idx[t] for t in rest) + "".join(in_idx[t] for t in rest)
    R = np.einsum(",".join(subs) + "->" + res, *ops)
    n = int(np.prod([dims[t] for t in rest]))
    return R.reshape(n, n)


def _effective(a: np.ndarray, dims, vectors, t: int) -> np.ndarray:
    H = contract(a, dims, {s: v for s, v in enumerate(vectors) if s != t})
    return (H + H.conj().T) / 2


def seesaw(
    Q,
    dims=(None, None),
    restarts: int = 32,
    iters: int = 200,
    mode: str = "max",
    seed: int = 0,
    tol: float = 1e-12,
    history: bool = False,
) -> OracleResult:
    """Alternating optimisation over product vectors.

    Each half-step replaces one party's vector by the extreme eigenvector of
    the operator obtained by contracting the others, so the objective is
    monotone (non-decreasing in max mode). Restart r is seeded with
    ``default_rng([seed, r])``. Stops a restart when the improvement over a
    full sweep is below ``tol * max(1, |value|)``.
    """
    a = _entries(Q)
    if dims[0] is None:
        d = int(round(math.isqrt(a.shape[0])))
        dims = (d, d)
    dims = _check_dims(a, dims)
    k = len(dims)
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    sgn = 1.0 if mode == "max" else -1.0
    best, best_vs, hists, sweeps = None, None, [], []
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        vs = []
        for d in dims:
            v = rng.normal(size=d) + 1j * rng.normal(size=d)
            vs.append(v / np.linalg.norm(v))
        val = product_value(a, vs)
        h = [val]
        n = 0
        for n in range(1, iters + 1):
            prev = val
            for t in range(k):
                H = _effective(a, dims, vs, t)
                w, V = np.linalg.eigh(sgn * H)
                vs[t] = V[:, -1]
                val = sgn * float(w[-1])
                if history:
                    h.append(val)
            if sgn * (val - prev) <= tol * max(1.0, abs(val)):
                break
        sweeps.append(n)
        if history:
            hists.append(h)
        if best is None or sgn * (val - best) > 0:
            best, best_vs = val, [v.copy() for v in vs]
    val = product_value(a, best_vs)
    meta = {"restarts": restarts, "iters": iters, "seed": seed, "sweeps": sweeps, "mode": mode}
    if history:
        meta["history"] = hists
    return OracleResult(val, ProductStateWitness(tuple(best_vs), val), "seesaw", meta)


def pure_state_net(d: int, grid: float) -> np.ndarray:
    """Unit vectors of C^d within `grid` of every unit vector up to a global phase.

    Fix the first coordinate real and nonnegative, leaving 2d-1 real
    coordinates. A cubic grid of spacing ``grid/sqrt(2d-1)`` has a node within
    ``grid/2`` of every point, so only nodes with radius in
    ``[1 - grid/2, 1 + grid/2]`` are needed; normalising them at most doubles
    the distance to the target unit vector.
    """
    if d == 1:
        return np.ones((1, 1), dtype=complex)
    n_real = 2 * d - 1
    h = grid / math.sqrt(n_real)
    m = math.ceil((1 + grid / 2) / h)
    ticks = h * np.arange(-m, m + 1)
    first = ticks[ticks >= -1e-15]
    lo, hi = (1 - grid / 2 - 1e-12) ** 2, (1 + grid / 2 + 1e-12) ** 2
    inner_dims = n_real - 2
    g = np.meshgrid(*([ticks] * inner_dims), indexing="ij")
    inner = np.stack([c.ravel() for c in g], axis=1)
    inner_sq = np.sum(inner**2, axis=1)
    out, count = [], 0
    for a in first:
        for b in ticks:
            r2 = inner_sq + a * a + b * b
            ok = (r2 >= lo) & (r2 <= hi)
            if not np.any(ok):
                continue
            x = inner[ok]
            head = np.broadcast_to([a, b], (len(x), 2))
            out.append(np.concatenate([head, x], axis=1))
            count += len(x)
            if count > EXHAUSTIVE_CAP:
                raise ValueError(f"pure-state net for d={d}, grid={grid} exceeds {EXHAUSTIVE_CAP} nodes")
    x = np.concatenate(out)
    v = np.concatenate([x[:, :1] + 0j, x[:, 1:d] + 1j * x[:, d:]], axis=1)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def exhaustive_product_net(Q, dims, grid: float = 0.1, mode: str = "max") -> OracleResult:
    """Grid search over pure states of all parties but the largest one.

    The remaining party is solved exactly, so the returned value is attained
    by a product state, and the optimum is within
    ``meta['slack'] = 2 ||Q|| grid (k-1)`` of it. Netted parties need
    dimension at most 3.
    """
    a = _entries(Q)
    dims = _check_dims(a, dims)
    k = len(dims)
    s = max(range(k), key=lambda t: (dims[t], t))
    netted = [t for t in range(k) if t != s]
    if any(dims[t] > 3 for t in netted):
        raise ValueError(f"exhaustive net needs netted dimensions <= 3, got {dims}")
    sgn = 1.0 if mode == "max" else -1.0
    nets = [pure_state_net(dims[t], grid) for t in netted]
    best, best_vs = None, None
    outer, last = nets[:-1], nets[-1]
    p, q = sorted([netted[-1], s])
    dp, dq = dims[p], dims[q]
    for combo in itertools.product(*[range(len(n)) for n in outer]):
        vs = [None] * k
        for t, n, j in zip(netted[:-1], outer, combo):
            vs[t] = n[j]
        R = contract(a, dims, {t: vs[t] for t in netted[:-1]}).reshape(dp, dq, dp, dq)
        if netted[-1] == p:
            eff = np.einsum("bi,ijkl,bk->bjl", last.conj(), R, last)
        else:
            eff = np.einsum("bj,ijkl,bl->bik", last.conj(), R, last)
        eff = (eff + np.swapaxes(eff, 1, 2).conj()) / 2
        w, V = np.linalg.eigh(sgn * eff)
        j = int(np.argmax(w[:, -1]))
        val = sgn * float(w[j, -1])
        if best is None or sgn * (val - best) > 1e-15:
            best = val
            vs[netted[-1]] = last[j]
            vs[s] = V[j, :, -1]
            best_vs = [v.copy() for v in vs]
    val = product_value(a, best_vs)
    slack = 2 * opnorm(a) * grid * (k - 1)
    meta = {"grid": grid, "slack": slack, "net_sizes": [len(n) for n in nets], "mode": mode}
    return OracleResult(val, ProductStateWitness(tuple(best_vs), val), "exhaustive", meta)


def _partial_transpose_expr(X, dims):
    import cvxpy as cp

    return cp.partial_transpose(X, dims=list(dims), axis=1)


def ppt_bound(Q, dims, mode: str = "max") -> float:
    """Optimum of ``<Q, rho>`` over states with positive partial transpose.

    An upper bound on the product-state maximum (lower bound in min mode);
    equal to it when ``dA * dB <= 6``.
    """
    import cvxpy as cp

    a = _entries(Q)
    dims = _check_dims(a, dims)
    if len(dims) != 2:
        raise ValueError("ppt_bound is bipartite")
    n = a.shape[0]
    X = cp.Variable((n, n), hermitian=True)
    obj = cp.real(cp.trace(a @ X))
    cons = [X >> 0, cp.real(cp.trace(X)) == 1, _partial_transpose_expr(X, dims) >> 0]
    prob = cp.Problem(cp.Maximize(obj) if mode == "max" else cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        prob.solve(solver=cp.SCS, eps=1e-9)
    return float(prob.value)


def sdp_distance(p, ops) -> float:
    """``min_rho sum_i |p_i - Tr(Q_i rho)|`` as a semidefinite program."""
    import cvxpy as cp

    ops = np.asarray(ops, dtype=complex)
    p = np.asarray(p, dtype=complex).ravel()
    d = ops.shape[1]
    X = cp.Variable((d, d), hermitian=True)
    q = cp.hstack([cp.trace(Qi @ X) for Qi in ops])
    prob = cp.Problem(cp.Minimize(cp.sum(cp.abs(p - q))), [X >> 0, cp.real(cp.trace(X)) == 1])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        prob.solve(solver=cp.SCS, eps=1e-9)
    return float(prob.value)

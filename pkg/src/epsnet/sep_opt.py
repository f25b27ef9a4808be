"""Optimisation over product states for operators given as sums of tensor products.

For ``Q = sum_i Q^1_i (x) ... (x) Q^k_i`` and a product state, the objective
is ``sum_i prod_t Tr(Q^t_i rho_t)``. All parties but one are replaced by
points of an epsilon-net of their image sets; the remaining party is solved
exactly as an extreme eigenvalue of ``Herm(sum_i (prod_t q^t_i) Q^s_i)``.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .distance_oracle import MMW_ITER_CAP, ObservableFamily, mmw_params
from .errors import CapExceededError
from .operators import DecomposedOperator
from .qspace_net import CANDIDATE_CAP, FilterStats, accepted_points, disk_net

RAW_NET_CAP = 10**15
TUPLE_CAP = 10**8
TIE_TOL = 1e-12
SPECTRAL_BATCH = 8192


@dataclass(frozen=True)
class EnumerationPlan:
    """Parameters of one enumeration run.

    Attributes
    ----------
    eps : per-party net resolution; 0 for the party solved spectrally.
    eps_mmw : per-party distance-oracle error; 0 for the spectral party.
    spectral_party : index of the party solved as an eigenproblem.
    filter : when False the raw nets are enumerated unfiltered and the
        result carries no guarantee.
    filter_rule : early-decision rule of the distance filter; ``'certified'``
        and ``'mmw'`` carry the same error budget (see `mmw_decide_batch`).
    """

    k: int
    M: int
    widths: tuple
    W: float
    delta: float
    eps: tuple
    eps_mmw: tuple
    mode: str = "max"
    spectral_party: int = -1
    raw_cap: int = RAW_NET_CAP
    tuple_cap: int = TUPLE_CAP
    filter: bool = True
    workers: int = 1
    mmw_cap: int = MMW_ITER_CAP
    time_limit: float | None = None
    filter_rule: str = "certified"
    candidate_cap: int = CANDIDATE_CAP

    @property
    def netted(self) -> list[int]:
        return [t for t in range(self.k) if t != self.spectral_party]

    def to_dict(self) -> dict:
        return asdict(self)


def make_plan(
    D: DecomposedOperator,
    delta: float,
    mode: str = "max",
    eps_mmw_ratio: float = 0.5,
    spectral_party: int | str = "last",
    raw_cap: int = RAW_NET_CAP,
    tuple_cap: int = TUPLE_CAP,
    filter: bool = True,
    workers: int = 1,
    mmw_cap: int = MMW_ITER_CAP,
    time_limit: float | None = None,
    filter_rule: str = "certified",
    candidate_cap: int = CANDIDATE_CAP,
) -> EnumerationPlan:
    """Plan with ``eps_t = w_t * delta / ((k-1) W)`` for every netted party.

    `spectral_party` is an index, ``'last'``, or ``'auto'`` (the party with
    the largest dimension, ties to the last; its net would be the costliest).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    if filter_rule not in ("mmw", "certified"):
        raise ValueError(f"filter rule must be 'mmw' or 'certified', got {filter_rule!r}")
    if eps_mmw_ratio <= 0:
        raise ValueError("eps_mmw ratio must be positive")
    k = D.k
    if k < 2:
        raise ValueError("at least two parties are required; for one party use an eigenvalue solve")
    if spectral_party == "last":
        s = k - 1
    elif spectral_party == "auto":
        s = max(range(k), key=lambda t: (D.dims[t], t))
    else:
        s = int(spectral_party)
        if not 0 <= s < k:
            raise ValueError(f"spectral party {s} out of range for k={k}")
    W = D.W
    eps = []
    for t in range(k):
        if t == s or W == 0:
            eps.append(0.0)
        else:
            eps.append(D.widths[t] * delta / ((k - 1) * W))
    eps_mmw = tuple(eps_mmw_ratio * e for e in eps)
    return EnumerationPlan(
        k, D.M, D.widths, W, float(delta), tuple(eps), eps_mmw, mode, s,
        int(raw_cap), int(tuple_cap), bool(filter), int(workers), int(mmw_cap),
        None if time_limit is None else float(time_limit), filter_rule, int(candidate_cap),
    )


def error_budget(plan: EnumerationPlan) -> dict:
    """Per-party net contributions ``eps_t W / w_t`` and the filter slack.

    The net contributions sum to delta; accepted points may sit up to
    ``eps_t + 2 eps_mmw_t`` from the image set, adding
    ``2 eps_mmw_t W / w_t`` per party.
    """
    contrib, slack = {}, {}
    for t in plan.netted:
        wt = plan.widths[t]
        f = plan.W / wt if wt > 0 else 0.0
        contrib[t] = plan.eps[t] * f
        slack[t] = 2 * plan.eps_mmw[t] * f
    net = sum(contrib.values())
    sl = sum(slack.values())
    return {
        "contributions": contrib,
        "net_error": net,
        "filter_slack": slack,
        "filter_slack_total": sl,
        "effective_error": net + sl if plan.filter else float("nan"),
    }


def raw_count_estimate(k: int, W: float, M: int, delta: float) -> float:
    """Order-of-magnitude size of the enumeration, ``((k-1)^2 W^2 M^2/delta^2)^((k-1) M)``."""
    base = (k - 1) ** 2 * W**2 * M**2 / delta**2
    return base ** ((k - 1) * M)


@dataclass
class OptimizationReport:
    """Result of an optimisation run.

    Attributes
    ----------
    opt_value : estimate of the optimum over product states.
    effective_error : guaranteed additive error (NaN when unsound).
    witness : dict with the net tuple, its stream indices and the spectral
        party's extremal eigenvector (or algorithm-specific witness data).
    stats : enumeration counters and wall time.
    params : every parameter consumed by the run.
    """

    algorithm: str
    opt_value: float
    effective_error: float
    witness: dict
    stats: dict
    params: dict
    budget: dict = field(default_factory=dict)
    sound: bool = True

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(np.real(x)), "im": float(np.imag(x))}
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def build_Qk(D: DecomposedOperator, qtuple, party: int | None = None) -> np.ndarray:
    """``sum_i (prod_t q^t_i) Q^s_i`` for the points of the other parties.

    Parameters
    ----------
    qtuple : sequence of k-1 points in C^M, in party order with party `s` omitted.
    party : the party s left free (default: the last).
    """
    s = D.k - 1 if party is None else party
    if len(qtuple) != D.k - 1:
        raise ValueError(f"expected {D.k - 1} points, got {len(qtuple)}")
    c = np.ones(D.M, dtype=complex)
    for q in qtuple:
        q = np.asarray(q, dtype=complex).ravel()
        if q.size != D.M:
            raise ValueError(f"point has {q.size} coordinates, expected M={D.M}")
        c = c * q
    return np.tensordot(c, D.party_stack(s), axes=(0, 0))


def _extreme_batch(coef: np.ndarray, stack: np.ndarray, mode: str):
    """Extreme eigenvalues of ``Herm(sum_i coef[b, i] stack[i])`` for every row b."""
    A = np.tensordot(coef, stack, axes=(1, 0))
    H = (A + np.swapaxes(A, 1, 2).conj()) / 2
    vals = np.linalg.eigvalsh(H)
    return vals[:, -1] if mode == "max" else vals[:, 0]


def _better(a: float, b: float, mode: str) -> bool:
    return a > b + TIE_TOL if mode == "max" else a < b - TIE_TOL


def optimize_decomposed(
    D: DecomposedOperator,
    plan: EnumerationPlan | None = None,
    progress=None,
    **plan_kw,
) -> OptimizationReport:
    """Approximate the optimum of ``<Q, rho>`` over product states.

    Parameters
    ----------
    D : DecomposedOperator
    plan : EnumerationPlan, or None to build one from `plan_kw` (needs ``delta``).
    progress : optional callable ``progress(points_done)`` invoked roughly
        every 10^5 enumerated tuples.

    Returns
    -------
    OptimizationReport
        ``opt_value`` is the best extreme eigenvalue over accepted tuples;
        the true optimum lies within ``effective_error`` of it.

    Raises
    ------
    CapExceededError
        If a raw net or the tuple product exceeds the plan's caps.
    """
    t0 = time.perf_counter()
    if plan is None:
        plan = make_plan(D, **plan_kw)
    mode, s = plan.mode, plan.spectral_party
    deadline = None if plan.time_limit is None else t0 + plan.time_limit
    budget = error_budget(plan)
    params = {"plan": plan.to_dict(), "dims": list(D.dims)}
    if D.M == 0 or plan.W == 0:
        d = D.dims[s]
        v = np.zeros(d, dtype=complex)
        v[0] = 1
        return OptimizationReport(
            "decomposed", 0.0, budget["effective_error"],
            {"net_tuple": [], "indices": [], "vector": v},
            {"wall_time": time.perf_counter() - t0, "degenerate": True},
            params, budget, plan.filter,
        )

    # size pre-check on every netted party before any work
    sizes = {}
    params["disk_net_sizes"] = {}
    params["mmw"] = {}
    for t in plan.netted:
        n = len(disk_net(plan.widths[t], plan.eps[t] / D.M))
        sizes[t] = n**D.M
        params["disk_net_sizes"][t] = n
        if plan.filter:
            # net coordinates lie in the width disk, so the batch width is the party width
            gamma, T = mmw_params(D.M, plan.widths[t], plan.eps_mmw[t], D.dims[t], cap=math.inf)
            params["mmw"][t] = {"gamma": gamma, "T": T, "w": plan.widths[t]}
        if sizes[t] > plan.raw_cap:
            est = raw_count_estimate(plan.k, plan.W, D.M, plan.delta)
            raise CapExceededError(
                f"party {t} raw net has {sizes[t]:.3e} points (cap {plan.raw_cap:.3e}); "
                f"enumeration scales as ((k-1)^2 W^2 M^2/delta^2)^((k-1)M) ~ {est:.3e}",
                required=sizes[t],
                cap=plan.raw_cap,
            )

    stats = {"raw_net_sizes": {}, "accepted": {}, "filter": {}}
    nets = {}
    for t in plan.netted:
        F = ObservableFamily(D.party_stack(t), plan.widths[t])
        fs = FilterStats()
        if plan.filter:
            pts, est, idx = accepted_points(
                F, plan.eps[t], plan.eps_mmw[t], stats=fs, workers=plan.workers,
                mmw_cap=plan.mmw_cap, deadline=deadline, rule=plan.filter_rule,
                candidate_cap=plan.candidate_cap,
            )
        else:
            from .qspace_net import filtered_candidates

            T, ix = filtered_candidates(F, plan.eps[t], plan.eps[t], prefilter=False,
                                        cap=plan.candidate_cap)
            pts = T[ix]
            idx = np.ravel_multi_index(ix.T, (len(T),) * D.M)
            fs.raw = fs.evaluated = fs.accepted = len(idx)
        nets[t] = (pts, idx)
        stats["raw_net_sizes"][t] = sizes[t]
        stats["accepted"][t] = len(pts)
        stats["filter"][t] = fs.as_dict()

    n_tuples = int(np.prod([len(nets[t][0]) for t in plan.netted], dtype=float))
    if n_tuples > plan.tuple_cap:
        raise CapExceededError(
            f"{n_tuples} accepted net tuples exceed cap {plan.tuple_cap}",
            required=n_tuples,
            cap=plan.tuple_cap,
        )
    stack = D.party_stack(s)
    best_val = None
    best_pos = None
    done = 0
    next_report = 100_000

    # the product over netted parties, vectorised over the last of them
    outer = plan.netted[:-1]
    inner = plan.netted[-1]
    inner_pts = nets[inner][0]
    chunks = [(o, lo) for o in itertools.product(*[range(len(nets[t][0])) for t in outer])
              for lo in range(0, len(inner_pts), SPECTRAL_BATCH)]

    def evaluate(job):
        if deadline is not None and time.perf_counter() > deadline:
            raise CapExceededError("wall-time limit reached during the spectral stage")
        o, lo = job
        coef = inner_pts[lo : lo + SPECTRAL_BATCH].copy()
        for t, j in zip(outer, o):
            coef = coef * nets[t][0][j][None, :]
        return _extreme_batch(coef, stack, mode)

    pool = ThreadPoolExecutor(plan.workers) if plan.workers > 1 else None
    results = pool.map(evaluate, chunks) if pool else map(evaluate, chunks)
    try:
        for (o, lo), vals in zip(chunks, results):
            j = int(np.argmax(vals) if mode == "max" else np.argmin(vals))
            # earliest index within the tie tolerance of the chunk optimum
            if mode == "max":
                j = int(np.argmax(vals >= vals[j] - TIE_TOL))
            else:
                j = int(np.argmax(vals <= vals[j] + TIE_TOL))
            if best_val is None or _better(float(vals[j]), best_val, mode):
                best_val = float(vals[j])
                best_pos = (o, lo + j)
            done += len(vals)
            if progress is not None and done >= next_report:
                progress(done)
                next_report += 100_000
    finally:
        if pool:
            pool.shutdown()

    if best_val is None:
        raise RuntimeError("no accepted net tuples; the filtered nets are empty")
    o, j = best_pos
    tup = {}
    for t, jj in zip(outer, o):
        tup[t] = jj
    tup[inner] = j
    qtuple = [nets[t][0][tup[t]] for t in plan.netted]
    Qk = build_Qk(D, qtuple, party=s)
    H = (Qk + Qk.conj().T) / 2
    vals, vecs = np.linalg.eigh(H)
    v = vecs[:, -1] if mode == "max" else vecs[:, 0]
    witness = {
        "net_tuple": {t: nets[t][0][tup[t]] for t in plan.netted},
        "indices": {t: int(nets[t][1][tup[t]]) for t in plan.netted},
        "spectral_party": s,
        "vector": v,
    }
    stats["tuples_evaluated"] = done
    stats["wall_time"] = time.perf_counter() - t0
    return OptimizationReport(
        "decomposed", best_val, budget["effective_error"], witness, stats, params, budget, plan.filter
    )

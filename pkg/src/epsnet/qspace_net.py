"""Epsilon-nets of the image of density matrices under an observable family.

A raw net is the M-fold product of a grid net of the complex disk
``|z| <= w``; the filtered net keeps raw points whose MMW distance estimate
is below ``eps + eps_mmw``. Both are streamed in a fixed lexicographic order.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .distance_oracle import MMW_ITER_CAP, ObservableFamily, mmw_decide_batch
from .errors import CapExceededError

DISK_CAP = 1_000_000
RAW_CAP = 10**15
CANDIDATE_CAP = 10**7
PREFIX_BLOCK = 1 << 22
PREFILTER_ANGLES = 64


@dataclass(frozen=True)
class DiskNet:
    """Finite subset of ``{|z| <= w}`` within `eps_prime` of every point of the disk."""

    w: float
    eps_prime: float
    points: np.ndarray

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class NetPoint:
    """A raw-net point with the filter's verdict.

    ``dis_estimate`` is the value the decision was based on: d~ for points
    run to completion, otherwise the certified bound that stopped the run.
    """

    coords: np.ndarray
    dis_estimate: float
    accepted: bool
    index: int = -1


def disk_net(w: float, eps_prime: float, cap: int = DISK_CAP) -> DiskNet:
    """Square-grid net of the closed disk of radius `w`.

    The grid has spacing ``sqrt(2) * eps_prime`` so every point of the plane
    is within `eps_prime` of a grid node. Nodes within ``w + eps_prime`` are
    kept and then pulled radially onto the disk; radial projection onto a
    convex set is non-expansive, so coverage survives and every net point
    satisfies ``|z| <= w``. Points are ordered by (real, imag).
    """
    if w < 0 or eps_prime <= 0:
        raise ValueError("disk_net needs w >= 0 and eps_prime > 0")
    if w == 0:
        return DiskNet(0.0, eps_prime, np.zeros(1, dtype=complex))
    h = math.sqrt(2) * eps_prime
    R = w + eps_prime
    n = int(math.floor(R / h))
    est = (2 * n + 1) ** 2
    if est > cap:
        raise CapExceededError(
            f"disk net with w={w}, eps'={eps_prime} needs ~{est} grid nodes, cap {cap}",
            required=est,
            cap=cap,
        )
    ticks = h * np.arange(-n, n + 1)
    re, im = np.meshgrid(ticks, ticks, indexing="ij")
    z = (re + 1j * im).ravel()
    z = z[np.abs(z) <= R + 1e-12]
    a = np.abs(z)
    out = np.where(a > w, z * (w / np.where(a > 0, a, 1)), z)
    return DiskNet(float(w), float(eps_prime), out)


def raw_net_size(M: int, w: float, eps: float) -> int:
    return len(disk_net(w, eps / M)) ** M if M else 1


def raw_net_iter(M: int, w: float, eps: float, cap: int = RAW_CAP) -> Iterator[np.ndarray]:
    """Stream the product ``T x ... x T`` of the disk net with ``eps' = eps/M``.

    Every point of ``{|p_i| <= w}`` is within l1 distance `eps` of some
    yielded point.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    T = disk_net(w, eps / M).points
    size = len(T) ** M
    if size > cap:
        raise CapExceededError(
            f"raw net has {size} points (|T|={len(T)}, M={M}), cap {cap}",
            required=size,
            cap=cap,
        )
    for idx in itertools.product(range(len(T)), repeat=M):
        yield T[list(idx)]


def coordinate_lower_bounds(F: ObservableFamily, T: np.ndarray, angles: int = PREFILTER_ANGLES):
    """Per-coordinate lower bounds on the distance contribution.

    For net value ``t`` in coordinate i,
    ``max_theta Re(e^{-i theta} t) - lambda_max(Herm(e^{-i theta} Q_i))``
    bounds ``|t - Tr(Q_i rho)|`` from below for every rho (clamped at 0,
    i.e. ``z_i = 0``). Because ``lambda_max`` is subadditive, the sum of these
    bounds over coordinates is itself a weak-duality bound on dis(p).

    Returns
    -------
    ndarray, shape (M, len(T))
    """
    th = 2 * np.pi * np.arange(angles) / angles
    ph = np.exp(-1j * th)
    out = np.empty((F.M, len(T)))
    for i in range(F.M):
        A = ph[:, None, None] * F.ops[i][None]
        H = (A + np.swapaxes(A, 1, 2).conj()) / 2
        lmax = np.linalg.eigvalsh(H)[:, -1]
        vals = np.real(ph[None, :] * T[:, None]) - lmax[None, :]
        out[i] = np.max(vals, axis=1)
    return np.maximum(out, 0.0)


@dataclass
class FilterStats:
    raw: int = 0
    prefiltered: int = 0
    evaluated: int = 0
    accepted: int = 0
    early: int = 0
    oracle_iterations: int = 0
    gamma: float = 0.0
    T: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def _prefix_candidates(lb: np.ndarray, thr: float, cap: int = CANDIDATE_CAP):
    """Index tuples (lexicographic) whose summed per-coordinate bound is <= thr.

    Built coordinate by coordinate so the pruned product is never formed;
    raises `CapExceededError` when a level holds more than `cap` prefixes.
    """
    M, n = lb.shape
    # minimal achievable remainder from coordinates j.. M-1
    rest = np.zeros(M + 1)
    for j in range(M - 1, -1, -1):
        rest[j] = rest[j + 1] + lb[j].min()
    idx = np.zeros((1, 0), dtype=np.int32)
    acc = np.zeros(1)
    step = max(1, PREFIX_BLOCK // n)
    for j in range(M):
        parts, accs, total = [], [], 0
        for lo in range(0, len(idx), step):
            ok = lb[j][None, :] + acc[lo : lo + step, None] + rest[j + 1] <= thr
            r, c = np.nonzero(ok)
            total += len(r)
            if total > cap:
                raise CapExceededError(
                    f"more than {cap} prefiltered candidates after {j + 1} of {M} coordinates",
                    required=total,
                    cap=cap,
                )
            r = r + lo
            parts.append(np.concatenate([idx[r], c[:, None].astype(np.int32)], axis=1))
            accs.append(acc[r] + lb[j][c])
        idx = np.concatenate(parts) if parts else np.zeros((0, j + 1), dtype=np.int32)
        acc = np.concatenate(accs) if accs else np.zeros(0)
    return idx


def filtered_candidates(F: ObservableFamily, eps: float, eps_mmw: float, prefilter: bool = True,
                        rule: str = "mmw", cap: int = CANDIDATE_CAP):
    """Disk net and the lexicographically ordered index tuples surviving the prefilter.

    The prefilter discards tuples whose bound exceeds ``eps + eps_mmw``
    under ``rule='mmw'`` and ``eps`` under ``rule='certified'`` (see
    `mmw_decide_batch`).
    """
    T = disk_net(F.w, eps / F.M).points
    thr = eps + eps_mmw if rule == "mmw" else eps
    if prefilter:
        lb = coordinate_lower_bounds(F, T)
    else:
        lb = np.zeros((F.M, len(T)))
    return T, _prefix_candidates(lb, thr if prefilter else np.inf, cap)


def filtered_net_iter(
    F: ObservableFamily,
    eps: float,
    eps_mmw: float | None = None,
    batch: int = 4096,
    cap: int = RAW_CAP,
    stats: FilterStats | None = None,
    keep_rejected: bool = False,
    prefilter: bool = True,
    early: bool = True,
    workers: int = 1,
    mmw_cap: int = MMW_ITER_CAP,
    deadline: float | None = None,
    rule: str = "mmw",
    candidate_cap: int = CANDIDATE_CAP,
) -> Iterator[NetPoint]:
    """Stream raw-net points with ``d~ <= eps + eps_mmw``.

    Raw points are first screened with `coordinate_lower_bounds`; a point
    whose bound already exceeds the threshold has ``dis > eps + eps_mmw`` and
    so would be rejected by the oracle as well. Survivors are decided in
    batches by `mmw_decide_batch`. Stream order is the lexicographic order
    of the raw net restricted to accepted points.

    Parameters
    ----------
    eps_mmw : oracle error, default ``eps/2``.
    keep_rejected : also yield rejected evaluated points (``accepted=False``).
    workers : threads deciding batches concurrently; output order is unchanged.
    mmw_cap : iteration cap passed to the distance oracle.
    deadline : ``time.perf_counter()`` value after which `CapExceededError` is raised.
    candidate_cap : limit on prefiltered points handed to the oracle.
    rule : early-decision rule of `mmw_decide_batch`. ``'mmw'`` reproduces
        the full-length oracle decisions; ``'certified'`` accepts a superset
        of ``{dis <= eps}`` inside ``{dis <= eps + 2 eps_mmw}``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    eps_mmw = eps / 2 if eps_mmw is None else eps_mmw
    if eps_mmw <= 0:
        raise ValueError("eps_mmw must be positive")
    st = stats if stats is not None else FilterStats()
    T = disk_net(F.w, eps / F.M).points
    size = len(T) ** F.M
    if size > cap:
        raise CapExceededError(
            f"raw net has {size} points (|T|={len(T)}, M={F.M}), cap {cap}",
            required=size,
            cap=cap,
        )
    _, idx = filtered_candidates(F, eps, eps_mmw, prefilter, rule, candidate_cap)
    st.raw += size
    st.prefiltered += size - len(idx)
    n = len(T)
    chunks = [idx[s : s + batch] for s in range(0, len(idx), batch)]

    def decide(chunk):
        if deadline is not None and time.perf_counter() > deadline:
            raise CapExceededError("wall-time limit reached while filtering the net")
        return mmw_decide_batch(T[chunk], F, eps, eps_mmw, cap=mmw_cap, early=early, rule=rule)

    if workers > 1:
        pool = ThreadPoolExecutor(workers)
        decisions = pool.map(decide, chunks)
    else:
        pool = None
        decisions = map(decide, chunks)
    try:
        yield from _emit(chunks, decisions, T, n, F.M, st, keep_rejected)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)


def _emit(chunks, decisions, T, n, M, st, keep_rejected):
    for chunk, dec in zip(chunks, decisions):
        P = T[chunk]
        st.gamma, st.T = dec.gamma, dec.T
        st.evaluated += len(chunk)
        st.accepted += int(dec.accepted.sum())
        st.early += int(dec.early.sum())
        st.oracle_iterations += int(dec.iterations.sum())
        lin = np.ravel_multi_index(chunk.T, (n,) * M)
        for j in range(len(chunk)):
            if dec.accepted[j] or keep_rejected:
                yield NetPoint(P[j], float(dec.estimate[j]), bool(dec.accepted[j]), int(lin[j]))


def accepted_points(F: ObservableFamily, eps: float, eps_mmw: float | None = None, **kw):
    """Materialise the filtered net as ``(coords (N, M), estimates (N,), indices (N,))``."""
    pts = list(filtered_net_iter(F, eps, eps_mmw, **kw))
    if not pts:
        return np.zeros((0, F.M), dtype=complex), np.zeros(0), np.zeros(0, dtype=np.int64)
    return (
        np.stack([p.coords for p in pts]),
        np.array([p.dis_estimate for p in pts]),
        np.array([p.index for p in pts], dtype=np.int64),
    )

"""Product-state optimisation for PSD bipartite operators by netting a small ball.

Truncating the spectrum of ``Q = sum_t lambda_t |Psi_t><Psi_t|`` at
``delta/2`` leaves ``|Gamma|`` terms. For a product vector ``u (x) v``,

    <uv| Q~ |uv> = max_{||alpha|| <= 1} |<uv|phi_alpha>|^2,
    phi_alpha = sum_{t in Gamma} conj(alpha_t) sqrt(lambda_t) Psi_t,

and the maximum over product vectors of ``|<uv|phi>|`` is the top Schmidt
coefficient of phi. Netting the unit ball of ``C^|Gamma|`` therefore gives
the optimum up to ``delta``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import CapExceededError
from .operators import _entries
from .sep_opt import OptimizationReport

PSD_TOL = 1e-9
BALL_CAP = 10**8
BATCH = 65536


@dataclass(frozen=True)
class SpectralTruncation:
    """Eigen-decomposition of a PSD operator with the kept index set.

    Attributes
    ----------
    eigenvalues : descending, clamped at 0.
    eigenvectors : columns match `eigenvalues`.
    threshold : eigenvalues at or above it are kept.
    kept : indices of kept eigenpairs (a prefix, as eigenvalues are sorted).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    threshold: float
    kept: np.ndarray

    @property
    def m(self) -> int:
        return len(self.kept)

    def operator(self) -> np.ndarray:
        """The truncated operator ``sum_{t in Gamma} lambda_t |Psi_t><Psi_t|``."""
        V = self.eigenvectors[:, self.kept]
        return (V * self.eigenvalues[self.kept]) @ V.conj().T


@dataclass(frozen=True)
class SchmidtResult:
    """``psi = sum_i mu_i u_i (x) v_i`` with ``mu`` descending."""

    coefficients: np.ndarray
    left: np.ndarray
    right: np.ndarray


def truncate_spectrum(Q, delta: float) -> SpectralTruncation:
    """Keep eigenpairs with ``lambda_t >= delta/2``.

    Raises
    ------
    ValueError
        If delta is not positive or Q has an eigenvalue below ``-1e-9``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    a = _entries(Q)
    a = (a + a.conj().T) / 2
    vals, vecs = np.linalg.eigh(a)
    if vals[0] < -PSD_TOL:
        raise ValueError(f"operator is not PSD: eigenvalue {vals[0]:.3g}")
    vals = np.clip(vals, 0.0, None)[::-1]
    vecs = vecs[:, ::-1]
    thr = delta / 2
    kept = np.nonzero(vals >= thr)[0]
    return SpectralTruncation(vals, vecs, thr, kept)


def ball_net_size(m: int, eps: float) -> int:
    h = eps / math.sqrt(2 * m)
    n = int(math.floor((1 + eps) / h))
    return (2 * n + 1) ** (2 * m)


def ball_net(m: int, eps: float, cap: int = BALL_CAP, phase_fixed: bool = False,
             batch: int = BATCH) -> Iterator[np.ndarray]:
    """Stream an eps-net of the unit ball of C^m in batches of shape (B, m).

    A cubic grid of spacing ``eps/sqrt(2m)`` over the 2m real coordinates
    covers space to within eps. Nodes within ``1 + eps`` are kept and
    projected radially onto the unit ball (non-expansive, so coverage
    survives). With ``phase_fixed`` only nodes whose first coordinate has
    nonnegative real part are kept; this covers the ball up to a global
    phase. Coincident projected points are dropped within each slice of
    the looped coordinates (all of them when ``m <= 2``).
    """
    if m < 1 or eps <= 0:
        raise ValueError("ball_net needs m >= 1 and eps > 0")
    h = eps / math.sqrt(2 * m)
    n = int(math.floor((1 + eps) / h))
    total = (2 * n + 1) ** (2 * m)
    if total > cap:
        raise CapExceededError(
            f"ball net for m={m}, eps={eps} scans {total} grid nodes, cap {cap}; "
            f"net size scales as (1+2/eps)^(2m) = {(1 + 2 / eps) ** (2 * m):.3e}",
            required=total,
            cap=cap,
        )
    ticks = h * np.arange(-n, n + 1)
    R2 = (1 + eps) ** 2 + 1e-12
    first = ticks[ticks >= -1e-15] if phase_fixed else ticks
    axes = [first] + [ticks] * (2 * m - 1)
    # loop over the leading real coordinates, vectorise the trailing ones
    n_inner = min(2 * m, 4)
    outer_axes, inner_axes = axes[: 2 * m - n_inner], axes[2 * m - n_inner:]
    g = np.meshgrid(*inner_axes, indexing="ij")
    inner = np.stack([x.ravel() for x in g], axis=1)
    inner_sq = np.sum(inner**2, axis=1)
    for o in np.ndindex(*[len(a) for a in outer_axes]):
        head = np.array([outer_axes[k][i] for k, i in enumerate(o)])
        ok = inner_sq + float(np.sum(head**2)) <= R2
        if not np.any(ok):
            continue
        x = np.concatenate([np.broadcast_to(head, (int(ok.sum()), len(head))), inner[ok]], axis=1)
        # real coordinates are ordered (Re a1, Re a2.., Im a1, ..)
        z = x[:, :m] + 1j * x[:, m:]
        r = np.linalg.norm(z, axis=1)
        z = np.where(r[:, None] > 1, z / np.where(r > 0, r, 1)[:, None], z)
        # nodes on a common ray outside the ball project to one point
        key = np.round(np.concatenate([z.real, z.imag], axis=1) / h * 1e6)
        _, first_ix = np.unique(key, axis=0, return_index=True)
        z = z[np.sort(first_ix)]
        for s in range(0, len(z), batch):
            yield z[s : s + batch]


def phi_alpha(T: SpectralTruncation, alpha) -> np.ndarray:
    """``sum_{t in Gamma} conj(alpha_t) sqrt(lambda_t) Psi_t`` (batched over rows of alpha)."""
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape[-1] != T.m:
        raise ValueError(f"alpha has {alpha.shape[-1]} entries, truncation keeps {T.m}")
    V = T.eigenvectors[:, T.kept] * np.sqrt(T.eigenvalues[T.kept])
    return np.conj(alpha) @ V.T


def schmidt_max(psi, dA: int, dB: int) -> SchmidtResult:
    """Schmidt decomposition via the SVD of the ``dA x dB`` reshaping.

    ``psi = sum_k mu_k left[k] (x) right[k]``. The largest overlap
    ``|<u v|psi>|`` over unit product vectors is ``mu_1``, attained at
    ``left[0] (x) right[0]``.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != dA * dB:
        raise ValueError(f"vector of length {psi.size} does not factor as {dA} x {dB}")
    U, s, Vh = np.linalg.svd(psi.reshape(dA, dB))
    return SchmidtResult(s, U.T.copy(), Vh.copy())


def top_schmidt_sq(psi: np.ndarray, dA: int, dB: int) -> np.ndarray:
    """Squared top Schmidt coefficient for a batch of vectors of shape (B, dA*dB)."""
    A = psi.reshape(-1, dA, dB)
    if dA == 2 and dB == 2:
        # eigenvalues of the Gram matrix [[p, r], [r*, q]]; the discriminant as a
        # sum of squares avoids cancellation at degenerate Schmidt coefficients
        p = np.abs(A[:, 0, 0]) ** 2 + np.abs(A[:, 0, 1]) ** 2
        q = np.abs(A[:, 1, 0]) ** 2 + np.abs(A[:, 1, 1]) ** 2
        r = A[:, 0, 0] * A[:, 1, 0].conj() + A[:, 0, 1] * A[:, 1, 1].conj()
        return (p + q + np.hypot(p - q, 2 * np.abs(r))) / 2
    G = A @ np.swapaxes(A, 1, 2).conj() if dA <= dB else np.swapaxes(A, 1, 2).conj() @ A
    return np.linalg.eigvalsh(G)[:, -1]


def optimize_frobenius(Q, dims: tuple[int, int], delta: float, cap: int = BALL_CAP,
                       phase_fixed: bool = True, progress=None) -> OptimizationReport:
    """Approximate the maximum of ``<Q, rho>`` over product states for PSD Q.

    ``OPT = max_alpha mu_1(phi_alpha)^2`` over an eps-net of the unit ball
    of ``C^|Gamma|`` with ``eps = delta / (4 ||Q||_F)``; the optimum lies
    within ``delta`` of OPT.

    Parameters
    ----------
    Q : PSD operator on ``C^dA (x) C^dB``
    dims : (dA, dB)
    delta : additive error target
    cap : limit on scanned ball-grid nodes
    phase_fixed : restrict the net to one global phase (exact symmetry)
    progress : optional callable ``progress(points_done)``, called roughly
        every 10^5 net points
    """
    t0 = time.perf_counter()
    a = _entries(Q)
    dA, dB = dims
    if dA * dB != a.shape[0]:
        raise ValueError(f"dims {dims} inconsistent with operator of size {a.shape[0]}")
    T = truncate_spectrum(a, delta)
    fro = float(np.linalg.norm(a))
    params = {"delta": delta, "dims": list(dims), "phase_fixed": phase_fixed}
    if T.m == 0 or fro == 0:
        v = np.zeros(dA * dB)
        v[0] = 1
        stats = {"gamma_size": T.m, "net_points": 0, "wall_time": time.perf_counter() - t0}
        return OptimizationReport("frobenius", 0.0, delta, {"alpha": [], "vector": v},
                                  stats, params, {"truncation": delta / 2, "net": delta / 2})
    eps = delta / (4 * fro)
    params.update({"threshold": T.threshold, "ball_eps": eps, "frobenius_norm": fro})
    best, best_alpha, count = -np.inf, None, 0
    next_report = 100_000
    for z in ball_net(T.m, eps, cap, phase_fixed):
        vals = top_schmidt_sq(phi_alpha(T, z), dA, dB)
        j = int(np.argmax(vals))
        if vals[j] > best + 1e-12:
            best, best_alpha = float(vals[j]), z[j].copy()
        count += len(z)
        if progress is not None and count >= next_report:
            progress(count)
            next_report = (count // 100_000 + 1) * 100_000
    phi = phi_alpha(T, best_alpha)
    sr = schmidt_max(phi, dA, dB)
    u, v = sr.left[0], sr.right[0]
    witness = {"alpha": best_alpha, "u": u, "v": v, "vector": np.kron(u, v),
               "objective_at_witness": float(np.real(np.kron(u, v).conj() @ a @ np.kron(u, v)))}
    stats = {"gamma_size": T.m, "net_points": count, "wall_time": time.perf_counter() - t0}
    return OptimizationReport("frobenius", best, delta, witness, stats, params,
                              {"truncation": delta / 2, "net": delta / 2})

"""l1 distance from a point of C^M to the image of the density matrices.

Given observables ``Q_1..Q_M`` on C^d, the image is
``S = {(Tr Q_1 rho, ..., Tr Q_M rho) : rho a density matrix}``. The
distance ``dis(p) = min_rho ||p - q(rho)||_1`` is the value of the game

    min_rho max_{|z_i| <= 1} Re sum_i z_i (p_i - Tr Q_i rho)

which a matrix multiplicative weights (MMW) learner over rho solves
against a best-responding phase vector z.

Conventions
-----------
* ``q_i(rho) = Tr(Q_i rho)``, with no conjugation on Q_i, so that
  factors that are not Hermitian pair linearly with product states.
* The best response to ``x = p - q`` is ``z_i = conj(x_i)/|x_i|`` (and 1 when
  ``x_i = 0``), giving ``Re sum_i z_i x_i = ||x||_1``.
* The loss is ``N = (Re sum_i z_i p_i + 2Mw) I - Herm(sum_i z_i Q_i)``; then
  ``Tr(rho N) - 2Mw = ||p - q(rho)||_1`` and ``0 <= N <= 4Mw``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError
from .operators import PAULI, opnorm

MMW_ITER_CAP = 1_000_000
PSD_TOL = 1e-9


@dataclass(frozen=True)
class ObservableFamily:
    """Observables ``Q_1..Q_M`` on C^d with ``||Q_i|| <= w``.

    Individual operators may be non-Hermitian; only their linear pairing
    with density matrices is used.
    """

    ops: np.ndarray
    w: float

    def __post_init__(self):
        ops = np.array(self.ops, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise ValueError(f"ops must have shape (M, d, d), got {ops.shape}")
        w = float(self.w)
        for i, q in enumerate(ops):
            n = opnorm(q)
            if n > w + 1e-9:
                raise ValueError(f"operator {i} has norm {n:.6g} exceeding width {w:.6g}")
        ops.setflags(write=False)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_ops(cls, ops, w: float | None = None) -> "ObservableFamily":
        ops = np.asarray(ops, dtype=complex)
        if w is None:
            w = max([opnorm(q) for q in ops] + [0.0])
        return cls(ops, w)

    @property
    def M(self) -> int:
        return self.ops.shape[0]

    @property
    def d(self) -> int:
        return self.ops.shape[1]

    def herm_combination(self, z: np.ndarray) -> np.ndarray:
        """``Herm(sum_i z_i Q_i)`` for z of shape (M,) or (B, M)."""
        a = np.tensordot(z, self.ops, axes=([-1], [0]))
        return (a + np.swapaxes(a, -1, -2).conj()) / 2


@dataclass
class DistanceCertificate:
    """MMW estimate of dis(p).

    Attributes
    ----------
    value : float
        The estimate d~, the average of ``||p - q(rho_t)||_1`` over iterations.
    eps : float
        Additive error guaranteed by the regret bound.
    gamma, T : step size and iteration count used.
    w : effective width used in the loss normalisation.
    phase_history_digest : optional diagnostic record (see `mmw_distance`).
    """

    value: float
    eps: float
    gamma: float
    T: int
    w: float
    phase_history_digest: dict | None = None


def _phase(x: np.ndarray, a: np.ndarray | None = None) -> np.ndarray:
    """Unit-modulus maximiser of ``Re sum z_i x_i``; 1 on zero entries."""
    if a is None:
        a = np.abs(x)
    nz = a > 0
    return np.where(nz, np.conj(x) / np.where(nz, a, 1.0), 1.0)


def check_density(rho, tol: float = PSD_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > tol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.12g}, expected 1")
    lo = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lo < -tol:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")
    return rho


def q_vector(F: ObservableFamily, rho) -> np.ndarray:
    """``q_i = Tr(Q_i rho)`` for a validated density matrix."""
    rho = check_density(rho)
    if rho.shape[0] != F.d:
        raise ValueError(f"density matrix has dimension {rho.shape[0]}, family has {F.d}")
    return np.einsum("mij,ji->m", F.ops, rho)


def mmw_params(M: int, w: float, eps: float, d: int, cap: int = MMW_ITER_CAP):
    """Step size ``gamma = eps/(8Mw)`` and ``T = ceil(ln d / gamma^2)``.

    ``gamma`` is capped at 1/4 (only reachable when eps exceeds the trivial
    bound ``2Mw`` on the distance) and ``T`` is at least 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if M == 0 or w == 0:
        return 0.25, 1
    gamma = min(eps / (8 * M * w), 0.25)
    T = max(1, math.ceil(math.log(d) / gamma**2))
    if T > cap:
        raise CapExceededError(
            f"MMW needs T={T} iterations (gamma={gamma:.3g}) but the cap is {cap}",
            required=T,
            cap=cap,
        )
    return gamma, T


def _gibbs(L: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma L)/Tr`` for Hermitian L of shape (..., d, d)."""
    vals, vecs = np.linalg.eigh(L)
    e = np.exp(-gamma * (vals - vals[..., :1]))
    e /= e.sum(axis=-1, keepdims=True)
    return (vecs * e[..., None, :]) @ np.swapaxes(vecs, -1, -2).conj()


def mmw_distance(
    p,
    F: ObservableFamily,
    eps: float,
    cap: int = MMW_ITER_CAP,
    record: bool = False,
    check: bool = False,
) -> DistanceCertificate:
    """Estimate dis(p) with additive error `eps` by matrix multiplicative weights.

    Parameters
    ----------
    p : array_like, shape (M,)
    F : ObservableFamily
    eps : float
        Target additive error.
    cap : int
        Iteration cap; exceeding it raises `CapExceededError`.
    record : bool
        Keep per-iteration diagnostics (loss spectrum bounds, identity
        residual, phase vectors z and residuals ``p - q(rho_t)``) in
        ``phase_history_digest``.
    check : bool
        Assert the loss bounds and the pairing identity at every step.

    Returns
    -------
    DistanceCertificate
    """
    p = np.asarray(p, dtype=complex).ravel()
    if p.size != F.M:
        raise ValueError(f"point has {p.size} coordinates, family has {F.M}")
    M, d = F.M, F.d
    w = max(F.w, float(np.max(np.abs(p), initial=0.0)))
    gamma, T = mmw_params(M, w, eps, d, cap)
    if M == 0:
        return DistanceCertificate(0.0, eps, gamma, T, w)
    I = np.eye(d)
    L = np.zeros((d, d), dtype=complex)
    total = 0.0
    hist = {"loss_min": [], "loss_max": [], "identity_residual": [], "z": [], "x": []} if record else None
    for _ in range(T):
        rho = _gibbs(L, gamma)
        q = np.einsum("mij,ji->m", F.ops, rho)
        x = p - q
        z = _phase(x)
        N = (np.real(z @ p) + 2 * M * w) * I - F.herm_combination(z)
        val = np.real(np.trace(rho @ N)) - 2 * M * w
        total += val
        L += N
        if record or check:
            ev = np.linalg.eigvalsh(N)
            resid = abs(val - np.sum(np.abs(x)))
            if check:
                tol = 1e-9 * max(1.0, M * w)
                assert ev[0] >= -tol and ev[-1] <= 4 * M * w + tol, "loss outside [0, 4Mw]"
                assert resid <= tol, f"pairing identity violated by {resid}"
            if record:
                hist["loss_min"].append(float(ev[0]))
                hist["loss_max"].append(float(ev[-1]))
                hist["identity_residual"].append(float(resid))
                hist["z"].append(z.copy())
                hist["x"].append(x.copy())
    return DistanceCertificate(total / T, eps, gamma, T, w, hist)


def distance_lower_bound(p, F: ObservableFamily, z) -> float:
    """Weak-duality bound ``Re sum z_i p_i - lambda_max(Herm sum z_i Q_i)``.

    Valid for any z with ``|z_i| <= 1``; the maximum over such z is dis(p).
    """
    p = np.asarray(p, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return float(np.real(z @ p) - np.linalg.eigvalsh(F.herm_combination(z))[-1])


# ---------------------------------------------------------------------------
# batched engine used by the net filter


class _DenseEngine:
    """Batched MMW state for general d via eigendecomposition."""

    needs_shift = True

    def __init__(self, F: ObservableFamily, B: int):
        self.F = F
        self.L = np.zeros((B, F.d, F.d), dtype=complex)

    def take(self, keep):
        self.L = self.L[keep]

    def rho(self, gamma):
        return _gibbs(self.L, gamma)

    def q(self, rho):
        return np.einsum("mij,bji->bm", self.F.ops, rho)

    def update(self, z, shift):
        H = self.F.herm_combination(z)
        self.L -= H
        idx = np.arange(self.F.d)
        self.L[:, idx, idx] += shift[:, None]

    def lmax(self, z):
        return np.linalg.eigvalsh(self.F.herm_combination(z))[:, -1]


class _QubitEngine:
    """Batched MMW for d = 2 in the Pauli basis.

    With ``Q_i = sum_mu c_{i mu} sigma_mu`` and accumulated loss
    ``L = a I + b . sigma`` the Gibbs state is ``(I - tanh(gamma |b|) b^ . sigma)/2``.
    """

    needs_shift = False

    def __init__(self, F: ObservableFamily, B: int):
        self.F = F
        basis = np.stack([PAULI[s] for s in "IXYZ"])
        # c[i, mu] = Tr(sigma_mu Q_i)/2
        self.c = np.einsum("uji,mij->mu", basis, F.ops) / 2
        self.b = np.zeros((B, 3))
        self.c0 = self.c[:, 0].copy()
        self.cvT = self.c[:, 1:].T.copy()
        self.cv = self.c[:, 1:].copy()

    def take(self, keep):
        self.b = self.b[keep]

    def rho(self, gamma):
        nb = np.linalg.norm(self.b, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(nb > 0, np.tanh(gamma * nb) / nb, 0.0)
        return -f[:, None] * self.b  # Bloch vector r

    def q(self, r):
        return self.c0 + r @ self.cvT

    def update(self, z, shift):
        self.b -= np.real(z @ self.cv)

    def lmax(self, z):
        h = np.real(z @ self.c)
        return h[:, 0] + np.linalg.norm(h[:, 1:], axis=1)


@dataclass
class BatchDecision:
    """Outcome of the thresholded distance test for a batch of points.

    ``estimate`` is d~ for points that ran to completion, the certified
    upper bound for early accepts, and the certified lower bound for early
    rejects.
    """

    accepted: np.ndarray
    estimate: np.ndarray
    early: np.ndarray
    iterations: np.ndarray
    gamma: float = 0.0
    T: int = 0
    stats: dict = field(default_factory=dict)


def mmw_decide_batch(
    P,
    F: ObservableFamily,
    eps: float,
    eps_mmw: float,
    cap: int = MMW_ITER_CAP,
    early: bool = True,
    engine: str = "auto",
    rule: str = "mmw",
) -> BatchDecision:
    """Decide ``d~(p) <= eps + eps_mmw`` for every row of `P`.

    Each point runs the same MMW iteration as `mmw_distance` with error
    `eps_mmw`. With ``early=True`` a point stops before T iterations when
    the early test of `rule` settles it.

    ``rule='mmw'`` stops only when the outcome of the full run is certain,
    so the decisions equal those of running every point to T:

    * accept when some iterate or the running average rho has
      ``||p - q(rho)||_1 <= eps`` (then ``d~ <= dis + eps_mmw <= eps + eps_mmw``);
    * reject when a dual phase vector certifies ``dis > eps + eps_mmw``
      (then ``d~ >= dis`` exceeds the threshold).

    ``rule='certified'`` keeps only the two properties a net filter needs,
    every point with ``dis <= eps`` accepted and every accepted point with
    ``dis <= eps + 2 eps_mmw``:

    * accept when a state certifies ``dis <= eps + 2 eps_mmw``;
    * reject when a dual phase vector certifies ``dis > eps``.

    Points undecided after T iterations fall back to ``d~ <= eps + eps_mmw``
    under either rule.

    The loss normalisation uses ``max(F.w, max |P|)`` over the whole
    batch, so per-point runs match `mmw_distance` when every coordinate
    satisfies ``|p_i| <= F.w`` (always true for disk-net points).

    Parameters
    ----------
    P : array_like, shape (B, M)
    engine : {'auto', 'dense', 'qubit'}
    rule : {'mmw', 'certified'}
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    B, M = P.shape
    if M != F.M:
        raise ValueError(f"points have {M} coordinates, family has {F.M}")
    thr = eps + eps_mmw
    if rule == "mmw":
        acc_thr, rej_thr = eps, thr
    elif rule == "certified":
        acc_thr, rej_thr = eps + 2 * eps_mmw, eps
    else:
        raise ValueError(f"rule must be 'mmw' or 'certified', got {rule!r}")
    w = max(F.w, float(np.max(np.abs(P), initial=0.0)))
    gamma, T = mmw_params(M, w, eps_mmw, F.d, cap)
    accepted = np.zeros(B, dtype=bool)
    estimate = np.zeros(B)
    early_flag = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    if B == 0:
        return BatchDecision(accepted, estimate, early_flag, iters, gamma, T)
    if engine == "auto":
        engine = "qubit" if F.d == 2 else "dense"
    eng = _QubitEngine(F, B) if engine == "qubit" else _DenseEngine(F, B)

    active = np.arange(B)
    Pa = P
    total = np.zeros(B)
    qsum = np.zeros((B, M), dtype=complex)
    best_ub = np.full(B, np.inf)
    next_check = 1
    for t in range(1, T + 1):
        state = eng.rho(gamma)
        q = eng.q(state)
        x = Pa - q
        ax = np.abs(x)
        z = _phase(x, ax)
        l1 = ax.sum(axis=1)
        total += l1
        qsum += q
        # the identity part of the loss only matters for the dense engine
        shift = np.real(np.sum(z * Pa, axis=1)) + 2 * M * w if eng.needs_shift else None
        eng.update(z, shift)
        if not early or t == T or t < next_check:
            continue
        next_check = t + max(1, t // 8)
        xbar = Pa - qsum / t
        ub = np.minimum(np.minimum(best_ub, l1), np.sum(np.abs(xbar), axis=1))
        best_ub = ub
        zbar = _phase(xbar)
        lb = np.maximum(
            np.real(np.sum(zbar * Pa, axis=1)) - eng.lmax(zbar),
            np.real(np.sum(z * Pa, axis=1)) - eng.lmax(z),
        )
        acc = ub <= acc_thr
        rej = lb > rej_thr
        done = acc | rej
        if np.any(done):
            idx = active[done]
            accepted[idx] = acc[done]
            estimate[idx] = np.where(acc[done], ub[done], lb[done])
            early_flag[idx] = True
            iters[idx] = t
            keep = ~done
            active = active[keep]
            Pa = Pa[keep]
            total, qsum, best_ub = total[keep], qsum[keep], best_ub[keep]
            eng.take(keep)
            if active.size == 0:
                break
    if active.size:
        dt = total / T
        accepted[active] = dt <= thr
        estimate[active] = dt
        iters[active] = T
    return BatchDecision(accepted, estimate, early_flag, iters, gamma, T)


# ---------------------------------------------------------------------------
# small-instance reference


def support_point(F: ObservableFamily, z) -> np.ndarray:
    """Image of the top eigenvector of ``Herm(sum z_i Q_i)`` (batched over z)."""
    z = np.atleast_2d(z)
    _, vecs = np.linalg.eigh(F.herm_combination(z))
    v = vecs[:, :, -1]
    return np.einsum("bi,mij,bj->bm", v.conj(), F.ops, v)


def _sphere_grid(n: int, spacing: float) -> np.ndarray:
    """Directions on the unit sphere of R^n from a grid on the cube surface."""
    k = max(1, int(math.ceil(2 / spacing)))
    ticks = np.linspace(-1, 1, k + 1)
    pts = []
    for axis in range(n):
        for sign in (-1.0, 1.0):
            grids = np.meshgrid(*([ticks] * (n - 1)), indexing="ij")
            face = np.stack([g.ravel() for g in grids], axis=1) if n > 1 else np.zeros((1, 0))
            full = np.insert(face, axis, sign, axis=1)
            pts.append(full)
    pts = np.unique(np.round(np.concatenate(pts), 12), axis=0)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def exact_distance_bracket(
    p,
    F: ObservableFamily,
    grid: float = 0.5,
    tol: float = 1e-6,
    max_rounds: int = 300,
):
    """Certified bracket ``lower <= dis(p) <= upper``.

    The upper bound minimises ``||p - v||_1`` over the convex hull of images
    of pure states (support points of the image in a set of directions),
    solved as a second-order cone program. The dual of that program gives a
    phase vector z whose weak-duality bound is the lower bound; the support
    point in direction z is added to the hull and the loop repeats until
    the gap is below `tol`.

    Returns
    -------
    lower, upper : float
    """
    import cvxpy as cp

    p = np.asarray(p, dtype=complex).ravel()
    M, d = F.M, F.d
    if d > 4 or M > 3:
        raise ValueError(f"exact distance supports d <= 4 and M <= 3, got d={d}, M={M}")
    if M == 0:
        return 0.0, 0.0
    dirs = _sphere_grid(2 * M, grid)
    Z = dirs[:, :M] - 1j * dirs[:, M:]
    V = support_point(F, Z)
    P2 = np.concatenate([p.real, p.imag])
    lower, upper = -np.inf, np.inf
    for _ in range(max_rounds):
        V2 = np.concatenate([V.real, V.imag], axis=1).T  # (2M, n)
        lam = cp.Variable(V2.shape[1], nonneg=True)
        r = cp.Variable(2 * M)
        cons = [r == P2 - V2 @ lam, cp.sum(lam) == 1]
        pairs = cp.hstack([cp.norm(cp.hstack([r[i], r[M + i]]), 2) for i in range(M)])
        prob = cp.Problem(cp.Minimize(cp.sum(pairs)), cons)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            prob.solve(solver=cp.SCS, eps=1e-9)
        upper = min(upper, float(np.sum(np.abs(p - V.T @ np.clip(lam.value, 0, None)))))
        y = np.asarray(cons[0].dual_value, dtype=float)
        cands = []
        for s in (1.0, -1.0):
            zc = s * (y[:M] - 1j * y[M:])
            m = np.abs(zc)
            zc = np.where(m > 1, zc / np.where(m > 0, m, 1), zc)
            cands.append(zc)
        # residual phases also give a valid bound
        resid = p - V.T @ np.clip(lam.value, 0, None)
        cands.append(_phase(resid))
        lbs = [distance_lower_bound(p, F, zc) for zc in cands]
        j = int(np.argmax(lbs))
        lower = max(lower, lbs[j])
        if upper - lower <= tol:
            break
        new = support_point(F, np.stack(cands))
        V = np.concatenate([V, new])
    return max(lower, 0.0), upper


def exact_distance_small(p, F: ObservableFamily, grid: float = 0.5, tol: float = 1e-6) -> float:
    """Upper bound on dis(p) from a certified bracket of width at most `tol`.

    Intended as a validation reference for d <= 4, M <= 3.
    """
    return exact_distance_bracket(p, F, grid=grid, tol=tol)[1]

"""Operator types, validation and spectral primitives shared by every solver.

All matrices are dense complex numpy arrays. Containers are frozen
dataclasses; the arrays they hold are marked read-only on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERM_TOL = 1e-9
NORM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def _as_square(raw, name: str = "matrix") -> np.ndarray:
    a = np.asarray(raw, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    return a


def herm_defect(a: np.ndarray) -> float:
    """Max-abs deviation of `a` from its conjugate transpose."""
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)))


def opnorm(a: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class HermitianOperator:
    """A validated Hermitian matrix.

    Attributes
    ----------
    entries : ndarray, shape (d, d)
        Hermitian entries (symmetrised at validation time).
    herm_defect : float
        Deviation from Hermiticity measured on the raw input.
    """

    entries: np.ndarray
    herm_defect: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class DecomposedOperator:
    """Sum of tensor products ``sum_i Q^1_i (x) ... (x) Q^k_i``.

    Parameters
    ----------
    terms : sequence of k-tuples of square matrices
    dims : per-party dimensions
    widths : per-party operator-norm bounds, ``||Q^t_i|| <= widths[t]``
    check : validate the width bound at construction

    Factor matrices need not be Hermitian individually; only the sum is.
    """

    terms: tuple
    dims: tuple
    widths: tuple
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive integers, got {self.dims}")
        widths = tuple(float(x) for x in self.widths)
        if len(widths) != len(dims):
            raise ValueError(f"widths has {len(widths)} entries, expected {len(dims)}")
        if any(x < 0 for x in widths):
            raise ValueError("widths must be nonnegative")
        terms = []
        for i, term in enumerate(self.terms):
            if len(term) != len(dims):
                raise ValueError(f"term {i} has {len(term)} factors, expected {len(dims)}")
            fs = []
            for t, f in enumerate(term):
                f = np.asarray(f, dtype=complex)
                if f.shape != (dims[t], dims[t]):
                    raise ValueError(
                        f"term {i} factor {t} has shape {f.shape}, expected {(dims[t], dims[t])}"
                    )
                if self.check and opnorm(f) > widths[t] + NORM_TOL:
                    raise ValueError(
                        f"term {i} factor {t} has norm {opnorm(f):.6g} > width {widths[t]:.6g}"
                    )
                fs.append(_frozen(f))
            terms.append(tuple(fs))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def M(self) -> int:
        return len(self.terms)

    @property
    def W(self) -> float:
        return float(np.prod(self.widths))

    def party_stack(self, t: int) -> np.ndarray:
        """Factors of party `t` stacked as an array of shape (M, d_t, d_t)."""
        d = self.dims[t]
        if self.M == 0:
            return np.zeros((0, d, d), dtype=complex)
        return np.stack([term[t] for term in self.terms])

    def negate(self, party: int | None = None) -> "DecomposedOperator":
        """Return the decomposition of ``-Q`` by negating one party's factors."""
        p = self.k - 1 if party is None else party
        terms = [tuple(-f if t == p else f for t, f in enumerate(term)) for term in self.terms]
        return DecomposedOperator(terms, self.dims, self.widths, check=False)

    def scaled(self, c: float, party: int | None = None) -> "DecomposedOperator":
        """Multiply one party's factors (and width) by ``c > 0``."""
        p = self.k - 1 if party is None else party
        terms = [tuple(c * f if t == p else f for t, f in enumerate(term)) for term in self.terms]
        widths = tuple(c * w if t == p else w for t, w in enumerate(self.widths))
        return DecomposedOperator(terms, self.dims, widths, check=False)


@dataclass(frozen=True)
class ProductStateWitness:
    """Unit vectors, one per party, and the objective value they attain."""

    party_vectors: tuple
    value: float

    def __post_init__(self):
        vs = []
        for v in self.party_vectors:
            v = np.asarray(v, dtype=complex).ravel()
            n = np.linalg.norm(v)
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"witness vector has norm {n}, expected 1")
            vs.append(_frozen(v))
        object.__setattr__(self, "party_vectors", tuple(vs))
        object.__setattr__(self, "value", float(self.value))

    def state(self) -> np.ndarray:
        """Kronecker product of the party vectors."""
        out = np.ones(1, dtype=complex)
        for v in self.party_vectors:
            out = np.kron(out, v)
        return out


def validate_hermitian(raw, tol: float = HERM_TOL) -> HermitianOperator:
    """Validate and symmetrise a square matrix.

    Raises
    ------
    ValueError
        If `raw` is not square or deviates from Hermitian by more than `tol`.
    """
    a = _as_square(raw)
    dfc = herm_defect(a)
    if dfc > tol:
        raise ValueError(f"matrix is not Hermitian: defect {dfc:.3g} > tolerance {tol:.3g}")
    return HermitianOperator((a + a.conj().T) / 2, dfc)


def symmetrize(a) -> HermitianOperator:
    """Hermitian part ``(A + A*)/2``."""
    a = _as_square(a)
    h = (a + a.conj().T) / 2
    return HermitianOperator(h, 0.0)


def _entries(h) -> np.ndarray:
    if isinstance(h, HermitianOperator):
        return h.entries
    return _as_square(h)


def kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def reconstruct(D: DecomposedOperator, tol: float = HERM_TOL) -> HermitianOperator:
    """Dense sum of Kronecker products, validated as Hermitian.

    `tol` is relative to the sum of term norms so large decompositions
    are not rejected for rounding.
    """
    n = int(np.prod(D.dims))
    out = np.zeros((n, n), dtype=complex)
    scale = 0.0
    for term in D.terms:
        out += kron_all(term)
        scale += float(np.prod([opnorm(f) for f in term]))
    return validate_hermitian(out, tol * max(1.0, scale))


def extreme_eigenvalue(h, mode: str = "max") -> tuple[float, np.ndarray]:
    """Largest (``mode='max'``) or smallest (``'min'``) eigenpair."""
    a = _entries(h)
    vals, vecs = np.linalg.eigh(a)
    if mode == "max":
        j = -1
    elif mode == "min":
        j = 0
    else:
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    return float(vals[j]), vecs[:, j]


def hs_inner(q, r) -> complex:
    """Hilbert-Schmidt inner product ``Tr(Q* R)``."""
    a, b = _entries(q), _entries(r)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def partial_contract(q, v, dims: tuple[int, int] | None = None) -> HermitianOperator:
    """Contract the first tensor factor with a vector: ``(<v| (x) I) Q (|v> (x) I)``."""
    a = _entries(q)
    v = np.asarray(v, dtype=complex).ravel()
    da = v.size
    if dims is not None and dims[0] != da:
        raise ValueError(f"vector length {da} does not match first dimension {dims[0]}")
    n = a.shape[0]
    if n % da:
        raise ValueError(f"dimension {n} is not divisible by vector length {da}")
    db = n // da
    t = a.reshape(da, db, da, db)
    out = np.einsum("i,ijkl,k->jl", v.conj(), t, v)
    return symmetrize(out)


def partial_contract_second(q, u, dims: tuple[int, int]) -> HermitianOperator:
    """Contract the second tensor factor: ``(I (x) <u|) Q (I (x) |u>)``."""
    a = _entries(q)
    u = np.asarray(u, dtype=complex).ravel()
    da, db = dims
    if db != u.size or da * db != a.shape[0]:
        raise ValueError(f"dims {dims} inconsistent with operator {a.shape} and vector {u.size}")
    t = a.reshape(da, db, da, db)
    out = np.einsum("j,ijkl,l->ik", u.conj(), t, u)
    return symmetrize(out)


def operator_schmidt(q, dims: tuple[int, int], tol: float = 1e-12) -> DecomposedOperator:
    """Bipartite decomposition into Hermitian factor pairs.

    The realignment of a Hermitian ``Q`` in a Hermitian operator basis is a
    real matrix; its SVD gives ``Q = sum_i s_i A_i (x) B_i`` with Hermitian
    ``A_i, B_i``. Each ``A_i`` is rescaled to unit operator norm and the scale
    is moved to ``B_i``, so ``widths = (1, max_i ||B_i||)``.
    """
    a = _entries(q)
    da, db = dims
    if da * db != a.shape[0]:
        raise ValueError(f"dims {dims} inconsistent with operator of size {a.shape[0]}")
    ba, bb = hermitian_basis(da), hermitian_basis(db)
    # coefficient c[x, y] = <ba_x (x) bb_y, Q>, real for Hermitian Q
    t = a.reshape(da, db, da, db)
    c = np.einsum("xik,yjl,ijkl->xy", ba.conj(), bb.conj(), t).real
    u, s, vh = np.linalg.svd(c)
    terms = []
    wb = 0.0
    for i, si in enumerate(s):
        if si <= tol:
            continue
        A = np.einsum("x,xij->ij", u[:, i], ba)
        B = si * np.einsum("y,yij->ij", vh[i], bb)
        na = opnorm(A)
        A, B = A / na, B * na
        wb = max(wb, opnorm(B))
        terms.append((A, B))
    return DecomposedOperator(terms, (da, db), (1.0, max(wb, 0.0)), check=False)


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) Hermitian basis of d x d matrices."""
    out = []
    for j in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[j, j] = 1
        out.append(e)
    for j in range(d):
        for k in range(j + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = e[k, j] = 1 / np.sqrt(2)
            out.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = -1j / np.sqrt(2)
            e[k, j] = 1j / np.sqrt(2)
            out.append(e)
    return np.stack(out)


def merge_terms(D: DecomposedOperator, tol: float = 0.0) -> DecomposedOperator:
    """Fold terms that agree on every party except one.

    Two terms ``(..., A, ...)`` and ``(..., B, ...)`` with identical factors
    elsewhere are replaced by ``(..., A + B, ...)``. The result is exactly
    equal as an operator; widths are recomputed from the merged factors.
    """
    terms = [list(t) for t in D.terms]
    changed = True
    while changed:
        changed = False
        for free in range(D.k):
            groups: dict = {}
            out = []
            for term in terms:
                key = tuple(
                    term[t].tobytes() if t != free else None for t in range(D.k)
                )
                if key in groups:
                    j = groups[key]
                    out[j][free] = out[j][free] + term[free]
                    changed = True
                else:
                    groups[key] = len(out)
                    out.append(list(term))
            terms = [t for t in out if min(np.max(np.abs(f)) for f in t) > tol]
    widths = [0.0] * D.k
    for term in terms:
        for t, f in enumerate(term):
            widths[t] = max(widths[t], opnorm(f))
    return DecomposedOperator([tuple(t) for t in terms], D.dims, widths, check=False)


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def embed_qubits(op, positions: Sequence[int], n: int) -> np.ndarray:
    """Place an operator on qubits `positions` of an n-qubit register.

    Qubit 0 is the most significant; the operator's own qubit order follows
    `positions`.
    """
    op = np.asarray(op, dtype=complex)
    positions = list(positions)
    l = len(positions)
    if op.shape != (2**l, 2**l):
        raise ValueError(f"operator of shape {op.shape} does not act on {l} qubits")
    if len(set(positions)) != l or any(not 0 <= p < n for p in positions):
        raise ValueError(f"invalid qubit positions {positions} for {n} qubits")
    rest = [q for q in range(n) if q not in positions]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    order = positions + rest  # axis j of `full` is qubit order[j]
    perm = np.argsort(order)
    T = full.reshape((2,) * (2 * n))
    T = T.transpose(list(perm) + [n + p for p in perm])
    return T.reshape(2**n, 2**n)

"""Local Hamiltonians split across parties, and the product-state energy promise problem."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .operators import PAULI, DecomposedOperator, embed_qubits, merge_terms, opnorm
from .sep_opt import OptimizationReport, make_plan, optimize_decomposed

COEF_TOL = 1e-14


@dataclass(frozen=True)
class LocalTerm:
    """A Hermitian term on a few qubits.

    Parameters
    ----------
    matrix : Hermitian, shape (2^l, 2^l); its qubit order follows `support`.
    support : (party, qubit-within-party) pairs, most significant first.
    norm_bound : bound on the operator norm; defaults to the norm itself.
    """

    matrix: np.ndarray
    support: tuple
    norm_bound: float | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        sup = tuple((int(p), int(q)) for p, q in self.support)
        l = len(sup)
        if m.shape != (2**l, 2**l):
            raise ValueError(f"term matrix shape {m.shape} does not match support of size {l}")
        if len(set(sup)) != l:
            raise ValueError(f"support {sup} has repeated qubits")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-9:
            raise ValueError("term matrix is not Hermitian")
        n = opnorm(m)
        nb = n if self.norm_bound is None else float(self.norm_bound)
        if n > nb + 1e-9:
            raise ValueError(f"term norm {n:.6g} exceeds its bound {nb:.6g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "norm_bound", nb)

    @property
    def parties(self) -> list[int]:
        return sorted({p for p, _ in self.support})


@dataclass(frozen=True)
class LocalHamiltonian:
    """``sum_i H_i`` over k parties of n qubits each, with optional thresholds a > b."""

    k: int
    n: int
    terms: tuple
    a: float | None = None
    b: float | None = None
    locality: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ValueError("layout needs k >= 1 parties and n >= 1 qubits per party")
        terms = tuple(self.terms)
        for i, t in enumerate(terms):
            for p, q in t.support:
                if not (0 <= p < self.k and 0 <= q < self.n):
                    raise ValueError(f"term {i} support ({p}, {q}) outside layout k={self.k}, n={self.n}")
        object.__setattr__(self, "terms", terms)

    @property
    def r(self) -> int:
        return len(self.terms)

    @property
    def dims(self) -> tuple:
        return (2**self.n,) * self.k


def _pauli_strings(l: int):
    for labels in itertools.product("IXYZ", repeat=l):
        m = np.ones((1, 1), dtype=complex)
        for s in labels:
            m = np.kron(m, PAULI[s])
        yield labels, m


def decompose_term(t: LocalTerm, k: int, n: int) -> list[tuple]:
    """Split one term into k-tuples of factors whose tensor sums reproduce it.

    A term inside a single party is one tuple (the padded matrix, identities
    elsewhere). A term across parties is expanded in the Pauli basis of its
    support; each nonzero coefficient multiplies the factor of the lowest
    supported party and every other factor is a padded Pauli string.
    """
    for p, q in t.support:
        if not (0 <= p < k and 0 <= q < n):
            raise ValueError(f"support ({p}, {q}) outside layout k={k}, n={n}")
    d = 2**n
    eye = np.eye(d, dtype=complex)
    parties = t.parties
    if len(parties) == 1:
        p0 = parties[0]
        f = embed_qubits(t.matrix, [q for _, q in t.support], n)
        return [tuple(f if s == p0 else eye for s in range(k))]
    l = len(t.support)
    out = []
    for labels, sigma in _pauli_strings(l):
        c = np.trace(sigma @ t.matrix) / 2**l
        if abs(c) <= COEF_TOL:
            continue
        factors = []
        for s in range(k):
            pos = [j for j, (p, _) in enumerate(t.support) if p == s]
            if not pos:
                factors.append(eye)
                continue
            m = np.ones((1, 1), dtype=complex)
            for j in pos:
                m = np.kron(m, PAULI[labels[j]])
            f = embed_qubits(m, [t.support[j][1] for j in pos], n)
            if s == parties[0]:
                f = c * f
            factors.append(f)
        out.append(tuple(factors))
    return out


def decompose_hamiltonian(H: LocalHamiltonian) -> DecomposedOperator:
    """Concatenate the per-term decompositions; widths are the measured factor norms."""
    terms = []
    for t in H.terms:
        terms.extend(decompose_term(t, H.k, H.n))
    widths = [0.0] * H.k
    for term in terms:
        for s, f in enumerate(term):
            widths[s] = max(widths[s], opnorm(f))
    return DecomposedOperator(terms, H.dims, widths, check=False)


def dense_hamiltonian(H: LocalHamiltonian) -> np.ndarray:
    """Sum of the terms embedded in the full ``k n``-qubit register (party-major)."""
    N = H.k * H.n
    out = np.zeros((2**N, 2**N), dtype=complex)
    for t in H.terms:
        out += embed_qubits(t.matrix, [p * H.n + q for p, q in t.support], N)
    return out


def verdict(opt: float, effective_error: float, a: float, b: float) -> str:
    """HIGH / LOW by the midpoint, INCONCLUSIVE when the error bar spans half the gap."""
    if effective_error >= (a - b) / 2:
        return "INCONCLUSIVE"
    return "HIGH" if opt >= (a + b) / 2 else "LOW"


def solve_promise(H: LocalHamiltonian, delta: float, merge: bool = True, a=None, b=None,
                  **plan_kw) -> dict:
    """Decide whether the minimum energy over product states is >= a or <= b.

    Runs the product-state minimisation on the decomposed Hamiltonian.
    With ``merge`` the decomposition is first compacted by `merge_terms`,
    which leaves the operator unchanged.

    Returns
    -------
    dict with keys ``answer`` (HIGH, LOW or INCONCLUSIVE), ``report``,
    ``M_raw`` and ``M``.
    """
    a = H.a if a is None else a
    b = H.b if b is None else b
    if a is None or b is None:
        raise ValueError("thresholds a and b are required")
    if not a > b:
        raise ValueError(f"threshold a={a} must exceed b={b}")
    D = decompose_hamiltonian(H)
    M_raw = D.M
    if merge:
        D = merge_terms(D)
    if H.k == 1:
        raise ValueError("a single party has no product structure; use an eigenvalue solve")
    plan = make_plan(D, delta, mode="min", **plan_kw)
    rep: OptimizationReport = optimize_decomposed(D, plan)
    rep.params.update({"a": a, "b": b, "merge": merge, "M_raw": M_raw})
    return {
        "answer": verdict(rep.opt_value, rep.effective_error, a, b),
        "report": rep,
        "M_raw": M_raw,
        "M": D.M,
    }

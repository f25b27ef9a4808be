"""Acceptance operators of two-prover verifier circuits as sums of tensor products.

Qubits are laid out as A1 (first prover), A2 (second prover), V
(verifier workspace, starting in |0...0>), with qubit 0 most significant.
Acceptance is outcome 1 on the first V qubit. Conjugating the accepting
projector backwards through the gates keeps it a sum of products over
(A1, A2, V): gates inside one space act on one factor, and each CNOT
across spaces splits every term into four.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError
from .operators import DecomposedOperator, embed_qubits, merge_terms, opnorm
from .sep_opt import OptimizationReport, optimize_decomposed

DIRECT_QUBIT_CAP = 12
TERM_CAP = 4**8
SPACES = ("A1", "A2", "V")

P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
XM = np.array([[0, 1], [1, 0]], dtype=complex)
CNOT = np.kron(P0, np.eye(2)) + np.kron(P1, XM)


@dataclass(frozen=True)
class Gate:
    """``kind='u1'`` with `q` and a 2x2 unitary, or ``kind='cnot'`` with control `c` and target `t`."""

    kind: str
    q: int = -1
    matrix: np.ndarray | None = None
    c: int = -1
    t: int = -1


@dataclass(frozen=True)
class VerifierCircuit:
    """Gates over qubits partitioned as (A1, A2, V)."""

    a1: int
    a2: int
    v: int
    gates: tuple = ()

    def __post_init__(self):
        if min(self.a1, self.a2) < 0 or self.v < 1:
            raise ValueError("layout needs a1, a2 >= 0 and v >= 1")
        gates = []
        for i, g in enumerate(self.gates):
            if g.kind == "u1":
                self._check_q(g.q, i)
                m = np.asarray(g.matrix, dtype=complex)
                if m.shape != (2, 2) or np.max(np.abs(m.conj().T @ m - np.eye(2))) > 1e-9:
                    raise ValueError(f"gate {i}: matrix is not a 2x2 unitary")
                m.setflags(write=False)
                g = Gate("u1", q=g.q, matrix=m)
            elif g.kind == "cnot":
                self._check_q(g.c, i)
                self._check_q(g.t, i)
                if g.c == g.t:
                    raise ValueError(f"gate {i}: CNOT control equals target")
            else:
                raise ValueError(f"gate {i}: unknown kind {g.kind!r}")
            gates.append(g)
        object.__setattr__(self, "gates", tuple(gates))

    def _check_q(self, q, i):
        if not 0 <= q < self.n_qubits:
            raise ValueError(f"gate {i}: qubit {q} out of range [0, {self.n_qubits})")

    @property
    def n_qubits(self) -> int:
        return self.a1 + self.a2 + self.v

    @property
    def accept_qubit(self) -> int:
        return self.a1 + self.a2

    @property
    def sizes(self) -> tuple:
        return (self.a1, self.a2, self.v)

    def locate(self, q: int) -> tuple[int, int]:
        """(space index, qubit index within the space)."""
        if q < self.a1:
            return 0, q
        if q < self.a1 + self.a2:
            return 1, q - self.a1
        return 2, q - self.a1 - self.a2


@dataclass
class PropagatedPOVM:
    """Terms ``(F_A1, F_A2)`` summing to the acceptance operator.

    ``trace_record`` lists the term count after each gate, processed from
    the last gate to the first.
    """

    terms: list
    dims: tuple
    r_used: int
    trace_record: list = field(default_factory=list)

    def decomposed(self, drop_zero: bool = False) -> DecomposedOperator:
        terms = self.terms
        if drop_zero:
            terms = [t for t in terms if min(np.max(np.abs(f)) for f in t) > 0]
        return DecomposedOperator(terms, self.dims, (1.0, 1.0), check=False)


def classify_gates(C: VerifierCircuit) -> list[str]:
    """TYPE_II for CNOTs whose qubits lie in different spaces, TYPE_I otherwise."""
    out = []
    for g in C.gates:
        if g.kind == "cnot" and C.locate(g.c)[0] != C.locate(g.t)[0]:
            out.append("TYPE_II")
        else:
            out.append("TYPE_I")
    return out


def backward_propagate(C: VerifierCircuit, cap: int = TERM_CAP, merge: bool = False) -> PropagatedPOVM:
    """Decompose the acceptance operator over (A1, A2).

    Starts from ``I (x) I (x) |1><1|_accept`` and conjugates by each gate from
    last to first. With ``U = sum_a K_a (x) L_a`` for a cross-space CNOT
    (``K = (|0><0|, |1><1|)`` on the control, ``L = (I, X)`` on the target),
    a term ``F_c (x) F_t`` becomes ``sum_{a,b} K_a F_c K_b (x) L_a F_t L_b``.
    Finally the V factor is evaluated on ``|0...0>`` and folded into the A1
    factor.

    Parameters
    ----------
    cap : refuse circuits with ``4^r > cap``.
    merge : fold terms whose factors coincide on all but one space after
        each expansion.
    """
    kinds = classify_gates(C)
    r = kinds.count("TYPE_II")
    if 4**r > cap:
        raise CapExceededError(
            f"circuit has r={r} cross-space CNOTs, up to 4^r={4**r} terms, cap {cap}",
            required=4**r,
            cap=cap,
        )
    sizes = C.sizes
    dims3 = tuple(2**s for s in sizes)
    acc_proj = embed_qubits(P1, [0], C.v)
    terms = [[np.eye(dims3[0], dtype=complex), np.eye(dims3[1], dtype=complex), acc_proj]]
    record = []
    for g, kind in zip(reversed(C.gates), reversed(kinds)):
        if g.kind == "u1":
            s, q = C.locate(g.q)
            U = embed_qubits(g.matrix, [q], sizes[s])
            for term in terms:
                term[s] = U.conj().T @ term[s] @ U
        elif kind == "TYPE_I":
            s, qc = C.locate(g.c)
            _, qt = C.locate(g.t)
            U = embed_qubits(CNOT, [qc, qt], sizes[s])
            for term in terms:
                term[s] = U.conj().T @ term[s] @ U
        else:
            sc, qc = C.locate(g.c)
            st, qt = C.locate(g.t)
            K = [embed_qubits(P0, [qc], sizes[sc]), embed_qubits(P1, [qc], sizes[sc])]
            L = [np.eye(dims3[st], dtype=complex), embed_qubits(XM, [qt], sizes[st])]
            new = []
            for term in terms:
                for a in range(2):
                    for b in range(2):
                        nt = list(term)
                        nt[sc] = K[a] @ term[sc] @ K[b]
                        nt[st] = L[a] @ term[st] @ L[b]
                        new.append(nt)
            terms = new
            if merge:
                D = merge_terms(DecomposedOperator([tuple(t) for t in terms], dims3, (1, 1, 1), check=False))
                terms = [list(t) for t in D.terms]
        record.append(len(terms))
    out = []
    for F1, F2, FV in terms:
        out.append((FV[0, 0] * F1, F2))
    return PropagatedPOVM(out, dims3[:2], r, record)


def _full_gate(C: VerifierCircuit, g: Gate) -> np.ndarray:
    N = C.n_qubits
    if g.kind == "u1":
        mats = [np.eye(2, dtype=complex)] * N
        mats[g.q] = g.matrix
        out = np.ones((1, 1), dtype=complex)
        for m in mats:
            out = np.kron(out, m)
        return out
    # |0><0|_c (x) I + |1><1|_c (x) X_t, built qubit by qubit
    parts = []
    for proj, tgt in ((P0, np.eye(2)), (P1, XM)):
        out = np.ones((1, 1), dtype=complex)
        for q in range(N):
            m = proj if q == g.c else (tgt if q == g.t else np.eye(2))
            out = np.kron(out, m)
        parts.append(out)
    return parts[0] + parts[1]


def povm_direct(C: VerifierCircuit, max_qubits: int = DIRECT_QUBIT_CAP) -> np.ndarray:
    """Acceptance operator on A1 (x) A2 by dense simulation.

    ``Q = (I (x) <0|_V) U* (I (x) |1><1|_accept) U (I (x) |0>_V)``.
    """
    N = C.n_qubits
    if N > max_qubits:
        raise ValueError(f"dense simulation limited to {max_qubits} qubits, circuit has {N}")
    U = np.eye(2**N, dtype=complex)
    for g in C.gates:
        U = _full_gate(C, g) @ U
    proj = np.ones((1, 1), dtype=complex)
    for q in range(N):
        proj = np.kron(proj, P1 if q == C.accept_qubit else np.eye(2))
    P = U.conj().T @ proj @ U
    da = 2 ** (C.a1 + C.a2)
    dv = 2**C.v
    return P.reshape(da, dv, da, dv)[:, 0, :, 0]


def bound_acceptance(C: VerifierCircuit, delta: float, merge: bool = False, **plan_kw) -> OptimizationReport:
    """Maximum acceptance probability over product proofs, within the report's error.

    Terms whose acceptance coefficient vanishes are dropped before the
    optimisation (the operator is unchanged).
    """
    prop = backward_propagate(C, merge=merge)
    D = prop.decomposed(drop_zero=True)
    if merge and D.M:
        D = merge_terms(D)  # merged factors may exceed norm 1; widths are re-measured
    rep = optimize_decomposed(D, delta=delta, mode="max", **plan_kw)
    rep.params.update({"r": prop.r_used, "terms": len(prop.terms), "terms_used": D.M, "merge": merge})
    return rep


def factor_norms(prop: PropagatedPOVM) -> np.ndarray:
    return np.array([[opnorm(f) for f in t] for t in prop.terms])

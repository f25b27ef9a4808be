"""JSON encodings for matrices, decompositions, Hamiltonians and circuits.

Matrices are ``{"dim": d, "entries": [[{"re": x, "im": y}, ...], ...]}``
(row-major). Plain numbers are accepted as real entries on input.
"""

from __future__ import annotations

import json

import numpy as np

from .circuit_povm import Gate, VerifierCircuit
from .local_ham import LocalHamiltonian, LocalTerm
from .operators import DecomposedOperator


class InputError(ValueError):
    """Malformed input; the message names the offending field."""


def _num(x, where: str) -> complex:
    if isinstance(x, dict):
        try:
            return complex(float(x.get("re", 0.0)), float(x.get("im", 0.0)))
        except (TypeError, ValueError) as e:
            raise InputError(f"{where}: bad complex entry {x!r}") from e
    if isinstance(x, (int, float)):
        return complex(x)
    raise InputError(f"{where}: expected a number or {{re, im}}, got {x!r}")


def matrix_from_json(obj, where: str = "matrix") -> np.ndarray:
    if isinstance(obj, dict):
        if "entries" not in obj:
            raise InputError(f"{where}: missing field 'entries'")
        rows = obj["entries"]
        dim = obj.get("dim")
    else:
        rows, dim = obj, None
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise InputError(f"{where}.entries: expected a list of rows")
    n = len(rows)
    if dim is not None and int(dim) != n:
        raise InputError(f"{where}.dim: declared {dim} but entries have {n} rows")
    if any(len(r) != n for r in rows):
        raise InputError(f"{where}.entries: matrix is not square ({n} rows)")
    return np.array([[_num(x, f"{where}.entries[{i}][{j}]") for j, x in enumerate(r)]
                     for i, r in enumerate(rows)], dtype=complex)


def matrix_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"dim": a.shape[0],
            "entries": [[{"re": float(x.real), "im": float(x.imag)} for x in row] for row in a]}


def vector_from_json(obj, where: str = "point") -> np.ndarray:
    if not isinstance(obj, list):
        raise InputError(f"{where}: expected a list")
    return np.array([_num(x, f"{where}[{i}]") for i, x in enumerate(obj)], dtype=complex)


def decomposition_from_json(obj) -> DecomposedOperator:
    for key in ("dims", "terms"):
        if key not in obj:
            raise InputError(f"decomposition: missing field '{key}'")
    dims = obj["dims"]
    k = obj.get("k", len(dims))
    if k != len(dims):
        raise InputError(f"decomposition.k: {k} does not match len(dims) = {len(dims)}")
    terms = []
    for i, term in enumerate(obj["terms"]):
        if len(term) != k:
            raise InputError(f"decomposition.terms[{i}]: has {len(term)} factors, expected {k}")
        fs = []
        for t, f in enumerate(term):
            m = matrix_from_json(f, f"decomposition.terms[{i}][{t}]")
            if m.shape[0] != dims[t]:
                raise InputError(
                    f"decomposition.terms[{i}][{t}]: dimension {m.shape[0]} but dims[{t}] = {dims[t]}")
            fs.append(m)
        terms.append(tuple(fs))
    widths = obj.get("widths")
    if widths is None:
        widths = [max([float(np.linalg.norm(t[s], 2)) for t in terms] + [0.0]) for s in range(k)]
    if len(widths) != k:
        raise InputError(f"decomposition.widths: has {len(widths)} entries, expected {k}")
    try:
        return DecomposedOperator(terms, dims, widths)
    except ValueError as e:
        raise InputError(f"decomposition: {e}") from e


def decomposition_to_json(D: DecomposedOperator) -> dict:
    return {"k": D.k, "dims": list(D.dims), "widths": list(D.widths),
            "terms": [[matrix_to_json(f) for f in term] for term in D.terms]}


def hamiltonian_from_json(obj) -> LocalHamiltonian:
    lay = obj.get("layout")
    if not isinstance(lay, dict) or "k" not in lay or "n" not in lay:
        raise InputError("hamiltonian.layout: expected {k, n}")
    terms = []
    for i, t in enumerate(obj.get("terms", [])):
        if "support" not in t or "matrix" not in t:
            raise InputError(f"hamiltonian.terms[{i}]: needs 'support' and 'matrix'")
        try:
            terms.append(LocalTerm(matrix_from_json(t["matrix"], f"hamiltonian.terms[{i}].matrix"),
                                   tuple(tuple(s) for s in t["support"]), t.get("norm_bound")))
        except InputError:
            raise
        except ValueError as e:
            raise InputError(f"hamiltonian.terms[{i}]: {e}") from e
    try:
        return LocalHamiltonian(int(lay["k"]), int(lay["n"]), tuple(terms), obj.get("a"), obj.get("b"))
    except ValueError as e:
        raise InputError(f"hamiltonian: {e}") from e


def hamiltonian_to_json(H: LocalHamiltonian) -> dict:
    out = {"layout": {"k": H.k, "n": H.n},
           "terms": [{"support": [list(s) for s in t.support], "matrix": matrix_to_json(t.matrix)}
                     for t in H.terms]}
    if H.a is not None:
        out["a"] = H.a
    if H.b is not None:
        out["b"] = H.b
    return out


def circuit_from_json(obj) -> VerifierCircuit:
    lay = obj.get("layout")
    if not isinstance(lay, dict) or not all(x in lay for x in ("a1", "a2", "v")):
        raise InputError("circuit.layout: expected {a1, a2, v}")
    gates = []
    for i, g in enumerate(obj.get("gates", [])):
        kind = g.get("kind")
        if kind == "u1":
            if "q" not in g or "matrix" not in g:
                raise InputError(f"circuit.gates[{i}]: u1 needs 'q' and 'matrix'")
            gates.append(Gate("u1", q=int(g["q"]), matrix=matrix_from_json(g["matrix"], f"circuit.gates[{i}].matrix")))
        elif kind == "cnot":
            if "c" not in g or "t" not in g:
                raise InputError(f"circuit.gates[{i}]: cnot needs 'c' and 't'")
            gates.append(Gate("cnot", c=int(g["c"]), t=int(g["t"])))
        else:
            raise InputError(f"circuit.gates[{i}].kind: unknown gate kind {kind!r}")
    try:
        return VerifierCircuit(int(lay["a1"]), int(lay["a2"]), int(lay["v"]), tuple(gates))
    except ValueError as e:
        raise InputError(f"circuit: {e}") from e


def circuit_to_json(C: VerifierCircuit) -> dict:
    gates = []
    for g in C.gates:
        if g.kind == "u1":
            gates.append({"kind": "u1", "q": g.q, "matrix": matrix_to_json(g.matrix)})
        else:
            gates.append({"kind": "cnot", "c": g.c, "t": g.t})
    return {"layout": {"a1": C.a1, "a2": C.a2, "v": C.v}, "gates": gates}


def load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: malformed JSON ({e})") from e
    except OSError as e:
        raise InputError(f"{path}: cannot read ({e.strerror})") from e

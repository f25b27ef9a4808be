"""Command-line front end: parse inputs, dispatch to the solvers, write JSON reports.

Usage::

    epsnet decomposed --input op.json --delta 0.2 --mode max
    epsnet frobenius  --input psd.json --delta 0.4 [--dims 2,2]
    epsnet local-ham  --input ham.json --delta 0.25
    epsnet circuit    --input circ.json [--delta 0.25]
    epsnet distance   --input family.json --point "[{re:0,im:1}]" --eps 0.05
    epsnet oracle     --input dense.json --method seesaw
    epsnet --replay report.json [--output again.json]

Exit codes: 0 success, 1 input error, 2 cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import time

import numpy as np

from . import __version__
from .circuit_povm import TERM_CAP, backward_propagate, bound_acceptance
from .distance_oracle import MMW_ITER_CAP, ObservableFamily, mmw_distance
from .errors import CapExceededError
from .frobenius_alg import BALL_CAP, optimize_frobenius
from .io import (
    InputError,
    circuit_from_json,
    decomposition_from_json,
    hamiltonian_from_json,
    load_json,
    matrix_from_json,
    vector_from_json,
)
from .local_ham import solve_promise
from .operators import validate_hermitian
from .reference_oracles import exhaustive_product_net, ppt_bound, seesaw
from .sep_opt import RAW_NET_CAP, TUPLE_CAP, _jsonable, optimize_decomposed

log = logging.getLogger("epsnet")

COMMANDS = ("decomposed", "frobenius", "local-ham", "circuit", "distance", "oracle")
PROGRESS_EVERY = 100_000
# arguments that locate files rather than parameterise a run
_IO_ARGS = {"input", "output", "command", "verbose"}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


def _positive(kind):
    def conv(s):
        try:
            v = kind(float(s)) if kind is int else kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {s!r}")
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return conv


def _delta(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid value {s!r}")
    return v  # positivity is checked by the solvers, which name the field


def _dims(s):
    try:
        out = [int(x) for x in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if len(out) != 2 or min(out) < 1:
        raise argparse.ArgumentTypeError(f"expected two positive dimensions, got {s!r}")
    return out


def default_term_cap() -> int:
    """Global cap on decomposition terms; SEP_OPT_CAP_TERMS overrides it."""
    raw = os.environ.get("SEP_OPT_CAP_TERMS")
    if raw is None:
        return TERM_CAP
    try:
        v = int(float(raw))
    except ValueError:
        raise InputError(f"SEP_OPT_CAP_TERMS: not a number ({raw!r})")
    if v < 1:
        raise InputError(f"SEP_OPT_CAP_TERMS: must be positive, got {raw}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", "-i", required=True, help="input JSON file")
    common.add_argument("--output", "-o", help="report path (default: standard output)")
    common.add_argument("--threads", type=_positive(int), default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--time-limit", type=_positive(float), default=None,
                        help="wall-time cap in seconds")
    common.add_argument("-v", "--verbose", action="store_true")

    netopts = _Parser(add_help=False)
    netopts.add_argument("--delta", type=_delta, required=True)
    netopts.add_argument("--eps-mmw-ratio", type=_positive(float), default=0.5,
                         help="distance-oracle error as a fraction of the net resolution")
    netopts.add_argument("--spectral-party", default="last",
                         help="party solved as an eigenproblem: index, 'last' or 'auto'")
    netopts.add_argument("--no-filter", action="store_true",
                         help="skip the image-set filter (result marked unsound)")
    netopts.add_argument("--cap-net", type=_positive(int), default=RAW_NET_CAP)
    netopts.add_argument("--cap-tuples", type=_positive(int), default=TUPLE_CAP)
    netopts.add_argument("--cap-mmw", type=_positive(int), default=MMW_ITER_CAP)

    p = _Parser(prog="epsnet", description="Optimisation over product states by epsilon-net enumeration.")
    p.add_argument("--version", action="version", version=f"epsnet {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("decomposed", parents=[common, netopts],
                       help="operator given as a sum of tensor products")
    s.add_argument("--mode", choices=("max", "min"), default="max")

    s = sub.add_parser("frobenius", parents=[common], help="bipartite PSD operator, dense input")
    s.add_argument("--delta", type=_delta, required=True)
    s.add_argument("--dims", type=_dims, default=None, help="dA,dB (default: from input or square)")
    s.add_argument("--cap-net", type=_positive(int), default=BALL_CAP)
    s.add_argument("--no-phase-fix", action="store_true")

    s = sub.add_parser("local-ham", parents=[common, netopts], help="local Hamiltonian promise problem")
    s.add_argument("--a", type=float, default=None, help="upper threshold (default: from input)")
    s.add_argument("--b", type=float, default=None, help="lower threshold (default: from input)")
    s.add_argument("--no-merge", action="store_true", help="keep the raw Pauli expansion")

    s = sub.add_parser("circuit", parents=[common], help="two-prover verifier circuit")
    s.add_argument("--delta", type=_delta, default=None,
                   help="also bound the acceptance probability to this accuracy")
    s.add_argument("--merge", action="store_true", help="fold terms sharing all but one factor")
    s.add_argument("--eps-mmw-ratio", type=_positive(float), default=0.5)
    s.add_argument("--spectral-party", default="last")
    s.add_argument("--no-filter", action="store_true")
    s.add_argument("--cap-net", type=_positive(int), default=RAW_NET_CAP)
    s.add_argument("--cap-tuples", type=_positive(int), default=TUPLE_CAP)
    s.add_argument("--cap-mmw", type=_positive(int), default=MMW_ITER_CAP)

    s = sub.add_parser("distance", parents=[common], help="distance of a point to an image set")
    s.add_argument("--point", required=True, help='JSON list, e.g. "[{re:0,im:1}]"')
    s.add_argument("--eps", type=_positive(float), required=True)
    s.add_argument("--width", type=_positive(float), default=None)
    s.add_argument("--cap-mmw", type=_positive(int), default=MMW_ITER_CAP)

    s = sub.add_parser("oracle", parents=[common], help="reference optimisers on a dense operator")
    s.add_argument("--method", choices=("seesaw", "exhaustive", "ppt"), default="seesaw")
    s.add_argument("--mode", choices=("max", "min"), default="max")
    s.add_argument("--dims", type=_dims, default=None)
    s.add_argument("--restarts", type=_positive(int), default=32)
    s.add_argument("--iters", type=_positive(int), default=200)
    s.add_argument("--grid", type=_positive(float), default=0.1)
    return p


def _lenient_json(text: str, where: str):
    """JSON, also accepting bare object keys such as ``{re:0,im:1}``."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    fixed = re.sub(r"([{,]\s*)([A-Za-z_]\w*)\s*:", r'\1"\2":', text)
    try:
        return json.loads(fixed)
    except json.JSONDecodeError as e:
        raise InputError(f"{where}: malformed JSON ({e})") from e


def _progress(n: int) -> None:
    print(f"progress: {n} points", file=sys.stderr, flush=True)


def _dense_input(obj, dims):
    if isinstance(obj, dict) and "matrix" in obj:
        m = matrix_from_json(obj["matrix"], "matrix")
        dims = dims or obj.get("dims")
    else:
        m = matrix_from_json(obj, "matrix")
        if isinstance(obj, dict):
            dims = dims or obj.get("dims")
    if dims is None:
        d = math.isqrt(m.shape[0])
        if d * d != m.shape[0]:
            raise InputError(f"dims: operator of size {m.shape[0]} is not square-split; pass --dims")
        dims = [d, d]
    dims = [int(x) for x in dims]
    if len(dims) != 2 or dims[0] * dims[1] != m.shape[0]:
        raise InputError(f"dims: {dims} inconsistent with operator of size {m.shape[0]}")
    h = validate_hermitian(m)
    return h.entries, dims


def _spectral_party(s):
    return s if s in ("last", "auto") else int(s)


def _plan_kw(a) -> dict:
    return {
        "eps_mmw_ratio": a.eps_mmw_ratio,
        "spectral_party": _spectral_party(a.spectral_party),
        "raw_cap": a.cap_net,
        "tuple_cap": a.cap_tuples,
        "filter": not a.no_filter,
        "workers": a.threads,
        "mmw_cap": a.cap_mmw,
        "time_limit": a.time_limit,
    }


def _check_terms(M: int, cap: int):
    if M > cap:
        raise CapExceededError(f"decomposition has {M} terms, cap {cap} (SEP_OPT_CAP_TERMS)",
                               required=M, cap=cap)


def _run_decomposed(a, obj) -> dict:
    D = decomposition_from_json(obj)
    _check_terms(D.M, default_term_cap())
    rep = optimize_decomposed(D, progress=_progress, delta=a.delta, mode=a.mode, **_plan_kw(a))
    return rep.to_json()


def _run_frobenius(a, obj) -> dict:
    Q, dims = _dense_input(obj, a.dims)
    rep = optimize_frobenius(Q, tuple(dims), a.delta, cap=a.cap_net,
                             phase_fixed=not a.no_phase_fix, progress=_progress)
    return rep.to_json()


def _run_local_ham(a, obj) -> dict:
    H = hamiltonian_from_json(obj)
    res = solve_promise(H, a.delta, merge=not a.no_merge, a=a.a, b=a.b, **_plan_kw(a))
    out = res["report"].to_json()
    out.update({"answer": res["answer"], "M_raw": res["M_raw"], "M": res["M"]})
    return out


def _run_circuit(a, obj) -> dict:
    C = circuit_from_json(obj)
    cap = default_term_cap()
    prop = backward_propagate(C, cap=cap, merge=a.merge)
    summary = {"r": prop.r_used, "terms": len(prop.terms), "trace_record": prop.trace_record,
               "dims": list(prop.dims), "n_qubits": C.n_qubits}
    if a.delta is None:
        return {"algorithm": "circuit-decomposition", "decomposition": summary, "sound": True}
    rep = bound_acceptance(C, a.delta, merge=a.merge, **_plan_kw(a))
    out = rep.to_json()
    out["decomposition"] = summary
    return out


def _run_distance(a, obj) -> dict:
    if isinstance(obj, dict):
        if "ops" not in obj:
            raise InputError("family: missing field 'ops'")
        raw, w = obj["ops"], obj.get("w")
    elif isinstance(obj, list):
        raw, w = obj, None
    else:
        raise InputError("family: expected a list of matrices or {ops, w}")
    ops = [matrix_from_json(m, f"family.ops[{i}]") for i, m in enumerate(raw)]
    if not ops:
        raise InputError("family.ops: empty")
    if len({o.shape for o in ops}) != 1:
        raise InputError("family.ops: operators have different dimensions")
    w = a.width if a.width is not None else w
    F = ObservableFamily.from_ops(np.array(ops), w)
    p = vector_from_json(_lenient_json(a.point, "point"), "point")
    if p.size != F.M:
        raise InputError(f"point: has {p.size} coordinates, family has {F.M}")
    t0 = time.perf_counter()
    c = mmw_distance(p, F, a.eps, cap=a.cap_mmw)
    return _jsonable({
        "algorithm": "mmw-distance",
        "opt_value": c.value,
        "effective_error": c.eps,
        "witness": {},
        "stats": {"wall_time": time.perf_counter() - t0},
        "params": {"eps": c.eps, "gamma": c.gamma, "T": c.T, "w": c.w, "M": F.M, "d": F.d},
        "sound": True,
    })


def _run_oracle(a, obj) -> dict:
    Q, dims = _dense_input(obj, a.dims)
    t0 = time.perf_counter()
    if a.method == "ppt":
        v = ppt_bound(Q, dims, a.mode)
        return _jsonable({
            "algorithm": "ppt-bound", "opt_value": v, "effective_error": None, "witness": {},
            "stats": {"wall_time": time.perf_counter() - t0},
            "params": {"dims": dims, "mode": a.mode,
                       "bound": "upper" if a.mode == "max" else "lower"},
            "sound": True,
        })
    if a.method == "seesaw":
        r = seesaw(Q, dims, restarts=a.restarts, iters=a.iters, mode=a.mode, seed=a.seed)
    else:
        r = exhaustive_product_net(Q, dims, grid=a.grid, mode=a.mode)
    return _jsonable({
        "algorithm": r.method,
        "opt_value": r.value,
        "effective_error": r.meta.get("slack"),
        "witness": {"party_vectors": list(r.witness.party_vectors)},
        "stats": {"wall_time": time.perf_counter() - t0},
        "params": {"dims": dims, "mode": a.mode, **{k: v for k, v in r.meta.items()
                                                    if np.isscalar(v)}},
        "sound": True,
    })


RUNNERS = {
    "decomposed": _run_decomposed,
    "frobenius": _run_frobenius,
    "local-ham": _run_local_ham,
    "circuit": _run_circuit,
    "distance": _run_distance,
    "oracle": _run_oracle,
}


def _arguments(a) -> dict:
    return {k: v for k, v in sorted(vars(a).items()) if k not in _IO_ARGS}


def execute(a, obj) -> dict:
    """Run one parsed job on an already-loaded input; returns the report dict."""
    t0 = time.perf_counter()
    out = RUNNERS[a.command](a, obj)
    out["command"] = a.command
    out["arguments"] = _arguments(a)
    out["input"] = obj
    out["version"] = __version__
    out["wall_time"] = time.perf_counter() - t0
    return out


def _write(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=1)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _replay(argv) -> int:
    rp = _Parser(prog="epsnet --replay")
    rp.add_argument("--replay", required=True, help="report produced by an earlier run")
    rp.add_argument("--output", "-o")
    rp.add_argument("-v", "--verbose", action="store_true")
    r = rp.parse_args(argv)
    old = load_json(r.replay)
    for key in ("command", "arguments", "input"):
        if key not in old:
            raise InputError(f"{r.replay}: report lacks field '{key}'")
    if old["command"] not in RUNNERS:
        raise InputError(f"{r.replay}: unknown command {old['command']!r}")
    a = argparse.Namespace(command=old["command"], verbose=r.verbose, **old["arguments"])
    new = execute(a, old["input"])
    _write(new, r.output)
    same_opt = _same_value(old.get("opt_value"), new.get("opt_value"))
    same_idx = old.get("witness", {}).get("indices") == _jsonable(new.get("witness", {})).get("indices")
    if not (same_opt and same_idx):
        print(f"replay mismatch: opt {old.get('opt_value')} -> {new.get('opt_value')}",
              file=sys.stderr)
        return 1
    log.info("replay reproduced opt_value %s", new.get("opt_value"))
    return 0


def _same_value(x, y) -> bool:
    if x is None or y is None:
        return x is y
    return abs(float(x) - float(y)) <= 1e-12


def run(argv=None) -> int:
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0].split("=")[0] == "--replay":
            return _replay(argv)
        a = build_parser().parse_args(argv)
        if a.command is None:
            raise InputError(f"a subcommand is required, one of: {', '.join(COMMANDS)}")
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        obj = load_json(a.input)
        report = execute(a, obj)
        _write(report, a.output)
        return 0
    except CapExceededError as e:
        print(f"cap exceeded: {e}", file=sys.stderr)
        return 2
    except (InputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())

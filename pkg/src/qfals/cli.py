"""Command-line front end with reproducible JSON reports.

Exit codes: 0 all checks passed, 1 usage error, 2 invalid input,
3 at least one check failed. All randomness flows from --seed through
deterministic stream splitting; reports are bit-reproducible at a fixed
--threads count (the timing field is the one documented exception).
The QFALS_TOL environment variable overrides the default validation
tolerance when --tol is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import circuit, serialize
from .dilation import instrument_from_dilation, purify, stinespring_dilate
from .falsification import (
    TWIRL_NOTE,
    AtomicTransformationFamily,
    FalsificationTest,
    HypothesisFamily,
    IsometricTransformationFamily,
    MarginalOfPureFamily,
    MaxEntangledFamily,
    NCopyPurityFamily,
    PurityFamily,
    StateSupportFamily,
    falsifier_search,
    family_average,
    twirl_analytic,
    twirl_monte_carlo,
    witness_unfalsifiable,
)
from .linalg import (
    LinalgError,
    eig_hermitian,
    hs_norm,
    partial_trace,
    random_density,
    support_projector,
)
from .ops import State, System, random_instrument
from .serialize import FormatError

SEARCH_TOL = 1e-8
SEARCH_MAX_ITER = 5000
MAX_TOTAL_DIM = 64

THEOREMS = (
    "purity",
    "purity-ncopies",
    "atomicity",
    "max-entanglement",
    "isometricity",
    "marginal-of-pure",
    "unitary-realization",
)

FAMILIES = THEOREMS[:6] + ("support",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class DimensionTooLarge(LinalgError):
    pass


def _default_tol() -> float:
    return float(os.environ.get("QFALS_TOL", "1e-9"))


def build_parser() -> _Parser:
    p = _Parser(prog="qfals", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=float, default=None, help="validation tolerance")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--samples", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--json", dest="json_path", default=None)

    sp = sub.add_parser("verify", help="run a no-falsifier verification suite")
    sp.add_argument("theorem", choices=THEOREMS)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--copies", type=int, default=2)
    sp.add_argument("--din", type=int, default=2)
    sp.add_argument("--dout", type=int, default=2)
    sp.add_argument("--outcomes", type=int, default=2)
    sp.add_argument("--denv", type=int, default=None)
    sp.add_argument("--state", default=None, help="state JSON for marginal-of-pure")
    common(sp)

    sp = sub.add_parser("purify", help="purify a state into system (x) environment")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--denv", type=int, default=None)
    common(sp)

    sp = sub.add_parser("dilate", help="unitary realisation of an instrument")
    sp.add_argument("--in", dest="infile", required=True)
    common(sp)

    sp = sub.add_parser("twirl", help="Haar average over one tensor factor")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--dims", required=True, help="comma-separated factor dims")
    sp.add_argument("--factor", type=int, default=0)
    sp.add_argument("--analytic", action="store_true")
    sp.add_argument("--mc", type=int, default=None)
    common(sp)

    sp = sub.add_parser("falsify", help="witness + falsifier search for a family")
    sp.add_argument("family", choices=FAMILIES)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--copies", type=int, default=2)
    sp.add_argument("--din", type=int, default=2)
    sp.add_argument("--dout", type=int, default=2)
    sp.add_argument("--denv", type=int, default=None)
    sp.add_argument("--state", default=None)
    sp.add_argument("--method", choices=("analytic", "monte-carlo"), default="analytic")
    sp.add_argument("--max-iter", type=int, default=SEARCH_MAX_ITER)
    common(sp)

    sp = sub.add_parser("run", help="evaluate a circuit file")
    sp.add_argument("circuit_file")
    sp.add_argument("--run", dest="run_name", default=None)
    common(sp)

    return p


# ---------------------------------------------------------------------------
# helpers


def _streams(seed: int) -> list:
    """Fixed-purpose child streams: 0 averaging, 1 search, 2 inputs, 3 trials."""
    return np.random.SeedSequence(seed).spawn(4)


def _chunk_counts(n: int, workers: int) -> list[int]:
    base = n // workers
    return [base + (1 if i < n % workers else 0) for i in range(workers)]


def _parallel_matrix_mean(fn, n: int, seed_seq, workers: int) -> np.ndarray:
    """Deterministic chunked mean: one child stream per worker, partial
    sums combined in worker-index order."""
    workers = max(1, min(workers, n))
    counts = _chunk_counts(n, workers)
    children = seed_seq.spawn(workers)

    def work(i: int):
        if counts[i] == 0:
            return None
        rng = np.random.default_rng(children[i])
        return fn(counts[i], rng) * counts[i]

    if workers == 1:
        partials = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(work, range(workers)))
    total = None
    for part in partials:
        if part is None:
            continue
        total = part if total is None else total + part
    return total / n


def _check(checks: list, name: str, ok: bool, value=None, threshold=None) -> None:
    entry = {"name": name, "pass": bool(ok)}
    if value is not None:
        entry["value"] = float(value)
    if threshold is not None:
        entry["threshold"] = float(threshold)
    checks.append(entry)


def _guard_dim(total: int) -> None:
    if total > MAX_TOTAL_DIM:
        raise DimensionTooLarge(
            f"total dimension {total} exceeds the supported desk scale {MAX_TOTAL_DIM}"
        )


def _mc_samples(args) -> int:
    return args.samples if args.samples is not None else 2000


def _span_samples(args) -> int:
    return args.samples if args.samples is not None else 256


def _build_family(args, rng_inputs) -> HypothesisFamily:
    name = args.family if hasattr(args, "family") else args.theorem
    if name == "purity":
        _guard_dim(args.dim)
        return PurityFamily(args.dim)
    if name == "purity-ncopies":
        _guard_dim(args.dim**args.copies)
        return NCopyPurityFamily(args.dim, args.copies)
    if name == "atomicity":
        _guard_dim(args.din * args.dout)
        return AtomicTransformationFamily(args.din, args.dout)
    if name in ("max-entanglement", "isometricity"):
        _guard_dim(args.din * args.dout)
        if name == "max-entanglement":
            return MaxEntangledFamily(d_a=args.dout, d_b=args.din)
        return IsometricTransformationFamily(d_in=args.din, d_out=args.dout)
    if name == "marginal-of-pure":
        denv = args.denv if args.denv is not None else args.dim
        _guard_dim(args.dim * denv)
        if args.state:
            rho = serialize.state_from_json(serialize.load(args.state))
        else:
            rho = State(System("A", args.dim), random_density(args.dim, rng_inputs))
        return MarginalOfPureFamily(rho, denv)
    if name == "support":
        if not args.state:
            raise FormatError("the support family needs --state FILE; its support is K")
        rho = serialize.state_from_json(serialize.load(args.state))
        _guard_dim(rho.system.dim)
        return StateSupportFamily(support_projector(rho.matrix), system=rho.system)
    raise UsageError(f"unknown family {name!r}")


def _verdict_payload(verdict, search, seed: int) -> dict:
    return {
        "family": verdict.family,
        "method": verdict.method,
        "samples": verdict.samples,
        "seed": seed,
        "lambda_min": verdict.lambda_min,
        "unfalsifiable": verdict.unfalsifiable,
        "falsifier": (
            serialize.matrix_to_json(search.test.falsifier.matrix)
            if search is not None and search.test is not None
            else None
        ),
        "search_residual": None if search is None else search.residual,
        "search_iterations": None if search is None else search.iterations,
        "span_dim": None if search is None else search.span_dim,
        "max_violation_on_fresh_samples": (
            None if search is None else search.max_violation
        ),
        "residual_support_falsifier": (
            serialize.matrix_to_json(verdict.residual_falsifier.falsifier.matrix)
            if verdict.residual_falsifier is not None
            else None
        ),
        "note": verdict.note or (search.note if search is not None else ""),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    streams = _streams(args.seed)
    rng_inputs = np.random.default_rng(streams[2])
    theorem = args.theorem

    if theorem == "unitary-realization":
        _guard_dim(args.din * args.dout * args.outcomes * 2)
        trials = args.samples if args.samples is not None else 5
        worst = 0.0
        for _ in range(trials):
            inst = random_instrument(args.din, args.dout, args.outcomes, 2, rng_inputs)
            dil = stinespring_dilate(inst)
            u = dil.unitary
            unitarity = hs_norm(u.conj().T @ u - np.eye(u.shape[0]))
            rebuilt = instrument_from_dilation(dil)
            for orig, back in zip(inst.operations, rebuilt.operations):
                worst = max(worst, hs_norm(orig.choi - back.choi))
            worst = max(worst, unitarity)
        _check(checks, "dilation-round-trip", worst <= 1e-10, worst, 1e-10)
        return checks, {"instruments": trials, "worst_residual": worst}

    family = _build_family(args, rng_inputs)
    verdict = witness_unfalsifiable(family, method="analytic", tol=tol)

    search = falsifier_search(
        family,
        span_samples=_span_samples(args),
        tol=SEARCH_TOL,
        max_iter=SEARCH_MAX_ITER,
        rng=np.random.default_rng(streams[1]),
    )

    if theorem in ("purity", "atomicity"):
        d = family.system.dim
        _check(
            checks,
            "analytic-average-lambda-min",
            abs(verdict.lambda_min - 1.0 / d) <= 1e-12,
            abs(verdict.lambda_min - 1.0 / d),
            1e-12,
        )
        _check(checks, "span-dimension-full", search.span_dim == d * d, search.span_dim)
        _check(checks, "search-returns-none", search.test is None, search.residual)
    elif theorem in ("max-entanglement", "isometricity"):
        d = family.system.dim
        _check(
            checks,
            "analytic-average-lambda-min",
            abs(verdict.lambda_min - 1.0 / d) <= 1e-12,
            abs(verdict.lambda_min - 1.0 / d),
            1e-12,
        )
        # Monte-Carlo twirl of the canonical maximally entangled projector
        d_a, d_b = args.dout, args.din
        v = np.eye(d_a, d_b, dtype=complex)
        vec = v.reshape(-1)
        proj = np.outer(vec, np.conj(vec)) / d_b
        analytic = twirl_analytic(proj, [d_a, d_b], 0)
        n = _mc_samples(args)
        mc = _parallel_matrix_mean(
            lambda m, rng: twirl_monte_carlo(proj, [d_a, d_b], 0, m, rng),
            n,
            streams[0],
            args.threads,
        )
        err = float(np.max(np.abs(mc - analytic)))
        _check(checks, "mc-twirl-matches-analytic", err <= 0.05, err, 0.05)
        _check(checks, "search-returns-none", search.test is None, search.residual)
    elif theorem == "purity-ncopies":
        _check(checks, "witness-lambda-min-reported", True, verdict.lambda_min)
        found = search.test is not None
        if found:
            _check(
                checks,
                "falsifier-verified",
                search.max_violation <= 10 * SEARCH_TOL,
                search.max_violation,
                10 * SEARCH_TOL,
            )
        else:
            _check(checks, "search-returns-none", True, search.residual)
    elif theorem == "marginal-of-pure":
        rho = family.base_state
        rho_min = float(np.linalg.eigvalsh(rho.matrix)[0])
        expected = rho_min / family.d_env
        _check(
            checks,
            "witness-lambda-min",
            abs(verdict.lambda_min - expected) <= 1e-10,
            abs(verdict.lambda_min - expected),
            1e-10,
        )
        if family.base_support_rank(tol) == rho.system.dim:
            _check(checks, "search-returns-none", search.test is None, search.residual)
        else:
            _check(checks, "search-found-falsifier", search.test is not None)
            if search.test is not None:
                d_a, d_e = rho.system.dim, family.d_env
                f_a = partial_trace(
                    search.test.falsifier.matrix, [d_a, d_e], keep=[0]
                )
                p_perp = np.eye(d_a) - support_projector(rho.matrix, tol).projector()
                scale = float(np.trace(f_a).real) / max(
                    float(np.trace(p_perp).real), 1e-300
                )
                resid = hs_norm(f_a - scale * p_perp)
                _check(checks, "residual-is-support-falsifier", resid <= 1e-8, resid, 1e-8)

    payload = _verdict_payload(verdict, search, args.seed)
    return checks, payload


def cmd_purify(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    rho = serialize.state_from_json(serialize.load(args.infile), tol)
    _guard_dim(rho.system.dim * (args.denv or rho.system.dim))
    result = purify(rho, d_env=args.denv, tol=tol)
    d_a, d_e = rho.system.dim, result.environment.dim
    marginal = partial_trace(result.pure_state.matrix, [d_a, d_e], keep=[0])
    marg_err = hs_norm(marginal - rho.matrix)
    vals, _ = eig_hermitian(result.pure_state.matrix)
    second = float(vals[1]) if vals.size > 1 else 0.0
    schmidt = [float(np.sqrt(max(v, 0.0))) for v in np.linalg.eigvalsh(rho.matrix)[::-1]]
    _check(checks, "marginal-restores-input", marg_err <= 1e-12, marg_err, 1e-12)
    _check(checks, "output-rank-one", abs(second) <= 1e-12, abs(second), 1e-12)
    payload = {
        "environment_dim": d_e,
        "schmidt_coefficients": schmidt,
        "pure_state": serialize.state_to_json(result.pure_state),
        "isometry_used": serialize.matrix_to_json(result.isometry_used),
    }
    return checks, payload


def cmd_dilate(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    inst = serialize.instrument_from_json(serialize.load(args.infile), tol)
    dil = stinespring_dilate(inst, tol)
    u = dil.unitary
    _guard_dim(u.shape[0])
    unitarity = hs_norm(u.conj().T @ u - np.eye(u.shape[0]))
    pvm_sum = sum(z.matrix for z in dil.pvm)
    pvm_err = hs_norm(pvm_sum - np.eye(dil.environment.dim))
    rebuilt = instrument_from_dilation(dil)
    round_trip = max(
        hs_norm(a.choi - b.choi) for a, b in zip(inst.operations, rebuilt.operations)
    )
    _check(checks, "unitary-is-unitary", unitarity <= 1e-10, unitarity, 1e-10)
    _check(checks, "pvm-sums-to-identity", pvm_err <= 1e-10, pvm_err, 1e-10)
    _check(checks, "round-trip", round_trip <= 1e-10, round_trip, 1e-10)
    payload = {
        "unitary": serialize.matrix_to_json(u),
        "ancilla_dim": dil.ancilla.dim,
        "environment_dim": dil.environment.dim,
        "ancilla_state": serialize.matrix_to_json(dil.ancilla_state.matrix),
        "pvm": [serialize.matrix_to_json(z.matrix) for z in dil.pvm],
        "block_map": [[int(i), int(k)] for i, k in dil.block_map],
    }
    return checks, payload


def cmd_twirl(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    x = serialize.matrix_from_json(serialize.load(args.infile))
    dims = [int(d) for d in args.dims.split(",")]
    _guard_dim(int(np.prod(dims)))
    streams = _streams(args.seed)
    payload: dict = {"dims": dims, "factor": args.factor, "note": TWIRL_NOTE}
    analytic = twirl_analytic(x, dims, args.factor)
    payload["analytic"] = serialize.matrix_to_json(analytic)
    trace_err = abs(np.trace(analytic) - np.trace(x))
    _check(checks, "twirl-preserves-trace", trace_err <= 1e-12, trace_err, 1e-12)
    # --analytic alone skips sampling; --mc N (or no flag) runs Monte Carlo
    do_mc = args.mc is not None or not args.analytic
    if do_mc:
        n = args.mc if args.mc is not None else _mc_samples(args)
        mc = _parallel_matrix_mean(
            lambda m, rng: twirl_monte_carlo(x, dims, args.factor, m, rng),
            n,
            streams[0],
            args.threads,
        )
        payload["monte_carlo"] = serialize.matrix_to_json(mc)
        payload["mc_samples"] = n
        err = hs_norm(mc - analytic)
        bound = 0.05 * max(hs_norm(x), 1e-300)
        payload["hs_error"] = err
        _check(checks, "mc-close-to-analytic", err <= bound, err, bound)
    return checks, payload


def cmd_falsify(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    streams = _streams(args.seed)
    rng_inputs = np.random.default_rng(streams[2])
    family = _build_family(args, rng_inputs)
    method = args.method
    n = _mc_samples(args) if method == "monte-carlo" else 0
    if method == "monte-carlo":
        avg_matrix = _parallel_matrix_mean(
            lambda m, rng: family_average(family, "monte-carlo", m, rng).matrix,
            n,
            streams[0],
            args.threads,
        )
        avg = State(family.system, avg_matrix)
        lam_min = float(np.linalg.eigvalsh((avg.matrix + avg.matrix.conj().T) / 2)[0])
        verdict = witness_unfalsifiable(family, method="analytic", tol=tol)
        verdict.method = "monte-carlo"
        verdict.samples = n
        verdict.average_state = avg
        verdict.lambda_min = lam_min
        verdict.unfalsifiable = bool(lam_min > tol)
    else:
        verdict = witness_unfalsifiable(family, method="analytic", tol=tol)
    search = falsifier_search(
        family,
        span_samples=_span_samples(args),
        tol=SEARCH_TOL,
        max_iter=args.max_iter,
        rng=np.random.default_rng(streams[1]),
    )
    consistent = not (verdict.unfalsifiable and search.test is not None)
    _check(checks, "witness-search-consistent", consistent)
    if search.test is not None:
        _check(
            checks,
            "falsifier-verified",
            search.max_violation <= 10 * SEARCH_TOL,
            search.max_violation,
            10 * SEARCH_TOL,
        )
    payload = _verdict_payload(verdict, search, args.seed)
    return checks, payload


def cmd_run(args, tol: float) -> tuple[list, dict]:
    checks: list = []
    try:
        with open(args.circuit_file, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read circuit file: {exc}")
    program = circuit.parse(source)
    issues = circuit.typecheck(program)
    if issues:
        raise issues[0]
    base_dir = os.path.dirname(os.path.abspath(args.circuit_file))
    names = [args.run_name] if args.run_name else list(program.runs)
    results = []
    for name in names:
        res = circuit.evaluate(program, name, base_dir=base_dir, tol=tol)
        if res.kind == "probability":
            results.append({"run": name, "kind": "probability", "value": res.probability})
        else:
            results.append(
                {"run": name, "kind": "state", "value": serialize.state_to_json(res.state)}
            )
        _check(checks, f"run-{name}", True)
    return checks, {"results": results}


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {
    "verify": cmd_verify,
    "purify": cmd_purify,
    "dilate": cmd_dilate,
    "twirl": cmd_twirl,
    "falsify": cmd_falsify,
    "run": cmd_run,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1

    tol = args.tol if args.tol is not None else _default_tol()
    start = time.perf_counter()
    try:
        checks, payload = COMMANDS[args.command](args, tol)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (LinalgError, circuit.CircuitError, FormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start

    report = {
        "command": [args.command] + argv[1:],
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", 1),
        "tolerances": {"validation": tol, "search_residual": SEARCH_TOL},
        "timing_seconds": elapsed,
        "checks": checks,
        "payload": payload,
    }

    for entry in checks:
        status = "PASS" if entry["pass"] else "FAIL"
        detail = ""
        if "value" in entry:
            detail = f" value={entry['value']:.3e}"
            if "threshold" in entry:
                detail += f" threshold={entry['threshold']:.3e}"
        print(f"[{status}] {entry['name']}{detail}")
    ok = all(entry["pass"] for entry in checks)
    print(f"{'ok' if ok else 'FAILED'}: {sum(e['pass'] for e in checks)}/{len(checks)} checks")

    if args.json_path:
        with open(args.json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")

    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())

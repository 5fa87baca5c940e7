"""Command line: ``qmcert certify | verify | bench``.

Problem files are plain text::

    vars: x y
    gen: 1 - x^2 - y^2
    gen: x
    f: 2 - x
    opt tolerance 1/1000
    opt rmax 10
    opt archimedean_n 8
    opt n_cap 100000

or the JSON mirror ``{"variables": [...], "generators": [...], "f": "...",
"options": {...}}`` when the file name ends in ``.json``.  Lines starting
with ``#`` are comments.

Exit codes: 0 ok, 1 input error, 2 pipeline failure, 3 invalid certificate.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .bounds import BoundConfig
from .poly import ParseError, Polynomial, parse, to_string
from .putinar import (CertifyOptions, PipelineError, QuadraticModule, certificate_from_json,
                      certificate_text, certificate_to_json, plain_value, putinar_certify,
                      verify_certificate)
from .rational import Q

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE, EXIT_INVALID = 0, 1, 2, 3

OPTION_KEYS = ("tolerance", "rmax", "archimedean_n", "n_cap")

log = logging.getLogger("qmcert")


class InputError(ValueError):
    pass


@dataclass
class Problem:
    variables: list
    generators: list
    f: str
    options: dict = field(default_factory=dict)

    def module(self) -> QuadraticModule:
        return QuadraticModule.from_strings(self.generators, self.variables)

    def target(self) -> Polynomial:
        return parse(self.f, self.variables)


def parse_problem_text(text: str) -> Problem:
    variables, gens, f, opts = None, [], None, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("vars:"):
            variables = line[5:].replace(",", " ").split()
        elif line.startswith("gen:"):
            gens.append(line[4:].strip())
        elif line.startswith("f:"):
            if f is not None:
                raise InputError(f"line {lineno}: f given twice")
            f = line[2:].strip()
        elif line.startswith("opt "):
            parts = line.split()
            if len(parts) != 3:
                raise InputError(f"line {lineno}: expected 'opt <key> <value>'")
            opts[parts[1]] = parts[2]
        else:
            raise InputError(f"line {lineno}: unrecognized line {line!r}")
    return _checked(Problem(variables or [], gens, f, opts))


def parse_problem_json(text: str) -> Problem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("problem JSON must be an object")
    return _checked(Problem(list(doc.get("variables", [])), list(doc.get("generators", [])),
                            doc.get("f"), {k: str(v) for k, v in doc.get("options", {}).items()}))


def _checked(p: Problem) -> Problem:
    if not p.variables:
        raise InputError("no variables declared")
    if not p.generators:
        raise InputError("at least one generator is required")
    if p.f is None:
        raise InputError("no target polynomial f")
    for k in p.options:
        if k not in OPTION_KEYS:
            raise InputError(f"unknown option {k!r}; known: {', '.join(OPTION_KEYS)}")
    for label, text in [("f", p.f)] + [(f"gen {i + 1}", g) for i, g in enumerate(p.generators)]:
        try:
            parse(text, p.variables)
        except ParseError as exc:
            caret = " " * exc.position + "^"
            raise InputError(f"{label}: {exc}\n    {text}\n    {caret}") from exc
    return p


def load_problem(path: str) -> Problem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if path.endswith(".json"):
        return parse_problem_json(text)
    return parse_problem_text(text)


def options_for(p: Problem, args=None) -> CertifyOptions:
    opts = dict(p.options)
    if args is not None:
        for key, val in (("tolerance", args.tolerance), ("rmax", args.rmax),
                         ("archimedean_n", args.archimedean_n)):
            if val is not None:
                opts[key] = val
    try:
        tol = Q(opts.get("tolerance", "1/1000"))
        big_n = Q(opts["archimedean_n"]) if "archimedean_n" in opts else None
        cfg = CertifyOptions(bound=BoundConfig(tolerance=tol), r_max=int(opts.get("rmax", 15)),
                             n_search_cap=int(opts.get("n_cap", 100000)), archimedean_n=big_n)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise InputError(f"bad option value: {exc}") from exc
    if big_n is not None and big_n <= 0:
        raise InputError("archimedean_n must be positive")
    return cfg


# --------------------------------------------------------------------------
# commands


def cmd_certify(args) -> int:
    try:
        prob = load_problem(args.file)
        opts = options_for(prob, args)
        if args.state:
            opts = replace(opts, state_path=args.state)
        Q_, f = prob.module(), prob.target()
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        cert = putinar_certify(Q_, f, opts)
    except PipelineError as exc:
        print(f"pipeline failure at stage {exc.stage}: {exc}", file=sys.stderr)
        for k, v in exc.details.items():
            if isinstance(v, Polynomial):
                v = to_string(v, prob.variables)
            elif isinstance(v, dict):
                v = plain_value(v)
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_PIPELINE
    full = Q_ if cert.archimedean_n is None else Q_.with_ball(cert.archimedean_n)
    ok, why = verify_certificate(full, f, cert)
    doc = certificate_to_json(full, f, cert, prob.variables, ok)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    if args.json:
        print(json.dumps(doc, indent=1))
    else:
        print(certificate_text(full, f, cert, prob.variables))
        print(f"certificate degree: {cert.degree(full)}")
        print(f"verified: {ok}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_verify(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        print(f"input error: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not text.strip():
        print("input error: empty certificate file", file=sys.stderr)
        return EXIT_INPUT
    try:
        Q_, f, cert = certificate_from_json(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        print(f"input error: malformed certificate: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ok, why = verify_certificate(Q_, f, cert)
    if ok:
        print("valid")
        return EXIT_OK
    print(f"invalid: {why}")
    return EXIT_INVALID


# --------------------------------------------------------------------------
# benchmarks

CSV_COLUMNS = ("problem_id", "k_or_d", "epsilon", "multiplier_degree", "r", "wall_seconds",
               "verified")


def _univariate_rows(ks=(13, 15, 17, 19, 21), eps_values=("1/2", "1/3")):
    for eps in eps_values:
        for k in ks:
            yield f"univariate-eps{eps.replace('/', '_')}-k{k}", ("univariate", k, eps)


MOTZKIN = "x^6 + y^4*z^2 + y^2*z^4 - 3*x^2*y^2*z^2"
ROBINSON = "x^4*y^2 + y^4*z^2 + x^2*z^4 - 3*x^2*y^2*z^2"
LIFT_G = "10 - x^2 - y^4 - z^8"


def _global_rows(ds=(1, 10, 100), r_max=4):
    for name in ("motzkin", "robinson"):
        for d in ds:
            yield f"{name}-d{d}", ("global", name, d, r_max)


def _example_rows():
    yield "two-generator-univariate", ("problem", ["x"], ["x*(x-1/2)*(x-1)^2*(x-2)",
                                                            "-x*(x-1)*(x-2)"],
                                       "-26*x^7 + 13*x^6 + 87*x^5 + 49*x^4 - 464*x^3 "
                                       "+ 1512*x^2 - 2211*x + 1050")
    yield "unit-square-corner", ("problem", ["x", "y"], ["x", "y", "(1-x)*(1-y)", "2-(x+y)"],
                                 "(x+1)*(2-x)+(y+1)*(2-y)")
    yield "lifted-motzkin-lasserre", ("lasserre", ["x", "y"], "1 - x^4*y^2 - x^2*y^4 + x^2*y^2 "
                                      "- y^6 - x^6", "2 + x^4*y^2 + x^2*y^4 - 3*x^2*y^2")


def _run_row(job):
    """``(k_or_d, epsilon, degree, r, seconds, verified)`` for one benchmark row."""
    from .lasserre import alg_lasserre
    from .sos import verify_sos

    kind = job[0]
    t0 = time.perf_counter()
    if kind == "univariate":
        _, k, eps = job
        Q_ = QuadraticModule.from_strings([f"(1 - x^2)^{k}"], ["x"])
        f = parse(f"1 + {eps} + x", ["x"])
        cert = putinar_certify(Q_, f)
        ok = verify_certificate(Q_, f, cert)[0]
        return k, eps, cert.degree(Q_), "", time.perf_counter() - t0, ok
    if kind == "global":
        _, name, d, r_max = job
        names = ["x", "y", "z"]
        f = parse(f"{MOTZKIN if name == 'motzkin' else ROBINSON} + 1/{d}", names)
        g = parse(LIFT_G, names)
        res = alg_lasserre(f, g, r_max=r_max)
        ok = verify_sos(f - res.multiplier * g, res.sos_witness)
        deg = (res.multiplier * g).degree if not res.multiplier.is_zero() else 0
        return d, str(res.epsilon), deg, res.r, time.perf_counter() - t0, ok
    if kind == "lasserre":
        _, names, gtext, ftext = job
        f, g = parse(ftext, names), parse(gtext, names)
        res = alg_lasserre(f, g)
        ok = verify_sos(f - res.multiplier * g, res.sos_witness)
        deg = (res.multiplier * g).degree if not res.multiplier.is_zero() else 0
        return "", str(res.epsilon), deg, res.r, time.perf_counter() - t0, ok
    _, names, gens, ftext = job
    Q_ = QuadraticModule.from_strings(gens, names)
    f = parse(ftext, names)
    cert = putinar_certify(Q_, f)
    full = Q_ if cert.archimedean_n is None else Q_.with_ball(cert.archimedean_n)
    ok = verify_certificate(full, f, cert)[0]
    return "", "", cert.degree(full), "", time.perf_counter() - t0, ok


def _safe_row(item):
    pid, job = item
    try:
        return (pid,) + _run_row(job)
    except (PipelineError, RuntimeError) as exc:   # a failed row is reported, not fatal
        log.warning("%s failed: %s", pid, exc)
        return (pid, "", "", "", "", "", False)


SUITES = {
    "univariate-degree": _univariate_rows,
    "global-positivity": _global_rows,
    "paper-examples": _example_rows,
}


def cmd_bench(args) -> int:
    if args.suite not in SUITES:
        print(f"input error: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}",
              file=sys.stderr)
        return EXIT_INPUT
    gen = SUITES[args.suite]
    try:
        if args.suite == "global-positivity":
            ds = tuple(int(x) for x in args.d.split(",")) if args.d else (1, 10, 100)
            items = list(gen(ds, args.rmax))
        elif args.suite == "univariate-degree" and args.k:
            items = list(gen(tuple(int(x) for x in args.k.split(","))))
        else:
            items = list(gen())
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    # warm-up: imports, solver start-up and caches stay out of the timings
    _safe_row(("warm-up", ("univariate", 1, "1/2")))
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        print("note: parallel rows; wall times are not comparable", file=sys.stderr)
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_safe_row, items))
    else:
        rows = [_safe_row(it) for it in items]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            pid, kd, eps, deg, r, secs, ok = row
            w.writerow([pid, kd, eps, deg, r, "" if secs == "" else f"{secs:.3f}", ok])
            print(f"{pid}: degree={deg} r={r} time={secs if secs == '' else round(secs, 2)} "
                  f"verified={ok}")
    return EXIT_OK if all(row[-1] for row in rows) else EXIT_PIPELINE


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmcert", description="SOS certificates for polynomials "
                                 "strictly positive on a basic closed semialgebraic set.")
    ap.add_argument("--version", action="version", version=f"qmcert {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log pipeline progress")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="compute and verify a certificate")
    c.add_argument("file")
    c.add_argument("--out", help="write the JSON certificate here")
    c.add_argument("--json", action="store_true", help="print JSON instead of text")
    c.add_argument("--tolerance", help="branch-and-bound tolerance, p/q")
    c.add_argument("--rmax", help="largest perturbation order r to try")
    c.add_argument("--archimedean-n", dest="archimedean_n", help="adjoin N - |x|^2 with this N")
    c.add_argument("--state", help="write the partial trace here if a stage fails")
    c.set_defaults(func=cmd_certify)

    v = sub.add_parser("verify", help="check a JSON certificate exactly")
    v.add_argument("file")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run a benchmark suite and write CSV")
    b.add_argument("suite", help=", ".join(SUITES))
    b.add_argument("--out", required=True)
    b.add_argument("--d", help="comma-separated d values (global-positivity)")
    b.add_argument("--k", help="comma-separated k values (univariate-degree)")
    b.add_argument("--rmax", type=int, default=4,
                   help="largest r per global-positivity row (default 4)")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":     # pragma: no cover
    sys.exit(main())

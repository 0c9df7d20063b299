"""Command line entry point: ``rigidlab <command> [options]``.

Every command writes its artifacts into ``--out`` (default: the current
directory). JSON outputs carry ``tool_version``, ``seed`` and
``config_hash`` and are written with sorted keys, so identical
configurations give byte-identical files. ``--threads`` only caps worker
threads and is left out of the hash.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 resource budget.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BENCH_CHECKS, run_bench
from .cloud import WeightedCloud, read_csv
from .errors import (BracketError, InjectivityError, ParameterError, RankDeficiencyError, ResourceError,
                     SeparationError, SingularityError)
from .ifs import (bowen_report, make_antoine, make_example_a1, sample_limit_set, system_from_json,
                  system_to_json)
from .kleinian import (convergence_abscissa, enumerate_orbit, group_from_json, poincare_exponent_estimate,
                       poincare_series_partial)
from .rigidity import dichotomy_report

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4
SEED_ENV = "RIGIDLAB_SEED"
# options that do not change results
_UNHASHED = {"threads", "out", "func"}


class InputError(Exception):
    """Bad command line input; reported with exit code 2."""


# -- plumbing ---------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        raise InputError(f"{path} is empty")
    return text


def _load_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _resolve_seed(args) -> int:
    raw = os.environ.get(SEED_ENV)
    seed = args.seed if raw is None else raw
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise InputError(f"seed must be an integer, got {seed!r}") from None
    if not 0 <= seed < 2**64:
        raise InputError("seed must be a 64-bit unsigned integer")
    return seed


def _config_hash(args, inputs=()) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    cfg["inputs"] = [hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in inputs]
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _write_json(path: Path, payload: dict, args, inputs=()) -> dict:
    doc = dict(payload)
    doc.update(tool_version=__version__, seed=args.seed, config_hash=_config_hash(args, inputs))
    text = json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
    path.write_text(text)
    return doc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_cloud(cloud: WeightedCloud, out: Path, args, inputs=()) -> None:
    cloud.to_csv(out / "cloud.csv")
    cloud.to_ply(out / "cloud.ply", comments=[f"rigidlab {__version__}", f"seed {args.seed}",
                                              f"config_hash {_config_hash(args, inputs)}"])
    _write_json(out / "cloud.json", {"meta": cloud.meta, "n_points": cloud.n_points, "dim": cloud.dim}, args, inputs)


# -- commands ---------------------------------------------------------------

def cmd_bowen(args) -> int:
    cifs = system_from_json(_load_json(args.system))
    res = bowen_report(cifs, tol=args.tol)
    payload = {"delta": res.delta, "pressure_residual": res.pressure_residual,
               "certificate": cifs.certificate.to_json(), "word_length": res.n,
               "distortion": res.distortion, "lower_delta": res.lower_delta}
    if cifs.certificate.status == "FAIL":
        payload["warning"] = ("separation check failed; delta is the zero of the pressure "
                              "but need not equal the dimension of the limit set")
    doc = _write_json(_out_dir(args) / "bowen.json", payload, args, [args.system])
    print(json.dumps(_clean(doc), sort_keys=True))
    return EXIT_OK


def cmd_limitset(args) -> int:
    cifs = system_from_json(_load_json(args.system))
    cloud = sample_limit_set(cifs, args.n, args.depth, rng_seed=args.seed, threads=args.threads)
    _write_cloud(cloud, _out_dir(args), args, [args.system])
    return EXIT_OK


def cmd_rigidity(args) -> int:
    _read_text(args.cloud)
    cloud = read_csv(args.cloud)
    report = dichotomy_report(cloud, args.k, sphere_tol=args.sphere_tol, seed=args.seed)
    doc = _write_json(_out_dir(args) / "report.json", report.to_json(), args, [args.cloud])
    print(json.dumps({"verdict": doc["verdict"], "dim_estimate": _clean(doc["dim_estimate"])}, sort_keys=True))
    return EXIT_OK


def cmd_example_a1(args) -> int:
    E = make_example_a1(args.alpha, args.K)
    checks = args.checks or list(BENCH_CHECKS)
    results = run_bench(E, checks, seed=args.seed)
    payload = {"alpha": E.alpha, "K": E.K, "dim": E.dim, "checks": results,
               "passed": all(r["passed"] for r in results.values())}
    _write_json(_out_dir(args) / "bench-report.json", payload, args)
    for name, r in results.items():
        print(f"{name}: {'PASS' if r['passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_antoine(args) -> int:
    cifs = make_antoine(args.links, args.ratio, args.major, args.minor)
    out = _out_dir(args)
    res = bowen_report(cifs)
    payload = {"system": system_to_json(cifs), "certificate": cifs.certificate.to_json(),
               "delta": res.delta, "moran_dimension": cifs.meta.get("moran_dimension")}
    if args.n > 0:
        cloud = sample_limit_set(cifs, args.n, args.depth, delta=res.delta, rng_seed=args.seed,
                                 threads=args.threads)
        _write_cloud(cloud, out, args)
        payload["n_points"] = args.n
    _write_json(out / "antoine.json", payload, args)
    return EXIT_OK


def cmd_schottky(args) -> int:
    G = group_from_json(_load_json(args.group))
    orbit = enumerate_orbit(G, args.maxlen)
    out = _out_dir(args)
    d = G.dim
    lines = [",".join(["word", "displacement"] + [f"x{i}" for i in range(d)])]
    for w, disp, base in zip(orbit.words, orbit.displacements, orbit.bases):
        lines.append(",".join([G.word_string(w) or "e", "%.17g" % disp] + ["%.17g" % v for v in base]))
    (out / "orbit.csv").write_text("\n".join(lines) + "\n")
    est = poincare_exponent_estimate(G, args.maxlen, orbit)
    payload = {"exponent": est.to_json(), "delta_hat": est.delta_hat, "n_words": len(orbit),
               "counts_by_length": np.bincount(orbit.lengths, minlength=args.maxlen + 1).tolist(),
               "elementary": G.elementary}
    if args.maxlen >= 3 and not G.elementary:
        payload["convergence_abscissa"] = convergence_abscissa(G, args.maxlen, orbit=orbit)
    if args.s is not None:
        payload["series"] = {"s": args.s, "partial_sum": poincare_series_partial(G, args.s, args.maxlen, orbit)}
    _write_json(out / "exponent.json", payload, args, [args.group])
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default=0, help=f"64-bit RNG seed (env {SEED_ENV} overrides)")
    common.add_argument("--threads", type=int, default=1, help="worker thread cap")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="rigidlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rigidlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("bowen", parents=[common], help="zero of the pressure of a system")
    s.add_argument("system")
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_bowen)

    s = sub.add_parser("limitset", parents=[common], help="sample the limit set to cloud.csv and cloud.ply")
    s.add_argument("system")
    s.add_argument("--n", type=_positive_int, default=10_000)
    s.add_argument("--depth", type=_positive_int, default=20)
    s.set_defaults(func=cmd_limitset)

    s = sub.add_parser("rigidity", parents=[common], help="sphere or fractal verdict for a cloud")
    s.add_argument("cloud")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--sphere-tol", type=float, default=None)
    s.set_defaults(func=cmd_rigidity)

    s = sub.add_parser("example-a1", parents=[common], help="checks on the truncated curve system")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--K", type=int, default=12)
    s.add_argument("--checks", nargs="*", choices=BENCH_CHECKS, default=None)
    s.set_defaults(func=cmd_example_a1)

    s = sub.add_parser("antoine", parents=[common], help="build (and optionally sample) Antoine's necklace")
    s.add_argument("--links", type=int, default=20)
    s.add_argument("--ratio", type=float, default=0.1)
    s.add_argument("--major", type=float, default=1.0)
    s.add_argument("--minor", type=float, default=0.28)
    s.add_argument("--n", type=_positive_int, default=0, help="sample size; 0 skips sampling")
    s.add_argument("--depth", type=_positive_int, default=8)
    s.set_defaults(func=cmd_antoine)

    s = sub.add_parser("schottky", parents=[common], help="orbit enumeration and exponent estimate")
    s.add_argument("group")
    s.add_argument("--maxlen", type=_positive_int, default=8)
    s.add_argument("--s", type=float, default=None, help="also evaluate the partial Poincaré series at s")
    s.set_defaults(func=cmd_schottky)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        args.seed = _resolve_seed(args)
        if args.threads < 1:
            raise InputError("--threads must be at least 1")
        return args.func(args)
    except (InputError, ParameterError, SeparationError, InjectivityError) as exc:
        code, exc_ = EXIT_INPUT, exc
    except (BracketError, SingularityError, RankDeficiencyError, ArithmeticError) as exc:
        code, exc_ = EXIT_NUMERIC, exc
    except (ResourceError, MemoryError) as exc:
        code, exc_ = EXIT_RESOURCE, exc
    print(f"rigidlab {args.command}: {exc_}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

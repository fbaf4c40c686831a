"""Command-line front end.

    corrgen generate --method gamma-gaussian --dim 3 --count 2 --seed 7
    corrgen transform --to-gamma --input mats.csv --output gammas.csv
    corrgen jacobian --gamma 0.25,0.25,0.25
    corrgen density --gamma 0.6,1.5,0.05 --law gaussian
    corrgen verify --suite jacobian
    corrgen bench --dim 200 --blocks 10 --seed 1

Exit status: 0 success, 1 validation failure (bad input or a failed check),
2 numerical failure, 3 I/O error.  A JSON ``--config`` file supplies
defaults for any long option of the chosen command; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines, block, samplers, verify
from .errors import CorrgenError, NumericalFailure, SamplingStarvation
from .gamma_map import corr_to_gamma, density_corr, gamma_to_corr, gaussian_density, jacobian, logistic_density
from .linalg import dim_from_len, unvecl, vecl

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(CorrgenError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which here means numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# -- draws ------------------------------------------------------------------------


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for draw ``index``; results do not depend on threading."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _gamma_draw(law, n):
    def draw(rng):
        g = law.sample(n, rng)
        return gamma_to_corr(g), g

    return draw


def _block_source(args, params):
    if args.spec_file:
        spec = block.BlockSpec.from_dict(_read_json(args.spec_file))
        return spec
    if "sizes" not in params:
        raise UsageError("block method needs --spec-file or params {\"sizes\": [...]}")
    return block.BlockLaw(tuple(params["sizes"]), params.get("mu", 0.0), params.get("omega2", 1.0))


def _mixture_source(args, params):
    if args.spec_file:
        raw = _read_json(args.spec_file)
        comps = tuple(block.BlockSpec.from_dict(c) for c in raw["components"])
        weights = raw.get("weights", [1.0 / len(comps)] * len(comps))
        return block.MixtureSpec(tuple(weights), comps)
    if "sizes" not in params:
        raise UsageError("mixture method needs --spec-file or params {\"sizes\": [...], \"M\": m}")
    return block.MixtureSpec.uniform(params["sizes"], int(params.get("M", 1)),
                                     params.get("mu", 0.0), params.get("omega2", 1.0))


def make_drawer(args, params):
    """Return (n, draw) where ``draw(rng)`` gives ``(C, gamma or None)``."""
    m, n = args.method, args.dim
    alpha = args.alpha if args.alpha is not None else params.get("alpha")
    beta = args.beta if args.beta is not None else params.get("beta")

    if m == "block":
        src = _block_source(args, params)
        return src.n if isinstance(src, block.BlockSpec) else sum(src.sizes), (
            lambda rng: (block.sample_block_corr(src, rng), None))
    if m == "mixture":
        mix = _mixture_source(args, params)
        return mix.n, lambda rng: (block.sample_mixture(mix, rng)[0], None)

    if n is None:
        raise UsageError(f"method {m!r} needs --dim")
    if m == "gamma-gaussian":
        return n, _gamma_draw(samplers.GaussianIID(params.get("mu", 0.0), params.get("omega2", 1.0)), n)
    if m == "gamma-law":
        if not args.law_file:
            raise UsageError("gamma-law needs --law-file")
        return n, _gamma_draw(samplers.law_from_dict(_read_json(args.law_file)), n)
    if m == "equicorrelation":
        law = samplers.EquiLaw(n, alpha or 1.0, beta or 1.0)

        def equi(rng):
            C = samplers.sample_equicorrelation(law, rng)
            return C, np.full(n * (n - 1) // 2, samplers.z_of_r(C[1, 0], n)) if n > 1 else np.zeros(0)

        return n, equi
    if m == "naive":
        return n, lambda rng: (baselines.naive_sample(n, rng, int(params.get("max_tries", 10**6)))[0], None)
    if m == "gram":
        return n, lambda rng: (baselines.gram_sample(n, rng), None)
    if m == "sap":
        kind = "beta" if alpha is not None else "uniform"
        return n, lambda rng: (baselines.sap_sample(n, rng, angle_law=kind, alpha=alpha), None)
    if m == "eigen":
        return n, lambda rng: (baselines.eigen_sample(n, rng), None)
    if m == "pac":
        a = float(alpha) if alpha is not None else n / 2
        return n, lambda rng: (baselines.pac_sample(n, a, rng), None)
    if m == "wishart":
        rho = float(params.get("rho", 0.0))
        sigma = params.get("sigma", baselines.equicorrelation(n, rho).tolist())
        cfg = baselines.WishartConfig(np.asarray(sigma, dtype=float), int(params.get("T", max(n, 100))))
        return n, lambda rng: (baselines.wishart_corr_sample(cfg, rng), None)
    raise UsageError(f"unknown method {m!r}; valid methods: {', '.join(METHODS)}")


METHODS = (
    "gamma-gaussian", "gamma-law", "equicorrelation", "block", "mixture",
    "naive", "gram", "sap", "eigen", "pac", "wishart",
)


def run_draws(draw, seed: int, count: int, threads: int | None = None) -> list:
    """Evaluate ``draw`` on per-index substreams, returned in index order."""
    threads = threads or _thread_cap()
    jobs = (substream(seed, i) for i in range(count))
    if threads <= 1:
        return [draw(r) for r in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(draw, jobs))


def _thread_cap() -> int:
    raw = os.environ.get("CORRGEN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CORRGEN_THREADS must be an integer, got {raw!r}") from None


# -- formats ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrices_csv(fh, mats):
    for k, C in enumerate(mats):
        if k:
            fh.write("\n")
        for row in C:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrices_csv(text: str) -> list:
    """Parse blank-line separated blocks of comma separated rows."""
    mats, rows = [], []
    for line in text.splitlines() + [""]:
        line = line.strip()
        if not line:
            if rows:
                mats.append(np.array(rows, dtype=float))
                rows = []
            continue
        rows.append([float(v) for v in line.split(",")])
    for M in mats:
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise UsageError(f"matrix block of shape {M.shape} is not square")
    return mats


def read_vectors_csv(text: str) -> list:
    return [np.array([float(v) for v in line.split(",")]) for line in text.splitlines() if line.strip()]


def jsonl_record(index, C, gamma=None) -> dict:
    rec = {
        "seed_index": index,
        "n": int(C.shape[0]),
        "vecl": vecl(C).tolist(),
        "lambda_min": float(np.linalg.eigvalsh(C)[0]),
    }
    if gamma is not None:
        rec["gamma"] = np.asarray(gamma, dtype=float).tolist()
    return rec


def _read_text(path) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    return Path(path).read_text()


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc


def _open_out(path):
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def _format_for(args, path) -> str:
    if args.format:
        return args.format
    return "jsonl" if path and str(path).endswith((".jsonl", ".json")) else "csv"


def _parse_vector(text) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise UsageError(f"cannot parse vector {text!r}") from exc


def write_histogram(path, values, bins: int):
    """Histogram of every vecl position, one row per (position, bin)."""
    V = np.asarray(values)
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position", "bin_left", "bin_right", "count"])
        for k in range(V.shape[1]):
            counts, edges = np.histogram(V[:, k], bins=bins, range=(-1.0, 1.0))
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([k, _fmt(lo), _fmt(hi), int(c)])


# -- commands ---------------------------------------------------------------------


def _require_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} is stochastic and needs --seed")


def _params(args) -> dict:
    if args.params is None:
        return {}
    if isinstance(args.params, dict):
        return args.params
    try:
        out = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is not valid JSON ({exc})") from exc
    if not isinstance(out, dict):
        raise UsageError("--params must be a JSON object")
    return out


def cmd_generate(args) -> int:
    if args.method is None:
        raise UsageError("--method is required")
    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; valid methods: {', '.join(METHODS)}")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    deterministic = args.method == "block" and args.spec_file
    if not deterministic:
        _require_seed(args)
    n, draw = make_drawer(args, _params(args))
    results = run_draws(draw, args.seed or 0, args.count)
    fmt = _format_for(args, args.output)
    with _open_out(args.output) as fh:
        if fmt == "csv":
            write_matrices_csv(fh, (C for C, _ in results))
        else:
            for i, (C, g) in enumerate(results):
                fh.write(json.dumps(jsonl_record(i, C, g)) + "\n")
    if args.histogram:
        write_histogram(args.histogram, np.array([vecl(C) for C, _ in results]), args.bins)
    return EXIT_OK


def cmd_transform(args) -> int:
    text = _read_text(args.input)
    in_fmt = args.input_format or ("jsonl" if args.input and args.input.endswith((".jsonl", ".json")) else "csv")
    out_fmt = _format_for(args, args.output)
    with _open_out(args.output) as fh:
        if args.to_gamma:
            if in_fmt == "csv":
                mats = read_matrices_csv(text)
            else:
                mats = []
                for line in text.splitlines():
                    if line.strip():
                        rec = json.loads(line)
                        v = np.asarray(rec["vecl"], dtype=float)
                        mats.append(unvecl(v, diag=1.0))
            gammas = [corr_to_gamma(C) for C in mats]
            for i, g in enumerate(gammas):
                if out_fmt == "csv":
                    fh.write(",".join(_fmt(v) for v in g) + "\n")
                else:
                    fh.write(json.dumps({"index": i, "n": dim_from_len(g.size), "gamma": g.tolist()}) + "\n")
        else:
            if in_fmt == "csv":
                gammas = read_vectors_csv(text)
            else:
                gammas = [np.asarray(json.loads(l)["gamma"], dtype=float) for l in text.splitlines() if l.strip()]
            mats = [gamma_to_corr(g) for g in gammas]
            if out_fmt == "csv":
                write_matrices_csv(fh, mats)
            else:
                for i, (C, g) in enumerate(zip(mats, gammas)):
                    fh.write(json.dumps(jsonl_record(i, C, g)) + "\n")
    return EXIT_OK


def _matrix_arg(args) -> np.ndarray:
    if args.gamma is not None:
        return gamma_to_corr(_parse_vector(args.gamma))
    if args.input is None:
        raise UsageError("give --gamma or --input")
    mats = read_matrices_csv(_read_text(args.input))
    if len(mats) != 1:
        raise UsageError(f"expected one matrix in {args.input}, found {len(mats)}")
    return mats[0]


def cmd_jacobian(args) -> int:
    C = _matrix_arg(args)
    jb = jacobian(C)
    out = {
        "n": int(C.shape[0]),
        "gamma": corr_to_gamma(C).tolist(),
        "J": jb.J.tolist(),
        "J_inv": np.linalg.inv(jb.J).tolist(),
        "det_J": float(jb.det_J),
        "psi": float(jb.psi),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_density(args) -> int:
    C = _matrix_arg(args)
    d = C.shape[0] * (C.shape[0] - 1) // 2
    params = _params(args)
    if args.law == "gaussian":
        mean = np.asarray(params.get("mean", np.zeros(d)), dtype=float)
        cov = np.asarray(params.get("cov", np.eye(d) * params.get("omega2", 1.0)), dtype=float)
        f = gaussian_density(np.broadcast_to(mean, (d,)), cov)
    else:
        f = logistic_density(params.get("mu", 0.0), params.get("s", 0.5))
    g = corr_to_gamma(C)
    out = {"n": int(C.shape[0]), "law": args.law, "density_gamma": float(f(g)), "density_corr": density_corr(C, f)}
    print(json.dumps(out))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite is None:
        raise UsageError(f"--suite is required; one of: {', '.join(sorted(verify.SUITES))}")
    if args.suite != "jacobian":
        _require_seed(args)
    records = verify.run_suite(args.suite, n=args.dim, N=args.draws, seed=args.seed or 0)
    ok = all(r["pass"] for r in records)
    report = {"suite": args.suite, "pass": ok, "checks": records}
    with _open_out(args.output) as fh:
        fh.write(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_bench(args) -> int:
    if args.spec_file:
        spec = block.BlockSpec.from_dict(_read_json(args.spec_file))
    else:
        _require_seed(args)
        n, K = args.dim or 200, args.blocks or 10
        if K > n:
            raise UsageError("--blocks cannot exceed --dim")
        sizes = [n // K + (k < n % K) for k in range(K)]
        spec = block.BlockLaw(tuple(sizes)).draw_spec(np.random.default_rng(args.seed))
    rep = block.bench_block_vs_dense(spec, repeats=args.repeats, dense_max_n=args.dense_max_n)
    if args.json:
        print(json.dumps(rep))
        return EXIT_OK
    print(f"{'n':>6} {'K':>4} {'block_s':>12} {'dense_s':>12} {'speedup':>9} {'max_diff':>10}")
    dense = rep.get("dense_seconds")
    print(
        f"{rep['n']:>6} {rep['K']:>4} {rep['block_seconds']:>12.6f} "
        + (f"{dense:>12.6f} {rep['speedup']:>9.1f} {rep['max_abs_diff']:>10.2e}" if dense is not None
           else f"{'-':>12} {'-':>9} {'-':>10}")
    )
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="corrgen", description="Random correlation matrices through the log-matrix parameterization.")
    p.add_argument("--config", help="JSON file with default option values")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="draw random correlation matrices")
    g.add_argument("--method", help=f"one of: {', '.join(METHODS)}")
    g.add_argument("--dim", "-n", type=int)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int)
    g.add_argument("--params", help="method parameters as a JSON object")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--law-file", help="gamma law JSON with a \"variant\" field")
    g.add_argument("--spec-file", help="block spec JSON {\"sizes\": [...], \"gammas\": [[...]]}")
    g.add_argument("--output", "-o")
    g.add_argument("--format", choices=("csv", "jsonl"))
    g.add_argument("--histogram", help="also write per-position histogram CSV here")
    g.add_argument("--bins", type=int, default=50)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("transform", help="convert between correlation matrices and gamma vectors")
    way = t.add_mutually_exclusive_group(required=True)
    way.add_argument("--to-gamma", action="store_true")
    way.add_argument("--to-corr", action="store_true")
    t.add_argument("--input", "-i")
    t.add_argument("--input-format", choices=("csv", "jsonl"))
    t.add_argument("--output", "-o")
    t.add_argument("--format", choices=("csv", "jsonl"))
    t.set_defaults(func=cmd_transform)

    for name, fn, helptext in (("jacobian", cmd_jacobian, "Jacobian d vecl(C) / d gamma and psi"),
                               ("density", cmd_density, "density of C induced by a gamma law")):
        j = sub.add_parser(name, help=helptext)
        j.add_argument("--gamma", help="comma separated gamma vector")
        j.add_argument("--input", "-i", help="CSV file holding one correlation matrix")
        if name == "density":
            j.add_argument("--law", choices=("gaussian", "logistic"), default="gaussian")
            j.add_argument("--params", help="law parameters as JSON")
        j.set_defaults(func=fn)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=sorted(verify.SUITES))
    v.add_argument("--dim", "-n", type=int)
    v.add_argument("--draws", "-N", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--output", "-o")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="block solver against the dense path")
    b.add_argument("--spec-file")
    b.add_argument("--dim", "-n", type=int)
    b.add_argument("--blocks", "-K", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--dense-max-n", type=int, default=400)
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def _apply_config(parser, argv):
    """Config-file values become parser defaults, so explicit flags override them."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = _read_json(known.config)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
        return args.func(args)
    except OSError as exc:
        print(f"corrgen: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, SamplingStarvation, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"corrgen: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"corrgen: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

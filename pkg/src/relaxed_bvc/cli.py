"""Command-line front end.

    relaxed-bvc delta-star      --input pts.csv --f 1 [--p 2]
    relaxed-bvc simulate        --protocol algo --n 4 --f 1 --d 3 --generate uniform --seed 7 --out runs/
    relaxed-bvc counterexample  sync-k --d 3
    relaxed-bvc tverberg        --d 2 --f 1 --n 5 --seed 0
    relaxed-bvc check-bounds    --theorem 16 --trials 1000

Exit codes: 0 success, 2 property violation, 3 expected tightness failure
(the construction behaves as the impossibility results predict), 4 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from . import bounds
from .deltastar import METHODS, delta_star
from .errors import ConfigurationError, UsageError
from .geometry import norm_name, parse_norm
from .hulls import PLAIN, DeltaRelaxed, KRelaxed
from .protocols import AsyncDelta, ConsensusConfig, ExactDelta, ExactK, ScalarPerCoord, run_protocol
from .simnet import ADVERSARY_KINDS, INPUT_STRATEGIES, Adversary, atomic_write_text, jsonable, make_rng

EXIT_OK, EXIT_VIOLATION, EXIT_TIGHT, EXIT_USAGE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- input ----------------------------------------------------------------------------

def read_points(path: str) -> np.ndarray:
    """CSV points, one per row, after a ``dim=<d>`` header line; '#' lines are comments."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return parse_points(text, path)


def parse_points(text: str, name: str = "<input>") -> np.ndarray:
    d = None
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        if d is None:
            head = cells[0].replace(" ", "")
            if len(cells) != 1 or not head.startswith("dim="):
                raise UsageError(f"{name}:{lineno}: expected header 'dim=<d>'")
            try:
                d = int(head[4:])
            except ValueError:
                raise UsageError(f"{name}:{lineno}: bad dimension {head[4:]!r}") from None
            if d < 1:
                raise UsageError(f"{name}:{lineno}: dimension must be positive")
            continue
        if len(cells) != d:
            raise UsageError(f"{name}:{lineno}: expected {d} values, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise UsageError(f"{name}:{lineno}: non-numeric value in {row!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise UsageError(f"{name}:{lineno}: non-finite value")
        rows.append(vals)
    if d is None:
        raise UsageError(f"{name}: missing 'dim=<d>' header")
    if not rows:
        raise UsageError(f"{name}: no points")
    return np.array(rows, dtype=float)


def format_points(S) -> str:
    S = np.asarray(S, dtype=float)
    return f"dim={S.shape[1]}\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in S)


def _inputs(args, n: Optional[int], d: Optional[int], trial: int = 0) -> np.ndarray:
    if args.input:
        S = read_points(args.input)
        if n is not None and len(S) != n:
            raise UsageError(f"--n {n} but the input file has {len(S)} points")
        if d is not None and S.shape[1] != d:
            raise UsageError(f"--d {d} but the input file has dimension {S.shape[1]}")
        return S
    if n is None or d is None:
        raise UsageError("--n and --d are required with --generate")
    return bounds.generate_points(args.generate, n, d, make_rng(args.seed, trial, 0))


def _write(out: Optional[str], name: str, text: str) -> Optional[str]:
    if not out:
        return None
    path = os.path.join(out, name)
    atomic_write_text(path, text)
    return path


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv(rows: List[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(jsonable(v)) if isinstance(v, (list, dict, np.ndarray)) else v)
                    for k, v in r.items()})
    return buf.getvalue()


def _check_counts(n: int, f: int) -> None:
    if f < 0 or n < 1:
        raise ConfigurationError(f"invalid sizes n={n}, f={f}")
    if n <= 3 * f:
        raise ConfigurationError(
            f"n={n} <= 3f={3 * f}: consensus with f Byzantine processes is impossible; need n >= 3f+1")


def _pmap(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _faulty_ids(spec: Optional[str], n: int) -> List[int]:
    if not spec:
        return []
    try:
        ids = sorted({int(x) for x in spec.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--faulty expects comma-separated process ids, got {spec!r}") from None
    if any(not 1 <= i <= n for i in ids):
        raise UsageError(f"--faulty ids must lie in 1..{n}")
    return ids


# --- delta-star -----------------------------------------------------------------------------

def cmd_delta_star(args) -> int:
    S = _inputs(args, args.n, args.d)
    n, d = S.shape
    _check_counts(n, args.f)
    p = parse_norm(args.p)
    res = delta_star(S, args.f, p, args.method)
    faulty = _faulty_ids(args.faulty, n)
    nonfaulty = [i for i in range(n) if i + 1 not in faulty]
    report = {"n": n, "f": args.f, "d": d, "p": norm_name(p), "inputs": S, "faulty": faulty,
              **res.to_dict(), "bounds": []}
    if len(nonfaulty) >= 2:
        for b in bounds.applicable_bounds(S, nonfaulty, args.f, p):
            b["ratio"] = res.delta_star / b["bound"] if b["bound"] > 0 else (0.0 if res.delta_star == 0 else math.inf)
            b["holds"] = res.delta_star < b["bound"] or (b["bound"] == 0 and res.delta_star <= 1e-9)
            report["bounds"].append(b)
    _write(args.out, "delta_star.json", _dump(report))
    print(_dump(report), end="")
    proven_fail = any(not b["holds"] and not b["conjectural"] for b in report["bounds"])
    return EXIT_VIOLATION if proven_fail else EXIT_OK


# --- simulate ---------------------------------------------------------------------------------

def _variant(args):
    mode = args.delta_mode
    fixed = None
    if mode != "input-dependent":
        if not mode.startswith("fixed:"):
            raise UsageError(f"--delta-mode must be 'input-dependent' or 'fixed:<v>', got {mode!r}")
        try:
            fixed = float(mode[6:])
        except ValueError:
            raise UsageError(f"bad fixed delta {mode[6:]!r}") from None
        if not fixed >= 0:
            raise UsageError("a fixed delta must be non-negative")
    if args.protocol == "algo":
        if fixed is not None:
            raise UsageError("the synchronous algo always uses the input-dependent delta*; "
                             "fixed delta is available with --protocol async")
        return ExactDelta(args.p)
    if args.protocol == "k-relaxed":
        if args.k is None:
            raise UsageError("--protocol k-relaxed needs --k")
        return ExactK(args.k)
    if args.protocol == "scalar":
        return ScalarPerCoord()
    if args.epsilon is None or not args.epsilon > 0:
        raise UsageError("--protocol async needs a positive --epsilon")
    return AsyncDelta(args.p, args.epsilon, fixed)


def _sim_trial(task):
    args, trial = task
    variant = _variant(args)
    cfg = ConsensusConfig(args.n, args.f, args.d, variant, args.seed, trial)
    X = _inputs(args, args.n, args.d, trial)
    adv = Adversary(kind=args.adversary, seed=args.seed, crash_tick=args.crash_tick, strategy=args.strategy)
    out = run_protocol(cfg, X, adv)
    return trial, out.to_dict(), out.transcript.to_jsonl() if out.transcript is not None else "", out.ok


def _expected_tight(args) -> bool:
    """Does an EMPTY outcome match the impossibility results for these parameters?"""
    if args.protocol == "k-relaxed":
        return args.k >= 2 and args.n <= (args.d + 1) * args.f
    if args.protocol == "async":
        return args.delta_mode != "input-dependent" and args.n <= (args.d + 2) * args.f
    return False


def cmd_simulate(args) -> int:
    _check_counts(args.n, args.f)
    _variant(args)  # validate before running anything
    ConsensusConfig(args.n, args.f, args.d, _variant(args)).validate()
    tasks = [(args, t) for t in range(args.trials)]
    results = sorted(_pmap(_sim_trial, tasks, args.jobs), key=lambda r: r[0])
    rows, outcomes = [], []
    for trial, od, jsonl, ok in results:
        _write(args.out, f"transcript_{trial}.jsonl", jsonl)
        outcomes.append({"trial": trial, **od})
        rows.append({"trial": trial, "status": od["status"], "agreement": od["agreement"], "valid": od["valid"],
                     "delta_achieved": od["delta_achieved"], "delta_used": od["delta_used"],
                     "validity_margin": od["validity_margin"], "rounds_used": od["rounds_used"],
                     "agreement_residual": od["agreement_residual"]})
    summary = {"protocol": args.protocol, "n": args.n, "f": args.f, "d": args.d, "p": norm_name(parse_norm(args.p)),
               "adversary": args.adversary, "seed": args.seed, "trials": args.trials,
               "ok": sum(1 for r in results if r[3]),
               "empty": sum(1 for r in rows if r["status"] == "empty"),
               "violations": [r for r in rows if r["status"] == "ok" and not (r["agreement"] and r["valid"])]}
    _write(args.out, "outcomes.json", _dump(outcomes))
    _write(args.out, "trials.csv", _csv(rows))
    _write(args.out, "summary.json", _dump(summary))
    print(_dump(summary), end="")
    if summary["ok"] == args.trials:
        return EXIT_OK
    if summary["violations"] or any(r["status"] not in ("ok", "empty") for r in rows):
        return EXIT_VIOLATION
    return EXIT_TIGHT if _expected_tight(args) else EXIT_VIOLATION


# --- counterexample ---------------------------------------------------------------------------

def cmd_counterexample(args) -> int:
    d = args.d if args.d is not None else 3
    name = args.name
    if name == "sync-k":
        gamma = 1.0 if args.gamma is None else args.gamma
        eps = 1.0 if args.epsilon is None else args.epsilon
        rep = bounds.check_sync_k_counterexample(d, gamma, eps, args.k or 2)
        ok = rep["verdict"] == bounds.EMPTY and rep["observations_hold"]
    elif name == "sync-delta":
        delta = 1.0 if args.delta is None else args.delta
        x = 2 * d * delta + 1.0 if args.x is None else args.x
        rep = bounds.check_sync_delta_counterexample(d, x, delta)
        ok = rep["observations_hold"] and (rep["verdict"] == bounds.CONTRADICTION) == rep["precondition"]
    elif name in ("async-k", "async-delta"):
        which = "k" if name == "async-k" else "delta"
        params = {k: v for k, v in (("gamma", args.gamma), ("epsilon", args.epsilon), ("delta", args.delta),
                                    ("x", args.x)) if v is not None}
        rep = bounds.check_async_counterexamples(d, params, which)[which]
        rep["fixture"] = name
        ok = all(rep["claims"].values()) if rep["precondition"] else True
        if rep["precondition"]:
            ok = ok and rep["verdict"] == bounds.AGREEMENT_VIOLATED
    else:
        raise UsageError(f"unknown counterexample {name!r}; choose from {bounds.FIXTURES}")
    rep["reproduced"] = ok
    _write(args.out, f"counterexample_{name}.json", _dump(rep))
    print(_dump(rep), end="")
    return EXIT_OK if ok else EXIT_VIOLATION


# --- tverberg ---------------------------------------------------------------------------------

def cmd_tverberg(args) -> int:
    if args.input:
        Y = read_points(args.input)
    else:
        if args.d is None:
            raise UsageError("--d is required with --generate")
        n = args.n if args.n is not None else (args.d + 1) * args.f + 1
        Y = bounds.generate_points(args.generate, n, args.d, make_rng(args.seed, 0, 0))
    if args.variant == "plain":
        variant = PLAIN
    elif args.variant == "k":
        if args.k is None:
            raise UsageError("--variant k needs --k")
        variant = KRelaxed(args.k)
    else:
        if args.delta is None:
            raise UsageError("--variant delta needs --delta")
        variant = DeltaRelaxed(args.delta, args.p)
    n, d = Y.shape
    v = bounds.tverberg_relaxed_search(Y, args.f, variant)
    rep = {"n": n, "d": d, "f": args.f, "variant": str(variant), "points": Y, **v.to_dict()}
    _write(args.out, "tverberg.json", _dump(rep))
    print(_dump(rep), end="")
    if v.found:
        return EXIT_OK
    if n >= (d + 1) * args.f + 1:
        return EXIT_VIOLATION  # contradicts the guarantee
    return EXIT_TIGHT


# --- check-bounds -----------------------------------------------------------------------------

def _bound_trial(task):
    theorem, n, f, d, p, seed, trial = task
    rng = make_rng(seed, trial, 0)
    N = bounds.generate_points(bounds.GENERATORS[trial % len(bounds.GENERATORS)], n - f, d, rng)
    strategy = INPUT_STRATEGIES[(trial // len(bounds.GENERATORS)) % len(INPUT_STRATEGIES)]
    F = bounds.adversary_inputs_for_bound_test(N, f, strategy, make_rng(seed, trial, 1), p=2)
    S = np.vstack([N, F])
    row = {"trial": trial, "n": n, "f": f, "d": d, "strategy": strategy}
    if theorem == 27:
        d2 = delta_star(S, f, 2).delta_star
        dp = delta_star(S, f, p).delta_star
        bound = bounds.holder_factor(d, p) * d2
        row.update({"p": norm_name(p), "delta_star": dp, "bound": bound, "holds": dp <= bound + 1e-7})
        return row
    ds = delta_star(S, f, 2).delta_star
    bound = bounds.theorem16_bound(N, n) if theorem == 16 else bounds.theorem20_bound(N, d)
    row.update({"delta_star": ds, "bound": bound, "holds": ds < bound})
    return row


def cmd_check_bounds(args) -> int:
    if (args.theorem is None) == (args.conjecture is None):
        raise UsageError("give exactly one of --theorem {16,20,27} or --conjecture {1,2,3,4}")
    if args.conjecture is not None:
        regimes = None
        if args.n is not None:
            if args.d is None:
                raise UsageError("--n needs --d (and --f)")
            regimes = [(args.n, args.f, args.d, parse_norm(args.p))]
        rep = bounds.conjecture_stress(args.conjecture, args.trials, regimes, args.seed, jobs=args.jobs)
        out = rep.to_dict()
        for i, art in enumerate(rep.artifacts):
            _write(args.out, f"potential_counterexample_{args.conjecture}_{i}.json", _dump(art))
        out["artifacts"] = len(rep.artifacts)
        _write(args.out, f"conjecture_{args.conjecture}.json", _dump(out))
        print(_dump(out), end="")
        return EXIT_VIOLATION if rep.violations else EXIT_OK
    th = args.theorem
    dims = [args.d] if args.d is not None else ([3, 4, 5] if th in (16, 27) else [3, 4])
    tasks = []
    for t in range(args.trials):
        d = dims[t % len(dims)]
        if th == 16:
            n, f = d + 1, 1
        elif th == 20:
            f = args.f if args.f and args.f >= 2 else 2
            n = (d + 1) * f
        elif th == 27:
            f = args.f or 1
            n = args.n if args.n is not None else (d + 1) * f
        else:
            raise UsageError("--theorem must be 16, 20 or 27")
        if d < 3:
            raise UsageError("the bounds are stated for d >= 3")
        _check_counts(n, f)
        tasks.append((th, n, f, d, parse_norm(args.p) if th == 27 else 2.0, args.seed, t))
    rows = _pmap(_bound_trial, tasks, args.jobs)
    viol = [r for r in rows if not r["holds"]]
    ratios = [r["delta_star"] / r["bound"] for r in rows if r["bound"] > 0]
    summary = {"theorem": th, "trials": args.trials, "seed": args.seed, "dims": dims, "violations": len(viol),
               "worst_ratio": max(ratios) if ratios else 0.0}
    _write(args.out, f"theorem_{th}.csv", _csv(rows))
    _write(args.out, f"theorem_{th}.json", _dump(summary))
    print(_dump(summary), end="")
    return EXIT_VIOLATION if viol else EXIT_OK


# --- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--f", type=int, default=1)
    common.add_argument("--d", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--p", default="2", help="norm: 1, 2, inf or any real >= 1")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta-mode", default="input-dependent", help="input-dependent | fixed:<v>")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--adversary", default="HONEST", type=str.upper, choices=ADVERSARY_KINDS)
    common.add_argument("--generate", default="uniform", choices=bounds.GENERATORS)
    common.add_argument("--input", help="CSV point file with a 'dim=<d>' header")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1)

    parser = _Parser(prog="relaxed-bvc", description="Relaxed Byzantine vector consensus toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("delta-star", parents=[common], help="delta*(S), its minimizer and applicable bounds")
    s.add_argument("--method", default="auto", choices=METHODS)
    s.add_argument("--faulty", help="comma-separated 1-based ids excluded from the edge set of the bounds")
    s.set_defaults(fn=cmd_delta_star)

    s = sub.add_parser("simulate", parents=[common], help="run a consensus protocol on the simulated network")
    s.add_argument("--protocol", default="algo", choices=("algo", "k-relaxed", "scalar", "async"))
    s.add_argument("--crash-tick", type=int, default=0)
    s.add_argument("--strategy", default="optimized", choices=INPUT_STRATEGIES)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("counterexample", parents=[common], help="replay an impossibility construction")
    s.add_argument("name", choices=bounds.FIXTURES)
    s.add_argument("--gamma", type=float)
    s.add_argument("--x", type=float)
    s.add_argument("--delta", type=float)
    s.set_defaults(fn=cmd_counterexample)

    s = sub.add_parser("tverberg", parents=[common], help="brute-force Tverberg partition search")
    s.add_argument("--variant", default="plain", choices=("plain", "k", "delta"))
    s.add_argument("--delta", type=float)
    s.set_defaults(fn=cmd_tverberg)

    s = sub.add_parser("check-bounds", parents=[common], help="randomized checks of the delta* upper bounds")
    s.add_argument("--theorem", type=int, choices=(16, 20, 27))
    s.add_argument("--conjecture", type=int, choices=(1, 2, 3, 4))
    s.set_defaults(fn=cmd_check_bounds)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.trials < 1 or args.jobs < 1:
            raise UsageError("--trials and --jobs must be positive")
        parse_norm(args.p)
        return args.fn(args)
    except (UsageError, ConfigurationError) as e:
        print(f"relaxed-bvc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

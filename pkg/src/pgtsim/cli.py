"""Command-line front end: ``pgtsim {design,decode,oracle,bounds,sweep,validate}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from collections import Counter

import numpy as np

from . import __version__
from .bounds import bound_report, counting_rate, necessary_rate, sufficient_rate
from .core import DefectPattern, RegimeParams, round_half_up, trial_rng
from .decoders import DECODERS, apply_tests, decode
from .designs import dumps_design, generate_bernoulli, generate_identity, generate_nctpi, read_design
from .experiments import SweepConfig, alpha_range, sweep_alpha
from .oracle import disguise_report, guess_success_bound
from .validation import PROFILES, corrupted_comp, format_report, run_validation

SEED_ENV = "PGTSIM_SEED"


class UsageError(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _metadata_lines(command: str, config: dict) -> list[str]:
    return ["metadata:",
            f"  tool: pgtsim {__version__}",
            f"  command: {command}",
            f"  config: {json.dumps(config, sort_keys=True)}"]


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _resolve_T(args) -> int:
    if args.T is not None and args.alpha is not None:
        raise UsageError("--T and --alpha are mutually exclusive")
    if args.alpha is not None:
        return round_half_up(args.alpha * args.n)
    if args.T is None:
        raise UsageError("one of --T or --alpha is required")
    return args.T


def cmd_design(args) -> int:
    n = args.n
    if n is None or n < 1:
        raise UsageError("--n must be a positive integer")
    config = {"kind": args.kind, "n": n, "seed": args.seed}
    if args.kind == "identity":
        design = generate_identity(n)
    else:
        T = _resolve_T(args)
        if T < 1:
            raise UsageError(f"T must be >= 1, got {T}")
        rng = trial_rng(args.seed, 0)
        config["T"] = T
        if args.kind == "nctpi":
            if args.L is not None:
                L = args.L
            else:
                if args.lam is None:
                    raise UsageError("nctpi needs --L or --lambda (L = nu*T/k)")
                regime = RegimeParams(n, args.lam, nu=args.nu)
                L = regime.draws_per_item(T)
                config.update({"lambda": args.lam, "nu": args.nu, "k": regime.k})
            if L < 1:
                raise UsageError("L must be >= 1")
            config["L"] = L
            design = generate_nctpi(n, T, L, rng)
        else:
            if args.q is not None:
                q = args.q
            else:
                if args.lam is None:
                    raise UsageError("bernoulli needs --q or --lambda (q = nu/k)")
                regime = RegimeParams(n, args.lam, nu=args.nu)
                q = min(0.5, args.nu / regime.k)
            if not 0 < q < 1:
                raise UsageError("q must lie in (0, 1)")
            config["q"] = q
            design = generate_bernoulli(n, T, q, rng)
    text = dumps_design(design, _metadata_lines("design", config))
    _emit(text, args.out)
    hist = Counter(design.item_degrees.tolist())
    summary = [f"design kind={design.kind} n={design.n_items} T={design.n_tests} "
               f"entries={design.item_tests.size} empty_tests={int(np.sum(design.test_sizes == 0))}",
               "distinct tests per item: count"]
    summary += [f"  {deg}: {hist[deg]}" for deg in sorted(hist)]
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print("\n".join(summary), file=stream)
    return 0


def _parse_defectives(text: str, n: int) -> DefectPattern:
    items = [int(t) for t in text.replace(",", " ").split()] if text.strip() else []
    return DefectPattern(n, tuple(items))


def _load_design(path: str):
    with open(path) as fh:
        return read_design(fh)


def cmd_decode(args) -> int:
    design = _load_design(args.design)
    pattern = _parse_defectives(args.defectives, design.n_items)
    y = apply_tests(design, pattern)
    decoders = DECODERS[:2] if args.decoder == "all" else (args.decoder,)
    result = {"n": design.n_items, "T": design.n_tests,
              "defectives": list(pattern.defective_set),
              "outcomes": [int(v) for v in y], "decoders": {}}
    for name in decoders:
        res = decode(name, design, y)
        fp, fn = res.errors(pattern)
        result["decoders"][name] = {"declared": list(res.declared_defective),
                                    "exact": res.exact(pattern),
                                    "false_pos": fp, "false_neg": fn}
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_oracle(args) -> int:
    design = _load_design(args.design)
    pattern = _parse_defectives(args.defectives, design.n_items)
    rep = disguise_report(design, pattern)
    out = {"disguised_items": list(rep.disguised_items), "g": rep.g, "d": rep.d, "w_k": rep.w_k}
    if args.p is not None:
        exact, relaxed = guess_success_bound(args.p, rep.d)
        out["success_bound"] = exact
        out["success_bound_relaxed"] = relaxed
    print(json.dumps(out, sort_keys=True))
    return 0


def _lambda_values(args) -> list[float]:
    if args.lambda_range is not None:
        start, stop, step = args.lambda_range
        if step <= 0 or stop < start:
            raise UsageError("--lambda-range needs start <= stop and step > 0")
        count = round_half_up((stop - start) / step) + 1
        return [round(start + i * step, 12) for i in range(count)]
    if not args.lam:
        raise UsageError("give --lambda values or --lambda-range")
    return list(args.lam)


BOUND_COLUMNS = ("lambda", "sufficient_rate", "necessary_rate", "counting_rate", "gap", "ratio")
REPORT_COLUMNS = ("crossover_p", "lp_argmin", "lp_value", "lstar_lower", "w_lower",
                  "w_lower_binding", "z", "t_max", "n_vp_upper", "e_d_conjecture",
                  "e_d_simplified")


def cmd_bounds(args) -> int:
    lams = _lambda_values(args)
    n = args.n
    config = {"n": n, "lambdas": lams, "eps_upper": args.eps_upper,
              "eps_lower": args.eps_lower, "gamma": args.gamma, "report": args.report}
    lines = [f"# {m}" for m in _metadata_lines("bounds", config)]
    cols = BOUND_COLUMNS + (REPORT_COLUMNS if args.report else ())
    lines.append(",".join(cols))
    for lam in lams:
        up = sufficient_rate(lam, args.eps_upper)
        low = necessary_rate(lam, args.eps_lower)
        k = min(max(round_half_up(lam * n / math.log(n)), 1), n - 1)
        row = [lam, up, low, counting_rate(n, k), up - low, up / low]
        if args.report:
            rep = bound_report(n, lam, args.eps_upper, args.eps_lower, args.gamma)
            row += [getattr(rep, c) for c in REPORT_COLUMNS]
        lines.append(",".join(repr(v) for v in row))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _sweep_config(args) -> SweepConfig:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        raw = raw.get("sweep", raw)
        if args.seed_given:
            raw["master_seed"] = args.seed
        return SweepConfig.from_dict(raw)
    if args.n is None or args.lam is None:
        raise UsageError("sweep needs --config or both --n and --lambda")
    regime = RegimeParams(args.n, args.lam, eps_upper=args.eps_upper, nu=args.nu)
    if args.alpha:
        grid = args.alpha
    else:
        grid = alpha_range(args.alpha_start, args.alpha_stop, args.alpha_num)
    return SweepConfig(regime, tuple(grid), trials=args.trials, decoder=args.decoder,
                       design=args.design, prior=args.prior, master_seed=args.seed)


def cmd_sweep(args) -> int:
    config = _sweep_config(args)
    table = sweep_alpha(config, workers=args.workers)
    text = table.to_json() if args.format == "json" else table.to_csv()
    _emit(text, args.out)
    return 0


def cmd_validate(args) -> int:
    comp = corrupted_comp if args.corrupt_decoder else None
    kwargs = {"comp": comp} if comp else {}
    results = run_validation(args.profile, args.seed, workers=args.workers, **kwargs)
    header = "\n".join(f"# {m}" for m in _metadata_lines(
        "validate", {"profile": args.profile, "seed": args.seed})) + "\n"
    text = header + format_report(results, args.profile, args.seed)
    _emit(text, args.out)
    if args.out not in (None, "-"):
        sys.stdout.write(format_report(results, args.profile, args.seed))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgtsim", description="Nonadaptive group testing with k = lambda n / log n.")
    parser.add_argument("--version", action="version", version=f"pgtsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV} or 0)")

    p = sub.add_parser("design", help="generate a test design file")
    p.add_argument("--kind", choices=("nctpi", "bernoulli", "identity"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--nu", type=float, default=math.log(2))
    p.add_argument("--q", type=float)
    p.add_argument("--out")
    seeded(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("decode", help="apply tests to a pattern and decode")
    p.add_argument("--design", required=True)
    p.add_argument("--defectives", required=True, help="comma separated item indices")
    p.add_argument("--decoder", choices=DECODERS + ("all",), default="all")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("oracle", help="disguise report for a design and pattern")
    p.add_argument("--design", required=True)
    p.add_argument("--defectives", required=True)
    p.add_argument("--p", type=float, help="also report the guessing success bound")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bounds", help="CSV of bound rates per lambda")
    p.add_argument("--lambda", dest="lam", type=float, nargs="*")
    p.add_argument("--lambda-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--n", type=int, default=10**6, help="n for the counting rate")
    p.add_argument("--eps-upper", type=float, default=0.0)
    p.add_argument("--eps-lower", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--report", action="store_true", help="append every bound quantity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="Monte Carlo error rate over an alpha grid")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps-upper", type=float, default=0.1)
    p.add_argument("--nu", type=float, default=math.log(2))
    p.add_argument("--alpha", type=float, nargs="*")
    p.add_argument("--alpha-start", type=float, default=0.05)
    p.add_argument("--alpha-stop", type=float, default=1.0)
    p.add_argument("--alpha-num", type=int, default=21)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--decoder", choices=DECODERS, default="comp")
    p.add_argument("--design", choices=("nctpi", "bernoulli", "identity"), default="nctpi")
    p.add_argument("--prior", choices=("iid", "combinatorial"), default="combinatorial")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    seeded(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the statistical validation suite")
    p.add_argument("--profile", choices=tuple(PROFILES), default="quick")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--corrupt-decoder", action="store_true", help=argparse.SUPPRESS)
    seeded(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "seed"):
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = _default_seed()
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, OSError) as exc:
        print(f"pgtsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

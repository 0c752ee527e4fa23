"""Command-line interface: rounding, conversion, exact distributions,
vendor profile inspection, and experiments.

Batch only, deterministic by construction: identical argv (including
--seed) produces byte-identical output, regardless of --threads.  Numeric
output defaults to exact hex-float; decimal is opt-in via --digits with an
explicit significant-digit count.  Data output carries no timestamps; pass
--verbose for a run header on stderr.

Exit status: 0 success, 1 domain error (bad value, unknown vendor, budget
exceeded, ...), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import harness, plotting, profiles
from .entropy import EntropyError, derive_stream
from .formats import (
    FloatValue,
    SpecialValue,
    encode_bits,
    decode_bits,
    format_decimal,
    format_hex,
    get_format,
    neighbors,
    parse_working_real,
    round_up_fraction,
    ulp,
)
from .kernels import (
    DETERMINISTIC_MODES,
    RNE,
    SrConfig,
    exact_op_then_round,
    round_deterministic,
    stochastic_round,
    two_stage_round,
)
from .oracle import distribution, expected_sum_enumeration

# Where each library operation is reachable from (kept in sync by a test).
OPERATION_SURFACE = {
    "parse_working_real": "round",
    "neighbors": "dist",
    "round_up_fraction": "dist",
    "ulp": "dist",
    "encode_bits": "round --format json",
    "decode_bits": "round --from-bits",
    "round_deterministic": "round --mode",
    "sr_exact": "round --variant exact",
    "sr_limited": "round --variant limited",
    "p3109_round": "round --variant a|b|c",
    "exact_op_then_round": "round --add/--sub/--mul",
    "two_stage_round": "round --via-binary32",
    "next_bits": "round --seed (stream draws)",
    "data_entropy": "convert --vendor huawei",
    "derive_stream": "experiment --seed",
    "profile_lookup": "profiles show / convert --vendor",
    "convert": "convert --vendor",
    "convert_packed_pair": "convert --vendor --word X X2",
    "block_quantize": "convert --block",
    "distribution": "dist --x",
    "expected_sum_enumeration": "dist --sum",
    "run_stagnation": "experiment --kind stagnation",
    "run_sum_growth": "experiment --kind sum_growth",
    "run_r_sweep": "experiment --kind r_sweep",
    "run_kernel_experiments": "experiment --kind dot|horner|pairwise",
    "run_gd": "experiment --kind gd",
    "run_pi_demo": "experiment --kind pi_demo",
}

_ERRORS = (ValueError, ArithmeticError, KeyError, EntropyError, OSError)


def _int_flag(s: str) -> int:
    return int(s, 0)


def _parse_value(text: str) -> FloatValue:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return SpecialValue.POS_INF
    if t in ("-inf", "-infinity"):
        return SpecialValue.NEG_INF
    if t in ("nan", "+nan", "-nan"):
        return SpecialValue.NAN
    return parse_working_real(text).value


def _rat(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def _emit_value(args, fmt, value: FloatValue) -> str:
    if isinstance(value, SpecialValue):
        return str(value)
    if getattr(args, "digits", None):
        return format_decimal(value, args.digits)
    pad = None
    if fmt is not None:
        pad = (fmt.precision_p - 1 + 3) // 4
    return format_hex(value, pad)


def _seed_of(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SRKIT_SEED")
    return int(env, 0) if env else 0


def _cfg_of(args, parser) -> SrConfig:
    if args.variant == "exact":
        if args.intermediate:
            parser.error("--intermediate applies to the limited variant only")
        return SrConfig("exact")
    if args.r is None:
        parser.error(f"--variant {args.variant} requires --r")
    inter = args.intermediate if args.variant == "limited" else None
    return SrConfig(args.variant, r=args.r, intermediate=inter)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_round(args, parser) -> int:
    fmt = get_format(args.fmt)
    if args.from_bits is not None:
        value = decode_bits(fmt, args.from_bits)
        print(_emit_value(args, fmt, value))
        return 0
    if args.x is None:
        parser.error("round needs a value (or --from-bits)")
    x = _parse_value(args.x)
    entropy = derive_stream(_seed_of(args), 0)
    if args.add or args.sub or args.mul:
        op, other = next((o, v) for o, v in
                         (("add", args.add), ("sub", args.sub), ("mul", args.mul)) if v)
        rounding = _cfg_of(args, parser) if args.variant else args.mode
        result = exact_op_then_round(op, x, _parse_value(other), fmt, rounding, entropy)
    elif args.via_binary32:
        if not args.variant:
            parser.error("--via-binary32 requires --variant")
        result = two_stage_round(x, fmt, _cfg_of(args, parser), entropy)
    elif args.variant:
        result = stochastic_round(fmt, x, _cfg_of(args, parser), entropy)
    else:
        result = round_deterministic(fmt, x, args.mode)
    if args.format == "json":
        payload = {"fmt": fmt.name, "value": _emit_value(args, fmt, result)}
        if fmt.total_bits is not None:
            try:
                payload["bits"] = f"0x{encode_bits(fmt, result):0{(fmt.total_bits + 3) // 4}x}"
            except (ValueError, TypeError):
                pass
        print(json.dumps(payload, sort_keys=True))
    else:
        print(_emit_value(args, fmt, result))
    return 0


def _cmd_convert(args, parser) -> int:
    if args.block:
        return _cmd_convert_block(args, parser)
    if not args.vendor or not args.src or not args.dst:
        parser.error("convert requires --vendor, --src and --dst (or --block)")
    registry = profiles.load_registry(args.profiles) if args.profiles else None
    rule = profiles.profile_lookup(args.vendor, args.src, args.dst, registry)
    if rule is None:
        print(f"error: {args.vendor} specifies no {args.src} -> {args.dst} conversion",
              file=sys.stderr)
        return 1
    dst = get_format(args.dst)
    if len(args.x) > 2:
        parser.error("vendor conversion takes one value, or two for a packed pair")
    values = [_parse_value(v) for v in args.x]
    if len(values) == 2:
        if args.word is None:
            parser.error("packed-pair conversion requires --word")
        y1, y2 = profiles.convert_packed_pair(rule, values[0], values[1], args.word)
        print(_emit_value(args, dst, y1))
        print(_emit_value(args, dst, y2))
        return 0
    entropy = args.word if args.word is not None else derive_stream(_seed_of(args), 0)
    result = profiles.convert(rule, values[0], entropy)
    print(_emit_value(args, dst, result))
    return 0


def _cmd_convert_block(args, parser) -> int:
    spec = {"mxfp4": profiles.MXFP4, "nvfp4": profiles.NVFP4}[args.block]
    rounding = _cfg_of(args, parser) if args.variant else RNE
    values = [_parse_value(v) for v in args.x]
    result = profiles.block_quantize(values, spec, rounding, seed=_seed_of(args))
    recon = profiles.block_dequantize(result)
    payload = {
        "block": args.block,
        "group_size": result.group_size,
        "padded": result.padded,
        "scales": [format_hex(s) for s in result.scales],
        "elements": [format_hex(e) for e in result.elements],
        "reconstruction": [format_hex(v) for v in recon],
    }
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_dist(args, parser) -> int:
    fmt = get_format(args.fmt)
    cfg = _cfg_of(args, parser)
    if args.sum:
        addends = [parse_working_real(v).value for v in args.sum]
        rep = expected_sum_enumeration(addends, fmt, cfg)
        payload = {
            "n": rep.n,
            "expected": _rat(rep.expected),
            "variance": _rat(rep.variance),
            "outcomes": {format_hex(v): _rat(p) for v, p in sorted(rep.outcomes.items())},
        }
    else:
        if args.x is None:
            parser.error("dist requires --x or --sum")
        x = parse_working_real(args.x).value
        rep = distribution(fmt, x, cfg)
        payload = {
            "fmt": fmt.name,
            "x": format_hex(x),
            "variant": rep.variant,
            "r": rep.r_used,
            "lo": format_hex(rep.lo),
            "hi": format_hex(rep.hi),
            "exact": neighbors(fmt, x).exact,
            "q": _rat(round_up_fraction(fmt, x)),
            "ulp": format_hex(ulp(fmt, x)),
            "p_up": _rat(rep.p_up),
            "mean": _rat(rep.mean),
            "bias": _rat(rep.bias),
        }
    if args.format == "text":
        for k, v in payload.items():
            print(f"{k}: {v}")
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_profiles(args, parser) -> int:
    registry = profiles.load_registry(args.profiles) if args.profiles else profiles.default_registry()
    if args.action == "list":
        if args.format == "json":
            print(json.dumps(sorted(registry), sort_keys=True))
        else:
            for name in sorted(registry):
                print(name)
        return 0
    key = (args.vendor or "").strip().lower()
    if key not in registry:
        print(f"error: unknown vendor {args.vendor!r}", file=sys.stderr)
        return 1
    prof = registry[key]
    if args.format == "json":
        print(json.dumps({
            "vendor": prof.vendor,
            "notes": prof.notes,
            "rules": [{
                "src": rl.src_fmt, "dst": rl.dst_fmt,
                "r_min": rl.r_min, "r_max": rl.r_max, "up_to": rl.up_to,
                "two_stage": rl.two_stage, "subnormal_rule": rl.subnormal_rule,
                "flush_threshold": format_hex(rl.flush_threshold) if rl.flush_threshold else None,
                "random_word_width": rl.random_word_width,
                "entropy_source": rl.entropy_source,
            } for rl in prof.rules],
        }, sort_keys=True, indent=2))
    else:
        print(prof.vendor)
        if prof.notes:
            print(f"  {prof.notes}")
        for rl in prof.rules:
            r = str(rl.r_min) if rl.r_min == rl.r_max else f"{rl.r_min}-{rl.r_max}"
            if rl.up_to:
                r = f"up to {r}"
            extras = []
            if rl.two_stage:
                extras.append("via binary32 RNE")
            if rl.subnormal_rule == "extend":
                extras.append("extends over subnormals")
            if rl.flush_threshold is not None:
                extras.append(f"flush below {format_hex(rl.flush_threshold)}")
            if rl.entropy_source != "external":
                extras.append(f"entropy: {rl.entropy_source}")
            tail = f" ({'; '.join(extras)})" if extras else ""
            print(f"  {rl.src_fmt} -> {rl.dst_fmt}: r = {r}{tail}")
    return 0


def _grid(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok)


def _cmd_experiment(args, parser) -> int:
    if args.kind == "pi_demo":
        report = harness.run_pi_demo()
        if args.format == "text":
            for k, v in report.as_dict().items():
                print(f"{k}: {v}")
        else:
            print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
        return 0
    if not args.out and args.format != "csv":
        parser.error("experiments write rows to a file: pass --out PATH "
                     "(or --format csv for rows on stdout)")
    cfg = _cfg_of(args, parser) if args.variant else SrConfig("exact")
    spec = harness.ExperimentSpec(
        kind=args.kind,
        fmt=args.fmt,
        n=args.n,
        trials=args.trials,
        seed=_seed_of(args),
        cfg=cfg,
        acc0=args.acc0,
        delta=args.delta,
        n_grid=_grid(args.n_grid) if args.n_grid else None,
        r_grid=_grid(args.r_grid) if args.r_grid else None,
        step=args.step,
        dimension=args.dimension,
        iterations=args.iterations,
        degree=args.degree,
        eval_point=args.eval_point,
        threads=args.threads,
    )
    if args.verbose:
        import datetime
        print(f"[{datetime.datetime.now().isoformat()}] running {args.kind}", file=sys.stderr)
    result = harness.run_experiment(spec)
    if not args.out:
        sys.stdout.write(result.to_csv())
        return 0
    result.write_csv(args.out)
    if args.plot:
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        for path in plotting.render_figures(result, stem):
            print(f"wrote {path}", file=sys.stderr)
    if args.format == "csv":
        sys.stdout.write(result.to_csv())
    else:
        print(result.summary_json())
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srkit",
        description="Bit-exact stochastic rounding emulation: rounding kernels, "
                    "vendor conversion profiles, exact distribution oracle, and "
                    "reproducible experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default="binary16"):
        p.add_argument("--fmt", default=fmt_default, help="target number format")
        p.add_argument("--variant", choices=("exact", "limited", "a", "b", "c"),
                       help="stochastic rounding variant")
        p.add_argument("--r", type=int, help="random bit count for fixed-width variants")
        p.add_argument("--intermediate", choices=("rz", "rne"),
                       help="intermediate rounding of the limited variant")
        p.add_argument("--seed", type=_int_flag,
                       help="stream seed (default: SRKIT_SEED or 0); decimal or hex")
        p.add_argument("--digits", type=int,
                       help="print decimals with this many significant digits "
                            "instead of exact hex-floats")

    p = sub.add_parser("round", help="round one value (deterministic or stochastic)")
    common(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--mode", choices=DETERMINISTIC_MODES, default=RNE,
                   help="deterministic mode when no --variant is given")
    p.add_argument("--via-binary32", action="store_true",
                   help="round to binary32 with nearest-even first")
    p.add_argument("--add", metavar="Y", help="round the exact sum x + Y")
    p.add_argument("--sub", metavar="Y", help="round the exact difference x - Y")
    p.add_argument("--mul", metavar="Y", help="round the exact product x * Y")
    p.add_argument("--from-bits", type=_int_flag, metavar="BITS",
                   help="decode a bit pattern of the format instead of rounding")
    p.add_argument("x", nargs="?", help="value: hex-float, rational a/b, or decimal")
    p.set_defaults(func=_cmd_round)

    p = sub.add_parser("convert", help="vendor-profile conversion or block quantization")
    common(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--vendor", help="vendor profile name (see `srkit profiles list`)")
    p.add_argument("--src", help="source format of the conversion rule")
    p.add_argument("--dst", help="destination format of the conversion rule")
    p.add_argument("--word", type=_int_flag,
                   help="raw random word (instruction-style entropy operand)")
    p.add_argument("--block", choices=("mxfp4", "nvfp4"),
                   help="quantize the values into this shared-scale block format")
    p.add_argument("--profiles", metavar="FILE", help="override the profile registry")
    p.add_argument("x", nargs="+", help="value(s) to convert")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("dist", help="exact distribution of one rounding step or a short sum")
    common(p)
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.add_argument("--x", help="value whose rounding distribution to enumerate")
    p.add_argument("--sum", nargs="+", metavar="X",
                   help="addends for the exact expected-sum enumeration")
    p.set_defaults(func=_cmd_dist, variant_required=True)

    p = sub.add_parser("profiles", help="inspect the vendor conversion registry")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("vendor", nargs="?")
    p.add_argument("--profiles", metavar="FILE", help="override the profile registry")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_profiles)

    p = sub.add_parser("experiment", help="run a reproducible experiment; CSV to --out, summary JSON to stdout")
    common(p)
    p.add_argument("--format", choices=("text", "json", "csv"), default="json",
                   help="csv streams the rows to stdout when no --out is given")
    p.add_argument("--kind", choices=harness.EXPERIMENT_KINDS, required=True)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--plot", action="store_true",
                   help="render a summary figure next to the CSV")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; never changes the results")
    p.add_argument("--acc0", default="1.0")
    p.add_argument("--delta", default="0x1p-13")
    p.add_argument("--n-grid", help="comma-separated sizes (sum_growth, dot)")
    p.add_argument("--r-grid", help="comma-separated random-bit counts (r_sweep)")
    p.add_argument("--step", default="0x1p-4")
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--degree", type=int, default=64)
    p.add_argument("--eval-point", default="0.99")
    p.add_argument("--verbose", action="store_true",
                   help="run header with a timestamp on stderr")
    p.set_defaults(func=_cmd_experiment, format="json")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "variant_required", False) and not args.variant:
        parser.error(f"{args.command} requires --variant")
    try:
        return args.func(args, parser)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

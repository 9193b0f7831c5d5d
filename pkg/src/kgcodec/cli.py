"""Command-line entry point: ``kgcodec <command> [flags]``.

Every command is deterministic given its flags. The exit status is 0 when all
checks the command performs pass, 1 when a check fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import finite_state as fs
from . import hybrid_oracle as ho
from .kg_codec import (CodecInvariantError, InvalidCodewordError, PositivityError, decode,
                       encode, redundancy_bound)
from .martingales import ParameterError, load_martingale, validate_martingale
from .numeric_core import (BitSource, ConstantSource, SeededSource, WordSource, checksum64,
                           decimal_approx, read_bit_file, write_bit_file)

log = logging.getLogger("kgcodec")

DEFAULT_MARTINGALE = {"kind": "savings", "inner": {"kind": "mixture", "members": [
    {"kind": "kt"}, {"kind": "bias", "beta": "2/3"}]}}

# Keys a --config file may set; they mirror the long flag names.
CONFIG_KEYS = {"input", "output", "martingale", "n", "seed", "schedule", "describer",
               "transducer", "source", "steps", "checkpoints", "tolerance", "trace", "gap"}


class UsageError(Exception):
    pass


def default_tolerance() -> float:
    raw = os.environ.get("KGC_DEFAULT_TOLERANCE")
    if raw is None:
        return 0.01
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"KGC_DEFAULT_TOLERANCE={raw!r} is not a number") from None


def parse_source(text: str | None, seed: int | None = None) -> BitSource:
    """seeded[:N], zeros, ones, champernowne, oscillating or file:PATH."""
    if text is None:
        text = "seeded"
    if text == "seeded" or text.startswith("seeded:"):
        _, _, num = text.partition(":")
        if not num and seed is None:
            raise UsageError("source 'seeded' needs --seed or the form seeded:N")
        return SeededSource(int(num) if num else seed)
    if text == "zeros":
        return ConstantSource("0")
    if text == "ones":
        return ConstantSource("1")
    if text == "champernowne":
        return fs.ChampernowneSource()
    if text == "oscillating":
        return fs.ExampleNoLimitSource()
    if text.startswith("file:"):
        path = text[5:]
        return WordSource(read_bit_file(path), name=path)
    raise UsageError(f"unknown source {text!r}")


def parse_ints(text: str | list | None) -> list[int]:
    if text is None:
        return []
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _martingale(args):
    spec = args.martingale if args.martingale is not None else json.dumps(DEFAULT_MARTINGALE)
    if isinstance(spec, dict):
        spec = json.dumps(spec)
    return load_martingale(spec)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required for {args.command}")


# --------------------------------------------------------------------------
# commands


def cmd_encode(args) -> int:
    _require(args, "output")
    d = _martingale(args)
    if args.input:
        bits = read_bit_file(args.input)
        n = args.n if args.n is not None else len(bits)
        source: BitSource = WordSource(bits)
    else:
        _require(args, "n")
        n = args.n
        source = parse_source(args.source, args.seed)
    payload = source.prefix(n)
    R, trace = encode(d, payload, n)
    write_bit_file(args.output, R)
    sidecar = {"n": n, "k": len(R), "payload_checksum": checksum64(payload),
               "codeword_checksum": checksum64(R), "martingale": d.to_spec()}
    Path(str(args.output) + ".sum").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    if args.trace:
        trace.write_csv(args.trace)
    last = trace.stages[-1]
    print(f"stages={len(trace)} n_i={last.n_i} k_i={last.k_i} "
          f"capital={decimal_approx(last.capital, 8)} max_capital="
          f"{decimal_approx(max(s.capital for s in trace), 8)}")
    return 0


def cmd_decode(args) -> int:
    _require(args, "input", "output")
    d = _martingale(args)
    R = read_bit_file(args.input)
    side_path = Path(str(args.input) + ".sum")
    sidecar = json.loads(side_path.read_text()) if side_path.exists() else None
    n = args.n if args.n is not None else (sidecar or {}).get("n")
    if n is None:
        raise UsageError("--n is required when no checksum sidecar is present")
    result = decode(d, R, n)
    write_bit_file(args.output, result.bits)
    if args.trace:
        result.trace.write_csv(args.trace)
    bound = redundancy_bound(result.trace.stages[-1].n_i)
    ok = result.used <= bound
    print(f"n={n} u_n={result.used} bound={bound:.3f} {'ok' if ok else 'EXCEEDED'}")
    if sidecar is not None and sidecar.get("n") == n:
        if checksum64(result.bits) != sidecar["payload_checksum"]:
            print("checksum mismatch: decoded payload differs from the encoded one", file=sys.stderr)
            return 1
    return 0 if ok else 1


def cmd_hybrid(args) -> int:
    _require(args, "schedule")
    describer = ho.get_describer(args.describer or "shortest")
    source = parse_source(args.source, args.seed)
    schedule = ho.checkpoint_schedule(parse_ints(args.schedule))
    Y, layout = ho.build_oracle(source, schedule, describer)
    x = source.prefix(schedule[-1])
    if args.output:
        write_bit_file(args.output, Y)
        Path(str(args.output) + ".layout.json").write_text(layout.to_json())
    ok = True
    rows = []
    for i, m in enumerate(schedule, 1):
        bits, used = ho.decode_oracle(Y, m)
        acct = layout.prefix_cost(i)
        good = bits == x[:m] and used <= acct <= layout.s * m + 5 * m ** 0.5
        ok &= good
        rows.append((m, used))
        print(f"m={m} used={used} cost={acct} ratio={used / m:.4f} "
              f"s_i={layout.blocks[i - 1].ratio:.4f} {'ok' if good else 'FAIL'}")
    print(f"s_last={layout.blocks[-1].ratio:.4f} s_max={layout.s:.4f} |Y|={len(Y)}")
    if args.trace:
        ho.write_decode_report(args.trace, rows)
    return 0 if ok else 1


def cmd_pipeline(args) -> int:
    _require(args, "schedule")
    d = _martingale(args)
    describer = ho.get_describer(args.describer or "shortest")
    source = parse_source(args.source, args.seed)
    schedule = ho.checkpoint_schedule(parse_ints(args.schedule))
    result = ho.kg_pipeline(source, schedule, describer, d)
    if args.output:
        write_bit_file(args.output, result.R)
    x = source.prefix(schedule[-1])
    ok = True
    rows = []
    for m in schedule:
        bits, y_used, r_used = result.query(m)
        good = bits == x[:m]
        ok &= good
        rows.append((m, r_used))
        print(f"m={m} y_used={y_used} u={r_used} ratio={r_used / m:.4f} {'ok' if good else 'FAIL'}")
    final = rows[-1][1] / rows[-1][0]
    print(f"s={result.layout.s:.4f} final_ratio={final:.4f}")
    if args.tolerance is not None and final > args.tolerance:
        print(f"final ratio exceeds {args.tolerance}", file=sys.stderr)
        ok = False
    if args.trace:
        ho.write_decode_report(args.trace, rows)
    return 0 if ok else 1


def cmd_fs(args) -> int:
    source = parse_source(args.source or "champernowne", args.seed)
    ok = True
    if args.checkpoints:
        report = fs.convergence_report(source, parse_ints(args.checkpoints),
                                       gap=args.gap if args.gap is not None else 0.5)
        for n, f in report.points:
            print(f"n={n} P(1)={float(f):.6f}")
        print(f"tail=[{float(report.tail_min):.6f}, {float(report.tail_max):.6f}] "
              f"oscillating={report.oscillating}")
        if args.trace:
            report.write_csv(args.trace)
    if args.transducer:
        tol = args.tolerance if args.tolerance is not None else default_tolerance()
        T = fs.load_transducer(args.transducer)
        m = args.steps or 10**5
        est = fs.estimate_pi(T, source, m)
        pi = fs.stationary_pi_analytic(T)
        p = fs.predicted_symbol_freq(T, pi)
        stats = fs.run_to_output_length(T, source, m)
        emp = fs.empirical_symbol_freq(T, stats.output)
        pi_gap = max(abs(est.pi[q] - float(pi[q])) for q in T.states)
        p_gap = max(abs(emp[a] - float(p[a])) for a in T.outputs)
        checks = [("residual", est.residual, tol), ("pi_gap", pi_gap, tol), ("p_gap", p_gap, 2 * tol)]
        for name, value, limit in checks:
            good = value <= limit
            ok &= good
            print(f"{name}={value:.6f} limit={limit} {'ok' if good else 'FAIL'}")
        if args.output:
            fs.write_frequency_csv(args.output, len(stats.output), emp, p)
    if not args.checkpoints and not args.transducer:
        raise UsageError("fs needs --checkpoints and/or --transducer")
    return 0 if ok else 1


def cmd_validate(args) -> int:
    d = _martingale(args)
    report = validate_martingale(d, args.steps or 10)
    print(report.summary())
    return 0 if report.passed else 1


COMMANDS = {"encode": cmd_encode, "decode": cmd_decode, "hybrid": cmd_hybrid,
            "pipeline": cmd_pipeline, "fs": cmd_fs, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgcodec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with default values for the flags below")
        p.add_argument("--input")
        p.add_argument("--output")
        p.add_argument("--martingale", help="JSON spec (file path or inline)")
        p.add_argument("--n", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--source", help="seeded[:N], zeros, ones, champernowne, oscillating, file:PATH")
        p.add_argument("--schedule", help="comma separated candidate checkpoints")
        p.add_argument("--describer", choices=sorted(ho.DESCRIBERS))
        p.add_argument("--transducer", help="JSON file or sample name")
        p.add_argument("--steps", type=int)
        p.add_argument("--checkpoints", help="comma separated prefix lengths")
        p.add_argument("--tolerance", type=float)
        p.add_argument("--gap", type=float)
        p.add_argument("--trace", help="CSV report path")
    return parser


def apply_config(args) -> None:
    if not args.config:
        return
    data = json.loads(Path(args.config).read_text())
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    if data.get("command", args.command) != args.command:
        raise UsageError(f"config is for {data['command']!r}, not {args.command!r}")
    for key, value in data.items():
        if key != "command" and getattr(args, key) is None:
            setattr(args, key, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        apply_config(args)
        return COMMANDS[args.command](args)
    except InvalidCodewordError as exc:
        print(f"invalid codeword: {exc}", file=sys.stderr)
        return 1
    except (PositivityError, CodecInvariantError) as exc:
        print(f"martingale error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ParameterError, ho.ScheduleError, ho.DecodeError,
            fs.TransducerError, fs.AmbiguityError, fs.DegenerateOutputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, IndexError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate: one test per criterion, each printing a single pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``; the verdicts are also
collected into a summary section at the end of any pytest run.
"""

import filecmp
import math
import random
import time
from decimal import Decimal, getcontext
from fractions import Fraction as F

import pytest

from conftest import VERDICTS
from golden_artifacts import GOLDEN_DIR, NAMES, generate
from kgcodec import finite_state as fs
from kgcodec import hybrid_oracle as ho
from kgcodec.kg_codec import (InvalidCodewordError, capital_product, count_bound, decode, encode,
                              redundancy_bound, stage_params)
from kgcodec.martingales import (AllIn, bias_bettor, capital_trace, faulty_wrapper, kt_bettor,
                                 mixture, savings_transform, uniform, validate_martingale)
from kgcodec.numeric_core import ConstantSource, SeededSource, checksum64, seeded_bits

SEEDS = (1, 42, 7777)
N = 1024
CAPITAL_CAP = F(36761, 10000)


def codecs():
    return {
        "uniform": uniform(),
        "savings_kt": savings_transform(kt_bettor()),
        "savings_mix": savings_transform(mixture([kt_bettor(), bias_bettor("2/3"), bias_bettor("1/3")])),
    }


def fr(q):
    return F(int(q.numerator), int(q.denominator))


def verdict(num, ok, detail):
    VERDICTS[num] = (bool(ok), detail)
    print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def runs():
    """Encode and decode every (seed, martingale) case once; later criteria reuse the traces."""
    out = []
    for seed in SEEDS:
        X = seeded_bits(seed, N)
        for name, d in codecs().items():
            t0 = time.perf_counter()
            R, trace = encode(d, X, N)
            result = decode(d, R, N)
            out.append(dict(seed=seed, name=name, d=d, X=X, R=R, trace=trace, result=result,
                            seconds=time.perf_counter() - t0))
    return out


def test_criterion_01_round_trip(runs):
    bad = [(r["seed"], r["name"]) for r in runs if r["result"].bits != r["X"]]
    slowest = max(r["seconds"] for r in runs)
    verdict(1, not bad and slowest < 60,
            f"{len(runs)} cases, mismatches={bad}, slowest case {slowest:.1f}s")


def test_criterion_02_capital_bound(runs):
    # independent partial products at 60 significant digits
    getcontext().prec = 60
    prod, peak = Decimal(1), Decimal(0)
    for j in range(1, 10**4 + 1):
        prod *= 1 + Decimal(1) / (j * j)
        peak = max(peak, prod)
    cap_ok = peak < Decimal(36761) / Decimal(10000)
    # the infinite product is sinh(pi)/pi, so the cap also covers every later stage
    cap_ok = cap_ok and math.sinh(math.pi) / math.pi < 3.6761
    worst = F(0)
    ok = cap_ok
    for r in runs:
        for s in r["trace"]:
            c = fr(s.capital)
            ok = ok and c < fr(capital_product(s.i)) and c < CAPITAL_CAP
            worst = max(worst, c)
    verdict(2, ok, f"max boundary capital {float(worst):.6f}, partial product at 10^4 {float(peak):.6f} "
                   f"< 3.6761")


def test_criterion_03_redundancy(runs):
    ok = all(s.k_i <= redundancy_bound(s.n_i) for r in runs for s in r["trace"])
    k4 = sum(stage_params(i).ell for i in range(1, 5))
    ok = ok and k4 == 23 and k4 <= redundancy_bound(10)
    stages = max(len(r["trace"]) for r in runs)
    verdict(3, ok, f"k_i <= n_i + sqrt(2 n_i) log2(2 n_i) over {stages} stages, "
                   f"k_4={k4} <= {redundancy_bound(10):.1f}")


def walk_stage_invariant(d, trace):
    """Re-walk each encoded stage on plain fractions; return the number of steps checked."""
    state = d.initial()
    steps = 0
    for s in trace:
        d_w = fr(d.value(state))
        delta = fr(s.delta)
        val = int(s.x, 2) + 1
        a = F(0)
        n_y = F(2) ** s.ell * (1 - 1 / delta)
        for j, bit in enumerate(s.y):
            if not (n_y > 0 and a < val <= a + n_y):
                raise AssertionError(f"invariant broken at stage {s.i} step {j}")
            zero = fr(d.value(d.step(state, "0")))
            n0 = F(2) ** (s.ell - j - 1) * (1 - zero / (d_w * delta))
            if bit == "1":
                a += n0
            state = d.step(state, bit)
            n_y = F(2) ** (s.ell - j - 1) * (1 - fr(d.value(state)) / (d_w * delta))
            steps += 1
        if not (n_y > 0 and a < val <= a + n_y and n_y <= 1):
            raise AssertionError(f"final interval wrong at stage {s.i}")
    return steps


def test_criterion_04_counting_algebra(runs):
    rng = random.Random(4)
    pool = list(codecs().values()) + [bias_bettor("3/4"), kt_bettor()]
    instances = 0
    while instances < 1000:
        d = rng.choice(pool)
        w = "".join(rng.choice("01") for _ in range(rng.randint(0, 40)))
        y = "".join(rng.choice("01") for _ in range(rng.randint(0, 12)))
        ell = len(y) + rng.randint(1, 8)
        delta = 1 + F(1, rng.randint(1, 400))
        if d.eval(w) == 0:
            continue
        whole = count_bound(d, w, y, ell, delta)
        assert count_bound(d, w, y + "0", ell, delta) + count_bound(d, w, y + "1", ell, delta) == whole
        instances += 1
    steps = sum(walk_stage_invariant(r["d"], r["trace"]) for r in runs)
    verdict(4, True, f"additivity on {instances} instances, invariant and positivity on {steps} encoder steps")


def test_criterion_05_uniqueness(runs):
    intervals = 0
    for r in runs:
        for s in r["result"].trace:
            lo, hi = s.interval
            assert math.floor(fr(hi)) - math.floor(fr(lo)) == 1
            intervals += 1
    rng = random.Random(5)
    outcomes = {"invalid": 0, "checksum": 0, "unchanged": 0}
    silent = 0
    for k in range(100):
        r = runs[k % len(runs)]
        expected = checksum64(r["X"])
        pos = rng.randrange(len(r["R"]))
        bad = r["R"][:pos] + ("1" if r["R"][pos] == "0" else "0") + r["R"][pos + 1:]
        try:
            bits = decode(r["d"], bad, N).bits
        except InvalidCodewordError:
            outcomes["invalid"] += 1
            continue
        if checksum64(bits) != expected:
            outcomes["checksum"] += 1
        elif bits == r["X"]:
            outcomes["unchanged"] += 1
        else:
            silent += 1
    verdict(5, silent == 0, f"{intervals} final intervals hold one integer; 100 flips -> {outcomes}, "
                            f"silent={silent}")


def test_criterion_06_mixture_contract():
    strategies = {
        "uniform": uniform(),
        "bias_2/3": bias_bettor("2/3"),
        "bias_1/3": bias_bettor("1/3"),
        "kt": kt_bettor(),
        "allin": AllIn("0110"),
        "mixture": mixture([kt_bettor(), bias_bettor("2/3"), bias_bettor("1/3")]),
        "mixture_faulty": mixture([kt_bettor(), faulty_wrapper(bias_bettor("3/4"), 3), AllIn("11")]),
        "savings_kt": savings_transform(kt_bettor()),
        "savings_mixture_faulty": savings_transform(
            mixture([faulty_wrapper(kt_bettor(), 2), bias_bettor("2/3")])),
    }
    failed = [name for name, m in strategies.items() if not validate_martingale(m, 10).passed]
    # the faulty wrapper on its own must be caught
    caught = not validate_martingale(faulty_wrapper(uniform(), 3), 10).passed

    members = [kt_bettor(), bias_bettor("2/3"), bias_bettor("1/3"), bias_bettor("3/4")]
    m = mixture(members)
    rng = random.Random(6)
    checked = 0
    for _ in range(10):
        x = "".join(rng.choice("01") for _ in range(256))
        mix = capital_trace(m, x)
        inner = [capital_trace(M, x) for M in members]
        for n in rng.sample(range(257), 100):
            for i, trace in enumerate(inner, 1):
                if n <= 2**i:
                    ratio = F(1)
                elif trace[2**i] == 0:
                    continue
                else:
                    ratio = fr(trace[n]) / fr(trace[2**i])
                assert fr(mix[n]) >= F(1, 2**i) * ratio
            checked += 1
    verdict(6, not failed and caught, f"depth-10 validation failed for {failed}; faulty alone caught={caught}; "
                                      f"dominance on {checked} prefixes")


def test_criterion_07_savings_contract():
    def banked(d, w):
        return [fr(t.savings) for t in d.savings_trace(w)]

    ok = True
    for d in (savings_transform(kt_bettor()), savings_transform(mixture([kt_bettor(), bias_bettor("2/3")])),
              savings_transform(bias_bettor("3/4"))):
        for seed in (1, 2, 3):
            s = banked(d, seeded_bits(seed, 1000))
            ok = ok and all(a <= b for a, b in zip(s, s[1:]))
    d = savings_transform(bias_bettor("3/4"))
    ones = banked(d, "1" * 2000)
    zeros = banked(d, "0" * 2000)
    ok = ok and all(a <= b for a, b in zip(ones, ones[1:])) and all(a <= b for a, b in zip(zeros, zeros[1:]))
    transfers = sum(1 for a, b in zip(zeros, zeros[1:]) if b > a)
    tail_constant = len(set(zeros[-1000:])) == 1
    ok = ok and ones[-1] > 100 and tail_constant
    verdict(7, ok, f"s(1^2000)={float(ones[-1]):.4g}, transfers on 0^2000={transfers}, "
                   f"last 1000 constant={tail_constant}")


def test_criterion_08_hybrid_oracle():
    schedule = ho.checkpoint_schedule([2, 7, 81, 10000])
    ok = True
    rows = []
    for label, X, desc in [("seeded/literal", seeded_bits(21, 10000), "literal"),
                           ("zeros/runlength", ConstantSource("0"), "runlength"),
                           ("seeded/lz", seeded_bits(3, 10000), "lz"),
                           ("seeded/shortest", seeded_bits(8, 10000), "shortest")]:
        Y, layout = ho.build_oracle(X, schedule, desc)
        prefix = X.prefix(10000) if hasattr(X, "prefix") else X
        for i, b in enumerate(layout.blocks, 1):
            bits, used = ho.decode_oracle(Y, b.m)
            ok = ok and bits == prefix[:b.m]
            ok = ok and used <= layout.prefix_cost(i) <= layout.s * b.m + 5 * math.sqrt(b.m)
            # reads inside the chunk range stop before the block's program
            for n in range(b.prev + 1, min(b.prev + 2**b.chunks, b.m)):
                bits, used = ho.decode_oracle(Y, n)
                ok = ok and bits == prefix[:n] and used <= b.offset + b.v_len
        rows.append(f"{label} s={layout.s:.3f}")
    verdict(8, ok, "; ".join(rows))


def test_criterion_09_pipeline():
    from kgcodec.cli import DEFAULT_MARTINGALE
    from kgcodec.martingales import from_spec

    t0 = time.perf_counter()
    schedule = ho.checkpoint_schedule([2, 7, 81, 10000])
    d = from_spec(DEFAULT_MARTINGALE)
    zeros = ho.kg_pipeline(ConstantSource("0"), schedule, "runlength", d)
    bits, _, used = zeros.query(10000)
    zero_ratio = used / 10000
    ok = bits == "0" * 10000 and zero_ratio <= 0.1
    X = seeded_bits(42, 10000)
    lit = ho.kg_pipeline(X, schedule, "literal", d)
    bits, _, used = lit.query(10000)
    lit_ratio = used / 10000
    seconds = time.perf_counter() - t0
    ok = ok and bits == X and lit_ratio <= 1.3 and seconds < 300
    verdict(9, ok, f"zeros/runlength u/m={zero_ratio:.4f}, seeded/literal u/m={lit_ratio:.4f} at m=10^4, "
                   f"{seconds:.0f}s")


def test_criterion_10_oscillation():
    x = fs.example_no_limit_freq(math.factorial(9))
    p8 = fs.block_freq("1", x[:math.factorial(8)])
    p9 = fs.block_freq("1", x)
    # brute-force count of ones, independent of the closed form
    brute = sum(1 for b in x if b == "1")
    report = fs.convergence_report(fs.ExampleNoLimitSource(), [math.factorial(k) for k in (7, 8, 9, 10)],
                                   gap=0.7)
    ok = (p8 >= F(7, 8) and p9 == F(35899, 362880) and brute == 35899
          and report.oscillating and report.tail_max - report.tail_min >= F(7, 10))
    verdict(10, ok, f"P(1, 8!)={float(p8):.4f}, P(1, 9!)={p9} (~{float(p9):.4f}), "
                    f"tail gap {float(report.tail_max - report.tail_min):.3f}")


def test_criterion_11_limit_law():
    n = 10**6
    src = fs.ChampernowneSource()
    worst_res = worst_pi = worst_p = 0.0
    sums_exact = True
    for name in fs.NONSILENT_SAMPLES:
        T = fs.SAMPLES[name]()
        est = fs.estimate_pi(T, src, n)
        pi = fs.stationary_pi_analytic(T)
        p = fs.predicted_symbol_freq(T, pi)
        sums_exact = sums_exact and sum(p.values()) == 1
        emp = fs.empirical_symbol_freq(T, fs.run_to_output_length(T, src, n).output)
        worst_res = max(worst_res, est.residual)
        worst_pi = max(worst_pi, max(abs(est.pi[q] - float(pi[q])) for q in T.states))
        worst_p = max(worst_p, max(abs(emp[a] - float(p[a])) for a in T.outputs))
    ok = worst_res <= 0.01 and worst_pi <= 0.01 and worst_p <= 0.02 and sums_exact
    verdict(11, ok, f"champernowne(10^6): residual {worst_res:.4f} (<=0.01), pi gap {worst_pi:.4f} (<=0.01), "
                    f"p gap {worst_p:.4f} (<=0.02), sum p = 1 exact: {sums_exact}")


def test_criterion_12_determinism(tmp_path):
    first = generate(tmp_path / "a")
    second = generate(tmp_path / "b")
    same_runs = all(filecmp.cmp(a, b, shallow=False) for a, b in zip(first, second))
    same_golden = all(filecmp.cmp(a, GOLDEN_DIR / name, shallow=False) for a, name in zip(first, NAMES))
    verdict(12, same_runs and same_golden,
            f"{len(NAMES)} artifacts; identical across runs={same_runs}, match checked-in golden={same_golden}")

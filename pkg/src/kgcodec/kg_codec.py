"""Stage-wise embedding of a bit sequence into a sequence a given martingale
cannot win on, and the matching decoder.

Stage i reads the next i input bits x and appends a block y of length ell_i
to the output R. The block is located by a binary search over the counting
bound N(w, y, ell, delta), which lower-bounds how many length-ell completions
of y keep the capital below delta times the capital at w. Because N is
additive over the two children of y, the encoder can steer towards the
val(x)-th losing completion one bit at a time, and the decoder can replay the
same search to recover x.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .martingales import Martingale
from .numeric_core import BitSource, ExactRational, as_source, check_bits, rat

ONE = rat(1)


class PositivityError(ValueError):
    """The martingale has zero capital where the codec needs to divide by it."""


class InvalidCodewordError(ValueError):
    """A block decodes to an interval holding no admissible index."""


class CodecInvariantError(RuntimeError):
    """A loop invariant of the encoder failed (the martingale is not fair)."""


@dataclass(frozen=True)
class StageParams:
    i: int
    delta: ExactRational
    ell: int


def stage_params(i: int) -> StageParams:
    if i < 1:
        raise ValueError("stages are numbered from 1")
    # ceil(i + log2(1 + i^2)) = i + ceil(log2(1 + i^2)) since i is an integer.
    ell = i + (i * i).bit_length()
    return StageParams(i, 1 + rat(1, i * i), ell)


def triangular(i: int) -> int:
    return i * (i + 1) // 2


def cumulative_length(i: int) -> int:
    """k_i: total output length after stage i."""
    return sum(stage_params(j).ell for j in range(1, i + 1))


def stages_for(n: int) -> int:
    """Least stage i whose cumulative input length i(i+1)/2 reaches n."""
    i = max(0, (math.isqrt(8 * n + 1) - 1) // 2)
    while triangular(i) < n:
        i += 1
    return i


def value_index(x: str) -> int:
    """Big-endian value of x plus one, in [1, 2^|x|]."""
    if not x:
        raise ValueError("value_index of the empty word")
    return int(check_bits(x), 2) + 1


def _bound(d_w: ExactRational, d_wy: ExactRational, y_len: int, ell: int, delta: ExactRational) -> ExactRational:
    if d_w <= 0:
        raise PositivityError(f"capital at stage start is {d_w}; codec needs d(w) > 0")
    return rat(2 ** (ell - y_len)) * (1 - d_wy / (d_w * delta))


def count_bound(d: Martingale, w: str, y: str, ell: int, delta: ExactRational) -> ExactRational:
    """N(w, y, ell, delta) = 2^(ell-|y|) * (1 - d(wy) / (d(w) * delta))."""
    if len(y) > ell:
        raise ValueError(f"|y| = {len(y)} exceeds ell = {ell}")
    delta = rat(delta)
    if delta <= 1:
        raise ValueError("delta must exceed 1")
    state = d.state_of(check_bits(w))
    d_w = d.value(state)
    d_wy = d.value(d.state_of(w + check_bits(y))) if y else d_w
    return _bound(d_w, d_wy, len(y), ell, delta)


@dataclass
class StageRecord:
    i: int
    delta: ExactRational
    ell: int
    x: str
    y: str
    n_i: int
    k_i: int
    capital: ExactRational
    evals: int
    padding: int = 0
    bounds: list[ExactRational] = field(default_factory=list)  # N(w, y.0) per step
    interval: tuple[ExactRational, ExactRational] | None = None  # decoder's final (start, end]


@dataclass
class CodewordTrace:
    stages: list[StageRecord] = field(default_factory=list)

    def __iter__(self) -> Iterator[StageRecord]:
        return iter(self.stages)

    def __len__(self) -> int:
        return len(self.stages)

    @property
    def k(self) -> int:
        return self.stages[-1].k_i if self.stages else 0

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["stage", "delta_num", "delta_den", "ell", "n_i", "k_i",
                          "capital_num", "capital_den", "evals"])
            for s in self.stages:
                out.writerow([s.i, s.delta.numerator, s.delta.denominator, s.ell, s.n_i,
                              s.k_i, s.capital.numerator, s.capital.denominator, s.evals])

    def write_bounds_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["stage", "step", "bit", "n0_num", "n0_den"])
            for s in self.stages:
                for j, (bit, n0) in enumerate(zip(s.y, s.bounds)):
                    out.writerow([s.i, j, bit, n0.numerator, n0.denominator])


@dataclass
class _Cursor:
    """Martingale state at the current end of R."""

    d: Martingale
    state: Any
    value: ExactRational

    @classmethod
    def start(cls, d: Martingale) -> "_Cursor":
        state = d.initial()
        return cls(d, state, d.value(state))

    def child(self, bit: str) -> "_Cursor":
        state = self.d.step(self.state, bit)
        return _Cursor(self.d, state, self.d.value(state))


def _encode_block(cur: _Cursor, x: str, params: StageParams) -> tuple[str, _Cursor, list[ExactRational]]:
    ell, delta = params.ell, params.delta
    d_w = cur.value
    target = value_index(x)
    a = rat(0)
    y = []
    here = cur
    bounds = []
    n_here = _bound(d_w, here.value, 0, ell, delta)
    for j in range(ell):
        if not (a < target <= a + n_here) or n_here <= 0:
            raise CodecInvariantError(
                f"stage {params.i} step {j}: a={a}, val={target}, N={n_here}")
        zero = here.child("0")
        n0 = _bound(d_w, zero.value, j + 1, ell, delta)
        bounds.append(n0)
        if target <= a + n0:
            y.append("0")
            here = zero
            n_here = n0
        else:
            y.append("1")
            a += n0
            here = here.child("1")
            # Computed from d(w.y.1) directly, not by additivity, so the
            # invariant check stays independent of the branching rule.
            n_here = _bound(d_w, here.value, j + 1, ell, delta)
    if not here.value < delta * d_w:
        raise CodecInvariantError(f"stage {params.i}: block is not a losing path")
    return "".join(y), here, bounds


def encode_stage(d: Martingale, w: str, x: str) -> str:
    """Block appended to w for the |x|-th stage."""
    cur = _Cursor(d, d.state_of(check_bits(w)), d.eval(w))
    y, _, _ = _encode_block(cur, check_bits(x), stage_params(len(x)))
    return y


def _decode_block(cur: _Cursor, block: str, params: StageParams):
    i, ell, delta = params.i, params.ell, params.delta
    d_w = cur.value
    start, end = rat(0), rat(2**i)
    here = cur
    bounds = []
    for j, bit in enumerate(block):
        zero = here.child("0")
        n0 = _bound(d_w, zero.value, j + 1, ell, delta)
        bounds.append(n0)
        if bit == "0":
            end = start + n0
            here = zero
        else:
            start = start + n0
            here = here.child("1")
    # The only candidate integer in (start, end] is floor(start) + 1.
    candidate = math.floor(start) + 1
    if not (candidate <= end and 1 <= candidate <= 2**i):
        raise InvalidCodewordError(
            f"stage {i}: interval ({start}, {end}] holds no index in [1, {2**i}]")
    return format(candidate - 1, f"0{i}b"), here, bounds, (start, end)


def decode_stage(d: Martingale, w: str, block: str, i: int) -> str:
    params = stage_params(i)
    if len(check_bits(block)) != params.ell:
        raise ValueError(f"stage {i} blocks have length {params.ell}, got {len(block)}")
    cur = _Cursor(d, d.state_of(check_bits(w)), d.eval(w))
    return _decode_block(cur, block, params)[0]


def encode(d: Martingale, X: BitSource | str, n: int) -> tuple[str, CodewordTrace]:
    """Encode the first n bits of X.

    If n is not triangular, the last stage is filled up with zeros; those
    bits are never read from X and the record notes how many were added.
    """
    if n < 1:
        raise ValueError("encode needs n >= 1")
    source = as_source(X)
    payload = source.prefix(n)
    cur = _Cursor.start(d)
    trace = CodewordTrace()
    out = []
    k = 0
    for i in range(1, stages_for(n) + 1):
        params = stage_params(i)
        lo, hi = triangular(i - 1), triangular(i)
        x = payload[lo:hi]
        padding = i - len(x)
        x += "0" * padding
        y, cur, bounds = _encode_block(cur, x, params)
        out.append(y)
        k += params.ell
        trace.stages.append(StageRecord(i, params.delta, params.ell, x, y, hi, k,
                                        cur.value, len(bounds), padding, bounds))
    return "".join(out), trace


@dataclass
class DecodeResult:
    bits: str
    used: int
    trace: CodewordTrace


class StageDecoder:
    """Lazily decodes stages from an oracle, tracking how much of it was read.

    Reads are strictly left to right, so the oracle use equals the index of
    the rightmost bit read plus one.
    """

    def __init__(self, d: Martingale, R: BitSource | str):
        self.d = d
        self.R = as_source(R)
        self.cur = _Cursor.start(d)
        self.decoded = ""
        self.used = 0
        self.stage = 0
        self.trace = CodewordTrace()

    def next_stage(self) -> str:
        params = stage_params(self.stage + 1)
        block = "".join(self.R.read(self.used + j) for j in range(params.ell))
        x, self.cur, bounds, interval = _decode_block(self.cur, block, params)
        self.stage += 1
        self.used += params.ell
        self.decoded += x
        self.trace.stages.append(StageRecord(params.i, params.delta, params.ell, x, block,
                                             triangular(params.i), self.used,
                                             self.cur.value, len(bounds), 0, bounds,
                                             interval))
        return x

    def ensure(self, n: int) -> str:
        while len(self.decoded) < n:
            self.next_stage()
        return self.decoded[:n]


def decode(d: Martingale, R: BitSource | str, n: int) -> DecodeResult:
    dec = StageDecoder(d, R)
    bits = dec.ensure(n)
    return DecodeResult(bits, dec.used, dec.trace)


def redundancy_bound(n: int) -> float:
    """n + sqrt(2n) * log2(2n), the oracle-use envelope for stage boundaries."""
    return n + math.sqrt(2 * n) * math.log2(2 * n)


def capital_product(i: int) -> ExactRational:
    """prod_{j <= i} (1 + 1/j^2) as an exact rational."""
    out = ONE
    for j in range(1, i + 1):
        out *= 1 + rat(1, j * j)
    return out

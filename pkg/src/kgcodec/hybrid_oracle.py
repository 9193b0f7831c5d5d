"""Compressed oracles: X is recovered from Y = v_1 pi_1 v_2 pi_2 ... where pi_i is
a short self-delimiting program for X|m_i and v_i carries the next raw bits of
X in doubling chunks, each announced by a 0 flag and closed by a 1 flag.

Reading X|n for n between checkpoints only touches the raw chunks, so the
decoder never has to run a program longer than it needs to.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .kg_codec import StageDecoder, encode, stages_for, cumulative_length
from .martingales import Martingale
from .numeric_core import BitSource, as_source, check_bits


class DecodeError(ValueError):
    pass


class OracleRangeError(IndexError):
    """The oracle ended before the requested prefix could be produced."""


class ScheduleError(ValueError):
    pass


# --------------------------------------------------------------------------
# reading


class BitReader:
    """Sequential reader over a bit source that counts the bits it consumed.

    Reads are strictly left to right, so ``used`` is both the number of
    distinct positions queried and the rightmost position plus one.
    """

    def __init__(self, source: BitSource | str, start: int = 0):
        self.source = as_source(source)
        self.pos = start
        self.start = start

    @property
    def used(self) -> int:
        return self.pos - self.start

    def bit(self) -> str:
        try:
            b = self.source.read(self.pos)
        except IndexError:
            raise OracleRangeError(f"oracle exhausted at position {self.pos}") from None
        self.pos += 1
        return b

    def take(self, k: int) -> str:
        return "".join(self.bit() for _ in range(k))


# --------------------------------------------------------------------------
# prefix-free code


def enc(w: str) -> str:
    """Self-delimiting code: |w| in binary with every bit doubled, then 01, then w.

    |enc(w)| = |w| + 2 * bitlen(|w|) + 2 <= |w| + 2 log2(|w| + 1) + 4.
    """
    check_bits(w)
    header = "".join(b + b for b in (bin(len(w))[2:] if w else ""))
    return header + "01" + w


def read_enc(reader: BitReader) -> str:
    length = 0
    first = True
    while True:
        pair = reader.take(2)
        if pair == "01":
            break
        if pair == "10":
            raise DecodeError("malformed length header (pair '10')")
        if first and pair == "00":
            raise DecodeError("non-canonical length header (leading zero)")
        length = 2 * length + (pair == "11")
        first = False
    return reader.take(length)


def dec(stream: BitSource | str, pos: int = 0) -> tuple[str, int]:
    """Inverse of enc on a stream prefix: returns (w, bits consumed)."""
    reader = BitReader(stream, pos)
    try:
        w = read_enc(reader)
    except OracleRangeError as exc:
        raise DecodeError(f"truncated code word: {exc}") from None
    return w, reader.used


def enc_int(n: int) -> str:
    if n < 0:
        raise ValueError("negative integer")
    return enc(bin(n)[2:] if n else "")


def read_int(reader: BitReader) -> int:
    digits = read_enc(reader)
    if digits.startswith("0"):
        raise DecodeError("integer field with a leading zero")
    return int(digits, 2) if digits else 0


def enc_bound(n: int) -> float:
    return n + 2 * math.log2(n + 1) + 4


# --------------------------------------------------------------------------
# programs

LITERAL, RUNLENGTH, LZ, REPLAY = "", "0", "1", "00"
METHOD_NAMES = {LITERAL: "literal", RUNLENGTH: "runlength", LZ: "lz", REPLAY: "replay"}

MachineFn = Callable[[BitReader, int], str]
MACHINES: dict[str, MachineFn] = {}


def register_machine(machine_id: str, fn: MachineFn) -> None:
    """Make a deterministic oracle machine replayable under ``machine_id``.

    ``fn(reader, n)`` must compute its output by reading oracle answers from
    ``reader`` in query order.
    """
    MACHINES[check_bits(machine_id)] = fn


def literal_program(x: str) -> str:
    return enc(LITERAL) + enc(check_bits(x))


def runlength_program(count: int, unit: str) -> str:
    return enc(RUNLENGTH) + enc_int(count) + enc(check_bits(unit))


def _lz_tokens(x: str) -> str:
    """LZ78 parse: each phrase is (index of its longest known prefix, next bit).

    Index t is written in bitlen(t - 1) bits where t is the dictionary size;
    a final phrase that is already in the dictionary is written without a bit.
    """
    phrases = {"": 0}
    out = []
    i = 0
    while i < len(x):
        j = i
        while j < len(x) and x[i:j + 1] in phrases:
            j += 1
        size = len(phrases)
        width = (size - 1).bit_length()
        index = phrases[x[i:j]]
        out.append(format(index, f"0{width}b") if width else "")
        if j < len(x):
            out.append(x[j])
            phrases[x[i:j + 1]] = size
            i = j + 1
        else:
            i = j
    return "".join(out)


def _lz_expand(stream: str) -> str:
    phrases = [""]
    out = []
    pos = 0
    while pos < len(stream):
        width = (len(phrases) - 1).bit_length()
        if pos + width > len(stream):
            raise DecodeError("truncated LZ token")
        index = int(stream[pos:pos + width], 2) if width else 0
        pos += width
        if index >= len(phrases):
            raise DecodeError(f"LZ index {index} outside dictionary")
        if pos == len(stream):
            out.append(phrases[index])
            break
        phrase = phrases[index] + stream[pos]
        pos += 1
        phrases.append(phrase)
        out.append(phrase)
    return "".join(out)


def lz_program(x: str) -> str:
    return enc(LZ) + enc(_lz_tokens(check_bits(x)))


def replay_program(machine_id: str, n: int, answers: str) -> str:
    return enc(REPLAY) + enc(check_bits(machine_id)) + enc_int(n) + enc(check_bits(answers))


def run_program(reader: BitReader) -> str:
    """The fixed prefix-free VM: read one program from ``reader`` and run it."""
    tag = read_enc(reader)
    if tag == LITERAL:
        return read_enc(reader)
    if tag == RUNLENGTH:
        count = read_int(reader)
        return read_enc(reader) * count
    if tag == LZ:
        return _lz_expand(read_enc(reader))
    if tag == REPLAY:
        machine_id = read_enc(reader)
        n = read_int(reader)
        answers = read_enc(reader)
        machine = MACHINES.get(machine_id)
        if machine is None:
            raise DecodeError(f"machine {machine_id!r} is not replayable")
        try:
            out = machine(BitReader(answers), n)
        except OracleRangeError:
            raise DecodeError("replay ran out of recorded oracle answers") from None
        return out
    raise DecodeError(f"unknown method tag {tag!r}")


def udec(p: BitSource | str, pos: int = 0) -> tuple[str, int]:
    """Run the program at the head of ``p``; returns (output, program length)."""
    reader = BitReader(p, pos)
    try:
        x = run_program(reader)
    except OracleRangeError as exc:
        raise DecodeError(f"truncated program: {exc}") from None
    return x, reader.used


# --------------------------------------------------------------------------
# describers


class Describer:
    name = "describer"

    def describe(self, x: str) -> str:
        raise NotImplementedError

    def __call__(self, x: str) -> str:
        return self.describe(x)


class Literal(Describer):
    name = "literal"

    def describe(self, x):
        return literal_program(x)


class RunLength(Describer):
    """Shortest period p dividing |x| with x = (x[:p]) ** (|x|/p)."""

    name = "runlength"

    def describe(self, x):
        n = len(check_bits(x))
        for p in range(1, n + 1):
            if n % p == 0 and x[:p] * (n // p) == x:
                return runlength_program(n // p, x[:p])
        return runlength_program(0, "")


class LempelZiv(Describer):
    name = "lz"

    def describe(self, x):
        return lz_program(x)


class Shortest(Describer):
    """Shortest program among the other describers (first wins on ties)."""

    name = "shortest"

    def __init__(self, options: Sequence[Describer] = (Literal(), RunLength(), LempelZiv())):
        self.options = tuple(options)

    def describe(self, x):
        return min((d.describe(x) for d in self.options), key=len)


DESCRIBERS = {d.name: d for d in (Literal(), RunLength(), LempelZiv(), Shortest())}


def get_describer(name: str) -> Describer:
    try:
        return DESCRIBERS[name]
    except KeyError:
        raise ValueError(f"unknown describer {name!r}; known: {sorted(DESCRIBERS)}") from None


# --------------------------------------------------------------------------
# oracle layout


def checkpoint_schedule(candidates: Sequence[int]) -> list[int]:
    """Greedy checkpoints: each is the least remaining candidate at least the
    square of the sum of those already chosen."""
    cands = list(candidates)
    if any(b <= a for a, b in zip(cands, cands[1:])):
        raise ScheduleError("candidates must be strictly ascending")
    if any(c < 1 for c in cands):
        raise ScheduleError("candidates must be positive")
    chosen: list[int] = []
    for c in cands:
        if c >= sum(chosen) ** 2:
            chosen.append(c)
    if not chosen:
        raise ScheduleError("no candidate checkpoints given")
    return chosen


def chunk_count(m: int) -> int:
    """floor(log2(m) / 2), computed exactly on integers."""
    return (math.isqrt(m)).bit_length() - 1 if m >= 1 else 0


@dataclass
class Block:
    m: int
    prev: int
    chunks: int
    v_len: int
    pi_len: int
    offset: int  # position of v_i in Y

    @property
    def ratio(self) -> float:
        return self.pi_len / self.m


@dataclass
class OracleLayout:
    describer: str
    blocks: list[Block] = field(default_factory=list)

    @property
    def checkpoints(self) -> list[int]:
        return [b.m for b in self.blocks]

    @property
    def s(self) -> float:
        """max_j |pi_j| / m_j."""
        return max(b.ratio for b in self.blocks)

    @property
    def length(self) -> int:
        last = self.blocks[-1]
        return last.offset + last.v_len + last.pi_len

    def prefix_cost(self, i: int) -> int:
        """sum_{j <= i} |pi_j| + |v_j| for the 1-based block index i."""
        return sum(b.v_len + b.pi_len for b in self.blocks[:i])

    def to_json(self) -> str:
        data = {
            "describer": self.describer,
            "checkpoints": self.checkpoints,
            "blocks": [asdict(b) for b in self.blocks],
            "s": self.s,
            "length": self.length,
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "OracleLayout":
        data = json.loads(text)
        return cls(data["describer"], [Block(**b) for b in data["blocks"]])


def raw_chunks(x: str, prev: int, chunks: int) -> list[str]:
    """Chunk j covers x[prev + 2^j - 1, prev + 2^(j+1) - 1), so the chunks tile
    x[prev, prev + 2^chunks - 1) without gaps."""
    return [x[prev + 2**j - 1: prev + 2 ** (j + 1) - 1] for j in range(chunks)]


def build_oracle(X: BitSource | str, schedule: Sequence[int], describer: Describer | str):
    """Returns (Y, layout). ``schedule`` is used as given; see checkpoint_schedule."""
    if isinstance(describer, str):
        describer = get_describer(describer)
    schedule = list(schedule)
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ScheduleError("schedule must be a nonempty ascending list")
    x = as_source(X).prefix(schedule[-1])
    layout = OracleLayout(describer.name)
    parts = []
    offset = 0
    prev = 0
    for m in schedule:
        ell = chunk_count(m)
        if prev + 2**ell - 1 > m:
            raise ScheduleError(f"raw chunks after {prev} would run past checkpoint {m}")
        v = "".join("0" + c for c in raw_chunks(x, prev, ell)) + "1"
        pi = describer.describe(x[:m])
        layout.blocks.append(Block(m, prev, ell, len(v), len(pi), offset))
        parts += [v, pi]
        offset += len(v) + len(pi)
        prev = m
    return "".join(parts), layout


def _decode_oracle(reader: BitReader, n: int) -> str:
    if n <= 0:
        return ""
    x = ""
    while True:
        raw = ""
        j = 0
        while True:
            if reader.bit() == "0":
                raw += reader.take(2**j)
                j += 1
                if len(x) + len(raw) >= n:
                    return (x + raw)[:n]
            else:
                x = run_program(reader)
                if len(x) >= n:
                    return x[:n]
                break


def decode_oracle(Y: BitSource | str, n: int) -> tuple[str, int]:
    """Recover X|n from Y without a layout; returns (bits, Y bits read)."""
    reader = BitReader(Y)
    try:
        bits = _decode_oracle(reader, n)
    except OracleRangeError as exc:
        raise OracleRangeError(f"n = {n} is beyond the encoded range ({exc})") from None
    return bits, reader.used


HYBRID_MACHINE = "0"
register_machine(HYBRID_MACHINE, _decode_oracle)


# --------------------------------------------------------------------------
# reductions to descriptions


class RecordingSource(BitSource):
    """Wraps an oracle and records the answers in query order."""

    def __init__(self, source: BitSource | str):
        self.inner = as_source(source)
        self.length = self.inner.length
        self.name = self.inner.name
        self.queries: list[int] = []
        self.answers: list[str] = []

    def read(self, index):
        b = self.inner.read(index)
        self.queries.append(index)
        self.answers.append(b)
        return b


@dataclass(frozen=True)
class DecodeRun:
    machine_id: str
    n: int
    answers: str
    output: str


def record_decode(Y: BitSource | str, n: int, machine_id: str = HYBRID_MACHINE) -> DecodeRun:
    machine = MACHINES.get(machine_id)
    if machine is None:
        raise DecodeError(f"machine {machine_id!r} is not replayable")
    rec = RecordingSource(Y)
    out = machine(BitReader(rec), n)
    if len(set(rec.queries)) != len(rec.queries):
        raise DecodeError("machine repeated an oracle query")
    return DecodeRun(machine_id, n, "".join(rec.answers), out)


def reduction_to_description(run: DecodeRun, n: int | None = None) -> str:
    """REPLAY program: machine id, input n and the recorded oracle answers."""
    n = run.n if n is None else n
    if n != run.n:
        raise ValueError(f"run was recorded for n = {run.n}, not {n}")
    if run.machine_id not in MACHINES:
        raise DecodeError(f"machine {run.machine_id!r} is not replayable")
    return replay_program(run.machine_id, n, run.answers)


REPLAY_SLACK = 24


def replay_bound(answers: int, n: int) -> float:
    """|p| + 2 log2 |p| + 2 log2 n + REPLAY_SLACK (for |p|, n >= 1)."""
    return answers + 2 * math.log2(answers) + 2 * math.log2(n) + REPLAY_SLACK


# --------------------------------------------------------------------------
# composition with the martingale codec


class DecodedSource(BitSource):
    """Y exposed as a bit source whose bits are decoded from R on demand."""

    def __init__(self, d: Martingale, R: BitSource | str, length: int | None = None):
        self.decoder = StageDecoder(d, R)
        self.length = length
        self.name = "decoded"

    def read(self, index):
        if index < 0 or (self.length is not None and index >= self.length):
            raise IndexError(index)
        return self.decoder.ensure(index + 1)[index]

    @property
    def r_used(self) -> int:
        return self.decoder.used


@dataclass
class PipelineResult:
    Y: str
    layout: OracleLayout
    R: str
    d: Martingale

    def query(self, n: int) -> tuple[str, int, int]:
        """Produce X|n from R through Y; returns (bits, Y bits used, R bits used)."""
        ys = DecodedSource(self.d, self.R, len(self.Y))
        bits, y_used = decode_oracle(ys, n)
        return bits, y_used, ys.r_used


def kg_pipeline(X: BitSource | str, schedule: Sequence[int], describer: Describer | str,
                d: Martingale) -> PipelineResult:
    Y, layout = build_oracle(X, schedule, describer)
    R, _ = encode(d, Y, len(Y))
    return PipelineResult(Y, layout, R, d)


def write_decode_report(path: str | Path, rows: Sequence[tuple[int, int]]) -> None:
    """CSV of (n, used, ratio) for a series of decode queries."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "used", "ratio"])
        for n, used in rows:
            out.writerow([n, used, f"{used / n:.6f}"])


def composed_use(y_used: int) -> int:
    """R bits needed to decode the first y_used bits of Y (whole stages)."""
    return cumulative_length(stages_for(y_used)) if y_used else 0

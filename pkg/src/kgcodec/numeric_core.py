"""Exact rationals, bit words and deterministic bit sources.

Bit words are plain ``str`` objects over ``'0'``/``'1'``. Slicing is half-open
everywhere in the package; :func:`closed_slice` is the single adapter for the
inclusive ``X[n:m]`` notation (both endpoints included).
"""

from __future__ import annotations

import hashlib
import struct
from decimal import Decimal, localcontext
from functools import lru_cache
from pathlib import Path

from gmpy2 import mpq

# GMP rationals: always reduced, sign on the numerator, exact comparisons, and
# they compare and hash equal to fractions.Fraction values.
ExactRational = mpq
BitString = str

_BITS = frozenset("01")


def rat(numer, denom: int = 1) -> mpq:
    """Reduced rational with the sign carried by the numerator.

    ``numer`` may also be anything mpq accepts on its own (a Fraction, a
    string such as ``"2/3"``) when ``denom`` is left at 1. Raises
    ZeroDivisionError for a zero denominator.
    """
    if denom == 0:
        raise ZeroDivisionError(f"rat({numer}, 0): zero denominator")
    if denom == 1:
        return mpq(numer)
    return mpq(numer, denom)


def decimal_approx(q, digits: int = 17) -> str:
    # Decimal arithmetic is platform independent, unlike float formatting paths.
    with localcontext() as ctx:
        ctx.prec = digits
        return str(Decimal(int(q.numerator)) / Decimal(int(q.denominator)))


def check_bits(w: str) -> str:
    if not _BITS.issuperset(w):
        bad = sorted(set(w) - _BITS)
        raise ValueError(f"not a bit string (bad symbols {bad!r})")
    return w


def slice_bits(w: str, start: int, stop: int) -> str:
    """Return ``w[start:stop]``, refusing out-of-range bounds instead of clamping."""
    if not 0 <= start <= stop <= len(w):
        raise IndexError(f"slice [{start}, {stop}) out of range for length {len(w)}")
    return w[start:stop]


def closed_slice(w: str, n: int, m: int) -> str:
    """Inclusive substring ``w[n] .. w[m]`` (the ``X[n:m]`` convention)."""
    return slice_bits(w, n, m + 1)


def checksum64(bits: str) -> str:
    """FNV-1a over the ASCII payload, as 16 hex digits."""
    h = 0xCBF29CE484222325
    for byte in bits.encode("ascii"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


class BitSource:
    """Deterministic, indexable infinite (or explicitly bounded) bit sequence."""

    name = "source"
    length: int | None = None  # None means infinite

    def read(self, index: int) -> str:
        raise NotImplementedError

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("negative prefix length")
        if self.length is not None and n > self.length:
            raise IndexError(f"{self.name} has only {self.length} bits, asked for {n}")
        return "".join(self.read(i) for i in range(n))

    def __getitem__(self, index: int) -> str:
        return self.read(index)


class ConstantSource(BitSource):
    def __init__(self, bit: str):
        self.bit = check_bits(bit)
        if len(bit) != 1:
            raise ValueError("constant source needs a single bit")
        self.name = "zeros" if bit == "0" else "ones"

    def read(self, index: int) -> str:
        if index < 0:
            raise IndexError(index)
        return self.bit

    def prefix(self, n: int) -> str:
        return self.bit * n


class WordSource(BitSource):
    """A finite word exposed as a bounded source."""

    def __init__(self, bits: str, name: str = "word"):
        self.bits = check_bits(bits)
        self.length = len(bits)
        self.name = name

    def read(self, index: int) -> str:
        if not 0 <= index < self.length:
            raise IndexError(f"index {index} outside word of length {self.length}")
        return self.bits[index]

    def prefix(self, n: int) -> str:
        return slice_bits(self.bits, 0, n)


_BLOCK = 256


@lru_cache(maxsize=4096)
def _seeded_block(seed: int, block: int) -> str:
    digest = hashlib.sha256(f"kgcodec:{seed}:{block}".encode()).digest()
    return format(int.from_bytes(digest, "big"), f"0{_BLOCK}b")


class SeededSource(BitSource):
    """Pseudorandom bits from SHA-256 in counter mode.

    Block ``k`` is the 256-bit big-endian digest of ``"kgcodec:<seed>:<k>"``,
    which makes every bit random-access and identical on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.name = f"seeded:{self.seed}"

    def read(self, index: int) -> str:
        if index < 0:
            raise IndexError(index)
        return _seeded_block(self.seed, index // _BLOCK)[index % _BLOCK]

    def prefix(self, n: int) -> str:
        if n < 0:
            raise ValueError("negative prefix length")
        blocks = -(-n // _BLOCK)
        return "".join(_seeded_block(self.seed, k) for k in range(blocks))[:n]


def seeded_bits(seed: int, n: int) -> str:
    return SeededSource(seed).prefix(n)


def as_source(x: BitSource | str) -> BitSource:
    return x if isinstance(x, BitSource) else WordSource(x)


def read_bit_file(path: str | Path) -> str:
    """Load either format: ASCII ``0``/``1`` text or the packed binary layout."""
    raw = Path(path).read_bytes()
    text = raw.rstrip(b"\r\n")
    if set(text) <= {0x30, 0x31}:
        return text.decode("ascii")
    return unpack_bits(raw)


def write_bit_file(path: str | Path, bits: str, packed: bool = False) -> None:
    check_bits(bits)
    if packed:
        Path(path).write_bytes(pack_bits(bits))
    else:
        Path(path).write_text(bits + "\n", encoding="ascii", newline="\n")


def pack_bits(bits: str) -> bytes:
    """8-byte little-endian bit count, then the bits MSB-first, zero padded."""
    check_bits(bits)
    padded = bits + "0" * (-len(bits) % 8)
    body = int(padded, 2).to_bytes(len(padded) // 8, "big") if padded else b""
    return struct.pack("<Q", len(bits)) + body


def unpack_bits(data: bytes) -> str:
    if len(data) < 8:
        raise ValueError("packed bit file shorter than its header")
    (count,) = struct.unpack("<Q", data[:8])
    body = data[8:]
    if len(body) != -(-count // 8):
        raise ValueError(f"packed body has {len(body)} bytes, header says {count} bits")
    if not body:
        return ""
    return format(int.from_bytes(body, "big"), f"0{len(body) * 8}b")[:count]

"""Finite-state transducers driven by (normal) bit sources.

A transducer run counts how often each (state, input symbol) transition is
taken. On a normal input those counts settle to pi(q)/|Sigma|, and the output
symbol frequencies then converge to a value p(a) computed from pi alone. The
analytic pi is the stationary distribution of the uniform-input chain.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .numeric_core import BitSource, ExactRational, as_source, rat


class TransducerError(ValueError):
    pass


class AmbiguityError(ValueError):
    """The uniform-input chain has more than one recurrent class."""


class DegenerateOutputError(ValueError):
    """The transducer emits nothing under the given distribution."""


@dataclass(frozen=True)
class Transducer:
    states: tuple[str, ...]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    start: str
    delta: Mapping[tuple[str, str], str]
    tau: Mapping[tuple[str, str], str]
    name: str = "transducer"

    def __post_init__(self):
        for label, alphabet in (("input", self.inputs), ("output", self.outputs)):
            if any(len(a) != 1 for a in alphabet):
                raise TransducerError(f"{label} symbols must be single characters")
            if len(set(alphabet)) != len(alphabet):
                raise TransducerError(f"duplicate {label} symbols")
        if not self.inputs:
            raise TransducerError("empty input alphabet")
        if self.start not in self.states:
            raise TransducerError(f"start state {self.start!r} is not a state")
        for q in self.states:
            for u in self.inputs:
                if (q, u) not in self.delta or (q, u) not in self.tau:
                    raise TransducerError(f"transition ({q!r}, {u!r}) is undefined")
                if self.delta[(q, u)] not in self.states:
                    raise TransducerError(f"({q!r}, {u!r}) leads to unknown state")
                if not set(self.tau[(q, u)]) <= set(self.outputs):
                    raise TransducerError(f"({q!r}, {u!r}) writes symbols outside the output alphabet")
        extra = (set(self.delta) | set(self.tau)) - {(q, u) for q in self.states for u in self.inputs}
        if extra:
            raise TransducerError(f"transitions on unknown (state, symbol) pairs: {sorted(extra)}")

    @property
    def max_output(self) -> int:
        return max(len(w) for w in self.tau.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "states": list(self.states),
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "start": self.start,
            "transitions": [
                {"state": q, "in_symbol": u, "next_state": self.delta[(q, u)],
                 "out_word": self.tau[(q, u)]}
                for q in self.states for u in self.inputs
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transducer":
        known = {"name", "states", "inputs", "outputs", "start", "transitions"}
        if set(data) - known:
            raise TransducerError(f"unknown fields {sorted(set(data) - known)}")
        delta, tau = {}, {}
        for rec in data["transitions"]:
            if set(rec) != {"state", "in_symbol", "next_state", "out_word"}:
                raise TransducerError(f"bad transition record {rec}")
            key = (rec["state"], rec["in_symbol"])
            if key in delta:
                raise TransducerError(f"transition {key} defined twice")
            delta[key] = rec["next_state"]
            tau[key] = rec["out_word"]
        return cls(tuple(data["states"]), tuple(data["inputs"]), tuple(data["outputs"]),
                   data["start"], delta, tau, data.get("name", "transducer"))


def load_transducer(spec: str | Path) -> Transducer:
    """Load from a JSON file, or by name from the shipped samples."""
    if str(spec) in SAMPLES:
        return SAMPLES[str(spec)]()
    return Transducer.from_dict(json.loads(Path(spec).read_text()))


@dataclass
class RunStats:
    m: int
    end: str
    output: str
    counts: Counter = field(default_factory=Counter)  # (state, symbol) -> N_m


def run(T: Transducer, w: Iterable[str]) -> RunStats:
    q = T.start
    counts: Counter = Counter()
    out = []
    m = 0
    allowed = set(T.inputs)
    for u in w:
        if u not in allowed:
            raise TransducerError(f"symbol {u!r} at position {m} is not in the input alphabet")
        counts[(q, u)] += 1
        out.append(T.tau[(q, u)])
        q = T.delta[(q, u)]
        m += 1
    return RunStats(m, q, "".join(out), counts)


def block_freq(u: str, w: str) -> ExactRational:
    """Fraction of the aligned length-|u| blocks of w that equal u."""
    ell = len(u)
    if ell == 0 or len(w) % ell:
        raise ValueError(f"|w| = {len(w)} is not a multiple of |u| = {ell}")
    k = len(w) // ell
    if k == 0:
        raise ValueError("no blocks")
    if ell == 1:
        return rat(w.count(u), k)
    return rat(sum(w[i:i + ell] == u for i in range(0, len(w), ell)), k)


# --------------------------------------------------------------------------
# sources


def champernowne(n: int) -> str:
    """First n bits of 1 10 11 100 101 ... (binary numerals of 1, 2, 3, ...)."""
    if n < 0:
        raise ValueError("negative length")
    parts = []
    total = 0
    k = 1
    while total < n:
        b = bin(k)[2:]
        parts.append(b)
        total += len(b)
        k += 1
    return "".join(parts)[:n]


class ChampernowneSource(BitSource):
    name = "champernowne"

    def __init__(self):
        self._bits = ""

    def read(self, index):
        if index < 0:
            raise IndexError(index)
        if index >= len(self._bits):
            self._bits = champernowne(max(2 * len(self._bits), index + 1, 1024))
        return self._bits[index]

    def prefix(self, n):
        self.read(max(n - 1, 0))
        return self._bits[:n]


def champernowne_ones(n: int) -> int:
    """Number of ones in champernowne(n).

    Complete numeral widths use the closed form; only the last, partial width
    is counted numeral by numeral.
    """
    ones = 0
    left = n
    width = 1
    while left > 0:
        count = 1 << (width - 1)  # numerals of this width
        block = count * width
        if left >= block:
            # leading 1 on each, and the width-1 free bits split evenly
            ones += count + (width - 1) * count // 2
            left -= block
            width += 1
            continue
        full, part = divmod(left, width)
        first = 1 << (width - 1)
        ones += sum(bin(first + j).count("1") for j in range(full))
        if part:
            ones += bin(first + full)[2:part + 2].count("1")
        left = 0
    return ones


def _factorial_block(i: int) -> int:
    """k with k! <= i < (k+1)!, for i >= 1."""
    k, f = 1, 1
    while f * (k + 1) <= i:
        k += 1
        f *= k
    return k


def example_no_limit_freq(n: int) -> str:
    """X[0] = 0; positions in [k!, (k+1)!) hold 1 exactly when k is odd."""
    if n < 0:
        raise ValueError("negative length")
    out = ["0"][:n]
    k, lo = 1, 1
    while lo < n:
        hi = min(lo * (k + 1), n)
        out.append(("1" if k % 2 else "0") * (hi - lo))
        lo = lo * (k + 1)
        k += 1
    return "".join(out)


class ExampleNoLimitSource(BitSource):
    name = "oscillating"

    def read(self, index):
        if index < 0:
            raise IndexError(index)
        if index == 0:
            return "0"
        return "1" if _factorial_block(index) % 2 else "0"

    def prefix(self, n):
        return example_no_limit_freq(n)


# --------------------------------------------------------------------------
# distributions


@dataclass
class PiEstimate:
    pi: dict[str, float]
    residual: float
    m: int


def estimate_pi(T: Transducer, source: BitSource | str, m: int) -> PiEstimate:
    """Empirical state occupation over the first m input symbols.

    A transition at step k is counted as (state before reading symbol k,
    symbol k). The residual is the largest deviation of N_m(q, u)/m from
    pi(q)/|Sigma|.
    """
    if m < 1:
        raise ValueError("m must be positive")
    stats = run(T, as_source(source).prefix(m))
    pi = {q: sum(stats.counts[(q, u)] for u in T.inputs) / m for q in T.states}
    sigma = len(T.inputs)
    residual = max(abs(stats.counts[(q, u)] / m - pi[q] / sigma)
                   for q in T.states for u in T.inputs)
    return PiEstimate(pi, residual, m)


def _transition_graph(T: Transducer) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(T.states)
    g.add_edges_from((q, T.delta[(q, u)]) for q in T.states for u in T.inputs)
    return g


def _solve_exact(matrix: list[list[ExactRational]], rhs: list[ExactRational]) -> list[ExactRational]:
    """Gauss-Jordan elimination over the rationals (the system is nonsingular)."""
    n = len(rhs)
    a = [row[:] + [b] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[pivot] = a[pivot], a[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def stationary_pi_analytic(T: Transducer) -> dict[str, ExactRational]:
    """Stationary distribution of the chain where each input symbol has
    probability 1/|Sigma|, restricted to states reachable from the start."""
    g = _transition_graph(T)
    reach = g.subgraph(nx.descendants(g, T.start) | {T.start})
    classes = list(nx.attracting_components(reach))
    if len(classes) != 1:
        raise AmbiguityError(f"{len(classes)} recurrent classes reachable from {T.start!r}")
    cls = sorted(classes[0], key=T.states.index)
    idx = {q: i for i, q in enumerate(cls)}
    sigma = len(T.inputs)
    k = len(cls)
    # Columns: pi P = pi, i.e. (P^T - I) pi = 0, with the last row replaced by sum = 1.
    mat = [[rat(0)] * k for _ in range(k)]
    for q in cls:
        for u in T.inputs:
            mat[idx[T.delta[(q, u)]]][idx[q]] += rat(1, sigma)
    for i in range(k):
        mat[i][i] -= 1
    mat[-1] = [rat(1)] * k
    rhs = [rat(0)] * (k - 1) + [rat(1)]
    sol = _solve_exact(mat, rhs)
    return {q: (sol[idx[q]] if q in idx else rat(0)) for q in T.states}


def predicted_symbol_freq(T: Transducer, pi: Mapping[str, ExactRational]) -> dict[str, ExactRational]:
    """p(a) = sum #_a(tau(q,u)) pi(q) / sum |tau(q,u)| pi(q)."""
    weight = {a: rat(0) for a in T.outputs}
    total = rat(0)
    for q in T.states:
        pq = rat(pi.get(q, 0))
        for u in T.inputs:
            word = T.tau[(q, u)]
            total += len(word) * pq
            for a in word:
                weight[a] += pq
    if total <= 0:
        raise DegenerateOutputError(f"{T.name} emits no output under the given distribution")
    return {a: weight[a] / total for a in T.outputs}


def empirical_symbol_freq(T: Transducer, output: str) -> dict[str, float]:
    if not output:
        raise DegenerateOutputError("empty output")
    c = Counter(output)
    return {a: c[a] / len(output) for a in T.outputs}


def run_to_output_length(T: Transducer, source: BitSource | str, n: int, chunk: int = 4096,
                         stall_limit: int = 1 << 16) -> RunStats:
    """Shortest run whose output reaches n symbols.

    Gives up with DegenerateOutputError after ``stall_limit`` consecutive
    input symbols without output.
    """
    if n <= 0:
        return run(T, "")
    src = as_source(source)
    q = T.start
    counts: Counter = Counter()
    out: list[str] = []
    produced = 0
    m = 0
    last_progress = 0  # input position of the latest nonempty output
    while produced < n:
        block = src.prefix(m + chunk)[m:]
        if not block:
            raise TransducerError("source ended before the output length was reached")
        for u in block:
            counts[(q, u)] += 1
            word = T.tau[(q, u)]
            if word:
                out.append(word)
                produced += len(word)
                last_progress = m
            q = T.delta[(q, u)]
            m += 1
            if produced >= n:
                break
        if produced < n and m - last_progress >= stall_limit:
            raise DegenerateOutputError(
                f"{T.name} produced no output on the last {m - last_progress} symbols")
    return RunStats(m, q, "".join(out), counts)


# --------------------------------------------------------------------------
# oscillation


@dataclass
class ConvergenceReport:
    symbol: str
    points: list[tuple[int, ExactRational]]
    tail_min: ExactRational
    tail_max: ExactRational
    gap: float

    @property
    def oscillating(self) -> bool:
        return self.tail_max - self.tail_min > self.gap

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["n", "symbol", "freq_num", "freq_den", "freq"])
            for n, f in self.points:
                out.writerow([n, self.symbol, f.numerator, f.denominator, f"{float(f):.6f}"])


def convergence_report(X: BitSource | str, checkpoints: Sequence[int], symbol: str = "1",
                       gap: float = 0.5) -> ConvergenceReport:
    """P(symbol, X|n) at each checkpoint; the tail is the second half of the list."""
    cps = list(checkpoints)
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1:
        raise ValueError("checkpoints must be positive and strictly ascending")
    src = as_source(X)
    bits = src.prefix(cps[-1])
    points = [(n, rat(bits.count(symbol, 0, n), n)) for n in cps]
    tail = [f for _, f in points[len(points) // 2:]]
    return ConvergenceReport(symbol, points, min(tail), max(tail), gap)


def write_frequency_csv(path: str | Path, n: int, empirical: Mapping[str, float],
                        predicted: Mapping[str, ExactRational]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "symbol", "empirical", "predicted"])
        for a in sorted(predicted):
            out.writerow([n, a, f"{empirical.get(a, 0.0):.6f}", f"{float(predicted[a]):.6f}"])


# --------------------------------------------------------------------------
# sample machines


def _machine(name, states, outputs, start, table):
    delta = {(q, u): nxt for (q, u), (nxt, _) in table.items()}
    tau = {(q, u): out for (q, u), (_, out) in table.items()}
    return Transducer(tuple(states), ("0", "1"), tuple(outputs), start, delta, tau, name)


def identity_machine() -> Transducer:
    return _machine("identity", ["q"], "01", "q",
                    {("q", "0"): ("q", "0"), ("q", "1"): ("q", "1")})


def eraser_machine() -> Transducer:
    return _machine("eraser", ["q"], "01", "q",
                    {("q", "0"): ("q", ""), ("q", "1"): ("q", "")})


def doubling_machine() -> Transducer:
    return _machine("doubling", ["q"], "01", "q",
                    {("q", "0"): ("q", "00"), ("q", "1"): ("q", "11")})


def parity_machine() -> Transducer:
    """Tracks the parity of ones read so far and writes it after each symbol."""
    return _machine("parity", ["e", "o"], "01", "e", {
        ("e", "0"): ("e", "0"), ("e", "1"): ("o", "1"),
        ("o", "0"): ("o", "1"), ("o", "1"): ("e", "0"),
    })


def flip_machine() -> Transducer:
    """Alternates state on every symbol and keeps only the symbols read in state a."""
    return _machine("flip", ["a", "b"], "01", "a", {
        ("a", "0"): ("b", "0"), ("a", "1"): ("b", "1"),
        ("b", "0"): ("a", ""), ("b", "1"): ("a", ""),
    })


def ab_machine() -> Transducer:
    return Transducer(("q",), ("0", "1"), ("a", "b"), "q",
                      {("q", "0"): "q", ("q", "1"): "q"},
                      {("q", "0"): "a", ("q", "1"): "ab"}, "ab")


SAMPLES = {
    "identity": identity_machine,
    "eraser": eraser_machine,
    "doubling": doubling_machine,
    "parity": parity_machine,
    "flip": flip_machine,
    "ab": ab_machine,
}

# Machines with nonempty output, used for the frequency checks.
NONSILENT_SAMPLES = ("identity", "doubling", "parity", "flip", "ab")


def factorial(n: int) -> int:
    return math.factorial(n)

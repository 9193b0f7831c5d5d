"""Exact betting strategies and the mixture / savings-account combinators.

Every strategy is evaluated by folding an immutable state over the bits of a
word: ``initial()`` is the state at the empty word, ``step(state, bit)``
extends it by one bit and ``value(state)`` is the capital. ``eval(w)`` is the
fold. The codec keeps states around so that extending a prefix by one bit
costs one step, not a re-evaluation from scratch.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .numeric_core import ExactRational, check_bits, decimal_approx, rat

ONE = rat(1)
ZERO = rat(0)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PowerCost:
    """Step-count model ``scale * (n + 1) ** power`` for a word of length n."""

    scale: int = 1
    power: int = 1

    def __call__(self, n: int) -> int:
        return self.scale * (n + 1) ** self.power

    def to_spec(self) -> dict:
        return {"scale": self.scale, "power": self.power}


class Martingale:
    name = "martingale"
    cost: Callable[[int], int] | None = None

    def initial(self) -> Any:
        raise NotImplementedError

    def step(self, state: Any, bit: str) -> Any:
        raise NotImplementedError

    def value(self, state: Any) -> ExactRational:
        raise NotImplementedError

    def state_of(self, w: str) -> Any:
        state = self.initial()
        for b in w:
            state = self.step(state, b)
        return state

    def eval(self, w: str) -> ExactRational:
        return self.value(self.state_of(check_bits(w)))

    __call__ = eval

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _cost_spec(self, spec: dict) -> dict:
        if isinstance(self.cost, PowerCost):
            spec["cost"] = self.cost.to_spec()
        return spec


@dataclass(frozen=True)
class Uniform(Martingale):
    cost: Callable[[int], int] | None = None
    name = "uniform"

    def initial(self):
        return None

    def step(self, state, bit):
        return None

    def value(self, state):
        return ONE

    def to_spec(self):
        return self._cost_spec({"kind": "uniform"})


@dataclass(frozen=True)
class Bias(Martingale):
    """Bets a fixed fraction: wins ``2*beta`` on a 1, ``2*(1-beta)`` on a 0."""

    beta: ExactRational
    cost: Callable[[int], int] | None = None
    name = "bias"

    def __post_init__(self):
        beta = rat(self.beta)
        if not 0 < beta < 1:
            raise ParameterError(f"bias parameter must lie in (0, 1), got {beta}")
        object.__setattr__(self, "beta", beta)

    def initial(self):
        return ONE

    def step(self, capital, bit):
        if bit == "1":
            return capital * 2 * self.beta
        return capital * 2 * (1 - self.beta)

    def value(self, capital):
        return capital

    def to_spec(self):
        return self._cost_spec({"kind": "bias", "beta": str(self.beta)})


@dataclass(frozen=True)
class KT(Martingale):
    """Krichevsky-Trofimov bettor: stakes by (count_b + 1/2) / (n + 1)."""

    cost: Callable[[int], int] | None = None
    name = "kt"

    def initial(self):
        return (ONE, 0, 0)

    def step(self, state, bit):
        capital, zeros, ones = state
        seen = ones if bit == "1" else zeros
        capital = capital * (2 * seen + 1) / (zeros + ones + 1)
        if bit == "1":
            return (capital, zeros, ones + 1)
        return (capital, zeros + 1, ones)

    def value(self, state):
        return state[0]

    def to_spec(self):
        return self._cost_spec({"kind": "kt"})


@dataclass(frozen=True)
class AllIn(Martingale):
    """Stakes everything on ``target`` bit by bit, then bets evenly.

    Capital drops to zero off the target path, so this is the shipped example
    of a martingale that is not strictly positive.
    """

    target: str
    cost: Callable[[int], int] | None = None
    name = "allin"

    def __post_init__(self):
        check_bits(self.target)

    def initial(self):
        return (ONE, 0)

    def step(self, state, bit):
        capital, n = state
        if n < len(self.target):
            capital = capital * 2 if bit == self.target[n] else ZERO
        return (capital, n + 1)

    def value(self, state):
        return state[0]

    def to_spec(self):
        return self._cost_spec({"kind": "allin", "target": self.target})


@dataclass(frozen=True)
class Faulty(Martingale):
    """Test hook: ``inner`` plus one unit of capital on every word whose bit at
    ``violate_at`` is 0. Fairness therefore fails at length ``violate_at`` only.
    """

    inner: Martingale
    violate_at: int
    cost: Callable[[int], int] | None = None
    name = "faulty"

    def __post_init__(self):
        if self.violate_at < 1:
            raise ParameterError("violate_at must be >= 1")

    def initial(self):
        return (self.inner.initial(), 0, False)

    def step(self, state, bit):
        inner, n, bumped = state
        if n == self.violate_at and bit == "0":
            bumped = True
        return (self.inner.step(inner, bit), n + 1, bumped)

    def value(self, state):
        inner, _, bumped = state
        return self.inner.value(inner) + (1 if bumped else 0)

    def to_spec(self):
        spec = {"kind": "faulty", "inner": self.inner.to_spec(), "violate_at": self.violate_at}
        return self._cost_spec(spec)


def uniform() -> Uniform:
    return Uniform()


def bias_bettor(beta) -> Bias:
    return Bias(rat(beta))


def kt_bettor() -> KT:
    return KT()


def faulty_wrapper(m: Martingale, violate_at: int) -> Faulty:
    return Faulty(m, violate_at)


# --------------------------------------------------------------------------
# mixture


@dataclass(frozen=True)
class MixtureConfig:
    """Members M_1..M_k; M_i has weight 2^-i and starts betting at length 2^i.

    ``budget(n)`` is the step allowance for a word of length n; a member whose
    declared ``cost(n)`` exceeds it is frozen exactly like a fairness violation.
    """

    members: tuple[Martingale, ...]
    budget: Callable[[int], int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ParameterError("mixture needs at least one member")


@dataclass(frozen=True)
class _Member:
    inner: Any
    anchor: ExactRational | None = None  # M_i(x|2^i), fixed once length 2^i is reached
    frozen: ExactRational | None = None  # normalized capital after a violation
    violated_at: int | None = None


def _normalized(m: Martingale, i: int, length: int, mem: _Member) -> ExactRational:
    """The member's contribution M_i'(x) for a word of the given length."""
    if mem.frozen is not None:
        return mem.frozen
    # A member that has lost everything by its activation length has nothing
    # left to bet with; treating it as an even bettor keeps the sum fair.
    if length <= 2**i or mem.anchor == 0:
        return ONE
    return m.value(mem.inner) / mem.anchor


class Mixture(Martingale):
    name = "mixture"

    def __init__(self, cfg: MixtureConfig, cost: Callable[[int], int] | None = None):
        self.cfg = cfg
        self.members = cfg.members
        self.cost = cost
        self._tail = rat(1, 2 ** len(self.members))

    def __repr__(self):
        return f"Mixture({list(self.members)!r})"

    def initial(self):
        return (0, tuple(_Member(m.initial()) for m in self.members))

    def _violates(self, m: Martingale, n: int, inner) -> bool:
        """True if the member misbehaves at the current word (length n)."""
        budget = self.cfg.budget
        if budget is not None and m.cost is not None and m.cost(n) > budget(n):
            return True
        here = m.value(inner)
        if n == 0 and here != 1:
            return True
        v0 = m.value(m.step(inner, "0"))
        v1 = m.value(m.step(inner, "1"))
        return here < 0 or v0 < 0 or v1 < 0 or 2 * here != v0 + v1

    def step(self, state, bit):
        n, members = state
        out = []
        for i, (m, mem) in enumerate(zip(self.members, members), start=1):
            if mem.frozen is not None:
                out.append(mem)
            elif self._violates(m, n, mem.inner):
                # Violation before activation keeps the member at even bets.
                frozen = ONE if n < 2**i else _normalized(m, i, n, mem)
                out.append(_Member(mem.inner, mem.anchor, frozen, n))
            else:
                inner = m.step(mem.inner, bit)
                anchor = m.value(inner) if n + 1 == 2**i else mem.anchor
                out.append(_Member(inner, anchor))
        return (n + 1, tuple(out))

    def value(self, state):
        n, members = state
        total = self._tail
        for i, (m, mem) in enumerate(zip(self.members, members), start=1):
            total += _normalized(m, i, n, mem) / 2**i
        return total

    def normalized(self, state, i: int) -> ExactRational:
        """M_i'(x) for the 1-based member index i."""
        n, members = state
        return _normalized(self.members[i - 1], i, n, members[i - 1])

    def violations(self, state) -> dict[int, int]:
        """Map member index (1-based) to the length at which it was frozen."""
        return {
            i: mem.violated_at
            for i, mem in enumerate(state[1], start=1)
            if mem.violated_at is not None
        }

    def to_spec(self):
        spec = {"kind": "mixture", "members": [m.to_spec() for m in self.members]}
        if isinstance(self.cfg.budget, PowerCost):
            spec["budget"] = self.cfg.budget.to_spec()
        return self._cost_spec(spec)


def mixture(cfg: MixtureConfig | Sequence[Martingale]) -> Mixture:
    if not isinstance(cfg, MixtureConfig):
        cfg = MixtureConfig(tuple(cfg))
    return Mixture(cfg)


# --------------------------------------------------------------------------
# savings account


@dataclass(frozen=True)
class SavingsState:
    savings: ExactRational
    working: ExactRational

    @property
    def total(self) -> ExactRational:
        return self.savings + self.working


TRANSFER_THRESHOLD = 2


class Savings(Martingale):
    """Banks half of the working capital whenever it reaches 2.

    The banked part never decreases, so the capital converges on exactly the
    sequences where the inner strategy's capital is bounded.
    """

    name = "savings"

    def __init__(self, inner: Martingale, cost: Callable[[int], int] | None = None):
        self.inner = inner
        self.cost = cost

    def __repr__(self):
        return f"Savings({self.inner!r})"

    def initial(self):
        inner = self.inner.initial()
        v = self.inner.value(inner)
        return (inner, v, ZERO, v, ONE if v > 0 else None)

    def step(self, state, bit):
        # While the inner capital stays positive, c == m(w) * scale with
        # scale = 2^-transfers; multiplying by the scale is far cheaper than
        # forming c * m(wb) / m(w) from two large rationals.
        inner, v, s, c, scale = state
        inner = self.inner.step(inner, bit)
        v_next = self.inner.value(inner)
        if v > 0:
            c = v_next * scale if scale is not None else c * v_next / v
            scale = c / v_next if v_next > 0 else None
        else:
            scale = None
        if c >= TRANSFER_THRESHOLD:
            c = c / 2
            s = s + c
            if scale is not None:
                scale = scale / 2
        return (inner, v_next, s, c, scale)

    def value(self, state):
        return state[2] + state[3]

    def savings_state(self, w: str) -> SavingsState:
        state = self.state_of(check_bits(w))
        return SavingsState(state[2], state[3])

    def savings_trace(self, w: str) -> list[SavingsState]:
        state = self.initial()
        out = [SavingsState(state[2], state[3])]
        for b in check_bits(w):
            state = self.step(state, b)
            out.append(SavingsState(state[2], state[3]))
        return out

    def to_spec(self):
        return self._cost_spec({"kind": "savings", "inner": self.inner.to_spec()})


def savings_transform(m: Martingale) -> Savings:
    return Savings(m)


# --------------------------------------------------------------------------
# analysis helpers


def capital_trace(m: Martingale, w: str) -> list[ExactRational]:
    state = m.initial()
    out = [m.value(state)]
    for b in check_bits(w):
        state = m.step(state, b)
        out.append(m.value(state))
    return out


@dataclass
class Violation:
    kind: str  # "initial", "negative" or "fairness"
    word: str

    @property
    def length(self) -> int:
        return len(self.word)


@dataclass
class ValidationReport:
    depth: int
    words_checked: int = 0
    violation: Violation | None = None

    @property
    def passed(self) -> bool:
        return self.violation is None

    def summary(self) -> str:
        if self.passed:
            return f"pass: {self.words_checked} words, depth {self.depth}"
        v = self.violation
        return f"fail: {v.kind} violation at length {v.length} (word {v.word!r})"


def validate_martingale(m: Martingale, depth: int) -> ValidationReport:
    """Exhaustive check of d(λ) <= 1, nonnegativity and exact fairness for
    every word shorter than ``depth``; reports the first failure in
    length-lexicographic order."""
    report = ValidationReport(depth)
    root = m.initial()
    root_value = m.value(root)
    if root_value > 1:
        report.violation = Violation("initial", "")
        return report
    if root_value < 0:
        report.violation = Violation("negative", "")
        return report
    level = [("", root, root_value)]
    for _ in range(depth):
        nxt = []
        for w, state, v in level:
            report.words_checked += 1
            s0, s1 = m.step(state, "0"), m.step(state, "1")
            v0, v1 = m.value(s0), m.value(s1)
            if v0 < 0 or v1 < 0:
                report.violation = Violation("negative", w)
                return report
            if v0 + v1 != 2 * v:
                report.violation = Violation("fairness", w)
                return report
            nxt.append((w + "0", s0, v0))
            nxt.append((w + "1", s1, v1))
        level = nxt
    return report


# --------------------------------------------------------------------------
# spec files


def _cost_from_spec(spec: dict | None) -> PowerCost | None:
    if spec is None:
        return None
    unknown = set(spec) - {"scale", "power"}
    if unknown:
        raise ParameterError(f"unknown cost fields {sorted(unknown)}")
    return PowerCost(int(spec.get("scale", 1)), int(spec.get("power", 1)))


_ALLOWED = {
    "uniform": {"kind", "cost"},
    "bias": {"kind", "beta", "cost"},
    "kt": {"kind", "cost"},
    "allin": {"kind", "target", "cost"},
    "faulty": {"kind", "inner", "violate_at", "cost"},
    "mixture": {"kind", "members", "budget", "cost"},
    "savings": {"kind", "inner", "cost"},
}


def from_spec(spec: dict) -> Martingale:
    """Build a martingale from its JSON description (see README for the schema)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ParameterError(f"martingale spec needs a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind not in _ALLOWED:
        raise ParameterError(f"unknown martingale kind {kind!r}")
    unknown = set(spec) - _ALLOWED[kind]
    if unknown:
        raise ParameterError(f"unknown fields for {kind}: {sorted(unknown)}")
    cost = _cost_from_spec(spec.get("cost"))
    if kind == "uniform":
        return Uniform(cost)
    if kind == "bias":
        return Bias(rat(str(spec["beta"])), cost)
    if kind == "kt":
        return KT(cost)
    if kind == "allin":
        return AllIn(spec["target"], cost)
    if kind == "faulty":
        return Faulty(from_spec(spec["inner"]), int(spec["violate_at"]), cost)
    if kind == "mixture":
        members = tuple(from_spec(s) for s in spec["members"])
        cfg = MixtureConfig(members, _cost_from_spec(spec.get("budget")))
        return Mixture(cfg, cost)
    return Savings(from_spec(spec["inner"]), cost)


def load_martingale(text_or_path: str | Path) -> Martingale:
    """Accept a path to a JSON file or inline JSON text."""
    text = str(text_or_path)
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    return from_spec(json.loads(text))


def write_capital_csv(path: str | Path, values: Sequence[ExactRational]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["prefix_length", "numerator", "denominator", "decimal_approx"])
        for j, v in enumerate(values):
            out.writerow([j, v.numerator, v.denominator, decimal_approx(v)])

"""First-order Markov sequence models and the brute-force oracle.

The model stores an initial distribution ``p0`` and a row-stochastic
transition matrix ``t`` with ``t[x, y] = P(X_{k+1}=y | X_k=x)`` (row =
current symbol, column = next symbol).  Positions are 1-based throughout
the library; a word is a tuple of alphabet indices.

The enumeration oracle in this module is the independent ground truth
against which every exact algorithm in the package is tested: it sums the
model probability of every word of a given length that satisfies an
arbitrary predicate.  It refuses to enumerate more than ``guard`` words.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DomainError, EnumerationGuardError, NullEventError

Word = tuple[int, ...]
Predicate = Callable[[Word], bool]

DEFAULT_ENUMERATION_GUARD = 10**7

PROB_ATOL = 1e-9  # tolerance for stochasticity checks at construction


@dataclass(frozen=True)
class Alphabet:
    """Ordered finite set of symbol names; a symbol's index is its rank."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise DomainError("alphabet must contain at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise DomainError("alphabet symbols must be unique")
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise DomainError(f"symbol {symbol!r} not in alphabet") from None

    def word(self, symbols: Sequence[str]) -> Word:
        return tuple(self.index(s) for s in symbols)

    def spell(self, word: Sequence[int]) -> tuple[str, ...]:
        return tuple(self.symbols[i] for i in word)


def _check_distribution(vec: np.ndarray, what: str) -> None:
    if np.any(vec < -PROB_ATOL) or np.any(vec > 1 + PROB_ATOL):
        raise DomainError(f"{what} has entries outside [0, 1]")
    if abs(float(vec.sum()) - 1.0) > PROB_ATOL:
        raise DomainError(f"{what} does not sum to 1 (got {vec.sum()!r})")


@dataclass(frozen=True)
class MarkovModel:
    """Homogeneous first-order Markov model over a finite alphabet."""

    alphabet: Alphabet
    p0: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        a = self.alphabet.size
        p0 = np.asarray(self.p0, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if p0.shape != (a,):
            raise DomainError(f"p0 must have shape ({a},), got {p0.shape}")
        if t.shape != (a, a):
            raise DomainError(f"t must have shape ({a}, {a}), got {t.shape}")
        _check_distribution(p0, "p0")
        for x in range(a):
            _check_distribution(t[x], f"transition row {x}")
        p0.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "t", t)

    @property
    def length(self) -> int | None:
        """Fixed sequence length, or None when any length is allowed."""
        return None

    def initial(self) -> np.ndarray:
        return self.p0

    def step_matrix(self, k: int) -> np.ndarray:
        """Transition matrix for the step from position k to k+1 (1-based)."""
        return self.t


@dataclass(frozen=True)
class InhomogeneousChain:
    """Markov chain with one transition matrix per step.

    Produced by the CSP unwrap reduction, where each chain step normalizes
    a different constraint factor.  The homogeneous model is the special
    case where every step shares one matrix; algorithms in this package
    accept either through the common ``initial``/``step_matrix`` surface.
    """

    alphabet: Alphabet
    p0: np.ndarray
    steps: tuple[np.ndarray, ...]

    def __post_init__(self):
        a = self.alphabet.size
        p0 = np.asarray(self.p0, dtype=float)
        if p0.shape != (a,):
            raise DomainError(f"p0 must have shape ({a},), got {p0.shape}")
        _check_distribution(p0, "p0")
        mats = []
        for k, m in enumerate(self.steps):
            m = np.asarray(m, dtype=float)
            if m.shape != (a, a):
                raise DomainError(f"step {k} must have shape ({a}, {a})")
            for x in range(a):
                _check_distribution(m[x], f"step {k} row {x}")
            m.setflags(write=False)
            mats.append(m)
        p0.setflags(write=False)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "steps", tuple(mats))

    @property
    def length(self) -> int:
        return len(self.steps) + 1

    def initial(self) -> np.ndarray:
        return self.p0

    def step_matrix(self, k: int) -> np.ndarray:
        if not 1 <= k <= len(self.steps):
            raise DomainError(f"step index {k} out of range")
        return self.steps[k - 1]


Chain = MarkovModel | InhomogeneousChain


def _check_length(model: Chain, n: int) -> None:
    if n < 1:
        raise DomainError("sequence length must be >= 1")
    if model.length is not None and n != model.length:
        raise DomainError(
            f"chain has fixed length {model.length}, requested {n}"
        )


def sequence_probability(model: Chain, word: Sequence[int]) -> float:
    """Exact model probability of a word (product of p0 and step factors)."""
    w = tuple(word)
    if len(w) == 0:
        raise DomainError("word must be non-empty")
    a = model.alphabet.size
    if any(not 0 <= x < a for x in w):
        raise DomainError(f"word {w} contains indices outside the alphabet")
    _check_length(model, len(w))
    prob = float(model.initial()[w[0]])
    for k in range(1, len(w)):
        prob *= float(model.step_matrix(k)[w[k - 1], w[k]])
    return prob


def iter_words_with_probability(
    model: Chain, n: int, guard: int = DEFAULT_ENUMERATION_GUARD
) -> Iterator[tuple[Word, float]]:
    """Enumerate all |A|^n words with their probabilities, depth first."""
    _check_length(model, n)
    a = model.alphabet.size
    if a**n > guard:
        raise EnumerationGuardError(
            f"{a}^{n} words exceed the enumeration guard of {guard}"
        )
    p0 = model.initial()
    steps = [model.step_matrix(k) for k in range(1, n)]

    def rec(prefix: list[int], prob: float) -> Iterator[tuple[Word, float]]:
        pos = len(prefix)
        if pos == n:
            yield tuple(prefix), prob
            return
        row = p0 if pos == 0 else steps[pos - 1][prefix[-1]]
        for x in range(a):
            prefix.append(x)
            yield from rec(prefix, prob * float(row[x]))
            prefix.pop()

    yield from rec([], 1.0)


def oracle_partition(
    model: Chain,
    n: int,
    pred: Predicate,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """Brute-force probability of {w : pred(w)} by exhaustive enumeration."""
    return sum(
        p for w, p in iter_words_with_probability(model, n, guard) if pred(w)
    )


def oracle_conditional(
    model: Chain,
    n: int,
    pred: Predicate,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> dict[Word, float]:
    """Exact conditional distribution P(w | pred) as a dict, by enumeration."""
    mass = {
        w: p
        for w, p in iter_words_with_probability(model, n, guard)
        if pred(w) and p > 0.0
    }
    z = sum(mass.values())
    if z <= 0.0:
        raise NullEventError("cannot condition on an event of probability 0")
    return {w: p / z for w, p in mass.items()}


def oracle_marginals(
    model: Chain,
    n: int,
    pred: Predicate,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> np.ndarray:
    """Per-position conditional marginals, entry [t-1, x] = P(X_t=x | pred)."""
    a = model.alphabet.size
    table = np.zeros((n, a))
    z = 0.0
    for w, p in iter_words_with_probability(model, n, guard):
        if p > 0.0 and pred(w):
            z += p
            for pos, x in enumerate(w):
                table[pos, x] += p
    if z <= 0.0:
        raise NullEventError("cannot condition on an event of probability 0")
    return table / z


def choice_from_weights(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Draw an index proportionally to nonnegative weights (np.searchsorted)."""
    cum = np.cumsum(weights)
    total = cum[-1]
    if total <= 0.0:
        raise NullEventError("all choice weights are zero")
    return int(np.searchsorted(cum, rng.random() * total, side="right"))


def sample_unconstrained(
    model: Chain, n: int, rng: np.random.Generator
) -> Word:
    """Draw one word from the unconstrained chain."""
    _check_length(model, n)
    out = [choice_from_weights(rng, model.initial())]
    for k in range(1, n):
        row = model.step_matrix(k)[out[-1]]
        out.append(choice_from_weights(rng, row))
    return tuple(out)


def rejection_sample(
    model: Chain,
    n: int,
    pred: Predicate,
    max_tries: int,
    rng: np.random.Generator,
) -> Word | None:
    """Sample from P(. | pred) by rejection; None when max_tries exhausted."""
    if max_tries < 1:
        raise DomainError("max_tries must be >= 1")
    for _ in range(max_tries):
        w = sample_unconstrained(model, n, rng)
        if pred(w):
            return w
    return None


# JSON wire format ----------------------------------------------------------

def model_to_dict(model: Chain) -> dict:
    d = {
        "alphabet": list(model.alphabet.symbols),
        "p0": [float(p) for p in model.initial()],
    }
    if isinstance(model, MarkovModel):
        d["t"] = [[float(v) for v in row] for row in model.t]
    else:
        d["steps"] = [
            [[float(v) for v in row] for row in m] for m in model.steps
        ]
    return d


def model_from_dict(d: dict) -> Chain:
    try:
        alphabet = Alphabet(tuple(d["alphabet"]))
        p0 = np.array(d["p0"], dtype=float)
        if "t" in d:
            return MarkovModel(alphabet, p0, np.array(d["t"], dtype=float))
        steps = tuple(np.array(m, dtype=float) for m in d["steps"])
        return InhomogeneousChain(alphabet, p0, steps)
    except KeyError as exc:
        raise DomainError(f"model JSON missing field {exc}") from None


def load_model(path: str) -> Chain:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

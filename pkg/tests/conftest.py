"""Shared fixtures: reference models, fixture grammars, test utilities."""

import numpy as np
import pytest

from chainbound.grammar import parse_grammar_text, to_cnf
from chainbound.markov import Alphabet, MarkovModel


AB = Alphabet(("a", "b"))

# Unambiguous grammar for balanced parentheses, already in CNF.
DYCK_TEXT = """
D -> P D
D -> A B
D -> A Q
P -> A B
P -> A Q
Q -> D B
A -> '('
B -> ')'
"""

# One-nonterminal ambiguous (but weakly ambiguous) grammar: L = {a^n, n>=1}.
REPEAT_TEXT = """
S -> S S
S -> 'a'
"""


@pytest.fixture
def uniform2() -> MarkovModel:
    """M_u: uniform model over {a, b} (every factor 1/2)."""
    return MarkovModel(AB, np.array([0.5, 0.5]), np.full((2, 2), 0.5))


@pytest.fixture
def alternating2() -> MarkovModel:
    """M_d: deterministic alternating model, always emits 'abab...'."""
    return MarkovModel(
        AB, np.array([1.0, 0.0]), np.array([[0.0, 1.0], [1.0, 0.0]])
    )


@pytest.fixture
def dyck():
    """CNF grammar of balanced parentheses over {'(', ')'}."""
    return to_cnf(parse_grammar_text(DYCK_TEXT))


@pytest.fixture
def repeat_a():
    """CNF of S -> S S | 'a' over terminals {a, b} (b is never derivable)."""
    from chainbound.grammar import align_terminals

    return align_terminals(to_cnf(parse_grammar_text(REPEAT_TEXT)), AB)


def paren_model(kind: str) -> MarkovModel:
    """Uniform or alternating model over the Dyck alphabet ( ).

    The alternating variant assigns mass one to '()()()...', so for even
    n exactly one word carries all the probability.
    """
    alphabet = Alphabet(("(", ")"))
    if kind == "uniform":
        return MarkovModel(
            alphabet, np.array([0.5, 0.5]), np.full((2, 2), 0.5)
        )
    return MarkovModel(
        alphabet, np.array([1.0, 0.0]), np.array([[0.0, 1.0], [1.0, 0.0]])
    )


def random_model(rng: np.random.Generator, size: int, sparse: bool = False):
    """Random row-stochastic model; sparse rows zero some entries out."""
    names = tuple("abcdefgh"[:size])
    p0 = rng.random(size) + 0.05
    t = rng.random((size, size)) + 0.05
    if sparse:
        mask = rng.random((size, size)) < 0.35
        keep = rng.integers(0, size, size=size)
        mask[np.arange(size), keep] = False  # at least one live entry per row
        t[mask] = 0.0
    p0 /= p0.sum()
    t /= t.sum(axis=1, keepdims=True)
    return MarkovModel(Alphabet(names), p0, t)


def total_variation(counts: dict, expected: dict, total: int) -> float:
    keys = set(counts) | set(expected)
    return 0.5 * sum(
        abs(counts.get(k, 0) / total - expected.get(k, 0.0)) for k in keys
    )


def random_cnf_grammar(rng: np.random.Generator, max_nt: int, alphabet):
    """Random valid CNF grammar (productive and reachable by construction)."""
    from chainbound.errors import GrammarError
    from chainbound.grammar import CnfGrammar

    for _ in range(5000):
        nv = int(rng.integers(1, max_nt + 1))
        names = tuple(f"N{k}" for k in range(nv))
        n_term = int(rng.integers(1, nv + 2))
        n_bin = int(rng.integers(1, 2 * nv + 2))
        terminal_rules = {
            (int(rng.integers(0, nv)), int(rng.integers(0, alphabet.size)))
            for _ in range(n_term)
        }
        binary_rules = {
            (
                int(rng.integers(0, nv)),
                int(rng.integers(0, nv)),
                int(rng.integers(0, nv)),
            )
            for _ in range(n_bin)
        }
        try:
            return CnfGrammar(
                names,
                alphabet,
                tuple(sorted(binary_rules)),
                tuple(sorted(terminal_rules)),
                0,
            )
        except GrammarError:
            continue
    raise AssertionError("random grammar generation failed to converge")


def screened_grammars(rng, count, max_nt, alphabet, screen, bound=8):
    """Generate random CNF grammars passing a screening predicate."""
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        assert attempts < 20_000, "screened grammar generation stuck"
        g = random_cnf_grammar(rng, max_nt, alphabet)
        if screen(g, bound):
            out.append(g)
    return out


def _random_sigma(rng: np.random.Generator, size: int):
    if rng.random() < 0.5:
        return None
    return tuple(int(v) for v in rng.permutation(size))


def random_noncrossing(rng: np.random.Generator, n: int, size: int):
    """Random set of pairwise disjoint closed intervals with sigmas."""
    from chainbound.equalities import EqualityConstraint, EqualitySet

    constraints = []
    pos = 1
    while pos + 1 <= n:
        i = int(rng.integers(pos, n))
        j = int(rng.integers(i + 1, n + 1))
        constraints.append(
            EqualityConstraint(i, j, _random_sigma(rng, size))
        )
        pos = j + 1
        if rng.random() < 0.3:
            break
    return EqualitySet(n, tuple(constraints))


def random_repeated(rng: np.random.Generator, n: int, size: int):
    """Random order-preserving pairing: all i's before all j's."""
    from chainbound.equalities import EqualityConstraint, EqualitySet

    k = int(rng.integers(1, max(2, n // 2)))
    positions = sorted(rng.choice(np.arange(1, n + 1), 2 * k, replace=False))
    firsts, seconds = positions[:k], positions[k:]
    constraints = tuple(
        EqualityConstraint(int(i), int(j), _random_sigma(rng, size))
        for i, j in zip(firsts, seconds)
    )
    return EqualitySet(n, constraints)


def random_palindromic(rng: np.random.Generator, n: int, size: int):
    """Random fully nested pairing i_1 < ... < i_K < j_K < ... < j_1."""
    from chainbound.equalities import EqualityConstraint, EqualitySet

    k = int(rng.integers(1, max(2, n // 2)))
    positions = sorted(rng.choice(np.arange(1, n + 1), 2 * k, replace=False))
    firsts, seconds = positions[:k], positions[k:][::-1]
    constraints = tuple(
        EqualityConstraint(int(i), int(j), _random_sigma(rng, size))
        for i, j in zip(firsts, seconds)
    )
    return EqualitySet(n, constraints)

"""Span/boundary dynamic program for grammar-constrained Markov mass.

For every span (i, j) and nonterminal V the chart holds the joint

    joint[i, j][V, x, y] = P(V derives X_i .. X_{i+j-1}, X_i = x, X_{i+j-1} = y)

computed bottom-up over span lengths: a span is split at k, summing over
binary rules V -> A B and over the two letters that meet at the split,
so A's right boundary is stitched to B's left boundary through one
transition-matrix factor.  B's table enters in left-conditional form
(its leading chain marginal divided out) so the chain weight of the
concatenation is counted exactly once.

The recurrence adds the weight of every parse tree; for an unambiguous
grammar trees and words are in bijection and the start cell of the full
span is exactly P(L_G^n).  For an ambiguous grammar the same number
counts each word once per parse (strictly more); construction therefore
probes ambiguity up to a small bound and records a warning.

A top-down pass over the same tables yields an exact sampler and exact
per-position conditional marginals.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DomainError,
    EnumerationGuardError,
    GrammarError,
    NullEventError,
)
from .grammar import CnfGrammar, check_ambiguity_bounded
from .markov import Chain, Word, choice_from_weights

DEFAULT_AMBIGUITY_PROBE = 6


class BoundaryChart:
    """Filled span chart plus the cached chain position marginals."""

    def __init__(self, model, grammar, n, joints, conds, pis, warnings):
        self.model = model
        self.grammar = grammar
        self.n = n
        self.joints = joints      # (i, j) -> array [nt, A, A]
        self.conds = conds        # (i, j) -> joint with P(X_i=x) divided out
        self.position_marginals = pis  # [n, A] unconstrained chain marginals
        self.warnings = list(warnings)

    def joint(self, i: int, j: int) -> np.ndarray:
        return self.joints[(i, j)]

    def marginal(self, i: int, j: int, v: int) -> float:
        """P(V_i^j = 1): the boundary joint summed over both letters."""
        return float(self.joints[(i, j)][v].sum())


def _check_alphabets(model: Chain, g: CnfGrammar) -> None:
    if model.alphabet.symbols != g.terminals.symbols:
        raise GrammarError(
            "grammar terminals and model alphabet differ: "
            f"{g.terminals.symbols} vs {model.alphabet.symbols}"
        )


def chain_position_marginals(model: Chain, n: int) -> np.ndarray:
    """Unconstrained P(X_t = x) for every position, one forward sweep."""
    a = model.alphabet.size
    out = np.zeros((n, a))
    out[0] = model.initial()
    for t in range(1, n):
        out[t] = out[t - 1] @ model.step_matrix(t)
    return out


def build_chart(
    model: Chain,
    g: CnfGrammar,
    n: int,
    ambiguity_probe: int | None = DEFAULT_AMBIGUITY_PROBE,
) -> BoundaryChart:
    """Fill the boundary chart bottom-up by span length."""
    _check_alphabets(model, g)
    if n < 1:
        raise NullEventError("length-0 queries are rejected")
    if model.length is not None and model.length != n:
        raise GrammarError(
            f"chain has fixed length {model.length}, requested {n}"
        )
    warnings = []
    if ambiguity_probe is not None:
        probe = min(n, ambiguity_probe)
        try:
            witness = check_ambiguity_bounded(g, probe)
        except EnumerationGuardError:
            witness = None
            warnings.append(
                f"ambiguity probe up to length {probe} skipped "
                f"(enumeration guard)"
            )
        if witness is not None:
            warnings.append(
                "grammar is ambiguous (witness "
                f"{''.join(g.terminals.spell(witness))!r}); "
                "partition counts every parse of a word, not every word"
            )

    a = model.alphabet.size
    nv = len(g.nonterminals)
    pis = chain_position_marginals(model, n)
    heads = np.array([r[0] for r in g.binary_rules], dtype=int)
    lefts = np.array([r[1] for r in g.binary_rules], dtype=int)
    rights = np.array([r[2] for r in g.binary_rules], dtype=int)

    joints: dict[tuple[int, int], np.ndarray] = {}
    conds: dict[tuple[int, int], np.ndarray] = {}

    def finish(i: int, j: int, table: np.ndarray) -> None:
        joints[(i, j)] = table
        pi = pis[i - 1]
        cond = np.zeros_like(table)
        np.divide(
            table,
            pi[np.newaxis, :, np.newaxis],
            out=cond,
            where=pi[np.newaxis, :, np.newaxis] > 0,
        )
        conds[(i, j)] = cond

    for i in range(1, n + 1):
        base = np.zeros((nv, a, a))
        for v, x in g.terminal_rules:
            base[v, x, x] = pis[i - 1, x]
        finish(i, 1, base)

    for j in range(2, n + 1):
        for i in range(1, n - j + 2):
            acc = np.zeros((nv, a, a))
            for k in range(1, j):
                step = model.step_matrix(i + k - 1)
                bridged = joints[(i, k)] @ step
                products = np.matmul(
                    bridged[lefts], conds[(i + k, j - k)][rights]
                )
                np.add.at(acc, heads, products)
            finish(i, j, acc)

    return BoundaryChart(model, g, n, joints, conds, pis, warnings)


def partition_unambiguous(chart: BoundaryChart, g: CnfGrammar) -> float:
    """P(L_G^n): the start cell of the full span."""
    return chart.marginal(1, chart.n, g.start)


class _TopDown:
    """Shared traversal machinery for sampling and marginal accumulation.

    The choice weights at a node (V, i, j, x, y) enumerate (split k,
    rule V -> A B, meeting letters u, v); they sum to the node's own
    joint entry, which is what makes both the sampler and the mass
    propagation exact.
    """

    def __init__(self, chart: BoundaryChart, model: Chain, g: CnfGrammar):
        _check_alphabets(model, g)
        self.chart = chart
        self.model = model
        self.g = g
        self.a = model.alphabet.size
        self._cache: dict[tuple, tuple[list, np.ndarray]] = {}

    def root_weights(self) -> np.ndarray:
        return self.chart.joint(1, self.chart.n)[self.g.start]

    def partition(self) -> float:
        return float(self.root_weights().sum())

    def choices(self, v: int, i: int, j: int, x: int, y: int):
        key = (v, i, j, x, y)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        chart, g, a = self.chart, self.g, self.a
        labels: list[tuple[int, int, int, int, int]] = []
        weights: list[np.ndarray] = []
        for k in range(1, j):
            step = self.model.step_matrix(i + k - 1)
            left = chart.joint(i, k)
            right = chart.conds[(i + k, j - k)]
            for a_sym, b_sym in g.rules_by_head[v]:
                w = (left[a_sym, x, :, np.newaxis] * step) * right[
                    b_sym, np.newaxis, :, y
                ]
                weights.append(w.ravel())
                labels.extend(
                    (k, a_sym, b_sym, u, vv)
                    for u in range(a)
                    for vv in range(a)
                )
        flat = (
            np.concatenate(weights) if weights else np.zeros(0)
        )
        out = (labels, flat)
        self._cache[key] = out
        return out


def sample_word_unambiguous(
    chart: BoundaryChart,
    model: Chain,
    g: CnfGrammar,
    rng: np.random.Generator,
    _walker: _TopDown | None = None,
) -> Word:
    """Draw a word with probability P(w) 1[w in L_G^n] / Z.

    Samples the root boundary pair from the start cell, then recursively
    a split, rule and meeting letters proportional to their contribution.
    Pass a prebuilt _TopDown via make_walker() when drawing many samples.
    """
    walker = _walker if _walker is not None else _TopDown(chart, model, g)
    if walker.partition() <= 0.0:
        raise NullEventError("the grammar event has probability 0")
    root = walker.root_weights()
    flat = int(choice_from_weights(rng, root.ravel()))
    x, y = divmod(flat, walker.a)
    out = [0] * chart.n

    def rec(v: int, i: int, j: int, xx: int, yy: int) -> None:
        if j == 1:
            out[i - 1] = xx
            return
        labels, weights = walker.choices(v, i, j, xx, yy)
        k, a_sym, b_sym, u, vv = labels[choice_from_weights(rng, weights)]
        rec(a_sym, i, k, xx, u)
        rec(b_sym, i + k, j - k, vv, yy)

    rec(g.start, 1, chart.n, x, y)
    return tuple(out)


def make_walker(chart: BoundaryChart, model: Chain, g: CnfGrammar) -> _TopDown:
    """Prebuild the traversal cache shared by repeated sampler calls."""
    return _TopDown(chart, model, g)


def conditional_marginals(
    chart: BoundaryChart, model: Chain, g: CnfGrammar
) -> np.ndarray:
    """Exact P(X_t = a | w in L_G^n) for every position, [n, A] table.

    The sampler's choice distributions are followed with probability
    accumulation instead of random choices: node masses flow down to
    the leaves, where they land on (position, letter) pairs.
    """
    walker = _TopDown(chart, model, g)
    z = walker.partition()
    if z <= 0.0:
        raise NullEventError("the grammar event has probability 0")
    n, a = chart.n, walker.a
    down: dict[tuple[int, int, int, int, int], float] = {}
    root = walker.root_weights()
    for x in range(a):
        for y in range(a):
            if root[x, y] > 0.0:
                down[(g.start, 1, n, x, y)] = float(root[x, y])
    table = np.zeros((n, a))
    for j in range(n, 1, -1):
        for key in [k for k in down if k[2] == j]:
            mass = down.pop(key)
            v, i, _, x, y = key
            labels, weights = walker.choices(v, i, j, x, y)
            total = weights.sum()
            if total <= 0.0 or mass <= 0.0:
                continue
            scale = mass / total
            for label, w in zip(labels, weights):
                if w <= 0.0:
                    continue
                k, a_sym, b_sym, u, vv = label
                lk = (a_sym, i, k, x, u)
                rk = (b_sym, i + k, j - k, vv, y)
                down[lk] = down.get(lk, 0.0) + w * scale
                down[rk] = down.get(rk, 0.0) + w * scale
    for (v, i, j, x, y), mass in down.items():
        if j == 1:
            table[i - 1, x] += mass
    return table / z


def conditional_marginal(
    chart: BoundaryChart, model: Chain, g: CnfGrammar, t: int
) -> np.ndarray:
    """Distribution of X_t conditioned on grammar membership."""
    if not 1 <= t <= chart.n:
        raise DomainError(f"position {t} outside 1..{chart.n}")
    return conditional_marginals(chart, model, g)[t - 1]

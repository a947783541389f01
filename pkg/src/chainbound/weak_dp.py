"""Partition and sampling for weakly-ambiguous grammars.

An ambiguous grammar breaks the tree-sum DP because a word with several
parses is counted once per parse.  When distinct nonterminals generate
disjoint languages (weak ambiguity), words can still be partitioned by
their *canonical* parse tree: the minimum under a total order that
compares leaf counts first and then (root label, left subtree, right
subtree) lexicographically, using the fixed symbol order (nonterminals
in declaration order, then terminals).

Because trees with the same root split form a cartesian product of left
and right subtrees, the canonical tree's root decomposition is simply
the lexicographically least triple (k, A, B) with a valid rule V -> A B
whose blocks are derivable, and its subtrees are again canonical.  The
chart therefore stores, per rule and split, the mass of words whose
canonical decomposition is exactly that split: the plain pair mass
P(A_i^k, B_{i+k}^{j-k}) minus the mass of words that also admit an
earlier split k' < k.  Each subtraction term for an earlier rule
V -> C D routes through a bridging symbol E spanning i+k' .. i+k-1 and
is a boundary-stitched chain of the *already corrected* k' left factor
with E (then the cell's own bridge and right block), restricted to
bridging symbols for which rules A -> C E and D -> E B exist.  Reusing
corrected factors makes the subtracted sets disjoint across k' (a word
is removed at its canonical split only), and the rule restriction makes
every term a true subset of the cell it is subtracted from.

The known limitation of this printed correction: two parses may overlap
*without* sharing a node on the k'/k cut when subtree splits misalign;
such words are missed by the subtraction.  This cannot happen when the
grammar is unambiguous (all corrections are then exactly zero) and did
not occur in randomized oracle screening at the scales tested, but a
handcrafted counterexample is documented in the test-suite; results on
grammars with that structure would overcount and the chart flags any
negative cell instead of silently clamping real mass.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    EnumerationGuardError,
    GrammarError,
    InternalConsistencyError,
    NoParseError,
    NullEventError,
)
from .grammar import (
    CnfGrammar,
    ParseChart,
    ParseTree,
    check_weak_ambiguity_bounded,
    enumerate_parse_trees,
)
from .markov import Chain, Word, choice_from_weights
from .span_dp import chain_position_marginals

DEFAULT_WEAKNESS_PROBE = 6
NEGATIVE_CELL_TOLERANCE = 1e-9
_SAMPLE_ATTEMPT_CAP = 100_000


# Tree order -----------------------------------------------------------------

def tree_less(t1: ParseTree, t2: ParseTree) -> bool:
    """Total order on parse trees: leaf count, then recursive lexicographic."""
    if t1.leaves != t2.leaves:
        return t1.leaves < t2.leaves
    if t1.children is None:
        return (t1.head, t1.terminal) < (t2.head, t2.terminal)
    if t1.head != t2.head:
        return t1.head < t2.head
    if t1.children[0] != t2.children[0]:
        return tree_less(t1.children[0], t2.children[0])
    if t1.children[1] != t2.children[1]:
        return tree_less(t1.children[1], t2.children[1])
    return False


def canonical_tree(g: CnfGrammar, word: Word, head: int | None = None):
    """Minimum parse tree by exhaustive enumeration (reference oracle)."""
    trees = enumerate_parse_trees(g, word, head)
    if not trees:
        raise NoParseError(
            f"word {word} has no parse from the requested symbol"
        )
    best = trees[0]
    for t in trees[1:]:
        if tree_less(t, best):
            best = t
    return best


def canonical_root_split(
    g: CnfGrammar, word: Word, head: int | None = None
) -> tuple[int, int, int] | None:
    """Lex-least existing split triple (k, A, B): the DP's cell assignment.

    Length-1 words have no split and yield None.
    """
    if head is None:
        head = g.start
    n = len(word)
    if n == 1:
        return None
    chart = ParseChart(g, tuple(word))
    best = None
    for a, b in g.rules_by_head[head]:
        for k in range(1, n):
            if chart.cell(1, k, a) and chart.cell(1 + k, n - k, b):
                cand = (k, a, b)
                if best is None or cand < best:
                    best = cand
    return best


def check_split_alignment_bounded(
    g: CnfGrammar, max_len: int, guard: int = 10**7
) -> tuple[Word, int, int, int] | None:
    """Audit the structural premise of the canonical-split correction.

    For every word w of length <= max_len, every head V and every pair
    (first split k* with labels C, D; later split k with labels A, B) of
    w under V, the correction scheme removes w's mass from the k cell
    through a bridging symbol E deriving w[k*+1 .. k] with rules
    A -> C E and D -> E B.  This audit searches for a configuration
    where no such E exists: on such grammars two parses of a word
    overlap without the aligned intermediate node the correction relies
    on, and the computed partition deviates from the truth (the negative
    branch of the oracle-equivalence suite).  None certifies the scheme
    exact for all sequence lengths <= max_len.
    """
    from .grammar import _iter_words  # shared enumeration guard

    for word in _iter_words(g.terminals.size, max_len, guard):
        chart = ParseChart(g, word)
        n = len(word)
        if n < 3:
            continue
        for v in range(len(g.nonterminals)):
            splits = []
            for k in range(1, n):
                for a, b in g.rules_by_head[v]:
                    if chart.cell(1, k, a) and chart.cell(1 + k, n - k, b):
                        splits.append((k, a, b))
            if len(splits) < 2:
                continue
            k_first, c, d = splits[0]
            for k, a, b in splits[1:]:
                if k == k_first:
                    continue
                bridges = chart.derivers(1 + k_first, k - k_first)
                if not any(
                    (a, c, e) in g.has_binary_rule
                    and (d, e, b) in g.has_binary_rule
                    for e in bridges
                ):
                    return word, v, k_first, k
    return None


# Chart ----------------------------------------------------------------------

class CanonicalPartitionTable:
    """Canonical-split chart: event joints plus per-cell left factors.

    For the cell of rule V -> A B splitting a span that starts at i after
    k letters, the stored matrix cell_left[(i, k, rule)][x, u] is
    P(A_i^k, X_i = x, X_{i+k-1} = u) minus the earlier-split correction
    mass; the full cell refinement over a span of length j factors as
    cell_left[x, u] * T[u, v] * cond_B[v, y].  The left factor does not
    depend on j: every subtraction term shares the cell's own bridge and
    right-block factors.
    """

    def __init__(self, model, grammar, n):
        self.model = model
        self.grammar = grammar
        self.n = n
        self.spanjoints: dict[tuple[int, int], np.ndarray] = {}
        self.spanconds: dict[tuple[int, int], np.ndarray] = {}
        self.cell_left: dict[tuple[int, int, int], np.ndarray] = {}
        self.corrected_cells: set[tuple[int, int, int]] = set()
        self.corrections_applied = 0
        self.warnings: list[str] = []
        self.position_marginals = chain_position_marginals(model, n)

    def spanjoint(self, i: int, j: int) -> np.ndarray:
        return self.spanjoints[(i, j)]

    def span_marginal(self, i: int, j: int, v: int) -> float:
        return float(self.spanjoints[(i, j)][v].sum())

    def cell_mass(self, i: int, j: int, k: int, rule_index: int) -> float:
        """Total mass of the hatted cell (summed over all boundary letters)."""
        _, _, b = self.grammar.binary_rules[rule_index]
        left = self.cell_left[(i, k, rule_index)]
        step = self.model.step_matrix(i + k - 1)
        right = self.spanconds[(i + k, j - k)][b]
        return float(((left @ step) @ right).sum())


def build_weak_chart(
    model: Chain,
    g: CnfGrammar,
    n: int,
    weakness_probe: int | None = DEFAULT_WEAKNESS_PROBE,
) -> CanonicalPartitionTable:
    """Fill the canonical-split chart bottom-up by span length."""
    if model.alphabet.symbols != g.terminals.symbols:
        raise GrammarError(
            "grammar terminals and model alphabet differ: "
            f"{g.terminals.symbols} vs {model.alphabet.symbols}"
        )
    if n < 1:
        raise NullEventError("length-0 queries are rejected")
    if model.length is not None and model.length != n:
        raise GrammarError(
            f"chain has fixed length {model.length}, requested {n}"
        )
    table = CanonicalPartitionTable(model, g, n)
    if weakness_probe is not None:
        probe = min(n, weakness_probe)
        try:
            violation = check_weak_ambiguity_bounded(g, probe)
        except EnumerationGuardError:
            violation = None
            table.warnings.append(
                f"weak-ambiguity probe up to length {probe} skipped "
                f"(enumeration guard)"
            )
        if violation is not None:
            va, vb, word = violation
            table.warnings.append(
                "languages are not disjoint: "
                f"{g.nonterminals[va]} and {g.nonterminals[vb]} both derive "
                f"{''.join(g.terminals.spell(word))!r}; weak-ambiguity "
                "correction is only guaranteed for disjoint languages"
            )
        try:
            misaligned = check_split_alignment_bounded(g, probe)
        except EnumerationGuardError:
            misaligned = None
        if misaligned is not None:
            word, v, k_first, k_later = misaligned
            table.warnings.append(
                f"split alignment fails for {g.nonterminals[v]} on "
                f"{''.join(g.terminals.spell(word))!r} (splits {k_first} vs "
                f"{k_later}): the canonical-split correction will miss this "
                "overlap and the partition overcounts such words"
            )

    a = model.alphabet.size
    nv = len(g.nonterminals)
    pis = table.position_marginals
    has_rule = g.has_binary_rule
    rules = g.binary_rules

    def finish(i: int, j: int, joint: np.ndarray) -> None:
        table.spanjoints[(i, j)] = joint
        pi = pis[i - 1]
        cond = np.zeros_like(joint)
        np.divide(
            joint,
            pi[np.newaxis, :, np.newaxis],
            out=cond,
            where=pi[np.newaxis, :, np.newaxis] > 0,
        )
        table.spanconds[(i, j)] = cond

    for i in range(1, n + 1):
        base = np.zeros((nv, a, a))
        for v, x in g.terminal_rules:
            base[v, x, x] = pis[i - 1, x]
        finish(i, 1, base)

    def cell_left(i: int, length: int, ridx: int) -> np.ndarray:
        """Hatted left factor for rule ridx with a left block of `length`.

        Subtracts, for every earlier cut k' < length, the mass of words
        that also admit a split at k'.  Each subtraction term reuses the
        *hatted* left factor of the k' cell, so a word with several
        earlier splits is removed exactly once -- at its canonical
        (least) split -- mirroring the disjoint union over earlier
        canonical cells.
        """
        key = (i, length, ridx)
        hit = table.cell_left.get(key)
        if hit is not None:
            return hit
        v, a_sym, b_sym = rules[ridx]
        left = table.spanjoints[(i, length)][a_sym].copy()
        corrected = False
        for kp in range(1, length):
            # A word's earlier-split labels (C, E) are unique under weak
            # ambiguity, so each (C, E) chain fires once even when several
            # rules V -> C D' witness it.
            fired: set[tuple[int, int]] = set()
            for ridx2, (v2, c_sym, d_sym) in enumerate(rules):
                if v2 != v:
                    continue
                base = None
                for e_sym in range(nv):
                    if (c_sym, e_sym) in fired:
                        continue
                    if (a_sym, c_sym, e_sym) not in has_rule:
                        continue
                    if (d_sym, e_sym, b_sym) not in has_rule:
                        continue
                    fired.add((c_sym, e_sym))
                    if base is None:
                        base = cell_left(i, kp, ridx2) @ model.step_matrix(
                            i + kp - 1
                        )
                    term = base @ table.spanconds[(i + kp, length - kp)][e_sym]
                    if term.any():
                        table.corrections_applied += 1
                        corrected = True
                    left -= term
        floor = float(left.min())
        if floor < -NEGATIVE_CELL_TOLERANCE:
            raise InternalConsistencyError(
                f"cell (i={i}, left length={length}, rule {ridx}) went "
                f"negative by {-floor:.3e}: the correction subtracted mass "
                "the pair term never held (see module docstring on "
                "misaligned parses)"
            )
        np.clip(left, 0.0, None, out=left)
        table.cell_left[key] = left
        if corrected:
            table.corrected_cells.add(key)
        return left

    for j in range(2, n + 1):
        for i in range(1, n - j + 2):
            joint = np.zeros((nv, a, a))
            for k in range(1, j):
                step = model.step_matrix(i + k - 1)
                for ridx, (v, _, b_sym) in enumerate(rules):
                    joint[v] += (cell_left(i, k, ridx) @ step) @ (
                        table.spanconds[(i + k, j - k)][b_sym]
                    )
            finish(i, j, joint)
    return table


def partition_weak(table: CanonicalPartitionTable, g: CnfGrammar) -> float:
    """P(L_G^n) with every word counted once via its canonical tree."""
    return table.span_marginal(1, table.n, g.start)


# Sampling -------------------------------------------------------------------

class WeakSampler:
    """Exact sampler over the canonical-split chart.

    Nodes choose (split, rule, meeting letters) proportional to corrected
    cell mass.  Where a cell carries a nonzero correction its children
    are resampled until the concatenated word admits no earlier split,
    mirroring the subtraction exactly; uncorrected cells (the common
    case, and all cells of unambiguous grammars) accept immediately.
    """

    def __init__(self, table: CanonicalPartitionTable, model: Chain,
                 g: CnfGrammar):
        if model.alphabet.symbols != g.terminals.symbols:
            raise GrammarError("model alphabet does not match the grammar")
        self.table = table
        self.model = model
        self.g = g
        self.a = model.alphabet.size
        self.partition = partition_weak(table, g)
        if self.partition <= 0.0:
            raise NullEventError("the grammar event has probability 0")
        self._choice_cache: dict[tuple, tuple[list, np.ndarray]] = {}

    def _choices(self, v: int, i: int, j: int, x: int, y: int):
        key = (v, i, j, x, y)
        hit = self._choice_cache.get(key)
        if hit is not None:
            return hit
        labels: list[tuple[int, int, int, int]] = []
        weights: list[np.ndarray] = []
        for k in range(1, j):
            step = self.model.step_matrix(i + k - 1)
            for ridx, (vv, _, b_sym) in enumerate(self.g.binary_rules):
                if vv != v:
                    continue
                left = self.table.cell_left[(i, k, ridx)]
                w = (left[x, :, np.newaxis] * step) * self.table.spanconds[
                    (i + k, j - k)
                ][b_sym, np.newaxis, :, y]
                weights.append(w.ravel())
                labels.extend(
                    (k, ridx, u, vv2)
                    for u in range(self.a)
                    for vv2 in range(self.a)
                )
        flat = np.concatenate(weights) if weights else np.zeros(0)
        out = (labels, flat)
        self._choice_cache[key] = out
        return out

    def _has_earlier_split(self, v: int, word: Word, k: int) -> bool:
        chart = ParseChart(self.g, word)
        n = len(word)
        for kp in range(1, k):
            for c_sym, d_sym in self.g.rules_by_head[v]:
                if chart.cell(1, kp, c_sym) and chart.cell(
                    1 + kp, n - kp, d_sym
                ):
                    return True
        return False

    def _rec(self, v: int, i: int, j: int, x: int, y: int, rng) -> Word:
        if j == 1:
            return (x,)
        labels, weights = self._choices(v, i, j, x, y)
        k, ridx, u, vv = labels[choice_from_weights(rng, weights)]
        _, a_sym, b_sym = self.g.binary_rules[ridx]
        rejectable = (i, k, ridx) in self.table.corrected_cells
        for _ in range(_SAMPLE_ATTEMPT_CAP):
            left = self._rec(a_sym, i, k, x, u, rng)
            right = self._rec(b_sym, i + k, j - k, vv, y, rng)
            word = left + right
            if not rejectable or not self._has_earlier_split(v, word, k):
                return word
        raise InternalConsistencyError(
            "sampler rejection loop failed to terminate"
        )

    def sample(self, rng: np.random.Generator) -> Word:
        root = self.table.spanjoint(1, self.table.n)[self.g.start]
        flat = int(choice_from_weights(rng, root.ravel()))
        x, y = divmod(flat, self.a)
        return self._rec(self.g.start, 1, self.table.n, x, y, rng)


def sample_word_weak(
    table: CanonicalPartitionTable,
    model: Chain,
    g: CnfGrammar,
    rng: np.random.Generator,
    _sampler: WeakSampler | None = None,
) -> Word:
    """Draw one word with probability P(w) / Z over L_G^n."""
    sampler = _sampler if _sampler is not None else WeakSampler(table, model, g)
    return sampler.sample(rng)

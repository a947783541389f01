"""Context-free grammars, Chomsky normal form, CYK, ambiguity checks.

Grammars are read from a small text format, one rule per line::

    # first left-hand side is the start symbol
    S -> A B
    S -> 'a'

Quoted symbols are terminals.  A pipe may separate alternatives on one
line.  Epsilon rules are rejected: every query concerns words of length
at least one, so the empty word never matters here.

The CNF form keeps nonterminals in declaration order (fresh helper
symbols appended); that order is also the total order used by the
canonical parse-tree machinery, so it is part of the observable
behaviour and is reported by the CLI.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, EnumerationGuardError, GrammarError
from .markov import Alphabet, Word

AMBIGUITY_GUARD = 10**7


@dataclass(frozen=True)
class Cfg:
    """General context-free grammar (no epsilon rules)."""

    nonterminals: tuple[str, ...]
    terminals: Alphabet
    rules: tuple[tuple[str, tuple[str, ...]], ...]
    start: str

    def __post_init__(self):
        nts = set(self.nonterminals)
        if len(nts) != len(self.nonterminals):
            raise GrammarError("duplicate nonterminal names")
        if nts & set(self.terminals.symbols):
            raise GrammarError("nonterminals and terminals must be disjoint")
        if self.start not in nts:
            raise GrammarError(f"start symbol {self.start!r} is undeclared")
        for lhs, rhs in self.rules:
            if lhs not in nts:
                raise GrammarError(f"rule head {lhs!r} is not a nonterminal")
            if len(rhs) == 0:
                raise GrammarError("epsilon rules are not supported")
            for sym in rhs:
                if sym not in nts and sym not in self.terminals.symbols:
                    raise GrammarError(f"unknown symbol {sym!r} in rule body")


class CnfGrammar:
    """Grammar in Chomsky normal form: rules V -> A B and V -> a.

    Construction checks that every nonterminal is productive and
    reachable; conversions via to_cnf prune offenders before building.
    """

    def __init__(
        self,
        nonterminals: tuple[str, ...],
        terminals: Alphabet,
        binary_rules: tuple[tuple[int, int, int], ...],
        terminal_rules: tuple[tuple[int, int], ...],
        start: int = 0,
    ):
        self.nonterminals = tuple(nonterminals)
        self.terminals = terminals
        self.binary_rules = tuple(binary_rules)
        self.terminal_rules = tuple(terminal_rules)
        self.start = start
        nv = len(self.nonterminals)
        if len(set(self.nonterminals)) != nv:
            raise GrammarError("duplicate nonterminal names")
        if set(self.nonterminals) & set(terminals.symbols):
            raise GrammarError("nonterminals and terminals must be disjoint")
        if not 0 <= start < nv:
            raise GrammarError("start symbol index out of range")
        for v, a, b in self.binary_rules:
            if not (0 <= v < nv and 0 <= a < nv and 0 <= b < nv):
                raise GrammarError("binary rule references unknown symbol")
        for v, x in self.terminal_rules:
            if not (0 <= v < nv and 0 <= x < terminals.size):
                raise GrammarError("terminal rule references unknown symbol")
        bad = self._unproductive() or self._unreachable()
        if bad:
            names = ", ".join(self.nonterminals[v] for v in sorted(bad))
            raise GrammarError(
                f"nonterminals not both productive and reachable: {names}"
            )

    def _unproductive(self) -> set[int]:
        productive = {v for v, _ in self.terminal_rules}
        changed = True
        while changed:
            changed = False
            for v, a, b in self.binary_rules:
                if v not in productive and a in productive and b in productive:
                    productive.add(v)
                    changed = True
        return set(range(len(self.nonterminals))) - productive

    def _unreachable(self) -> set[int]:
        reachable = {self.start}
        changed = True
        while changed:
            changed = False
            for v, a, b in self.binary_rules:
                if v in reachable:
                    for s in (a, b):
                        if s not in reachable:
                            reachable.add(s)
                            changed = True
        return set(range(len(self.nonterminals))) - reachable

    @cached_property
    def rules_by_head(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {
            v: [] for v in range(len(self.nonterminals))
        }
        for v, a, b in self.binary_rules:
            out[v].append((a, b))
        return out

    @cached_property
    def terminal_map(self) -> dict[int, list[int]]:
        """terminal index -> heads with a rule V -> a."""
        out: dict[int, list[int]] = {x: [] for x in range(self.terminals.size)}
        for v, x in self.terminal_rules:
            out[x].append(v)
        return out

    @cached_property
    def has_binary_rule(self) -> set[tuple[int, int, int]]:
        return set(self.binary_rules)

    def __repr__(self):
        return (
            f"CnfGrammar({len(self.nonterminals)} nonterminals, "
            f"{len(self.binary_rules)} binary rules, "
            f"{len(self.terminal_rules)} terminal rules)"
        )


# Text and JSON formats ------------------------------------------------------

def _strip_quotes(tok: str) -> str | None:
    if len(tok) >= 3 and tok[0] == tok[-1] and tok[0] in "'\"":
        return tok[1:-1]
    return None


def parse_grammar_text(text: str) -> Cfg:
    """Parse the one-rule-per-line format; first head is the start symbol."""
    raw: list[tuple[str, tuple[str, ...]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise GrammarError(f"line {lineno}: expected 'HEAD -> BODY'")
        head, body = line.split("->", 1)
        head = head.strip()
        if not head or _strip_quotes(head) is not None:
            raise GrammarError(f"line {lineno}: bad rule head {head!r}")
        for alt in body.split("|"):
            toks = alt.split()
            if not toks:
                raise GrammarError(f"line {lineno}: empty alternative")
            raw.append((head, tuple(toks)))
    if not raw:
        raise GrammarError("no rules found")
    if not any(
        _strip_quotes(tok) is not None for _, toks in raw for tok in toks
    ):
        raise GrammarError("grammar declares no terminals")
    heads = [h for h, _ in raw]
    nonterminals = tuple(dict.fromkeys(heads))
    terminals: list[str] = []
    rules = []
    for head, toks in raw:
        rhs = []
        for tok in toks:
            lit = _strip_quotes(tok)
            if lit is not None:
                if lit not in terminals:
                    terminals.append(lit)
                rhs.append(lit)
            else:
                if tok not in nonterminals:
                    raise GrammarError(
                        f"symbol {tok!r} never appears as a rule head; "
                        f"quote it if it is a terminal"
                    )
                rhs.append(tok)
        rules.append((head, tuple(rhs)))
    return Cfg(nonterminals, Alphabet(tuple(terminals)), tuple(rules), heads[0])


def grammar_to_dict(cfg: Cfg) -> dict:
    """JSON mirror of the text format (terminals quoted)."""
    return {
        "start": cfg.start,
        "rules": [
            [
                lhs,
                [
                    f"'{sym}'" if sym in cfg.terminals.symbols else sym
                    for sym in rhs
                ],
            ]
            for lhs, rhs in cfg.rules
        ],
    }


def grammar_from_dict(d: dict) -> Cfg:
    try:
        lines = [
            f"{lhs} -> {' '.join(rhs)}" for lhs, rhs in d["rules"]
        ]
    except (KeyError, TypeError) as exc:
        raise GrammarError(f"bad grammar JSON: {exc}") from None
    cfg = parse_grammar_text("\n".join(lines))
    start = d.get("start", cfg.start)
    if start != cfg.start:
        cfg = Cfg(cfg.nonterminals, cfg.terminals, cfg.rules, start)
    return cfg


def load_grammar(path: str) -> Cfg:
    with open(path, encoding="utf-8") as fh:
        content = fh.read()
    stripped = content.lstrip()
    if stripped.startswith("{"):
        return grammar_from_dict(json.loads(content))
    return parse_grammar_text(content)


# Normalization --------------------------------------------------------------

def _fresh_name(base: str, taken: set[str]) -> str:
    name = base
    k = 1
    while name in taken:
        k += 1
        name = f"{base}{k}"
    taken.add(name)
    return name


def to_cnf(cfg: Cfg) -> CnfGrammar:
    """Convert to Chomsky normal form, preserving the language on A+.

    Terminal wrapping, binarization and unit elimination in the usual
    order; unproductive and unreachable symbols are pruned.  Raises when
    the start symbol derives no terminal string.
    """
    taken = set(cfg.nonterminals) | set(cfg.terminals.symbols)
    order: list[str] = list(cfg.nonterminals)
    terminals = set(cfg.terminals.symbols)

    # wrap terminals appearing in long bodies
    wrapper: dict[str, str] = {}
    wrapped: list[tuple[str, tuple[str, ...]]] = []
    wrapper_rules: list[tuple[str, tuple[str, ...]]] = []
    for lhs, rhs in cfg.rules:
        if len(rhs) >= 2:
            new_rhs = []
            for s in rhs:
                if s in terminals:
                    if s not in wrapper:
                        wrapper[s] = _fresh_name(f"T_{s}", taken)
                        order.append(wrapper[s])
                        wrapper_rules.append((wrapper[s], (s,)))
                    new_rhs.append(wrapper[s])
                else:
                    new_rhs.append(s)
            wrapped.append((lhs, tuple(new_rhs)))
        else:
            wrapped.append((lhs, rhs))
    wrapped.extend(wrapper_rules)

    # binarize long bodies
    rules: list[tuple[str, tuple[str, ...]]] = []
    for lhs, rhs in wrapped:
        while len(rhs) > 2:
            helper = _fresh_name(f"{lhs}_bin", taken)
            order.append(helper)
            rules.append((lhs, (rhs[0], helper)))
            lhs, rhs = helper, rhs[1:]
        rules.append((lhs, rhs))

    # eliminate unit rules via closure
    unit_pairs = {nt: {nt} for nt in order}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in rules:
            if len(rhs) == 1 and rhs[0] not in terminals:
                for nt in order:
                    if lhs in unit_pairs[nt] and rhs[0] not in unit_pairs[nt]:
                        unit_pairs[nt].add(rhs[0])
                        changed = True
    final: list[tuple[str, tuple[str, ...]]] = []
    seen: set[tuple[str, tuple[str, ...]]] = set()
    for nt in order:
        for lhs, rhs in rules:
            if lhs in unit_pairs[nt] and not (
                len(rhs) == 1 and rhs[0] not in terminals
            ):
                if (nt, rhs) not in seen:
                    seen.add((nt, rhs))
                    final.append((nt, rhs))

    index = {name: k for k, name in enumerate(order)}
    binary = []
    terminal = []
    for lhs, rhs in final:
        if len(rhs) == 2:
            binary.append((index[lhs], index[rhs[0]], index[rhs[1]]))
        else:
            if rhs[0] not in terminals:
                raise GrammarError("internal: unit rule survived elimination")
            terminal.append((index[lhs], cfg.terminals.index(rhs[0])))

    # prune: productive first, then reachable from the start
    productive = {v for v, _ in terminal}
    changed = True
    while changed:
        changed = False
        for v, a, b in binary:
            if v not in productive and a in productive and b in productive:
                productive.add(v)
                changed = True
    if index[cfg.start] not in productive:
        raise GrammarError("grammar generates no terminal string")
    binary = [
        r for r in binary
        if r[0] in productive and r[1] in productive and r[2] in productive
    ]
    reachable = {index[cfg.start]}
    changed = True
    while changed:
        changed = False
        for v, a, b in binary:
            if v in reachable and not {a, b} <= reachable:
                reachable |= {a, b}
                changed = True
    keep = sorted(productive & reachable, key=lambda v: v)
    remap = {old: new for new, old in enumerate(keep)}
    return CnfGrammar(
        tuple(order[v] for v in keep),
        cfg.terminals,
        tuple(
            (remap[v], remap[a], remap[b])
            for v, a, b in binary
            if v in remap and a in remap and b in remap
        ),
        tuple((remap[v], x) for v, x in terminal if v in remap),
        remap[index[cfg.start]],
    )


def align_terminals(g: CnfGrammar, alphabet: Alphabet) -> CnfGrammar:
    """Re-embed the grammar's terminals into a superset alphabet.

    The grammar-constrained dynamic programs require the grammar terminals
    and the model alphabet to be the identical ordered set; this rebuilds
    the grammar over the model's alphabet (extra symbols are simply never
    derivable).
    """
    if g.terminals.symbols == alphabet.symbols:
        return g
    missing = set(g.terminals.symbols) - set(alphabet.symbols)
    if missing:
        raise GrammarError(
            f"grammar terminals {sorted(missing)} missing from the alphabet"
        )
    remap = {
        old: alphabet.index(sym)
        for old, sym in enumerate(g.terminals.symbols)
    }
    return CnfGrammar(
        g.nonterminals,
        alphabet,
        g.binary_rules,
        tuple((v, remap[x]) for v, x in g.terminal_rules),
        g.start,
    )


# CYK ------------------------------------------------------------------------

class ParseChart:
    """Boolean CYK table: cell(i, j, V) <=> V derives w_i .. w_{i+j-1}."""

    def __init__(self, g: CnfGrammar, word: Word):
        n = len(word)
        self.n = n
        self.grammar = g
        nv = len(g.nonterminals)
        table = np.zeros((n + 1, n + 1, nv), dtype=bool)
        for i, x in enumerate(word, start=1):
            for v in g.terminal_map.get(x, ()):
                table[i, 1, v] = True
        for j in range(2, n + 1):
            for i in range(1, n - j + 2):
                for v, a, b in g.binary_rules:
                    if table[i, j, v]:
                        continue
                    for k in range(1, j):
                        if table[i, k, a] and table[i + k, j - k, b]:
                            table[i, j, v] = True
                            break
        self.table = table

    def cell(self, i: int, j: int, v: int) -> bool:
        return bool(self.table[i, j, v])

    def derivers(self, i: int, j: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.table[i, j])]

    @property
    def is_member(self) -> bool:
        return bool(self.table[1, self.n, self.grammar.start])


def _check_word(g: CnfGrammar, word: Word) -> None:
    if len(word) == 0:
        raise DomainError("length-0 queries are rejected")
    if any(not 0 <= x < g.terminals.size for x in word):
        raise DomainError("word contains symbols outside the grammar terminals")


def cyk_member(g: CnfGrammar, word: Word) -> ParseChart:
    """Fill the boolean span chart for a word (membership at the start cell)."""
    _check_word(g, word)
    return ParseChart(g, tuple(word))


def count_derivations(g: CnfGrammar, word: Word) -> int:
    """Number of distinct parse trees of the word (exact big integers)."""
    _check_word(g, word)
    word = tuple(word)
    n = len(word)
    nv = len(g.nonterminals)
    counts = [[[0] * nv for _ in range(n + 2)] for _ in range(n + 2)]
    for i, x in enumerate(word, start=1):
        for v in g.terminal_map.get(x, ()):
            counts[i][1][v] = 1
    for j in range(2, n + 1):
        for i in range(1, n - j + 2):
            row = counts[i][j]
            for v, a, b in g.binary_rules:
                total = 0
                for k in range(1, j):
                    total += counts[i][k][a] * counts[i + k][j - k][b]
                row[v] += total
    return counts[1][n][g.start]


def _iter_words(size: int, max_len: int, guard: int):
    total = sum(size**length for length in range(1, max_len + 1))
    if total > guard:
        raise EnumerationGuardError(
            f"enumerating {total} words exceeds the guard of {guard}"
        )
    for length in range(1, max_len + 1):
        yield from itertools.product(range(size), repeat=length)


def check_ambiguity_bounded(
    g: CnfGrammar, max_len: int, guard: int = AMBIGUITY_GUARD
) -> Word | None:
    """Shortest word of length <= max_len with two parses, if any."""
    for word in _iter_words(g.terminals.size, max_len, guard):
        if count_derivations(g, word) >= 2:
            return word
    return None


def check_weak_ambiguity_bounded(
    g: CnfGrammar, max_len: int, guard: int = AMBIGUITY_GUARD
) -> tuple[int, int, Word] | None:
    """First pair of distinct nonterminals sharing a word of length <= max_len.

    A None result certifies (up to the bound) the disjoint-languages
    property required by the weakly-ambiguous dynamic program.
    """
    for word in _iter_words(g.terminals.size, max_len, guard):
        chart = ParseChart(g, word)
        derivers = chart.derivers(1, len(word))
        if len(derivers) >= 2:
            return derivers[0], derivers[1], word
    return None


# Parse-tree enumeration (oracle machinery for tests and canonical trees) ----

@dataclass(frozen=True)
class ParseTree:
    """Binary parse tree; leaves carry the terminal they emit."""

    head: int
    terminal: int | None = None
    children: tuple["ParseTree", "ParseTree"] | None = None

    @cached_property
    def leaves(self) -> int:
        if self.children is None:
            return 1
        return self.children[0].leaves + self.children[1].leaves

    def word(self) -> Word:
        if self.children is None:
            return (self.terminal,)
        return self.children[0].word() + self.children[1].word()


def enumerate_parse_trees(
    g: CnfGrammar, word: Word, head: int | None = None
) -> list[ParseTree]:
    """All parse trees of the word rooted at head (default: start symbol)."""
    _check_word(g, word)
    word = tuple(word)
    if head is None:
        head = g.start
    memo: dict[tuple[int, int, int], list[ParseTree]] = {}

    def rec(v: int, i: int, j: int) -> list[ParseTree]:
        key = (v, i, j)
        if key in memo:
            return memo[key]
        out: list[ParseTree] = []
        if j == 1:
            x = word[i - 1]
            if v in g.terminal_map.get(x, ()):
                out.append(ParseTree(v, terminal=x))
        else:
            for a, b in g.rules_by_head[v]:
                for k in range(1, j):
                    for left in rec(a, i, k):
                        for right in rec(b, i + k, j - k):
                            out.append(ParseTree(v, children=(left, right)))
        memo[key] = out
        return out

    return rec(head, 1, len(word))

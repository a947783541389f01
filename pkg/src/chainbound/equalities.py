"""Binary equality constraints between sequence positions.

A constraint ties positions i < j through a bijection on the alphabet:
X_i must equal sigma(X_j); sigma defaults to the identity.  Exact
inference is polynomial for three topologies of the constraint set:

* non-crossing   -- the closed intervals [i, j] are pairwise disjoint;
* repeated       -- sorted by i, the j's are increasing too and every i
                    precedes every j (two sections walked in parallel);
* palindromic    -- fully nested: i_1 < ... < i_K < j_K < ... < j_1.

Anything else is the general case, which is refused (it is as hard as
counting CSP solutions).  All algorithms accept homogeneous models and
per-step inhomogeneous chains alike.

Each partition function reduces the chain to a sequence of "merged"
variables y_t = X_{j_t} (with X_{i_t} = sigma_t(y_t)) connected through
products of transition matrices over the free runs.  The same messages
drive the exact sampler, which first draws the merged values and then
fills every free run with a Markov bridge.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    NullEventError,
    TopologyError,
    UnsupportedTopologyError,
)
from .markov import Alphabet, Chain, Word, choice_from_weights


@dataclass(frozen=True)
class EqualityConstraint:
    """Require X_i = sigma(X_j); sigma is an index permutation or None."""

    i: int
    j: int
    sigma: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.i < 1 or self.j <= self.i:
            raise DomainError(
                f"constraint positions must satisfy 1 <= i < j, got "
                f"({self.i}, {self.j})"
            )
        if self.sigma is not None:
            sig = tuple(self.sigma)
            if sorted(sig) != list(range(len(sig))):
                raise DomainError(f"sigma {sig} is not a permutation")
            object.__setattr__(self, "sigma", sig)

    def sigma_array(self, a: int) -> np.ndarray:
        """sigma as an index array of size a; identity when unset."""
        if self.sigma is None:
            return np.arange(a)
        if len(self.sigma) != a:
            raise DomainError(
                f"sigma has size {len(self.sigma)}, alphabet has {a}"
            )
        return np.asarray(self.sigma, dtype=int)


@dataclass(frozen=True)
class EqualitySet:
    """A set of equality constraints over a sequence of length n."""

    n: int
    constraints: tuple[EqualityConstraint, ...]

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("sequence length must be >= 1")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        seen = set()
        for c in self.constraints:
            if c.j > self.n:
                raise DomainError(
                    f"constraint ({c.i}, {c.j}) exceeds length {self.n}"
                )
            if (c.i, c.j) in seen:
                raise DomainError(f"duplicate constraint ({c.i}, {c.j})")
            seen.add((c.i, c.j))

    def sorted_by_i(self) -> list[EqualityConstraint]:
        return sorted(self.constraints, key=lambda c: (c.i, c.j))

    def satisfied_by(self, word: Word) -> bool:
        for c in self.constraints:
            y = word[c.j - 1]
            want = y if c.sigma is None else c.sigma[y]
            if word[c.i - 1] != want:
                return False
        return True


class Topology(enum.Enum):
    NON_CROSSING = "NonCrossing"
    REPEATED_SECTION = "RepeatedSection"
    PALINDROMIC = "Palindromic"
    GENERAL = "General"


def matches_noncrossing(eqs: EqualitySet) -> bool:
    cs = eqs.sorted_by_i()
    return all(cs[k].j < cs[k + 1].i for k in range(len(cs) - 1))


def matches_repeated(eqs: EqualitySet) -> bool:
    cs = eqs.sorted_by_i()
    if not cs:
        return True
    if any(cs[k].i == cs[k + 1].i for k in range(len(cs) - 1)):
        return False
    if any(cs[k].j >= cs[k + 1].j for k in range(len(cs) - 1)):
        return False
    return max(c.i for c in cs) < min(c.j for c in cs)


def matches_palindromic(eqs: EqualitySet) -> bool:
    cs = eqs.sorted_by_i()
    if not cs:
        return True
    if any(cs[k].i == cs[k + 1].i for k in range(len(cs) - 1)):
        return False
    if any(cs[k].j <= cs[k + 1].j for k in range(len(cs) - 1)):
        return False
    return cs[-1].i < cs[-1].j


def classify(eqs: EqualitySet) -> Topology:
    """First matching class in the order NC -> repeated -> palindromic."""
    if matches_noncrossing(eqs):
        return Topology.NON_CROSSING
    if matches_repeated(eqs):
        return Topology.REPEATED_SECTION
    if matches_palindromic(eqs):
        return Topology.PALINDROMIC
    return Topology.GENERAL


# Message-passing helpers ----------------------------------------------------

def _check_model(model: Chain, eqs: EqualitySet) -> None:
    if model.length is not None and model.length != eqs.n:
        raise DomainError(
            f"chain has fixed length {model.length}, constraints expect {eqs.n}"
        )


def _prod(model: Chain, lo: int, hi: int) -> np.ndarray:
    """Product of step matrices from position lo to hi: P(X_hi=y | X_lo=x)."""
    a = model.alphabet.size
    out = np.eye(a)
    for k in range(lo, hi):
        out = out @ model.step_matrix(k)
    return out


def _prefix_vec(model: Chain, pos: int) -> np.ndarray:
    """Marginal of X_pos in the unconstrained chain."""
    vec = np.asarray(model.initial(), dtype=float)
    for k in range(1, pos):
        vec = vec @ model.step_matrix(k)
    return vec


# Partition functions --------------------------------------------------------

def partition_noncrossing(model: Chain, eqs: EqualitySet) -> float:
    """Exact probability that all (disjoint-interval) equalities hold.

    One forward pass: a plain state vector outside constrained intervals;
    across an interval [i, j] the propagated matrix is collapsed onto the
    entries allowed by sigma.
    """
    _check_model(model, eqs)
    if not matches_noncrossing(eqs):
        raise TopologyError("equality set is not non-crossing")
    a = model.alphabet.size
    f = np.asarray(model.initial(), dtype=float)
    cursor = 1
    for c in eqs.sorted_by_i():
        f = f @ _prod(model, cursor, c.i)
        w = _prod(model, c.i, c.j)
        sig = c.sigma_array(a)
        f = f[sig] * w[sig, np.arange(a)]
        cursor = c.j
    # Remaining free suffix sums to one (rows are stochastic).
    return float(f.sum())


def _repeated_messages(model: Chain, eqs: EqualitySet):
    """Forward joint tables for the repeated-section walk.

    Merged variables y_t = X_{j_t}; the quotient graph is a ring (the run
    from i_K to j_1 closes it), so the DP carries the joint of y_1 and y_t.
    """
    a = model.alphabet.size
    cs = eqs.sorted_by_i()
    sigs = [c.sigma_array(a) for c in cs]
    start = _prefix_vec(model, cs[0].i)
    tables = [np.diag(start[sigs[0]])]  # V_1[c, y] = 1[y=c] * P(X_{i_1}=sig(c))
    trans = []
    for t in range(len(cs) - 1):
        left = _prod(model, cs[t].i, cs[t + 1].i)
        right = _prod(model, cs[t].j, cs[t + 1].j)
        q = left[np.ix_(sigs[t], sigs[t + 1])] * right
        trans.append(q)
        tables.append(tables[-1] @ q)
    # The run from i_K to j_1 closes the ring: weight middle[sig_K(y_K), y_1].
    middle = _prod(model, cs[-1].i, cs[0].j)
    fin = tables[-1] * middle.T[:, sigs[-1]]
    return cs, sigs, tables, trans, middle, fin


def partition_repeated(model: Chain, eqs: EqualitySet) -> float:
    """Exact partition for repeated-section equalities, O(|A|^3 n).

    Non-crossing inputs that do not fit the repeated definition are also
    accepted and are delegated to the non-crossing pass, matching the
    documented contract that the two operations agree on the overlap.
    """
    _check_model(model, eqs)
    if not eqs.constraints:
        return 1.0
    if not matches_repeated(eqs):
        if matches_noncrossing(eqs):
            return partition_noncrossing(model, eqs)
        raise TopologyError("equality set is not a repeated section")
    *_, fin = _repeated_messages(model, eqs)
    return float(fin.sum())


def _palindromic_messages(model: Chain, eqs: EqualitySet):
    """Forward vectors over y_t = X_{j_t}, walking the nesting outside-in."""
    a = model.alphabet.size
    cs = eqs.sorted_by_i()
    sigs = [c.sigma_array(a) for c in cs]
    start = _prefix_vec(model, cs[0].i)
    vecs = [start[sigs[0]]]
    trans = []
    for t in range(len(cs) - 1):
        left = _prod(model, cs[t].i, cs[t + 1].i)
        right = _prod(model, cs[t + 1].j, cs[t].j)
        q = left[np.ix_(sigs[t], sigs[t + 1])] * right.T
        trans.append(q)
        vecs.append(vecs[-1] @ q)
    inner = _prod(model, cs[-1].i, cs[-1].j)
    fin = vecs[-1] * inner[sigs[-1], np.arange(a)]
    return cs, sigs, vecs, trans, inner, fin


def partition_palindromic(model: Chain, eqs: EqualitySet) -> float:
    """Exact partition for fully nested equalities, one outside-in pass."""
    _check_model(model, eqs)
    if not eqs.constraints:
        return 1.0
    if not matches_palindromic(eqs):
        raise TopologyError("equality set is not palindromic")
    *_, fin = _palindromic_messages(model, eqs)
    return float(fin.sum())


def partition(model: Chain, eqs: EqualitySet) -> float:
    """Dispatch on the classified topology; refuse the general case."""
    topo = classify(eqs)
    if topo is Topology.NON_CROSSING:
        return partition_noncrossing(model, eqs)
    if topo is Topology.REPEATED_SECTION:
        return partition_repeated(model, eqs)
    if topo is Topology.PALINDROMIC:
        return partition_palindromic(model, eqs)
    raise UnsupportedTopologyError(
        "general equality topology is #P-hard; exact inference refused"
    )


# Sampling -------------------------------------------------------------------

class _Segment:
    """Free run between two pinned positions, with cached suffix products.

    suffix[m] is the step product from position start+m to end, used to
    bridge-sample the interior conditioned on both endpoint values.
    """

    def __init__(self, model: Chain, start: int, end: int):
        self.start = start
        self.end = end
        a = model.alphabet.size
        self.suffix = [np.eye(a) for _ in range(end - start + 1)]
        for m in range(end - start - 1, -1, -1):
            self.suffix[m] = model.step_matrix(start + m) @ self.suffix[m + 1]

    def fill(self, model, out, rng, end_value):
        """Sample out[start+1 .. end-1] given out[start] and X_end."""
        for m in range(1, self.end - self.start):
            pos = self.start + m
            row = model.step_matrix(pos - 1)[out[pos - 2]]
            weights = row * self.suffix[m][:, end_value]
            out[pos - 1] = choice_from_weights(rng, weights)


class EqualitySampler:
    """Exact sampler for P(w | equalities) over the tractable topologies.

    Messages are prepared once at construction; each draw costs O(n |A|).
    Use this class directly when many samples are needed; the
    ``sample_equality_constrained`` convenience wrapper rebuilds it on
    every call.
    """

    def __init__(self, model: Chain, eqs: EqualitySet):
        _check_model(model, eqs)
        self.model = model
        self.eqs = eqs
        self.a = model.alphabet.size
        self.topology = classify(eqs)
        if self.topology is Topology.GENERAL:
            raise UnsupportedTopologyError(
                "cannot sample: general equality topology"
            )
        self._mode = self.topology
        cs = eqs.sorted_by_i()
        self._cs = cs
        if cs and self._mode is Topology.NON_CROSSING:
            self._prep_noncrossing()
        elif cs and self._mode is Topology.REPEATED_SECTION:
            self._prep_repeated()
        elif cs:
            self._prep_palindromic()
        else:
            self.partition = 1.0
        if self.partition <= 0.0:
            raise NullEventError("constrained event has probability 0")
        self._prep_segments()

    # -- merged-variable messages per topology

    def _prep_noncrossing(self):
        # Same chain-of-intervals view as the other classes: y_t = X_{j_t},
        # with the interval transfer folded into each node's weight.
        model, cs, a = self.model, self._cs, self.a
        self._sigs = [c.sigma_array(a) for c in cs]
        start = _prefix_vec(model, cs[0].i)
        w0 = _prod(model, cs[0].i, cs[0].j)
        sig0 = self._sigs[0]
        vecs = [start[sig0] * w0[sig0, np.arange(a)]]
        trans = []
        for t in range(len(cs) - 1):
            gap = _prod(model, cs[t].j, cs[t + 1].i)
            w = _prod(model, cs[t + 1].i, cs[t + 1].j)
            sig = self._sigs[t + 1]
            q = gap[:, sig] * w[sig, np.arange(a)][np.newaxis, :]
            trans.append(q)
            vecs.append(vecs[-1] @ q)
        self._vecs, self._trans = vecs, trans
        self._fin = np.ones(a)
        self.partition = float(vecs[-1].sum())

    def _prep_repeated(self):
        cs, sigs, tables, trans, middle, fin = _repeated_messages(
            self.model, self.eqs
        )
        self._sigs, self._tables, self._trans = sigs, tables, trans
        self._fin2 = fin
        self.partition = float(fin.sum())

    def _prep_palindromic(self):
        cs, sigs, vecs, trans, inner, fin = _palindromic_messages(
            self.model, self.eqs
        )
        self._sigs, self._vecs, self._trans = sigs, vecs, trans
        self._fin = inner[sigs[-1], np.arange(self.a)]
        self.partition = float(fin.sum())

    def _sample_merged(self, rng) -> list[int]:
        """Draw y_1..y_K from the exact joint via backward sampling."""
        k = len(self._cs)
        ys = [0] * k
        if self._mode is Topology.REPEATED_SECTION:
            flat = int(choice_from_weights(rng, self._fin2.ravel()))
            c, ys[-1] = divmod(flat, self.a)
            for t in range(k - 2, 0, -1):
                weights = self._tables[t][c] * self._trans[t][:, ys[t + 1]]
                ys[t] = choice_from_weights(rng, weights)
            ys[0] = c
            return ys
        weights = self._vecs[-1] * self._fin
        ys[-1] = choice_from_weights(rng, weights)
        for t in range(k - 2, -1, -1):
            weights = self._vecs[t] * self._trans[t][:, ys[t + 1]]
            ys[t] = choice_from_weights(rng, weights)
        return ys

    def _pins_from_merged(self, ys: list[int]) -> dict[int, int]:
        pins = {}
        for c, sig, y in zip(self._cs, self._sigs, ys):
            pins[c.j] = y
            pins[c.i] = int(sig[y])
        return pins

    # -- free runs between pinned positions

    def _prep_segments(self):
        pin_positions = sorted(
            {c.i for c in self._cs} | {c.j for c in self._cs}
        )
        self._pin_positions = pin_positions
        self._lead = None
        self._bridges = []
        if pin_positions:
            first = pin_positions[0]
            if first > 1:
                self._lead = _Segment(self.model, 1, first)
            for p, q in zip(pin_positions, pin_positions[1:]):
                self._bridges.append(_Segment(self.model, p, q))
            self._tail_start = pin_positions[-1]
        else:
            self._tail_start = 0

    def sample(self, rng: np.random.Generator) -> Word:
        n = self.eqs.n
        out = [0] * n
        if not self._cs:
            for pos in range(1, n + 1):
                row = (
                    self.model.initial()
                    if pos == 1
                    else self.model.step_matrix(pos - 1)[out[pos - 2]]
                )
                out[pos - 1] = choice_from_weights(rng, row)
            return tuple(out)
        pins = self._pins_from_merged(self._sample_merged(rng))
        for pos, val in pins.items():
            out[pos - 1] = val
        if self._lead is not None:
            first = self._pin_positions[0]
            weights = (
                np.asarray(self.model.initial())
                * self._lead.suffix[0][:, out[first - 1]]
            )
            out[0] = choice_from_weights(rng, weights)
            self._lead.fill(self.model, out, rng, out[first - 1])
        for seg in self._bridges:
            seg.fill(self.model, out, rng, out[seg.end - 1])
        for pos in range(self._tail_start + 1, n + 1):
            row = self.model.step_matrix(pos - 1)[out[pos - 2]]
            out[pos - 1] = choice_from_weights(rng, row)
        return tuple(out)


def sample_equality_constrained(
    model: Chain, eqs: EqualitySet, rng: np.random.Generator
) -> Word:
    """Draw one word with probability P(w) 1[w satisfies eqs] / Z."""
    return EqualitySampler(model, eqs).sample(rng)


# JSON wire format ----------------------------------------------------------

def equalities_to_dict(eqs: EqualitySet, alphabet: Alphabet | None = None):
    out = {"n": eqs.n, "constraints": []}
    for c in eqs.constraints:
        entry: dict = {"i": c.i, "j": c.j}
        if c.sigma is not None:
            if alphabet is not None:
                entry["sigma"] = [alphabet.symbols[v] for v in c.sigma]
            else:
                entry["sigma"] = list(c.sigma)
        out["constraints"].append(entry)
    return out


def equalities_from_dict(d: dict, alphabet: Alphabet | None = None):
    try:
        n = int(d["n"])
        constraints = []
        for entry in d["constraints"]:
            sigma = None
            if "sigma" in entry and entry["sigma"] is not None:
                image = entry["sigma"]
                if alphabet is not None and image and isinstance(image[0], str):
                    sigma = tuple(alphabet.index(s) for s in image)
                else:
                    sigma = tuple(int(v) for v in image)
            constraints.append(
                EqualityConstraint(int(entry["i"]), int(entry["j"]), sigma)
            )
        return EqualitySet(n, tuple(constraints))
    except KeyError as exc:
        raise DomainError(f"equality JSON missing field {exc}") from None


def load_equalities(path: str, alphabet: Alphabet | None = None):
    with open(path, encoding="utf-8") as fh:
        return equalities_from_dict(json.load(fh), alphabet)

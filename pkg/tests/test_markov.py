"""Markov core: sequence probabilities, the enumeration oracle, rejection.

Core claims:
    - sequence_probability multiplies p0 and transition factors exactly
    - total mass over all words of length n is 1
    - oracle_partition / oracle_marginals agree with direct enumeration
    - the enumeration guard refuses oversized requests
    - rejection sampling is exact conditional on success
"""

import math

import numpy as np
import pytest

from chainbound.errors import (
    DomainError,
    EnumerationGuardError,
    NullEventError,
)
from chainbound.markov import (
    Alphabet,
    InhomogeneousChain,
    MarkovModel,
    iter_words_with_probability,
    model_from_dict,
    model_to_dict,
    oracle_marginals,
    oracle_partition,
    rejection_sample,
    sequence_probability,
)

from conftest import random_model, total_variation


class TestSequenceProbability:
    def test_uniform_ab(self, uniform2):
        assert sequence_probability(uniform2, (0, 1)) == pytest.approx(0.25)

    def test_alternating_aba(self, alternating2):
        assert sequence_probability(alternating2, (0, 1, 0)) == 1.0

    def test_alternating_aab_is_impossible(self, alternating2):
        assert sequence_probability(alternating2, (0, 0, 1)) == 0.0

    def test_invalid_index_rejected(self, uniform2):
        with pytest.raises(DomainError):
            sequence_probability(uniform2, (0, 2))

    def test_empty_word_rejected(self, uniform2):
        with pytest.raises(DomainError):
            sequence_probability(uniform2, ())

    def test_total_mass_is_one(self):
        rng = np.random.default_rng(7)
        for size in (2, 3):
            for sparse in (False, True):
                model = random_model(rng, size, sparse=sparse)
                for n in (1, 3, 5):
                    total = sum(
                        p for _, p in iter_words_with_probability(model, n)
                    )
                    assert total == pytest.approx(1.0, abs=1e-10)


class TestOracle:
    def test_unconstrained_partition(self, uniform2):
        assert oracle_partition(uniform2, 3, lambda w: True) == pytest.approx(
            1.0
        )

    def test_first_equals_last(self, uniform2):
        z = oracle_partition(uniform2, 3, lambda w: w[0] == w[2])
        assert z == pytest.approx(0.5)

    def test_deterministic_word(self, alternating2):
        z = oracle_partition(alternating2, 4, lambda w: w == (0, 1, 0, 1))
        assert z == pytest.approx(1.0)

    def test_guard_refuses(self, uniform2):
        with pytest.raises(EnumerationGuardError):
            oracle_partition(uniform2, 40, lambda w: True)

    def test_marginals_uniform(self, uniform2):
        table = oracle_marginals(uniform2, 2, lambda w: True)
        assert np.allclose(table, 0.5)

    def test_marginals_constrained(self, uniform2):
        table = oracle_marginals(uniform2, 3, lambda w: w[0] == w[2])
        assert table[0, 0] == pytest.approx(0.5)
        assert np.allclose(table.sum(axis=1), 1.0, atol=1e-10)

    def test_marginals_deterministic(self, alternating2):
        table = oracle_marginals(alternating2, 2, lambda w: True)
        assert np.allclose(table, [[1.0, 0.0], [0.0, 1.0]])

    def test_marginals_null_event(self, uniform2):
        with pytest.raises(NullEventError):
            oracle_marginals(uniform2, 2, lambda w: False)


class TestRejectionSampling:
    def test_deterministic_chain(self, alternating2):
        rng = np.random.default_rng(0)
        w = rejection_sample(alternating2, 4, lambda w: True, 1, rng)
        assert w == (0, 1, 0, 1)

    def test_single_letter_event(self, uniform2):
        rng = np.random.default_rng(1)
        w = rejection_sample(uniform2, 1, lambda w: w[0] == 0, 64, rng)
        assert w == (0,)

    def test_impossible_event_returns_none(self, uniform2):
        rng = np.random.default_rng(2)
        assert rejection_sample(uniform2, 2, lambda w: False, 10, rng) is None

    def test_conditional_exactness(self, uniform2):
        # 100k accepted samples of (w1 = w4) vs oracle, TV <= 0.02
        rng = np.random.default_rng(3)
        pred = lambda w: w[0] == w[3]
        expected = {}
        for w, p in iter_words_with_probability(uniform2, 4):
            if pred(w):
                expected[w] = p
        z = sum(expected.values())
        expected = {w: p / z for w, p in expected.items()}
        counts = {}
        accepted = 0
        while accepted < 100_000:
            w = rejection_sample(uniform2, 4, pred, 1_000, rng)
            counts[w] = counts.get(w, 0) + 1
            accepted += 1
        assert total_variation(counts, expected, accepted) <= 0.02


class TestInhomogeneousChain:
    def test_fixed_length_enforced(self):
        ab = Alphabet(("a", "b"))
        chain = InhomogeneousChain(
            ab,
            np.array([1.0, 0.0]),
            (np.array([[0.0, 1.0], [1.0, 0.0]]),),
        )
        assert sequence_probability(chain, (0, 1)) == 1.0
        with pytest.raises(DomainError):
            sequence_probability(chain, (0, 1, 0))

    def test_per_step_matrices_apply_in_order(self):
        ab = Alphabet(("a", "b"))
        s1 = np.array([[0.0, 1.0], [1.0, 0.0]])
        s2 = np.array([[1.0, 0.0], [0.0, 1.0]])
        chain = InhomogeneousChain(ab, np.array([1.0, 0.0]), (s1, s2))
        assert sequence_probability(chain, (0, 1, 1)) == 1.0
        assert sequence_probability(chain, (0, 1, 0)) == 0.0


class TestSerialization:
    def test_round_trip(self, uniform2):
        again = model_from_dict(model_to_dict(uniform2))
        assert again.alphabet == uniform2.alphabet
        assert np.allclose(again.p0, uniform2.p0)
        assert np.allclose(again.t, uniform2.t)

    def test_inhomogeneous_round_trip(self):
        ab = Alphabet(("a", "b"))
        chain = InhomogeneousChain(
            ab, np.array([0.5, 0.5]), (np.full((2, 2), 0.5),)
        )
        again = model_from_dict(model_to_dict(chain))
        assert isinstance(again, InhomogeneousChain)
        assert again.length == 2

    def test_invalid_rows_rejected(self):
        ab = Alphabet(("a", "b"))
        with pytest.raises(DomainError):
            MarkovModel(ab, np.array([0.5, 0.5]), np.full((2, 2), 0.6))
        with pytest.raises(DomainError):
            MarkovModel(ab, np.array([0.9, 0.0]), np.full((2, 2), 0.5))


def test_validation_tolerates_float_noise():
    ab = Alphabet(("a", "b", "c"))
    p0 = np.array([1 / 3, 1 / 3, 1 / 3])
    t = np.full((3, 3), 1 / 3)
    MarkovModel(ab, p0, t)  # must not raise
    assert math.isclose(p0.sum(), 1.0, rel_tol=0, abs_tol=1e-9)

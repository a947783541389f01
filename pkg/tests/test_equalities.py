"""Equality constraints: classification, exact partitions, exact sampling.

Core claims:
    - classify follows the documented precedence and definitions
    - each partition_* matches the enumeration oracle on random instances
    - operations accepting overlapping class definitions agree
    - sigma bijections are honored (tested against the oracle)
    - the sampler reproduces the oracle conditional distribution
    - the general topology is refused
"""

import numpy as np
import pytest

from chainbound.equalities import (
    EqualityConstraint,
    EqualitySet,
    EqualitySampler,
    Topology,
    classify,
    equalities_from_dict,
    equalities_to_dict,
    matches_palindromic,
    matches_repeated,
    partition,
    partition_noncrossing,
    partition_palindromic,
    partition_repeated,
    sample_equality_constrained,
)
from chainbound.errors import (
    DomainError,
    NullEventError,
    TopologyError,
    UnsupportedTopologyError,
)
from chainbound.markov import Alphabet, oracle_partition

from conftest import (
    random_model,
    random_noncrossing,
    random_palindromic,
    random_repeated,
    total_variation,
)


def eqs(n, *pairs):
    return EqualitySet(
        n, tuple(EqualityConstraint(i, j, sigma) for i, j, sigma in pairs)
    )


class TestClassification:
    def test_single_pair_is_noncrossing(self):
        assert classify(eqs(3, (1, 3, None))) is Topology.NON_CROSSING

    def test_interleaved_pairs_are_repeated(self):
        got = classify(eqs(4, (1, 3, None), (2, 4, None)))
        assert got is Topology.REPEATED_SECTION

    def test_nested_pairs_are_palindromic(self):
        assert classify(eqs(4, (1, 4, None), (2, 3, None))) is (
            Topology.PALINDROMIC
        )

    def test_general_topology(self):
        got = classify(eqs(6, (1, 4, None), (2, 6, None), (3, 5, None)))
        assert got is Topology.GENERAL

    def test_empty_set_is_noncrossing(self):
        assert classify(EqualitySet(4, ())) is Topology.NON_CROSSING

    def test_duplicate_pairs_rejected(self):
        with pytest.raises(DomainError):
            eqs(4, (1, 3, None), (1, 3, (1, 0)))

    def test_positions_validated(self):
        with pytest.raises(DomainError):
            EqualityConstraint(3, 3)
        with pytest.raises(DomainError):
            eqs(3, (1, 4, None))


class TestPartitionExamples:
    def test_noncrossing_uniform(self, uniform2):
        z = partition_noncrossing(uniform2, eqs(3, (1, 3, None)))
        assert z == pytest.approx(0.5, rel=1e-9)

    def test_noncrossing_deterministic(self, alternating2):
        z = partition_noncrossing(alternating2, eqs(3, (1, 3, None)))
        assert z == pytest.approx(1.0)

    def test_noncrossing_with_swap_sigma(self, uniform2):
        z = partition_noncrossing(uniform2, eqs(3, (1, 3, (1, 0))))
        assert z == pytest.approx(0.5, rel=1e-9)

    def test_repeated_uniform(self, uniform2):
        z = partition_repeated(uniform2, eqs(4, (1, 3, None), (2, 4, None)))
        assert z == pytest.approx(0.25, rel=1e-9)

    def test_repeated_deterministic(self, alternating2):
        z = partition_repeated(
            alternating2, eqs(4, (1, 3, None), (2, 4, None))
        )
        assert z == pytest.approx(1.0)

    def test_repeated_accepts_noncrossing_overlap(self, uniform2):
        z = partition_repeated(uniform2, eqs(3, (1, 3, None)))
        assert z == pytest.approx(0.5, rel=1e-9)

    def test_palindromic_uniform(self, uniform2):
        z = partition_palindromic(
            uniform2, eqs(4, (1, 4, None), (2, 3, None))
        )
        assert z == pytest.approx(0.25, rel=1e-9)

    def test_palindromic_deterministic_zero(self, alternating2):
        z = partition_palindromic(
            alternating2, eqs(4, (1, 4, None), (2, 3, None))
        )
        assert z == pytest.approx(0.0)

    def test_palindromic_n5(self, uniform2):
        z = partition_palindromic(
            uniform2, eqs(5, (1, 5, None), (2, 4, None))
        )
        assert z == pytest.approx(0.25, rel=1e-9)

    def test_wrong_topology_raises(self, uniform2):
        crossing = eqs(4, (1, 3, None), (2, 4, None))
        with pytest.raises(TopologyError):
            partition_noncrossing(uniform2, crossing)
        with pytest.raises(TopologyError):
            partition_palindromic(uniform2, crossing)
        nested = eqs(4, (1, 4, None), (2, 3, None))
        with pytest.raises(TopologyError):
            partition_repeated(uniform2, nested)

    def test_general_refused(self, uniform2):
        general = eqs(6, (1, 4, None), (2, 6, None), (3, 5, None))
        with pytest.raises(UnsupportedTopologyError):
            partition(uniform2, general)


class TestOracleEquivalence:
    """partition_* == oracle_partition on random models and instances."""

    @pytest.mark.parametrize("cls", ["noncrossing", "repeated", "palindromic"])
    def test_random_instances(self, cls):
        rng = np.random.default_rng(hash(cls) % 2**32)
        build = {
            "noncrossing": (random_noncrossing, partition_noncrossing),
            "repeated": (random_repeated, partition_repeated),
            "palindromic": (random_palindromic, partition_palindromic),
        }
        make, solve = build[cls]
        for trial in range(50):
            size = 2 if trial % 2 == 0 else 3
            model = random_model(rng, size, sparse=trial % 3 == 0)
            n = int(rng.integers(2, 9))
            instance = make(rng, n, size)
            got = solve(model, instance)
            want = oracle_partition(model, n, instance.satisfied_by)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_class_overlap_consistency(self):
        # Instances satisfying several definitions: all applicable
        # partitions agree to 1e-12.
        rng = np.random.default_rng(99)
        for _ in range(20):
            size = int(rng.integers(2, 4))
            model = random_model(rng, size)
            n = int(rng.integers(3, 9))
            i = int(rng.integers(1, n))
            j = int(rng.integers(i + 1, n + 1))
            single = EqualitySet(n, (EqualityConstraint(i, j),))
            assert matches_repeated(single) and matches_palindromic(single)
            znc = partition_noncrossing(model, single)
            zrs = partition_repeated(model, single)
            zpl = partition_palindromic(model, single)
            assert abs(znc - zrs) <= 1e-12
            assert abs(znc - zpl) <= 1e-12


class TestSampler:
    def test_deterministic_support(self, alternating2):
        rng = np.random.default_rng(0)
        for _ in range(10):
            w = sample_equality_constrained(
                alternating2, eqs(3, (1, 3, None)), rng
            )
            assert w == (0, 1, 0)

    def test_null_event_raises(self, alternating2):
        with pytest.raises(NullEventError):
            sample_equality_constrained(
                alternating2, eqs(4, (1, 4, None), (2, 3, None)),
                np.random.default_rng(0),
            )

    def test_general_refused(self, uniform2):
        with pytest.raises(UnsupportedTopologyError):
            sample_equality_constrained(
                uniform2,
                eqs(6, (1, 4, None), (2, 6, None), (3, 5, None)),
                np.random.default_rng(0),
            )

    @pytest.mark.parametrize(
        "case,n,pairs",
        [
            ("noncrossing", 3, ((1, 3, None),)),
            ("palindromic", 4, ((1, 4, None), (2, 3, None))),
        ],
    )
    def test_uniform_conditional_frequencies(self, uniform2, case, n, pairs):
        instance = eqs(n, *pairs)
        sampler = EqualitySampler(uniform2, instance)
        rng = np.random.default_rng(42)
        counts = {}
        draws = 40_000
        for _ in range(draws):
            w = sampler.sample(rng)
            counts[w] = counts.get(w, 0) + 1
        sats = [w for w in counts if instance.satisfied_by(w)]
        assert sorted(sats) == sorted(counts)
        assert len(counts) == 4
        for w, c in counts.items():
            assert c / draws == pytest.approx(0.25, abs=0.02)

    @pytest.mark.parametrize("cls", ["noncrossing", "repeated", "palindromic"])
    def test_sampler_matches_oracle_conditional(self, cls):
        import math

        from chainbound.markov import oracle_conditional

        rng = np.random.default_rng(hash(cls) % 1009)
        make = {
            "noncrossing": random_noncrossing,
            "repeated": random_repeated,
            "palindromic": random_palindromic,
        }[cls]
        checked = 0
        while checked < 4:
            size = int(rng.integers(2, 4))
            model = random_model(rng, size, sparse=checked % 2 == 0)
            n = int(rng.integers(3, 7))
            instance = make(rng, n, size)
            try:
                sampler = EqualitySampler(model, instance)
            except NullEventError:
                continue
            expected = oracle_conditional(model, n, instance.satisfied_by)
            counts = {}
            draws = 25_000
            for _ in range(draws):
                w = sampler.sample(rng)
                counts[w] = counts.get(w, 0) + 1
            # Twice the expected TV of an exact multinomial at this draw
            # count; large random supports need more head room than the
            # small fixture supports of the acceptance suite.
            noise = math.sqrt(2 / math.pi) * 0.5 * sum(
                math.sqrt(p * (1 - p) / draws) for p in expected.values()
            )
            threshold = max(0.02, 2.0 * noise)
            assert total_variation(counts, expected, draws) <= threshold
            checked += 1

    def test_sampler_partition_matches_partition_ops(self, uniform2):
        instance = eqs(6, (1, 4, None), (2, 5, None), (3, 6, None))
        assert classify(instance) is Topology.REPEATED_SECTION
        sampler = EqualitySampler(uniform2, instance)
        assert sampler.partition == pytest.approx(
            partition_repeated(uniform2, instance), rel=1e-12
        )


class TestScaling:
    def test_repeated_runtime_linear_in_n(self, uniform2):
        # Doubling n must not triple the runtime (coarse linearity check).
        import time

        def run(n):
            instance = eqs(n, (2, n // 2 + 1, None), (3, n // 2 + 2, None))
            best = float("inf")
            for _ in range(5):
                t0 = time.perf_counter()
                partition_repeated(uniform2, instance)
                best = min(best, time.perf_counter() - t0)
            return best

        run(64)  # warm-up
        t1 = run(1000)
        t2 = run(2000)
        assert t2 <= 3.0 * t1 + 1e-3


class TestSerialization:
    def test_round_trip_with_sigma(self):
        ab = Alphabet(("a", "b"))
        instance = eqs(4, (1, 4, (1, 0)), (2, 3, None))
        d = equalities_to_dict(instance, ab)
        assert d["constraints"][0]["sigma"] == ["b", "a"]
        again = equalities_from_dict(d, ab)
        assert again == instance

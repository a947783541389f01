"""Exact inference and sampling for Markov sequences under hard constraints."""

from .markov import (
    Alphabet,
    Chain,
    InhomogeneousChain,
    MarkovModel,
    Word,
    oracle_marginals,
    oracle_partition,
    rejection_sample,
    sequence_probability,
)

__version__ = "0.1.0"

# Identifier for the fixed total order on grammar symbols used by the
# canonical-tree machinery; echoed by the CLI --version output.
SYMBOL_ORDER_RULE = "declaration-order-nonterminals-first"

__all__ = [
    "Alphabet",
    "Chain",
    "InhomogeneousChain",
    "MarkovModel",
    "Word",
    "oracle_marginals",
    "oracle_partition",
    "rejection_sample",
    "sequence_probability",
    "SYMBOL_ORDER_RULE",
    "__version__",
]

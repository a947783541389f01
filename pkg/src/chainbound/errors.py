"""Shared exception types.

Every error raised by the library derives from ChainboundError, so callers
(in particular the CLI) can map failures to structured error reports.
"""


class ChainboundError(Exception):
    """Base class for all library errors."""

    code = "error"


class DomainError(ChainboundError):
    """A symbol, index or position is outside its declared domain."""

    code = "domain"


class EnumerationGuardError(ChainboundError):
    """An exhaustive enumeration would exceed the configured guard."""

    code = "enumeration-guard"


class NullEventError(ChainboundError):
    """Conditioning on an event of probability zero."""

    code = "null-event"


class TopologyError(ChainboundError):
    """An equality set does not match the topology required by an algorithm."""

    code = "topology"


class UnsupportedTopologyError(TopologyError):
    """Exact inference for the general equality topology is refused."""

    code = "unsupported-topology"


class GrammarError(ChainboundError):
    """Malformed grammar, empty language, or alphabet mismatch."""

    code = "grammar"


class NoParseError(ChainboundError):
    """A word is not in the language of the grammar."""

    code = "no-parse"


class InternalConsistencyError(ChainboundError):
    """An internal invariant of a dynamic program was violated.

    Raised instead of returning silently wrong numbers, e.g. when the
    weakly-ambiguous correction drives a cell mass significantly negative.
    """

    code = "internal-consistency"

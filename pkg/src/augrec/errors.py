"""Exception hierarchy.

Each class carries an ``exit_code`` so the command-line front end can map a
failure to a distinct process status without a lookup table of its own.
"""


class AugrecError(Exception):
    exit_code = 1


class ContractError(AugrecError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class ShapeMismatchError(ContractError):
    exit_code = 3


class CorpusFormatError(AugrecError):
    """Manifest or matrix file on disk is malformed."""

    exit_code = 4


class InvariantError(CorpusFormatError):
    """Data loaded fine but violates a domain invariant (e.g. duration sum)."""

    exit_code = 5


class NonFiniteError(CorpusFormatError):
    exit_code = 6


class InventoryMismatchError(AugrecError):
    exit_code = 7


class IncompatibleArtifactError(AugrecError):
    exit_code = 8


class MissingArtifactError(AugrecError):
    exit_code = 9


class ConfigError(AugrecError):
    exit_code = 10


class InsufficientDataError(AugrecError):
    exit_code = 11


class OracleReuseError(AugrecError):
    """The evaluation oracle is the same classifier used during training."""

    exit_code = 12


class AcceptanceError(AugrecError):
    exit_code = 13

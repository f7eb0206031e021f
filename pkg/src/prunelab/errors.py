"""Exception hierarchy shared by every prunelab module."""


class PruneLabError(Exception):
    """Base class for all errors raised by prunelab."""


# tensor core
class DimensionMismatch(PruneLabError, ValueError):
    pass


class NotScalar(PruneLabError, ValueError):
    pass


class NonFinite(PruneLabError, ArithmeticError):
    pass


# models
class InvalidSpec(PruneLabError, ValueError):
    pass


class LabelOutOfRange(PruneLabError, ValueError):
    pass


class MissingParameter(PruneLabError, KeyError):
    pass


# optimisation
class EpochOutOfRange(PruneLabError, ValueError):
    pass


# pruning
class InvalidSparsity(PruneLabError, ValueError):
    pass


class ZeroSaliency(PruneLabError, ArithmeticError):
    """All saliencies are zero, so the normalised score is undefined."""


class AlreadyPruned(PruneLabError, ValueError):
    pass


class DensityIncrease(PruneLabError, ValueError):
    """Pruning can only remove connections; masks never go from 0 to 1."""


# data
class BadMagic(PruneLabError, ValueError):
    pass


class TruncatedFile(PruneLabError, ValueError):
    pass


class CountMismatch(PruneLabError, ValueError):
    pass


class InvalidArg(PruneLabError, ValueError):
    pass


# experiment
class BudgetExceeded(PruneLabError, ValueError):
    pass


class EmptyDataset(PruneLabError, ValueError):
    pass


class EmptyResults(PruneLabError, ValueError):
    pass


class VersionMismatch(PruneLabError, ValueError):
    pass


class CorruptPayload(PruneLabError, ValueError):
    pass


class ConfigError(PruneLabError, ValueError):
    pass


# command line
class UsageError(PruneLabError):
    """Bad command line; reported with usage text and exit code 2."""


class UnknownFlag(UsageError):
    pass


class MissingConfig(UsageError):
    pass


class InvalidValue(UsageError, ValueError):
    pass

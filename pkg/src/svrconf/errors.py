"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class SvrConfError(Exception):
    exit_code = 3


# -- configuration space ----------------------------------------------------

class SpaceError(SvrConfError, ValueError):
    pass


class UnknownParameter(SpaceError):
    pass


class UnknownValue(SpaceError):
    pass


class MissingParameter(SpaceError):
    pass


class BadLength(SpaceError):
    pass


class NotOneHot(SpaceError):
    pass


# -- data -------------------------------------------------------------------

class DataError(SvrConfError, ValueError):
    pass


class EmptyInput(DataError):
    pass


class AllAboveThreshold(DataError):
    pass


class ZeroOptimum(DataError):
    pass


class UnknownColumn(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class TooFewInstances(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InvalidDate(DataError):
    pass


class EmptyGroup(DataError):
    pass


class NoVariance(DataError):
    pass


class BadDelta(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# -- solvers / adapters -----------------------------------------------------

class AdapterFailure(SvrConfError, RuntimeError):
    exit_code = 5


class NoConvergence(SvrConfError, RuntimeError):
    exit_code = 4


class InfeasibleConfig(SvrConfError, ValueError):
    pass


class BudgetExceeded(SvrConfError, RuntimeError):
    exit_code = 4


class EmptySpace(SvrConfError, RuntimeError):
    pass


class NoFeasibleStart(SvrConfError, RuntimeError):
    exit_code = 4

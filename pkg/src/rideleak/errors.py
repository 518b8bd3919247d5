"""Exception hierarchy shared by every rideleak module."""


class RideLeakError(Exception):
    """Base class for all errors raised by this package."""


# road network
class DisconnectedGraph(RideLeakError, ValueError):
    pass


class InvalidNodeId(RideLeakError, ValueError):
    pass


class NegativeWeight(RideLeakError, ValueError):
    pass


class EtaExceedsBudget(RideLeakError, ValueError):
    pass


class CoordinateOverflow(RideLeakError, ValueError):
    pass


class DimensionMismatch(RideLeakError, ValueError):
    pass


# block codec
class ValueOutOfRange(RideLeakError, ValueError):
    pass


class BlockOutOfRange(RideLeakError, ValueError):
    pass


class MissingBlock(RideLeakError, ValueError):
    pass


class DuplicateBlock(RideLeakError, ValueError):
    pass


# protocol simulation
class ConfigMismatch(RideLeakError, ValueError):
    pass


class NoMatch(RideLeakError, RuntimeError):
    """No guess token matched a driver commitment. Only corrupted inputs get here."""


class EmptyResponseSet(RideLeakError, ValueError):
    pass


# attack
class MalformedDifferenceSet(RideLeakError, ValueError):
    pass


class InconsistentObservation(RideLeakError, ValueError):
    """A transcript contradicts everything observed so far (forged or corrupt)."""


# coupon analysis
class LOutOfRange(RideLeakError, ValueError):
    pass


class IncompleteExperiment(RideLeakError, ValueError):
    pass

"""Exception hierarchy shared by all modules."""


class SlodeployError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SlodeployError):
    """A document could not be decoded."""


class SchemaError(SlodeployError):
    """A document decoded but violates the expected structure."""


class SemanticError(SlodeployError):
    """An SLO specification is well-formed but meaningless for the problem."""


class EmptySpaceError(SlodeployError):
    pass


class InfeasibleError(SlodeployError):
    """No decision variable satisfies every constraint.

    ``constraint`` is the label of the constraint that rejected the most
    candidates, ``rejections`` maps every constraint label to its count.
    """

    def __init__(self, message, constraint=None, rejections=None):
        super().__init__(message)
        self.constraint = constraint
        self.rejections = dict(rejections or {})


class MissingDataError(SlodeployError):
    pass


class EnergyUnavailable(MissingDataError):
    pass


class PolicyIncompleteError(SlodeployError):
    pass


class UnknownEngineError(SlodeployError):
    pass

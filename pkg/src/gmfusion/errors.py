"""Exception hierarchy shared by all fusion modules."""


class FusionError(Exception):
    """Base class for every error raised by gmfusion."""


class ContractError(FusionError, ValueError):
    """Inputs violate a precondition (shape, dimension, range)."""


class SingularityError(FusionError, ArithmeticError):
    """A matrix or geometry is numerically singular."""


class DegenerateWeightsError(FusionError, ArithmeticError):
    """Every mixture component received zero (or non-finite) likelihood."""


class DegenerateAssociationError(DegenerateWeightsError):
    """No component association between two priors survived."""


class ConditioningError(FusionError, ArithmeticError):
    """An evaluation point is too far from the mixture support to be trusted."""


class ScenarioError(FusionError):
    """Base class for scenario loading problems."""


class ScenarioParseError(ScenarioError):
    """The scenario file is not syntactically valid."""


class ScenarioValidationError(ScenarioError):
    """The scenario parsed but violates one or more invariants.

    ``problems`` lists every violation found, not only the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(self.problems))

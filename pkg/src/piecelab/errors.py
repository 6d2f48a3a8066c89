"""Exception types shared across modules; the CLI maps them to exit codes."""


class PiecelabError(Exception):
    exit_code = 1


class InvalidArgument(PiecelabError, ValueError):
    exit_code = 2


class DensityTooLargeError(InvalidArgument):
    """l_{rho,U} <= 0: the construction regime is violated."""


class EmptyDomainError(InvalidArgument):
    pass


class NumericalFailure(PiecelabError, RuntimeError):
    exit_code = 3


class NoRootError(NumericalFailure):
    pass


class InfeasibleError(PiecelabError):
    exit_code = 4


class CapacityError(InfeasibleError):
    pass


class TooLargeError(InfeasibleError):
    pass

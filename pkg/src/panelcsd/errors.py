"""Exception hierarchy shared by every module of the package."""


class PanelCSDError(Exception):
    """Base class for all package errors."""


class DataError(PanelCSDError):
    """Input data cannot be turned into a valid panel."""


class BalanceError(DataError):
    def __init__(self, units, message=None):
        self.units = list(units)
        if message is None:
            shown = ", ".join(str(u) for u in self.units[:10])
            more = "" if len(self.units) <= 10 else f" (+{len(self.units) - 10} more)"
            message = f"unbalanced panel; offending units: {shown}{more}"
        super().__init__(message)


class ParseError(DataError):
    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if col is not None:
            loc.append(f"column {col!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)


class DimensionError(DataError, ValueError):
    pass


class SingularDesignError(DataError):
    def __init__(self, section, message=None):
        self.section = section
        super().__init__(message or f"design matrix of section {section} is rank deficient")


class DegenerateResidualError(DataError):
    def __init__(self, section, message=None):
        self.section = section
        super().__init__(message or f"residual vector of section {section} is identically zero")


class DegreesOfFreedomError(DimensionError):
    pass


class InputMismatchError(PanelCSDError, ValueError):
    pass


class DomainError(PanelCSDError, ValueError):
    pass


class NotPsdError(PanelCSDError, ValueError):
    pass


class SymmetryError(PanelCSDError, ValueError):
    pass


class TooLargeError(PanelCSDError):
    pass


class SimAbortError(PanelCSDError):
    def __init__(self, failures, replications, message=None):
        self.failures = failures
        self.replications = replications
        super().__init__(
            message
            or f"{failures} of {replications} replications failed (more than 1%); aborting"
        )

"""
Exception hierarchy for the reducibility toolkit.

Every error raised on purpose by the package derives from ReducibilityError so
callers (the CLI in particular) can separate domain failures from bugs.
"""

from typing import Optional, Tuple


class ReducibilityError(Exception):
    """Base class for all package errors"""


class ValidationError(ReducibilityError, ValueError):
    """Input violates a structural invariant"""


class FieldFormatError(ValidationError):
    """A Fourier field file is malformed or violates the field invariants"""


class ConfigError(ReducibilityError):
    """Invalid run configuration"""


class IntervalCollapse(ConfigError):
    """The shrunk parameter interval is empty"""


class RationalDependence(ReducibilityError):
    """An exact zero divisor omega . nu = 0 was found"""

    def __init__(self, nu: Tuple[int, ...]):
        self.nu = tuple(nu)
        super().__init__(f"omega is rationally dependent: omega . {self.nu} = 0")


class SmallDivisorViolation(ReducibilityError):
    """A divisor fell below the configured floor on an active mode"""

    def __init__(self, nu: Tuple[int, ...], divisor: float, component: Optional[int] = None):
        self.nu = tuple(nu)
        self.divisor = divisor
        self.component = component
        where = f" (component {component})" if component is not None else ""
        super().__init__(f"small divisor {divisor:.3e} at nu={self.nu}{where}")


class OrderError(ReducibilityError):
    """Orders requested out of sequence"""


class EnumerationBudgetExceeded(ReducibilityError):
    """Tree enumeration produced more trees than allowed"""

    def __init__(self, count: int, bound: int):
        self.count = count
        self.bound = bound
        super().__init__(f"tree enumeration exceeded budget: {count} > {bound}")


class TreeLabelError(ReducibilityError):
    """Tree labels violate the grammar constraints"""


class ShiftDomainError(ReducibilityError):
    """The shift operation is not defined for this cluster"""


class IntegrationBudgetError(ReducibilityError):
    """Integration step or horizon outside the allowed range"""

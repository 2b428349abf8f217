"""
Exceptions shared by the toolbox and the command line tool.

Input problems are ValueErrors, failures of a numerical procedure are
NumericalErrors. The command line tool maps both families to exit codes.
"""

from typing import Optional


class ConfigError(ValueError):
    """Raised for an invalid run configuration.

    Attributes:
        key: The configuration key involved (if any)
        line_number: The 1-based line number in the config file (if known)"""

    def __init__(self, message: str, key: Optional[str] = None, line_number: Optional[int] = None):
        self.key = key
        self.line_number = line_number

        location = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{location}{message}")


class DegenerateModeError(ValueError):
    """Raised for a phonon mode with zero frequency (m_index = 0)"""


class RegimeError(ValueError):
    """Raised when a temperature is incompatible with the requested regime"""


class NoCollisionError(ValueError):
    """Raised when a co-moving electron never reaches the phonon packet"""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure"""


class TrappedOrbitError(NumericalError):
    """Raised when a transit does not leave the packet within the step budget"""


class FitError(NumericalError):
    """Raised when a least-squares fit does not converge"""


class SaturationError(NumericalError):
    """Raised when the scattering angle saturates at pi/2 inside a sweep"""


class BoundaryContactError(NumericalError):
    """Raised when a wavepacket leaks into the edge region of the periodic grid"""


class ConfinementError(NumericalError):
    """Raised when a wavepacket is wider than allowed for its potential cell"""


class InsufficientPointsError(NumericalError, ValueError):
    """Raised when a fit gets too few points or too narrow a range"""


class AcceptanceError(RuntimeError):
    """Raised when a reproduced result falls outside its acceptance bounds"""

"""
Exceptions raised by the coalition-formation engine
"""


class CoalitionError(Exception):
    """Base class for engine errors"""


class ConfigurationError(CoalitionError, ValueError):
    """Invalid scenario, optimizer or campaign parameters"""


class ChromosomeStateError(CoalitionError, RuntimeError):
    """A qubit chromosome was used before being measured"""


class UnknownUavError(CoalitionError, KeyError):
    """A UAV id is not present in the reputation ledger"""

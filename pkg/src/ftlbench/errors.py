"""Exception types raised by the simulator."""


class SimError(Exception):
    """Base class for every simulator error."""


class AddressError(SimError, ValueError):
    """A page address, PPN or VPPN is outside the device geometry."""


class DeviceRuleViolation(SimError):
    """The FTL asked the NAND array to do something physically illegal.

    These always indicate an FTL bug and abort the simulation.
    """


class ConsistencyError(SimError):
    """An internal FTL data structure contradicts itself."""


class CapacityExhausted(SimError):
    """No free space could be found even after garbage collection."""


class ConfigError(SimError, ValueError):
    pass


class TraceParseError(SimError, ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class StatisticsError(SimError, ValueError):
    pass

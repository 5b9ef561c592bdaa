"""Exception types shared across the package."""


class UwptError(Exception):
    """Base class for all package errors."""


class DomainError(UwptError, ValueError):
    """A parameter lies outside the domain where a model is defined."""


class SchemaError(UwptError, ValueError):
    """Malformed input record, grid, or document."""


class DegenerateGeometryError(UwptError, ValueError):
    """Coincident points or a zero-length direction."""


class OrderRejected(UwptError, ValueError):
    """The order book refused an order."""


class ContractError(UwptError, RuntimeError):
    """Illegal operation on a contract in its current state."""


class SimulationFault(UwptError, RuntimeError):
    """Invariant breach raised by the engine in strict mode."""

    def __init__(self, fault):
        super().__init__(f"tick {fault.tick}: {fault.code} ({fault.agent_id}) {fault.detail}")
        self.fault = fault

"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for runtime failures of a simulation run."""


class VoltageCollapseError(SimulationError):
    """A node voltage fell to/below the CPL guard floor.

    Signals constant-power-load instability at the given node, not a
    numerical bug.
    """

    def __init__(self, node: str, time: float):
        self.node = node
        self.time = time
        super().__init__(f"voltage collapse at node '{node}' (t={time:.6f} s)")


class DivergenceError(SimulationError):
    """A state variable became non-finite during integration."""

    def __init__(self, channel: str, time: float):
        self.channel = channel
        self.time = time
        super().__init__(f"non-finite state in '{channel}' (t={time:.6f} s)")


class SweepPointError(SimulationError):
    """A perturbed AC-sweep run failed at one injection frequency."""

    def __init__(self, frequency: float, cause: Exception):
        self.frequency = frequency
        self.cause = cause
        super().__init__(f"sweep failed at {frequency:g} Hz: {cause}")


class ConfigError(Exception):
    """Invalid configuration; carries the offending section/key path."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")

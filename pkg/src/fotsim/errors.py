"""Exception types shared across the simulator."""


class ConfigError(Exception):
    """Problem with a scenario document or model configuration."""


class ScenarioParseError(ConfigError):
    """Scenario file could not be read or parsed as a config document."""


class ValidationError(ConfigError):
    """A config or model field failed validation; the message names the field."""


class ProtocolError(Exception):
    """A synchronization round could not be completed."""


class ReversalOverflowError(ProtocolError):
    """Measured request interval reached the reversal constant (T1 >= C)."""


class NonCausalError(ProtocolError):
    """A computed event time precedes its cause."""


class NegativeT3Error(ProtocolError):
    """Tap interval is negative: reversal constant too small or taps swapped."""

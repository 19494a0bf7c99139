"""Exception types shared across the engine.

The CLI maps these onto its documented exit codes: configuration and
validation problems exit 2, trace format and I/O problems exit 3, and
infeasible budgets exit 4.
"""


class WindowKVError(Exception):
    """Base class for all engine errors."""


class ConfigError(WindowKVError):
    """Invalid configuration, flag combination, or malformed input values."""


class TraceFormatError(WindowKVError):
    """Malformed, truncated, or otherwise unreadable trace bytes."""


class InfeasibleBudgetError(WindowKVError):
    """A budget too small to hold every layer's observation window."""

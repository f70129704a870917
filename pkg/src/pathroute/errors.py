"""Error taxonomy shared across the package.

Three failure classes, matching the CLI exit-code contract:
configuration problems (bad shapes, bad config keys) exit 2, while
usage and numeric failures exit 1.
"""


class ConfigError(ValueError):
    """Invalid configuration: shape mismatch, bad field value, unknown key."""


class UsageError(RuntimeError):
    """API misuse: backward on a consumed graph, missing gradient, bad route."""


class NumericError(ArithmeticError):
    """Non-finite value where a finite one is required."""

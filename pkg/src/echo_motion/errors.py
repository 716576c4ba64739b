"""Exception types mapped to CLI exit codes (1 usage, 2 data, 3 numeric)."""


class EchoError(Exception):
    exit_code = 1


class UsageError(EchoError):
    """Bad CLI arguments or unparseable configuration."""

    exit_code = 1


class DataError(EchoError):
    """Malformed input files or violated data invariants."""

    exit_code = 2


class NumericError(EchoError):
    """Numeric failure during training or evaluation (NaN loss, divergence)."""

    exit_code = 3

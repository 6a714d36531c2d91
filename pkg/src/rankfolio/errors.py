"""Exception types shared across the package."""


class RankfolioError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(RankfolioError):
    """Invalid or inconsistent run configuration (maps to CLI exit code 1)."""


class DataError(RankfolioError):
    """Malformed or inconsistent market data."""


class TrainingDivergedError(RankfolioError):
    """Training loss became non-finite; the run was aborted."""

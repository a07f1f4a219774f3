"""Exception hierarchy. Each class maps onto a CLI exit code."""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 1


class DataError(PipelineError):
    exit_code = 2


class SchemaError(DataError):
    pass


class BuildError(ConfigError):
    """A model cannot be built for the requested input width."""


class ShapeError(ValueError):
    pass


class NumericalError(PipelineError):
    exit_code = 3

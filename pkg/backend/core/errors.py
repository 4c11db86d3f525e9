"""Error hierarchy shared by the engine, the CLI and the service.

Every error carries the CLI exit code and the HTTP status it maps to, so the
outer layers translate failures without knowing where they came from.
"""


class ModelScoutError(Exception):
    exit_code: int = 1
    http_status: int = 500


class InputError(ModelScoutError, ValueError):
    """Bad input data or parameters supplied by the caller."""

    exit_code = 2
    http_status = 422


class IngestError(InputError):
    pass


class ProjectionError(InputError):
    pass


class EmptyDistributionError(InputError):
    pass


class DimensionError(InputError):
    pass


class NormalizationError(InputError):
    pass


class SignatureError(InputError):
    pass


class ParamsError(InputError):
    pass


class DataError(InputError):
    pass


class DegenerateInputError(InputError):
    pass


class NotFoundError(ModelScoutError, LookupError):
    exit_code = 2
    http_status = 404


class ConflictError(ModelScoutError):
    exit_code = 3
    http_status = 409


class FormatError(ModelScoutError):
    exit_code = 4
    http_status = 500


class CorruptionError(ModelScoutError):
    exit_code = 4
    http_status = 500

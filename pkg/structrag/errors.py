"""Exception hierarchy. The CLI maps these onto exit codes."""


class StructRagError(Exception):
    """Base class for every error raised by structrag."""


class ConfigError(StructRagError):
    pass


class PDFParseError(StructRagError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedInputError(StructRagError):
    pass


class DegenerateTableError(StructRagError):
    pass


class InvalidTableError(StructRagError):
    pass


class DocumentSchemaError(StructRagError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownTokenSchemeError(StructRagError):
    pass


class ProviderError(StructRagError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (attempts: {attempts})")
        self.attempts = attempts


class TransientProviderError(ProviderError):
    """Timeouts, 429s and 5xx responses. Only these are retried."""


class ProviderAuthError(ProviderError):
    pass


class RetriesExhaustedError(ProviderError):
    pass


class DimensionMismatchError(StructRagError):
    pass


class MalformedRowError(StructRagError):
    """A JSON-lines row that cannot be read. `row` counts data rows from 1."""

    def __init__(self, path, row: int, detail: str):
        super().__init__(f"{path} row {row}: {detail}")
        self.path = path
        self.row = row
        self.detail = detail


class QuestionFileError(StructRagError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class AnnotationError(StructRagError):
    pass


class UnscoredRecordError(StructRagError):
    pass


class ReportWriteError(StructRagError):
    pass


class MissingArtifactError(StructRagError):
    def __init__(self, path):
        super().__init__(f"missing upstream artifact: {path}")
        self.path = path

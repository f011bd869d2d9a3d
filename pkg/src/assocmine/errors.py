"""Exception types shared across the pipeline."""


class AssocmineError(Exception):
    """Base class for all package errors."""


class CorpusError(AssocmineError):
    """Fatal corpus problem: unreadable file, duplicate ids, corrupt spans."""


class RegistryError(AssocmineError):
    """Invalid entity registry: conflicting aliases or duplicate URIs."""


class ConfigError(AssocmineError):
    """Invalid pipeline configuration (exit code 1)."""


class StageDependencyError(AssocmineError):
    """A required upstream artifact is missing or stale (exit code 1)."""

    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


class AnnotatorError(AssocmineError):
    """External annotator failed after bounded retries."""

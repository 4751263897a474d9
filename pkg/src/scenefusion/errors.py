"""Shared exception types."""


class SceneFusionError(Exception):
    """Base class for all pipeline errors."""


class ManifestParseError(SceneFusionError):
    """Manifest file is syntactically malformed (carries a line number)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SceneFusionError):
    """A well-formed input violates an invariant."""


class ConfigError(SceneFusionError):
    """Invalid model/experiment configuration."""


class IngestError(SceneFusionError):
    """Video could not be decoded or transcribed; carries the entry id."""

    def __init__(self, message: str, video_id: str | None = None):
        self.video_id = video_id
        if video_id is not None:
            message = f"entry {video_id!r}: {message}"
        super().__init__(message)


class MissingFeatureError(SceneFusionError):
    """A required cached feature is absent for a video id."""


class DivergenceError(SceneFusionError):
    """Training loss became non-finite."""


class ClientError(SceneFusionError):
    """An external learned resource (speech, backbone, encoder) failed."""

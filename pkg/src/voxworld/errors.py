"""Exception types shared across the package.

Every error raised by the library is a subclass of VoxworldError, so callers
(the CLI and the HTTP service) can map them to exit codes / status codes in
one place.
"""


class VoxworldError(Exception):
    """Base class for all library errors."""

    code = "error"


# audio ----------------------------------------------------------------

class MalformedContainer(VoxworldError):
    """WAV bytes are not a well-formed RIFF/WAVE container."""

    code = "malformed_container"


class UnsupportedEncoding(VoxworldError):
    """WAV container is valid but uses an encoding we do not decode."""

    code = "unsupported_encoding"


# features -------------------------------------------------------------

class EmptyClip(VoxworldError):
    code = "empty_clip"


class UnknownWindowKind(VoxworldError):
    code = "unknown_window_kind"


class NonPowerOfTwoFrame(VoxworldError):
    code = "non_power_of_two_frame"


class ConfigMismatch(VoxworldError):
    """Input does not match the feature configuration it claims to follow."""

    code = "config_mismatch"


# corpus ---------------------------------------------------------------

class InvalidMarkers(VoxworldError):
    """Tag set violates an invariant; `field_path` names the offending field."""

    code = "invalid_markers"

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class UnknownClip(VoxworldError):
    code = "unknown_clip"


class InsufficientData(VoxworldError):
    """A class has too few repetitions to build a train/test split."""

    code = "insufficient_data"


class IoFailure(VoxworldError):
    code = "io_failure"


class SchemaVersionMismatch(VoxworldError):
    code = "schema_version_mismatch"


class MissingFile(VoxworldError):
    code = "missing_file"


# model ----------------------------------------------------------------

class DimensionMismatch(VoxworldError):
    code = "dimension_mismatch"


class NumericalDivergence(VoxworldError):
    """NaN/Inf appeared during training; `epoch` is where it was detected."""

    code = "numerical_divergence"

    def __init__(self, epoch: int, message: str = "non-finite values during training"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class MissingHead(VoxworldError):
    code = "missing_head"


class ConfigHashMismatch(VoxworldError):
    code = "config_hash_mismatch"


# world ----------------------------------------------------------------

class UnknownObject(VoxworldError):
    code = "unknown_object"


class UnknownTurn(VoxworldError):
    code = "unknown_turn"


class UntrainedHeads(VoxworldError):
    code = "untrained_heads"


class EmptyScene(VoxworldError):
    code = "empty_scene"

"""Engine exceptions."""


class VomixError(Exception):
    """Base exception for engine errors."""

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)


class ConfigurationError(VomixError):
    """Raised when a model, schedule or strategy configuration is invalid."""

    pass


class ScheduleError(ConfigurationError):
    """Raised when a pruning schedule string cannot be expanded."""

    def __init__(self, spec: str, reason: str) -> None:
        self.spec = spec
        super().__init__(f"Invalid schedule {spec!r}: {reason}")


class ConfigLoadError(ConfigurationError):
    """Raised when a run-configuration file cannot be loaded."""

    pass


class WeightFormatError(VomixError):
    """Base exception for weight container problems.

    Every subclass carries a stable ``code`` so callers can tell failures apart
    without matching on message text.
    """

    code = "weight_format"

    def __init__(self, message: str, path: str | None = None) -> None:
        self.path = path
        super().__init__(message)


class BadMagicError(WeightFormatError):
    """Raised when a weight file does not start with the container magic."""

    code = "bad_magic"

    def __init__(self, found: bytes, path: str | None = None) -> None:
        self.found = found
        super().__init__(f"bad magic: expected b'VMTW', found {found!r}", path)


class UnsupportedVersionError(WeightFormatError):
    """Raised when the container version is not understood."""

    code = "bad_version"

    def __init__(self, version: int, path: str | None = None) -> None:
        self.version = version
        super().__init__(f"unsupported container version: {version}", path)


class TruncatedWeightsError(WeightFormatError):
    """Raised when the file ends before the declared content."""

    code = "truncated"


class MalformedWeightsError(WeightFormatError):
    """Raised for undecodable names, duplicate tensors or trailing bytes."""

    code = "malformed"


class ShapeMismatchError(WeightFormatError):
    """Raised when a tensor's shape disagrees with the model manifest."""

    code = "shape_mismatch"

    def __init__(
        self,
        name: str,
        expected: tuple[int, ...],
        found: tuple[int, ...],
        path: str | None = None,
    ) -> None:
        self.name = name
        self.expected = expected
        self.found = found
        super().__init__(
            f"shape mismatch for {name!r}: expected {expected}, found {found}", path
        )


class IncompleteWeightsError(WeightFormatError):
    """Raised when tensors required by the manifest are missing."""

    code = "incomplete"

    def __init__(self, missing: list[str], path: str | None = None) -> None:
        self.missing = missing
        super().__init__(f"incomplete weight set: missing {', '.join(missing)}", path)


class ImageFormatError(VomixError):
    """Raised when an input image is not an 8-bit binary PPM of the expected size."""

    pass


class NumericalError(VomixError):
    """Raised when a kernel receives input it cannot evaluate."""

    pass


class InvariantViolationError(VomixError):
    """Raised when a conservation or positivity invariant is broken."""

    pass

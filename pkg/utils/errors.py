"""Exception hierarchy shared by every package of the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by the toolkit"""


class ShapeError(ToolkitError):
    def __init__(self, message, expected=None, actual=None):
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual) if actual is not None else None
        if expected is not None or actual is not None:
            message = f"{message} (expected {self.expected}, got {self.actual})"
        super().__init__(message)


class LabelError(ToolkitError):
    def __init__(self, label, num_classes):
        self.label = label
        self.num_classes = num_classes
        super().__init__(f"label {label} outside [0, {num_classes})")


class StaleContextError(ToolkitError):
    """Raised when a layer context is reused or belongs to another layer"""


class ArchitectureError(ToolkitError):
    def __init__(self, message, layer_index=None, layer_kind=None):
        self.layer_index = layer_index
        self.layer_kind = layer_kind
        if layer_index is not None:
            message = f"layer {layer_index} ({layer_kind}): {message}"
        super().__init__(message)


class ConfigError(ToolkitError):
    """Invalid user-supplied configuration; never leaves outputs behind"""


class PlacementError(ToolkitError):
    def __init__(self, top_left, patch_size, image_hw):
        self.top_left = tuple(top_left)
        self.patch_size = patch_size
        self.image_hw = tuple(image_hw)
        super().__init__(
            f"patch of size {patch_size} at {self.top_left} does not fit "
            f"inside image of size {self.image_hw}"
        )


class EmptyDatasetError(ToolkitError):
    pass


class ReportError(ToolkitError):
    pass


# File formats

class FormatError(ToolkitError):
    def __init__(self, message, path=None):
        self.path = str(path) if path is not None else None
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class BadMagicError(FormatError):
    pass


class CorruptHeaderError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class DimensionMismatchError(FormatError):
    pass


class MissingFileError(FormatError):
    def __init__(self, message, path=None, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message, path)


class BadLabelError(FormatError):
    def __init__(self, message, path=None, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message, path)


class NumericalError(ToolkitError):
    """A computation produced NaN or Inf"""

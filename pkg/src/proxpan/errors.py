"""Exception hierarchy shared by all proxpan modules."""


class ProxPanError(Exception):
    """Base class for every error raised by the package."""


class ShapeError(ProxPanError, ValueError):
    """Array dimensions are inconsistent with the operation."""


class RasterFormatError(ProxPanError):
    """A raster file does not follow the MBT layout (bad magic, trailing bytes)."""


class RasterTruncatedError(RasterFormatError):
    """A raster file ends before its declared payload."""


class RasterDimensionError(RasterFormatError):
    """Declared raster dimensions are zero or overflow the sample count."""


class DivergenceError(ProxPanError, ArithmeticError):
    """Non-finite values appeared during an iterative computation."""


class UndefinedMetricError(ProxPanError, ValueError):
    """A quality index is undefined for the given inputs."""


class UnsupportedOpError(ProxPanError, TypeError):
    """A tape node has no registered backward rule."""


class ConfigError(ProxPanError, ValueError):
    """A run configuration failed validation."""

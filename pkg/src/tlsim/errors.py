"""Exception taxonomy shared across the workbench.

The CLI maps these onto distinct exit codes (see cli.py), so library code
should raise the most specific class that applies.
"""


class WorkbenchError(Exception):
    """Base class for all tlsim errors."""


class ConfigurationError(WorkbenchError):
    """Invalid scenario, plan, mapping, or physics configuration."""


class GeometryError(WorkbenchError):
    """Map/patch geometry mismatch (no implicit resampling is ever done)."""


class GridFitError(WorkbenchError):
    """Cell-grid fitting failed (no usable autocorrelation peak)."""


class StageFaultError(WorkbenchError):
    """Commanded stage position outside the configured travel limits."""

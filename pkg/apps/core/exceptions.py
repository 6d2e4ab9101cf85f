# ==============================================
# CUSTOM EXCEPTIONS
# ==============================================
"""
Exception hierarchy shared by every reconstruction app.
The CLI maps ConfigurationError to exit code 2 and any other
ReconstructionError to exit code 3.
"""


class ReconstructionError(Exception):
    """
    Base exception for reconstruction toolkit errors.
    """
    default_code = 'reconstruction_error'

    def __init__(self, message, code=None):
        self.message = message
        self.code = code or self.default_code
        super().__init__(message)


class ConfigurationError(ReconstructionError):
    """
    Invalid configuration or parameter value supplied by the caller.
    """
    default_code = 'config_error'

    def __init__(self, message, key=None, code=None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message, code)


class ImageFormatError(ReconstructionError):
    """
    Raw image or sinogram file that cannot be decoded.
    """
    default_code = 'format_error'

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message)


class GridMismatchError(ReconstructionError):
    """Image, operator or mask shapes that do not agree."""
    default_code = 'grid_mismatch'


class GeometryError(ReconstructionError):
    """Degenerate projection geometry."""
    default_code = 'geometry_error'


class ModelInfeasibleError(ReconstructionError):
    """
    Data that the Poisson model cannot explain, e.g. positive counts
    in a bin whose expected value is identically zero.
    """
    default_code = 'model_infeasible'


class OptimizerError(ReconstructionError):
    """
    Exception for optimizer failures (non-finite objective values).
    """
    default_code = 'optimizer_error'

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)


class LineSearchError(OptimizerError):
    """Strong-Wolfe line search could not find an acceptable step."""
    default_code = 'line_search_failed'


class NonFiniteStateError(ReconstructionError):
    """
    ADMM state became non-finite. `diagnostic` holds per-variable summaries.
    """
    default_code = 'non_finite_state'

    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic or {}
        super().__init__(message)

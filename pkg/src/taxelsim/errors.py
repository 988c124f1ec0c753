"""Exception types shared across the toolkit."""


class TaxelSimError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(TaxelSimError, ValueError):
    pass


class ConfigurationError(TaxelSimError, ValueError):
    pass


class DegenerateElementError(TaxelSimError, ValueError):
    def __init__(self, tet_index, volume):
        super().__init__(f"degenerate tetrahedron {tet_index} (signed volume {volume:.3e} m^3)")
        self.tet_index = tet_index
        self.volume = volume


class DegenerateInputError(TaxelSimError, ValueError):
    pass


class DegenerateGeometryError(TaxelSimError, ValueError):
    pass


class SingularSystemError(TaxelSimError, RuntimeError):
    pass


class SolverFailure(TaxelSimError, RuntimeError):
    def __init__(self, message, residual=float("nan"), frame=None):
        super().__init__(message)
        self.residual = residual
        self.frame = frame


class CorruptionError(TaxelSimError, IOError):
    pass


class UnsupportedVersionError(TaxelSimError, ValueError):
    pass


class MissingArtifactError(TaxelSimError, FileNotFoundError):
    def __init__(self, kind):
        super().__init__(f"missing artifact: {kind}")
        self.kind = kind

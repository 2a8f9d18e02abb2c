class MFOCError(Exception):
    """ Base class for everything raised by mfoc """


class NonFiniteFieldError(MFOCError, ValueError):
    pass


class GridMismatchError(MFOCError, ValueError):
    pass


class MeshMismatchError(MFOCError, ValueError):
    pass


class MassMismatchError(MFOCError, ValueError):
    pass


class AssumptionError(MFOCError, ValueError):
    """ A potential/coupling parameter violates a standing assumption (A1)-(A3) """
    pass


class ConfigError(MFOCError, ValueError):
    pass


class SnapshotFormatError(MFOCError, ValueError):
    pass


class SolverBreakdownError(MFOCError):
    """ A marching scheme produced a state it must never produce (negative density, v <= 0, ...) """
    pass


class CFLViolationError(SolverBreakdownError, ValueError):

    def __init__(self, courant: float, admissible_dt: float):
        self.courant = courant
        self.admissible_dt = admissible_dt
        super().__init__(f"CFL violated: Courant number {courant:.4g} > 1, use dt <= {admissible_dt:.6g}")

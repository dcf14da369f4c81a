"""Init."""

import enum

__version__ = "0.1.0"

RESIDUAL_TOL: float = 1e-8
R_MAX: float = 30.0
PROFILE_STEP: float = 0.01
Z_STAR: float = 5.0
RHO: float = 0.02
ETA: float = 0.1
BIG_M: float = 20.0
PLACEMENT_TAIL: float = 1e-10
DEALIAS_FRACTION: float = 2.0 / 3.0


class ZKLabError(Exception):
    """Base class for every failure raised by the lab."""

    def __init__(self, message: str = "Zakharov-Kuznetsov lab error") -> None:
        """Init."""
        super().__init__(message)


class Experiment(enum.StrEnum):
    """Experiment selector."""

    GROUND_STATE = "ground-state"
    ASYMPTOTICS = "asymptotics"
    INTERACTION = "interaction"
    Z_ODE = "z-ode"
    SPECTRUM = "spectrum"
    ANSATZ = "ansatz"
    SINGLE_SOLITON = "single-soliton"
    COLLIDE = "collide"
    STABILITY = "stability"
    VERIFY_ALL = "verify-all"
    FIELD = "field"
    TRACK = "track"

"""Exception types shared across the package."""


class UclfAdaptError(Exception):
    """Base class for all package errors."""


class ContractError(UclfAdaptError):
    """An argument violated a documented precondition (shape, domain, range)."""


class ConfigError(UclfAdaptError):
    """A run configuration failed validation.

    ``key`` is the dotted config path (e.g. ``adapt.eta``) when known.
    """

    def __init__(self, message, key=None, path=None):
        self.key = key
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if key is not None:
            prefix += f"[{key}] "
        super().__init__(prefix + message)


class GainDomainError(ContractError):
    """A gain function was evaluated outside its admissible argument range."""


class IntegrationDivergedError(UclfAdaptError):
    """The integrated state became non-finite.

    Carries the last valid time and the partial trajectory accumulated
    up to that point so callers can post-mortem the run.
    """

    def __init__(self, time, trajectory=None, message=None):
        self.time = time
        self.trajectory = trajectory
        super().__init__(message or f"integration diverged at t={time:.6g}")


class StiffnessError(IntegrationDivergedError):
    """The adaptive integrator's step size underflowed ``min_step``."""

    def __init__(self, time, trajectory=None):
        super().__init__(
            time, trajectory,
            f"step size underflow at t={time:.6g}; problem too stiff for "
            f"the explicit integrator",
        )


class SimulationDivergedError(UclfAdaptError):
    """A closed-loop run diverged; carries the partial trace."""

    def __init__(self, time, trace=None):
        self.time = time
        self.trace = trace
        super().__init__(f"simulation diverged at t={time:.6g}")

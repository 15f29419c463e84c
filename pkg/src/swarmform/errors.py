"""Exception hierarchy shared by every module."""


class SwarmFormError(Exception):
    """Base class for all library errors."""


class DegenerateHorizon(SwarmFormError, ValueError):
    pass


class OutOfDomain(SwarmFormError, ValueError):
    pass


class IdentityComparison(SwarmFormError, ValueError):
    pass


class InfeasibleAssignment(SwarmFormError):
    """No perfect agent-to-goal matching exists under the current bans."""


class NonTermination(SwarmFormError, RuntimeError):
    """The ban loop exceeded its round bound; indicates an invariant bug."""


class ZeroRelativeSpeed(SwarmFormError, ValueError):
    pass


class ContactBroken(SwarmFormError):
    """Two leaders separated beyond 4R so a double contact cannot be held."""


class NoFeasibleTrajectory(SwarmFormError):
    pass


class SingularNu(SwarmFormError, ValueError):
    pass


class ParseError(SwarmFormError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(SwarmFormError, ValueError):
    pass

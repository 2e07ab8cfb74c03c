"""Exception hierarchy shared by every geomatch module."""


class GeomatchError(Exception):
    """Base class for all library errors."""


class EmptyEnsemble(GeomatchError, ValueError):
    pass


class GridTooFine(GeomatchError, ValueError):
    pass


class InstanceTooLarge(GeomatchError, ValueError):
    pass


class NotOnGrid(GeomatchError, ValueError):
    pass


class FreeSetExhausted(GeomatchError, RuntimeError):
    pass


class DegenerateState(GeomatchError, ArithmeticError):
    pass


class SingularTime(GeomatchError, ArithmeticError):
    pass


class IntegrationDiverged(GeomatchError, RuntimeError):
    pass


class ConfigError(GeomatchError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

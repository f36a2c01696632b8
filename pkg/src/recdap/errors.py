"""Exception hierarchy shared by every recdap module."""


class RecdapError(Exception):
    pass


class DimensionError(RecdapError, ValueError):
    pass


class DomainError(RecdapError, ValueError):
    pass


class ContractError(RecdapError, ValueError):
    pass


class ConfigError(RecdapError, ValueError):
    pass


class LoadError(RecdapError, OSError):
    pass


class VocabularyError(RecdapError, KeyError):
    pass


class SamplingError(RecdapError, RuntimeError):
    pass


class EpisodeError(RecdapError, RuntimeError):
    pass


class EvaluationError(RecdapError, RuntimeError):
    pass


class DivergenceError(RecdapError, FloatingPointError):
    pass

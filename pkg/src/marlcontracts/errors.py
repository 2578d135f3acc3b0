"""Exception types shared across the toolkit."""


class MarlContractsError(Exception):
    """Base class for all toolkit errors."""


class InvalidActionError(MarlContractsError, ValueError):
    """An agent produced an action outside its action space."""


class UnsupportedOperationError(MarlContractsError):
    """Operation requires structure (finiteness, determinism) the game lacks."""


class UnsupportedScaleError(MarlContractsError):
    """Problem instance is too large for the exact method requested."""


class NoPureEquilibriumError(MarlContractsError):
    """A stage game has no pure-strategy Nash equilibrium."""


class FrozenPolicyError(MarlContractsError):
    """A policy that must be frozen (or must not be) violated the contract."""


class ConfigError(MarlContractsError):
    """An experiment configuration is malformed or unresolvable."""


class EmptySelectionError(MarlContractsError):
    """A metrics selector matched nothing."""

"""Exception types shared across the toolkit."""


class WavescopeError(Exception):
    """Base class for all toolkit errors."""


class FormatError(WavescopeError):
    """A file does not match its expected on-disk layout."""


class UnsupportedFormatError(FormatError):
    """The file layout is recognized but the codec/encoding is not handled."""


class ValidationError(WavescopeError, ValueError):
    """Input data violates a documented invariant."""


class ContractError(WavescopeError, ValueError):
    """A caller violated an operation's precondition."""

"""Exception hierarchy shared across the toolkit."""


class InkwellError(Exception):
    """Base class for all toolkit errors."""


class InvalidWindowError(InkwellError):
    """Window length does not match the key's window size."""


class InvalidParameterError(InkwellError, ValueError):
    """A scheme or decoder parameter is outside its valid range."""


class ConfigurationError(InkwellError):
    """Scheme/decoder combination or config file is invalid."""


class TrainingError(InkwellError):
    """Language-model training received unusable input."""


class TokenLookupError(InkwellError, KeyError):
    """A token or token id is not part of the vocabulary."""


class NumericError(InkwellError):
    """Non-finite values where finite numbers are required."""


class TooShortError(InkwellError):
    """Text is too short to score (needs at least window size + 1 tokens)."""


class ProviderError(InkwellError):
    """Base class for logit-provider failures."""


class ProviderTransportError(ProviderError):
    """The byte stream to the provider broke (EOF, connection refused...)."""


class ProviderProtocolError(ProviderError):
    """The provider violated the wire contract (bad frame, wrong length...)."""


class ProviderModelError(ProviderError):
    """The provider answered with an error frame for this request."""

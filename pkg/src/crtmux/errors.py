"""Exception hierarchy for the multi-channel CRT transmission toolkit."""


class CrtmuxError(Exception):
    """Base class for all errors raised by this package."""


# --- residue arithmetic ---

class InputOutOfRange(CrtmuxError):
    """Integer to split is not below the moduli product."""


class ResidueOutOfRange(CrtmuxError):
    """A residue is not below its modulus (corruption or desync)."""


class BothZero(CrtmuxError):
    """Extended gcd of (0, 0) is undefined."""


class NotEnoughPrimes(CrtmuxError):
    """The requested bit length cannot supply enough distinct primes."""


class NotCoprime(CrtmuxError):
    """Moduli are not pairwise coprime."""


# --- pseudorandom selection ---

class GeneratorExhausted(CrtmuxError):
    """Rejection sampling exceeded its iteration bound (diagnostic only)."""


class SizeMismatch(CrtmuxError):
    """Moduli count does not match the assignment mode's requirement."""


# --- cipher layer ---

class BadLength(CrtmuxError):
    """Superblock length is not the configured number of bytes."""


class BadPadding(CrtmuxError):
    """Trailing padding bytes are malformed."""


class Overflow(CrtmuxError):
    """Value does not fit the target width."""


# --- scheme / key file ---

class BadParameters(CrtmuxError):
    """Setup parameters violate the scheme's invariants."""


class MissingChannel(CrtmuxError):
    """No packet present for a selected channel."""


class KeyFormatError(CrtmuxError):
    """Base class for key-file parse failures."""


class BadMagic(KeyFormatError):
    """Key file does not start with the expected magic bytes."""


class BadVersion(KeyFormatError):
    """Key file declares an unsupported format version."""


class Truncated(KeyFormatError):
    """Key file ends before the declared content."""


class InvariantViolation(KeyFormatError):
    """Deserialized configuration fails the scheme invariants."""


# --- transport ---

class TransportError(CrtmuxError):
    """Base class for channel transport failures."""


class BindFailed(TransportError):
    """Could not bind a listening socket."""


class ConnectFailed(TransportError):
    """Could not connect to a listening peer."""


class Timeout(TransportError):
    """Transport operation exceeded its deadline."""


class Closed(TransportError):
    """Channel closed mid-round."""


class EndOfStream(TransportError):
    """All channels closed cleanly at a round boundary."""


class BadWidth(TransportError):
    """Cell does not match the channel's configured width."""


# --- analysis ---

class ProductTooSmall(CrtmuxError):
    """Moduli product is below 2^N for the requested superblock size."""


class WidthMismatch(CrtmuxError):
    """Transcript cells on one channel differ in width, or are absent."""

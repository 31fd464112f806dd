"""Exception types shared across the package."""


class TunechainError(Exception):
    """Base class for every error raised by tunechain."""


class InvalidInput(TunechainError, ValueError):
    pass


class UnsupportedFormat(TunechainError):
    pass


class MalformedFile(TunechainError):
    pass


class NotFound(TunechainError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class IntegrityError(TunechainError):
    """A chunk or root hash did not match the manifest.

    ``index`` is the offending chunk position, or ``None`` when the
    recomputed Merkle root is the mismatch.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class Revert(TunechainError):
    """A contract call failed; contract state is unchanged."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class AlreadyRegistered(TunechainError):
    pass


class InvalidCredential(TunechainError, ValueError):
    pass


class ConsensusFailure(TunechainError):
    def __init__(self, node_id, reason):
        super().__init__(f"node {node_id} rejected block: {reason}")
        self.node_id = node_id
        self.reason = reason


class CopyrightViolation(TunechainError):
    """Upload rejected because its fingerprint is already registered.

    ``side_block`` is the side-chain block recording the violation.
    """

    def __init__(self, fingerprint, side_block=None):
        super().__init__(f"copyright violation: fingerprint {fingerprint} already registered")
        self.fingerprint = fingerprint
        self.side_block = side_block


class UnregisteredUser(TunechainError):
    pass


UnregisteredUploader = UnregisteredUser


class ChunkUnavailable(TunechainError):
    pass


class AccessDenied(TunechainError):
    def __init__(self, message, side_block=None):
        super().__init__(message)
        self.side_block = side_block

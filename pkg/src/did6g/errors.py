"""Exception hierarchy shared by all did6g modules."""

from __future__ import annotations


class Did6gError(Exception):
    """Base class for every error raised by did6g."""


# identity

class InvalidSeed(Did6gError, ValueError):
    pass


class InvalidContext(Did6gError, ValueError):
    pass


class PurposeMismatch(Did6gError):
    """A key was used for something its purpose does not admit."""


class InvalidDocument(Did6gError, ValueError):
    """A DID document violates a structural invariant."""


class DidSyntaxError(Did6gError, ValueError):
    pass


class NotController(Did6gError):
    pass


# registry

class RegistryError(Did6gError):
    """A registry rejected a transaction or a read."""


class WriteDenied(RegistryError):
    pass


class ReadDenied(RegistryError):
    pass


class BadSignature(Did6gError):
    """A signature did not verify (registry transactions and envelopes)."""


class VersionGap(RegistryError):
    pass


class DuplicateDid(RegistryError):
    pass


class NotFound(RegistryError):
    pass


class NotAdmin(RegistryError):
    pass


class NotIssuer(Did6gError):
    pass


class EmptyPending(RegistryError):
    pass


class UnknownActor(RegistryError):
    pass


class TooFewReplicas(RegistryError, ValueError):
    pass


class LedgerFormatError(RegistryError, ValueError):
    pass


# agent layer

class ChannelError(Did6gError):
    pass


class AuthFailed(ChannelError):
    pass


class ResolveFailed(ChannelError):
    pass


class StaleDocument(AuthFailed):
    """The peer authenticated with a key that was rotated out of its document."""


class DecryptFailed(ChannelError):
    pass


class UnknownChannel(ChannelError):
    pass


class NoRegistryAccess(ChannelError):
    pass


# credential layer

class CredentialError(Did6gError):
    pass


class NoAssertionKey(CredentialError):
    pass


class EmptyClaims(CredentialError, ValueError):
    pass


class NotHolder(CredentialError):
    pass

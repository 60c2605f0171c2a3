"""Exception hierarchy shared by every layer of the client."""


class MailpostError(Exception):
    """Base class for all errors raised by mailpost."""


# transport


class TransportError(MailpostError):
    pass


class UnsupportedScheme(TransportError):
    pass


class MalformedUrl(TransportError):
    pass


class ConnectTimeout(TransportError):
    pass


class TlsFailure(TransportError):
    pass


class Refused(TransportError):
    pass


class ConnectionClosed(TransportError):
    pass


class ReadTimeout(TransportError):
    pass


# protocol


class ProtocolError(MailpostError):
    pass


class TagSpaceExhausted(ProtocolError):
    pass


class UnencodableArgument(ProtocolError):
    pass


class MalformedResponse(ProtocolError):
    pass


class MalformedEnvelope(MalformedResponse):
    pass


class MalformedBodyStructure(MalformedResponse):
    pass


class ProtocolDesync(ProtocolError):
    pass


# session and commands


class StateError(MailpostError):
    """An operation was attempted in a session phase that forbids it."""


class CommandFailed(MailpostError):
    """The server completed a command with NO or BAD.

    ``status`` is ``"NO"`` or ``"BAD"`` and ``text`` the human-readable
    remainder of the tagged response line.
    """

    def __init__(self, message, status=None, text=""):
        super().__init__(message)
        self.status = status
        self.text = text


class AuthFailed(CommandFailed):
    pass


class NoSuchFolder(CommandFailed):
    pass


class FolderOpFailed(CommandFailed):
    pass


class SearchRefused(CommandFailed):
    pass


class CapabilityMissing(MailpostError):
    def __init__(self, capability):
        super().__init__(f"server does not advertise the {capability} capability")
        self.capability = capability


class InvalidArgument(MailpostError, ValueError):
    pass


class InvalidTimeout(InvalidArgument):
    pass


class InvalidRange(InvalidArgument):
    pass


class UnknownAttribute(InvalidArgument):
    pass


class NoSuchMessage(MailpostError):
    def __init__(self, message_id):
        super().__init__(f"no such message: {int(message_id)}")
        self.message_id = message_id


class NoAttachments(MailpostError):
    def __init__(self, message_id):
        super().__init__(f"message {int(message_id)} has no attachments")
        self.message_id = message_id


# mime


class InvalidBase64(MailpostError, ValueError):
    pass


class MalformedMime(MailpostError):
    pass


# analytics


class BadLexiconLine(MailpostError, ValueError):
    def __init__(self, lineno, reason):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason

"""Connection configuration, login and the per-account session object.

A :class:`Session` owns one transport and walks the IMAP state machine::

    NOT_AUTHENTICATED -> AUTHENTICATED -> SELECTED -> LOGGED_OUT

Every request method checks the phase first and raises :class:`StateError`
without touching the wire when the call is not allowed.
"""

import base64
import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

from . import fetch as _fetch
from . import search as _search
from .errors import (
    AuthFailed,
    CommandFailed,
    ConnectionClosed,
    FolderOpFailed,
    InvalidArgument,
    InvalidTimeout,
    MailpostError,
    NoSuchFolder,
    ProtocolDesync,
    Refused,
    StateError,
)
from .ids import SEQUENCE, UID
from .protocol import (
    Atom,
    CapabilityList,
    FlagList,
    FolderList,
    MessageCount,
    Quoted,
    ResponseKind,
    StatusText,
    next_tag,
    read_response,
    serialize_command_parts,
)
from .transport import DEFAULT_TIMEOUT_MS, connect, parse_url

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Password:
    secret: str = field(repr=False)


@dataclass(frozen=True)
class XOAuth2Bearer:
    token: str = field(repr=False)


@dataclass
class ImapConfig:
    url: str
    username: str
    auth: Union[Password, XOAuth2Bearer] = field(repr=False)
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    use_uid: bool = True
    verify_tls: bool = True

    def __post_init__(self):
        if not isinstance(self.auth, (Password, XOAuth2Bearer)):
            raise InvalidArgument("auth must be Password(...) or XOAuth2Bearer(...)")
        if not self.username:
            raise InvalidArgument("username is required")
        _check_timeout(self.timeout_ms)
        self.endpoint = parse_url(self.url)


def _check_timeout(ms):
    if isinstance(ms, bool) or not isinstance(ms, int) or ms <= 0:
        raise InvalidTimeout(f"timeout must be a positive number of milliseconds, got {ms!r}")


class Phase(enum.Enum):
    NOT_AUTHENTICATED = "not-authenticated"
    AUTHENTICATED = "authenticated"
    SELECTED = "selected"
    LOGGED_OUT = "logged-out"


_LIVE = (Phase.NOT_AUTHENTICATED, Phase.AUTHENTICATED, Phase.SELECTED)
_AUTHED = (Phase.AUTHENTICATED, Phase.SELECTED)


@dataclass
class FolderSelection:
    name: str
    message_count: Optional[int]
    flags: list
    uidvalidity: Optional[int] = None


def xoauth2_initial_response(username, token):
    raw = f"user={username}\x01auth=Bearer {token}\x01\x01".encode()
    return base64.b64encode(raw).decode("ascii")


class Session:
    """One live IMAP connection (the "connection token")."""

    def __init__(self, config, transport):
        self.config = config
        self.transport = transport
        self.phase = Phase.NOT_AUTHENTICATED
        self.selected_folder = None
        self.message_count = None
        self.capabilities = None
        self.greeting = None
        self._tag_counter = 0
        self.last_completion = None

    def __repr__(self):
        return (
            f"<Session {self.config.username}@{self.config.endpoint.host} "
            f"phase={self.phase.value} folder={self.selected_folder!r}>"
        )

    # -- construction ---------------------------------------------------------

    @classmethod
    def open(cls, config, transport=None):
        """Connect and consume the greeting; does not log in."""
        if transport is None:
            transport = connect(config.endpoint, config.timeout_ms, config.verify_tls)
        else:
            transport.timeout_ms = config.timeout_ms
        session = cls(config, transport)
        try:
            greeting = read_response(transport)
        except MailpostError:
            transport.close()
            raise
        session.greeting = greeting
        status = greeting.payload if isinstance(greeting.payload, StatusText) else None
        if status is None or status.status not in ("OK", "PREAUTH"):
            transport.close()
            session.phase = Phase.LOGGED_OUT
            raise Refused(f"server rejected the connection: {greeting.text or greeting.raw!r}")
        session._note_capabilities(status.code)
        if status.status == "PREAUTH":
            session.phase = Phase.AUTHENTICATED
        return session

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.logout()

    # -- plumbing -------------------------------------------------------------

    @property
    def id_kind(self):
        return UID if self.config.use_uid else SEQUENCE

    def _require(self, op, phases):
        if self.phase not in phases:
            raise StateError(f"{op} is not allowed in phase {self.phase.value}")

    def _require_selected(self, op):
        self._require(op, (Phase.SELECTED,))

    def _note_capabilities(self, code):
        if code and code.upper().startswith("CAPABILITY "):
            self.capabilities = [c.upper() for c in code.split()[1:]]

    def execute(self, verb, args=(), failure=CommandFailed, sensitive=False):
        """Send one command and return its untagged responses.

        A tagged NO/BAD raises ``failure``.  Literal arguments are sent after
        the server's continuation request.  ``sensitive`` keeps arguments out
        of the debug log.
        """
        tag, self._tag_counter = next_tag(self._tag_counter)
        parts = serialize_command_parts(tag, verb, args)
        if sensitive:
            log.debug("C: %s %s <redacted>", tag, verb)
        else:
            log.debug("C: %r", b"".join(parts)[:200])
        untagged = []
        self.transport.write_all(parts[0])
        pending = list(parts[1:])
        while True:
            resp = read_response(self.transport)
            if resp.kind is ResponseKind.CONTINUATION:
                # either the go-ahead for a literal or a SASL error challenge
                self.transport.write_all(pending.pop(0) if pending else b"\r\n")
                continue
            if not resp.tagged:
                untagged.append(resp)
                self._observe(resp)
                continue
            if resp.tag != tag:
                raise ProtocolDesync(f"expected completion of {tag}, got {resp.tag}")
            log.debug("S: %s %s", resp.tag, resp.kind.name)
            if resp.kind is not ResponseKind.TAGGED_OK:
                status = "NO" if resp.kind is ResponseKind.TAGGED_NO else "BAD"
                raise failure(f"{verb} failed: {status} {resp.text}", status, resp.text)
            self._note_capabilities(resp.payload.code if resp.payload else None)
            self.last_completion = resp
            return untagged

    def _observe(self, resp):
        p = resp.payload
        if isinstance(p, CapabilityList):
            self.capabilities = p.capabilities
        elif isinstance(p, MessageCount) and p.name == "EXISTS" and self.phase is Phase.SELECTED:
            self.message_count = p.value
        elif isinstance(p, StatusText) and p.status == "BYE":
            log.info("server said BYE: %s", p.text)

    # -- authentication -------------------------------------------------------

    def authenticate(self):
        self._require("authenticate", (Phase.NOT_AUTHENTICATED,))
        auth = self.config.auth
        # pre-login capabilities go stale; a CAPABILITY code on the OK refreshes them
        self.capabilities = None
        if isinstance(auth, Password):
            self.execute(
                "LOGIN", [Quoted(self.config.username), Quoted(auth.secret)],
                failure=AuthFailed, sensitive=True,
            )
        else:
            ir = xoauth2_initial_response(self.config.username, auth.token)
            self.execute("AUTHENTICATE", [Atom("XOAUTH2"), Atom(ir)], failure=AuthFailed, sensitive=True)
        self.phase = Phase.AUTHENTICATED

    # -- capabilities ---------------------------------------------------------

    def list_server_capabilities(self):
        self._require("list_server_capabilities", _LIVE)
        self.capabilities = []
        self.execute("CAPABILITY")
        return list(self.capabilities)

    def has_capability(self, name):
        if self.capabilities is None:
            self.list_server_capabilities()
        return name.upper() in self.capabilities

    # -- folders --------------------------------------------------------------

    def select_folder(self, name):
        self._require("select_folder", _AUTHED)
        try:
            untagged = self.execute("SELECT", [name], failure=NoSuchFolder)
        except CommandFailed:
            # a failed SELECT leaves no folder selected
            self.phase = Phase.AUTHENTICATED
            self.selected_folder = None
            self.message_count = None
            raise
        flags, count, uidvalidity = [], None, None
        for resp in untagged:
            p = resp.payload
            if isinstance(p, MessageCount) and p.name == "EXISTS":
                count = p.value
            elif isinstance(p, FlagList):
                flags = p.flags
            elif isinstance(p, StatusText) and p.code and p.code.upper().startswith("UIDVALIDITY "):
                try:
                    uidvalidity = int(p.code.split()[1])
                except ValueError:
                    pass
        self.phase = Phase.SELECTED
        self.selected_folder = name
        self.message_count = count
        return FolderSelection(name, count, flags, uidvalidity)

    def list_folders(self):
        self._require("list_folders", _AUTHED)
        untagged = self.execute("LIST", [Quoted(""), Quoted("*")])
        return [r.payload.name for r in untagged if isinstance(r.payload, FolderList)]

    def create_folder(self, name):
        self._require("create_folder", _AUTHED)
        self.execute("CREATE", [name], failure=FolderOpFailed)

    def rename_folder(self, name, new_name):
        self._require("rename_folder", _AUTHED)
        self.execute("RENAME", [name, new_name], failure=FolderOpFailed)
        if self.phase is Phase.SELECTED and self.selected_folder == name:
            self.selected_folder = new_name

    def delete_folder(self, name):
        self._require("delete_folder", _AUTHED)
        self.execute("DELETE", [name], failure=FolderOpFailed)
        if self.phase is Phase.SELECTED and self.selected_folder == name:
            self.phase = Phase.AUTHENTICATED
            self.selected_folder = None
            self.message_count = None

    # -- reset methods --------------------------------------------------------

    def reset_timeout(self, timeout_ms):
        self._require("reset_timeout", _LIVE)
        _check_timeout(timeout_ms)
        self.config.timeout_ms = timeout_ms
        self.transport.timeout_ms = timeout_ms

    def logout(self):
        """Send LOGOUT and close; never raises, safe to call twice."""
        if self.phase is Phase.LOGGED_OUT:
            return
        try:
            if not self.transport.closed:
                self.execute("LOGOUT")
        except (MailpostError, OSError) as exc:
            if not isinstance(exc, ConnectionClosed):
                log.warning("LOGOUT did not complete cleanly: %s", exc)
        finally:
            self.transport.close()
            self.phase = Phase.LOGGED_OUT
            self.selected_folder = None
            self.message_count = None

    # -- search and fetch (see the search and fetch modules) ------------------

    def search(self, criterion):
        return _search.search(self, criterion)

    def search_period(self, since, before):
        return _search.search_period(self, since, before)

    def search_on(self, date):
        return _search.search_on(self, date)

    def search_since(self, date):
        return _search.search_since(self, date)

    def search_before(self, date):
        return _search.search_before(self, date)

    def search_string(self, expr, where):
        return _search.search_string(self, expr, where)

    def search_flag(self, flag, negated=False):
        return _search.search_flag(self, flag, negated)

    def search_size(self, relation, octets):
        return _search.search_size(self, relation, octets)

    def search_within(self, relation, seconds):
        return _search.search_within(self, relation, seconds)

    def fetch_body(self, ids, mime_level=None):
        return _fetch.fetch_body(self, ids, mime_level)

    def fetch_header(self, ids, fields=None):
        return _fetch.fetch_header(self, ids, fields)

    def fetch_text(self, ids):
        return _fetch.fetch_text(self, ids)

    def fetch_metadata(self, ids, attributes=("ENVELOPE",)):
        return _fetch.fetch_metadata(self, ids, attributes)

    def fetch_bodystructure(self, ids):
        return _fetch.fetch_bodystructure(self, ids)

    def fetch_attachments(self, ids):
        return _fetch.fetch_attachments(self, ids)


def configure_imap(config=None, *, transport=None, **kwargs):
    """Connect, authenticate and return an authenticated :class:`Session`.

    Accepts an :class:`ImapConfig`, or keyword arguments ``url``,
    ``username`` and either ``password`` or ``xoauth2_bearer`` (plus
    ``timeout_ms``, ``use_uid``, ``verify_tls``).
    """
    if config is None:
        password = kwargs.pop("password", None)
        bearer = kwargs.pop("xoauth2_bearer", None)
        if (password is None) == (bearer is None):
            raise InvalidArgument("give exactly one of password or xoauth2_bearer")
        auth = Password(password) if password is not None else XOAuth2Bearer(bearer)
        config = ImapConfig(auth=auth, **kwargs)
    elif kwargs:
        raise InvalidArgument("pass either a config or keyword arguments, not both")
    session = Session.open(config, transport)
    if session.phase is Phase.NOT_AUTHENTICATED:
        try:
            session.authenticate()
        except MailpostError:
            session.logout()
            raise
    return session

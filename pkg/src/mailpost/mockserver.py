"""A scriptable, in-process IMAP server for tests and demos.

Two flavours share one connection loop:

* **scripted** -- replays canned responses for an expected sequence of
  commands (:func:`start_scripted`);
* **stateful** -- evaluates LIST/SELECT/CREATE/RENAME/DELETE/SEARCH/FETCH
  against fixture mailboxes (:func:`start_stateful`).

An endpoint is reachable either through an in-memory pipe
(:meth:`MockEndpoint.connect`) or a loopback TLS socket
(:meth:`MockEndpoint.serve_tls`).  Every received command is recorded in
:attr:`MockEndpoint.command_log`.

Run ``python -m mailpost.mockserver --fixtures DIR`` to serve a fixture
directory for manual CLI experiments.
"""

import base64
import datetime as _dt
import fnmatch
import json
import logging
import os
import random
import re
import socket
import ssl
import threading
from dataclasses import dataclass, field
from email.utils import getaddresses
from importlib import resources

from .errors import MailpostError
from .mime import MimeEntity, parse_mime
from .transport import DEFAULT_TIMEOUT_MS, SocketTransport, pipe_pair

log = logging.getLogger(__name__)

DEFAULT_CAPABILITIES = ("IMAP4rev1", "AUTH=PLAIN", "AUTH=XOAUTH2", "SASL-IR", "UIDPLUS")
SYSTEM_FLAGS = ("\\Answered", "\\Flagged", "\\Deleted", "\\Seen", "\\Draft")
_LITERAL_TAIL = re.compile(rb"\{(\d+)(\+?)\}\r\n$")


# -- wire helpers -------------------------------------------------------------


def quote(value):
    """Render ``value`` as an IMAP string (quoted, literal, or NIL)."""
    if value is None:
        return b"NIL"
    data = value.encode("utf-8") if isinstance(value, str) else bytes(value)
    if all(0x20 <= b <= 0x7E for b in data) and b'"' not in data and b"\\" not in data:
        return b'"' + data + b'"'
    return b"{%d}\r\n" % len(data) + data


def literal(data):
    data = data.encode("utf-8") if isinstance(data, str) else bytes(data)
    return b"{%d}\r\n" % len(data) + data


def fetch_response(seq, *items):
    """Build a ``* seq FETCH (...)`` line; ``items`` are (name, rendered value) pairs."""
    body = b" ".join(
        (n.encode() if isinstance(n, str) else n) + b" " + (v.encode() if isinstance(v, str) else v)
        for n, v in items
    )
    return b"* %d FETCH (" % seq + body + b")\r\n"


def decode_command(raw):
    """Split a logical command line into ``(tag, verb, args)``.

    Atoms come back as ``str`` (bracketed sections such as
    ``BODY.PEEK[HEADER.FIELDS (FROM)]`` stay one atom), quoted strings and
    literals as ``bytes``, parenthesized lists as ``list``.
    """
    data = bytes(raw)
    if data.endswith(b"\r\n"):
        data = data[:-2]
    toks = []
    stack = [toks]
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b" ":
            i += 1
        elif c == b"(":
            new = []
            stack[-1].append(new)
            stack.append(new)
            i += 1
        elif c == b")":
            if len(stack) == 1:
                raise ValueError("unbalanced ')'")
            stack.pop()
            i += 1
        elif c == b'"':
            i += 1
            buf = bytearray()
            while i < n and data[i:i + 1] != b'"':
                if data[i:i + 1] == b"\\":
                    i += 1
                buf += data[i:i + 1]
                i += 1
            if i >= n:
                raise ValueError("unterminated quoted string")
            i += 1
            stack[-1].append(bytes(buf))
        elif c == b"{":
            m = re.compile(rb"\{(\d+)\+?\}\r\n").match(data, i)
            if not m:
                raise ValueError("bad literal")
            size = int(m.group(1))
            stack[-1].append(data[m.end():m.end() + size])
            i = m.end() + size
        else:
            start = i
            depth = 0
            while i < n:
                ch = data[i:i + 1]
                if ch == b"[":
                    depth += 1
                elif ch == b"]" and depth:
                    depth -= 1
                elif depth == 0 and ch in b" ()":
                    break
                i += 1
            stack[-1].append(data[start:i].decode("ascii", "replace"))
    if len(stack) != 1:
        raise ValueError("unbalanced '('")
    if len(toks) < 2 or not isinstance(toks[0], str) or not isinstance(toks[1], str):
        raise ValueError("missing tag or verb")
    tag, verb, args = toks[0], toks[1].upper(), toks[2:]
    if verb == "UID" and args and isinstance(args[0], str):
        verb = "UID " + args[0].upper()
        args = args[1:]
    return tag, verb, args


def astr(tok):
    """An astring token as text."""
    if isinstance(tok, (bytes, bytearray)):
        return bytes(tok).decode("utf-8", "replace")
    if isinstance(tok, list):
        raise ValueError("list where string expected")
    return tok


# -- fixtures -----------------------------------------------------------------


def parse_internaldate(text):
    day, mon, rest = text.strip().split("-", 2)
    return _dt.datetime.strptime(f"{day}-{_MONTHS.index(mon.lower()) + 1}-{rest}", "%d-%m-%Y %H:%M:%S %z")


def format_internaldate(value):
    return value.strftime("%d-") + _MONTHS[value.month - 1].capitalize() + value.strftime("-%Y %H:%M:%S %z")


@dataclass
class FixtureMessage:
    uid: int
    raw: bytes
    flags: list = field(default_factory=list)
    internal_date: _dt.datetime = field(
        default_factory=lambda: _dt.datetime(2020, 11, 1, tzinfo=_dt.timezone.utc)
    )

    def __post_init__(self):
        if isinstance(self.internal_date, str):
            self.internal_date = parse_internaldate(self.internal_date)
        self._entity = None

    @property
    def entity(self):
        if self._entity is None:
            self._entity = parse_mime(self.raw)
        return self._entity


@dataclass
class FixtureMailbox:
    name: str
    messages: list = field(default_factory=list)

    def __post_init__(self):
        uids = [m.uid for m in self.messages]
        if any(b <= a for a, b in zip(uids, uids[1:])):
            raise ValueError(f"UIDs in {self.name} must be unique and ascending")
        self.uidnext = (uids[-1] + 1) if uids else 1


def load_fixtures(directory):
    """Load mailboxes from ``manifest.json`` plus ``.eml`` files in ``directory``.

    Manifest layout::

        {"folders": [{"name": "INBOX", "messages": [
            {"file": "141.eml", "uid": 141, "flags": ["\\\\Seen"],
             "internal_date": "05-Nov-2020 10:00:00 +0000"}]}]}
    """
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    boxes = []
    for folder in manifest["folders"]:
        msgs = []
        for entry in folder.get("messages", []):
            with open(os.path.join(directory, entry["file"]), "rb") as fh:
                raw = fh.read()
            msgs.append(FixtureMessage(
                uid=entry["uid"], raw=raw, flags=list(entry.get("flags", [])),
                internal_date=entry.get("internal_date", "01-Nov-2020 00:00:00 +0000"),
            ))
        boxes.append(FixtureMailbox(folder["name"], msgs))
    return boxes


def bundled_fixtures_dir():
    return str(resources.files("mailpost") / "data" / "fixtures")


# -- structure rendering ------------------------------------------------------


def _addr_list(value):
    if not value:
        return b"NIL"
    out = []
    for name, addr in getaddresses([value]):
        if "@" not in addr:
            continue
        mailbox, _, host = addr.rpartition("@")
        out.append(b"(" + quote(name or None) + b" NIL " + quote(mailbox) + b" " + quote(host) + b")")
    return b"(" + b"".join(out) + b")" if out else b"NIL"


def envelope_of(entity):
    h = entity.header
    frm = h("from")
    fields = [
        quote(h("date")), quote(h("subject")), _addr_list(frm),
        _addr_list(h("sender") or frm), _addr_list(h("reply-to") or frm),
        _addr_list(h("to")), _addr_list(h("cc")), _addr_list(h("bcc")),
        quote(h("in-reply-to")), quote(h("message-id")),
    ]
    return b"(" + b" ".join(fields) + b")"


def _param_list(params):
    if not params:
        return b"NIL"
    return b"(" + b" ".join(quote(k.upper() if k != "name" and k != "filename" else k) + b" " + quote(v) for k, v in params.items()) + b")"


def bodystructure_of(entity, extensible=True):
    if entity.is_multipart:
        kids = b"".join(bodystructure_of(c, extensible) for c in entity.children)
        out = kids + b" " + quote(entity.subtype.upper())
        if extensible:
            params = {k: v for k, v in entity.params.items()}
            out += b" " + _param_list(params) + b" " + _disposition(entity) + b" NIL NIL"
        return b"(" + out + b")"
    fields = [
        quote(entity.maintype.upper()), quote(entity.subtype.upper()), _param_list(entity.params),
        quote(entity.header("content-id")), quote(entity.header("content-description")),
        quote(entity.transfer_encoding.upper()), str(len(entity.body)).encode(),
    ]
    if entity.maintype == "text":
        fields.append(str(entity.body.count(b"\n")).encode())
    elif entity.media_type == "message/rfc822":
        inner = parse_mime(entity.body)
        fields += [envelope_of(inner), bodystructure_of(inner, extensible), str(entity.body.count(b"\n")).encode()]
    if extensible:
        fields += [b"NIL", _disposition(entity), b"NIL", b"NIL"]
    return b"(" + b" ".join(fields) + b")"


def _disposition(entity):
    if not entity.disposition:
        return b"NIL"
    return b"(" + quote(entity.disposition.upper()) + b" " + _param_list(entity.disposition_params) + b")"


def section_bytes(entity, raw, section):
    """Bytes of ``BODY[section]`` for a message."""
    spec = section.upper()
    if spec == "":
        return raw
    if spec == "HEADER":
        return entity.raw_header + b"\r\n"
    if spec == "TEXT":
        return entity.body
    m = re.match(r"^HEADER\.FIELDS(\.NOT)?\s*\((.*)\)$", spec)
    if m:
        names = {n.strip('"').lower() for n in m.group(2).split()}
        negate = bool(m.group(1))
        lines = [
            line for line in _raw_header_lines(entity.raw_header)
            if (line.split(b":", 1)[0].strip().decode("ascii", "replace").lower() in names) != negate
        ]
        return b"".join(lines) + b"\r\n"
    m = re.match(r"^(\d+(?:\.\d+)*)(?:\.(MIME|HEADER|TEXT))?$", spec)
    if not m:
        return None
    number, sub = m.group(1), m.group(2)
    part = _find_part(entity, number)
    if part is None:
        return b""
    if sub == "MIME":
        return part.raw_header + b"\r\n"
    if sub in ("HEADER", "TEXT") and part.media_type == "message/rfc822":
        inner = parse_mime(part.body)
        return inner.raw_header + b"\r\n" if sub == "HEADER" else inner.body
    return part.body


def _find_part(entity, number):
    if not entity.is_multipart:
        return entity if number == "1" else None
    return entity.find(number)


def _raw_header_lines(raw_header):
    lines = []
    for line in raw_header.splitlines(keepends=True):
        if line[:1] in (b" ", b"\t") and lines:
            lines[-1] += line
        else:
            lines.append(line)
    return lines


# -- search evaluation --------------------------------------------------------

_MONTHS = ("jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec")


def _search_date(tok):
    text = astr(tok)
    d, mon, y = text.split("-")
    return _dt.date(int(y), _MONTHS.index(mon.lower()) + 1, int(d))


def _sequence_set(text, maximum):
    out = set()
    for piece in text.split(","):
        if ":" in piece:
            a, b = piece.split(":")
            lo = maximum if a == "*" else int(a)
            hi = maximum if b == "*" else int(b)
            lo, hi = min(lo, hi), max(lo, hi)
            out.update(range(lo, hi + 1))
        else:
            out.add(maximum if piece == "*" else int(piece))
    return out


class _SearchParser:
    def __init__(self, tokens, context):
        self.toks = list(tokens)
        self.ctx = context

    def parse_all(self):
        preds = []
        while self.toks:
            preds.append(self.key())
        return lambda m: all(p(m) for p in preds)

    def _take(self):
        if not self.toks:
            raise ValueError("search key expected")
        return self.toks.pop(0)

    def key(self):
        tok = self._take()
        if isinstance(tok, list):
            sub = _SearchParser(tok, self.ctx).parse_all()
            return sub
        if not isinstance(tok, str):
            raise ValueError("search key expected")
        k = tok.upper()
        flag_keys = {
            "ANSWERED": ("\\Answered", True), "DELETED": ("\\Deleted", True), "DRAFT": ("\\Draft", True),
            "FLAGGED": ("\\Flagged", True), "SEEN": ("\\Seen", True), "RECENT": ("\\Recent", True),
            "UNANSWERED": ("\\Answered", False), "UNDELETED": ("\\Deleted", False),
            "UNDRAFT": ("\\Draft", False), "UNFLAGGED": ("\\Flagged", False), "UNSEEN": ("\\Seen", False),
        }
        if k == "ALL":
            return lambda m: True
        if k in flag_keys:
            flag, want = flag_keys[k]
            return lambda m: (flag.lower() in {f.lower() for f in m.flags}) == want
        if k == "NOT":
            inner = self.key()
            return lambda m: not inner(m)
        if k == "OR":
            a, b = self.key(), self.key()
            return lambda m: a(m) or b(m)
        if k in ("SINCE", "BEFORE", "ON"):
            d = _search_date(self._take())
            op = {"SINCE": lambda x: x >= d, "BEFORE": lambda x: x < d, "ON": lambda x: x == d}[k]
            return lambda m: op(m.internal_date.date())
        if k in ("SENTSINCE", "SENTBEFORE", "SENTON"):
            d = _search_date(self._take())
            op = {"SENTSINCE": lambda x: x >= d, "SENTBEFORE": lambda x: x < d, "SENTON": lambda x: x == d}[k]
            return lambda m: _sent_date(m) is not None and op(_sent_date(m))
        if k in ("FROM", "TO", "CC", "BCC", "SUBJECT"):
            needle = astr(self._take()).lower()
            name = k.lower()
            return lambda m: needle in (m.entity.header(name) or "").lower()
        if k == "HEADER":
            name, needle = astr(self._take()).lower(), astr(self._take()).lower()
            return lambda m: m.entity.header(name) is not None and needle in m.entity.header(name).lower()
        if k == "BODY":
            needle = astr(self._take()).lower().encode("utf-8")
            return lambda m: needle in m.entity.body.lower()
        if k == "TEXT":
            needle = astr(self._take()).lower().encode("utf-8")
            return lambda m: needle in m.raw.lower()
        if k in ("LARGER", "SMALLER"):
            n = int(self._take())
            return (lambda m: len(m.raw) > n) if k == "LARGER" else (lambda m: len(m.raw) < n)
        if k in ("YOUNGER", "OLDER"):
            if "WITHIN" not in self.ctx["capabilities"]:
                raise ValueError(f"{k} requires the WITHIN extension")
            secs = int(self._take())
            now = self.ctx["now"]()
            if k == "YOUNGER":
                return lambda m: (now - m.internal_date).total_seconds() <= secs
            return lambda m: (now - m.internal_date).total_seconds() > secs
        if k == "UID":
            uids = _sequence_set(self._take(), self.ctx["max_uid"])
            return lambda m: m.uid in uids
        if k in ("KEYWORD", "UNKEYWORD"):
            kw = astr(self._take()).lower()
            want = k == "KEYWORD"
            return lambda m: (kw in {f.lower() for f in m.flags}) == want
        if k in ("NEW", "OLD"):
            if k == "OLD":
                return lambda m: "\\recent" not in {f.lower() for f in m.flags}
            return lambda m: {"\\recent"} <= {f.lower() for f in m.flags} and "\\seen" not in {f.lower() for f in m.flags}
        if re.match(r"^[\d*:,]+$", k):
            seqs = _sequence_set(k, self.ctx["count"])
            return lambda m: self.ctx["seq_of"](m) in seqs
        raise ValueError(f"unsupported search key {tok!r}")


def _sent_date(m):
    from email.utils import parsedate_to_datetime

    try:
        return parsedate_to_datetime(m.entity.header("date")).date()
    except (TypeError, ValueError):
        return None


# -- connection loop ----------------------------------------------------------


class _Conn:
    """Server side of one client connection."""

    def __init__(self, endpoint, transport):
        self.endpoint = endpoint
        self.t = transport
        self.state = {"authenticated": False, "selected": None}

    def send(self, *lines):
        for line in lines:
            data = line.encode("utf-8") if isinstance(line, str) else bytes(line)
            if not data.endswith(b"\r\n"):
                data += b"\r\n"
            self.t.write_all(data)

    def read_command(self):
        chunks = []
        while True:
            line = self.t.read_line()
            chunks.append(line)
            m = _LITERAL_TAIL.search(line)
            if not m:
                return b"".join(chunks)
            if not m.group(2):
                self.send("+ Ready for literal data")
            chunks.append(self.t.read_exact(int(m.group(1))))

    def read_client_line(self):
        return self.t.read_line()


class MockEndpoint:
    """A running mock server; see :func:`start_scripted` and :func:`start_stateful`."""

    def __init__(self, handler, greeting=None):
        self.handler = handler
        self.greeting = greeting
        self.command_log = []
        self.unexpected = []
        self._threads = []
        self._listener = None
        self._stop = threading.Event()
        self.host = None
        self.port = None

    @property
    def url(self):
        if self.port is None:
            raise RuntimeError("call serve_tls() first")
        return f"imaps://{self.host}:{self.port}"

    # in-memory

    def connect(self, timeout_ms=DEFAULT_TIMEOUT_MS):
        """Return the client end of a fresh in-memory connection."""
        client, server = pipe_pair(timeout_ms)
        server.timeout_ms = 60_000
        t = threading.Thread(target=self._serve, args=(server,), daemon=True)
        t.start()
        self._threads.append(t)
        return client

    # loopback TLS

    def serve_tls(self, host="127.0.0.1", port=0, certfile=None, keyfile=None):
        """Listen on ``host:port`` with TLS; returns ``(host, port)``."""
        data = resources.files("mailpost") / "data"
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        with resources.as_file(data / "mock_cert.pem") as cert, resources.as_file(data / "mock_key.pem") as key:
            ctx.load_cert_chain(certfile or str(cert), keyfile or str(key))
        sock = socket.create_server((host, port))
        sock.settimeout(0.2)
        self._listener = sock
        self.host, self.port = host, sock.getsockname()[1]
        t = threading.Thread(target=self._accept_loop, args=(sock, ctx), daemon=True)
        t.start()
        self._threads.append(t)
        return self.host, self.port

    def _accept_loop(self, sock, ctx):
        while not self._stop.is_set():
            try:
                raw, _ = sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                raw.settimeout(10)
                conn = ctx.wrap_socket(raw, server_side=True)
            except (ssl.SSLError, OSError) as exc:
                log.debug("mock TLS handshake failed: %s", exc)
                raw.close()
                continue
            self._serve(SocketTransport(conn, 60_000))

    def close(self):
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
            self._listener = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _serve(self, transport):
        conn = _Conn(self, transport)
        try:
            greeting = self.greeting if self.greeting is not None else self.handler.greeting()
            if greeting is False:
                return
            conn.send(greeting)
            if greeting.upper().startswith("* PREAUTH"):
                conn.state["authenticated"] = True
            while not self._stop.is_set():
                raw = conn.read_command()
                self.command_log.append(raw.rstrip(b"\r\n").decode("utf-8", "replace"))
                try:
                    tag, verb, args = decode_command(raw)
                except ValueError as exc:
                    tag = raw.split(b" ", 1)[0].decode("ascii", "replace") or "*"
                    conn.send(f"{tag} BAD {exc}")
                    continue
                if self.handler.handle(self, conn, tag, verb, args) == "close":
                    return
        except MailpostError:
            pass
        finally:
            transport.close()


# -- scripted handler ---------------------------------------------------------


@dataclass
class ScriptStep:
    """Expect one client command and reply with canned lines.

    ``expect`` is a case-insensitive prefix of the command text after the
    tag (``"LOGIN"``, ``"UID SEARCH FROM"``) or a predicate on
    ``(verb, args)``.  ``respond`` lines may use ``{tag}``; if none of them
    is tagged, ``{tag} OK <verb> completed`` is appended.  Bytes items are
    sent verbatim (use :func:`literal` / :func:`fetch_response`).
    """

    expect: object
    respond: list = field(default_factory=list)
    strict_order: bool = True

    def matches(self, text, verb, args):
        if callable(self.expect):
            return bool(self.expect(verb, args))
        return text.upper().startswith(str(self.expect).upper())


class ScriptedHandler:
    def __init__(self, steps, greeting="* OK [CAPABILITY IMAP4rev1 AUTH=XOAUTH2 SASL-IR] mock ready"):
        self.steps = list(steps)
        self._greeting = greeting

    def greeting(self):
        return self._greeting

    def _pick(self, text, verb, args):
        for i, step in enumerate(self.steps):
            if step.matches(text, verb, args):
                return self.steps.pop(i)
            if step.strict_order:
                return None
        return None

    def handle(self, endpoint, conn, tag, verb, args):
        text = endpoint.command_log[-1].split(" ", 1)[1] if " " in endpoint.command_log[-1] else ""
        step = self._pick(text, verb, args)
        if step is None:
            if verb == "LOGOUT":
                conn.send("* BYE logging out", f"{tag} OK LOGOUT completed")
                return "close"
            endpoint.unexpected.append(endpoint.command_log[-1])
            conn.send(f"{tag} BAD unexpected command {verb}")
            return None
        tagged = False
        for item in step.respond:
            if isinstance(item, str):
                if item.startswith("{tag}"):
                    tagged = True
                conn.send(item.replace("{tag}", tag))
            else:
                data = bytes(item)
                if data.startswith(b"{tag}"):
                    tagged = True
                    data = tag.encode() + data[5:]
                conn.t.write_all(data if data.endswith(b"\r\n") else data + b"\r\n")
        if not tagged:
            conn.send(f"{tag} OK {verb} completed")
        return "close" if verb == "LOGOUT" else None


def start_scripted(steps, greeting="* OK [CAPABILITY IMAP4rev1 AUTH=XOAUTH2 SASL-IR] mock ready"):
    """Create an endpoint that replays ``steps`` (a list of :class:`ScriptStep`).

    Unmatched commands get ``BAD`` and are recorded in ``endpoint.unexpected``;
    an unscripted LOGOUT is always accepted.
    """
    steps = list(steps)
    if not steps:
        raise ValueError("a script needs at least one step")
    return MockEndpoint(ScriptedHandler(steps, greeting))


# -- stateful handler ---------------------------------------------------------


class StatefulHandler:
    def __init__(self, mailboxes, credentials=None, bearer_tokens=None, within=True,
                 shuffle_fetch=False, seed=0, now=None):
        self.folders = {}
        for box in mailboxes:
            self.folders[box.name] = box
        if "INBOX" not in self.folders:
            self.folders["INBOX"] = FixtureMailbox("INBOX")
        self.credentials = credentials
        self.bearer_tokens = bearer_tokens or {}
        self.capabilities = list(DEFAULT_CAPABILITIES) + (["WITHIN"] if within else [])
        self.shuffle_fetch = shuffle_fetch
        self.rng = random.Random(seed)
        self.now = now or (lambda: _dt.datetime.now(_dt.timezone.utc))
        self.lock = threading.RLock()

    def greeting(self):
        return "* OK [CAPABILITY IMAP4rev1 AUTH=XOAUTH2 SASL-IR] mailpost mock ready"

    def _cap_line(self):
        return "CAPABILITY " + " ".join(self.capabilities)

    def handle(self, endpoint, conn, tag, verb, args):
        with self.lock:
            try:
                return self._dispatch(conn, tag, verb, args)
            except (ValueError, IndexError, KeyError, TypeError) as exc:
                conn.send(f"{tag} BAD {exc}")
                return None

    def _dispatch(self, conn, tag, verb, args):
        st = conn.state
        if verb == "CAPABILITY":
            conn.send("* " + self._cap_line(), f"{tag} OK CAPABILITY completed")
            return None
        if verb == "NOOP":
            conn.send(f"{tag} OK NOOP completed")
            return None
        if verb == "LOGOUT":
            conn.send("* BYE mock logging out", f"{tag} OK LOGOUT completed")
            return "close"
        if verb == "LOGIN":
            if st["authenticated"]:
                conn.send(f"{tag} BAD already authenticated")
                return None
            user, password = astr(args[0]), astr(args[1])
            if self.credentials is not None and self.credentials.get(user) != password:
                conn.send(f"{tag} NO [AUTHENTICATIONFAILED] invalid credentials")
                return None
            st["authenticated"] = True
            conn.send(f"{tag} OK [{self._cap_line()}] LOGIN completed")
            return None
        if verb == "AUTHENTICATE":
            return self._authenticate(conn, tag, args)
        if not st["authenticated"]:
            conn.send(f"{tag} BAD {verb} not allowed before authentication")
            return None
        if verb in ("SELECT", "EXAMINE"):
            name = astr(args[0])
            box = self._folder(name)
            if box is None:
                st["selected"] = None
                conn.send(f"{tag} NO [NONEXISTENT] no such mailbox {name}")
                return None
            st["selected"] = box.name
            conn.send(
                "* FLAGS (" + " ".join(SYSTEM_FLAGS) + ")",
                f"* {len(box.messages)} EXISTS",
                "* 0 RECENT",
                "* OK [UIDVALIDITY 1] UIDs valid",
                f"* OK [UIDNEXT {box.uidnext}] predicted next UID",
                f"{tag} OK [READ-WRITE] {verb} completed",
            )
            return None
        if verb == "LIST":
            pattern = astr(args[1])
            if pattern == "":
                conn.send('* LIST (\\Noselect) "/" ""', f"{tag} OK LIST completed")
                return None
            regex = re.compile("^" + re.escape(pattern).replace(r"\*", ".*").replace("%", "[^/]*") + "$")
            for name in self.folders:
                if regex.match(name):
                    conn.send(b'* LIST (\\HasNoChildren) "/" ' + quote(name))
            conn.send(f"{tag} OK LIST completed")
            return None
        if verb == "CREATE":
            name = astr(args[0])
            if self._folder(name) is not None:
                conn.send(f"{tag} NO [ALREADYEXISTS] mailbox exists")
                return None
            self.folders[name] = FixtureMailbox(name)
            conn.send(f"{tag} OK CREATE completed")
            return None
        if verb == "DELETE":
            name = astr(args[0])
            box = self._folder(name)
            if box is None or box.name == "INBOX":
                conn.send(f"{tag} NO [NONEXISTENT] cannot delete {name}")
                return None
            del self.folders[box.name]
            if st["selected"] == box.name:
                st["selected"] = None
            conn.send(f"{tag} OK DELETE completed")
            return None
        if verb == "RENAME":
            old, new = astr(args[0]), astr(args[1])
            box = self._folder(old)
            if box is None or self._folder(new) is not None:
                conn.send(f"{tag} NO cannot rename {old}")
                return None
            del self.folders[box.name]
            box.name = new
            self.folders[new] = box
            if st["selected"] == old:
                st["selected"] = new
            conn.send(f"{tag} OK RENAME completed")
            return None
        if st["selected"] is None:
            conn.send(f"{tag} BAD {verb} requires a selected mailbox")
            return None
        box = self.folders.get(st["selected"])
        if box is None:
            conn.send(f"{tag} NO selected mailbox was removed")
            return None
        if verb in ("SEARCH", "UID SEARCH"):
            return self._search(conn, tag, verb, args, box)
        if verb in ("FETCH", "UID FETCH"):
            return self._fetch(conn, tag, verb, args, box)
        conn.send(f"{tag} BAD unsupported command {verb}")
        return None

    def _folder(self, name):
        if name.upper() == "INBOX":
            return self.folders.get("INBOX")
        return self.folders.get(name)

    def _authenticate(self, conn, tag, args):
        mech = astr(args[0]).upper()
        if mech != "XOAUTH2":
            conn.send(f"{tag} NO unsupported mechanism")
            return None
        if len(args) > 1:
            ir = astr(args[1])
        else:
            conn.send("+ ")
            ir = conn.read_client_line().decode("ascii", "replace").strip()
        try:
            fields = base64.b64decode(ir).decode("utf-8").split("\x01")
            user = fields[0][len("user="):]
            token = fields[1][len("auth=Bearer "):]
        except (ValueError, IndexError):
            user, token = None, None
        if user is None or self.bearer_tokens.get(user) != token:
            conn.send("+ " + base64.b64encode(b'{"status":"401"}').decode())
            conn.read_client_line()
            conn.send(f"{tag} NO [AUTHENTICATIONFAILED] invalid token")
            return None
        conn.state["authenticated"] = True
        conn.send(f"{tag} OK [{self._cap_line()}] AUTHENTICATE completed")
        return None

    def search_ids(self, box, args, uid=True):
        """Evaluate search keys against ``box``; used by the SEARCH handler."""
        seq_index = {m.uid: k for k, m in enumerate(box.messages, 1)}
        ctx = {
            "capabilities": self.capabilities,
            "now": self.now,
            "max_uid": box.messages[-1].uid if box.messages else 0,
            "count": len(box.messages),
            "seq_of": lambda m: seq_index[m.uid],
        }
        args = list(args)
        if args and isinstance(args[0], str) and args[0].upper() == "CHARSET":
            args = args[2:]
        pred = _SearchParser(args, ctx).parse_all()
        return [m.uid if uid else seq_index[m.uid] for m in box.messages if pred(m)]

    def _search(self, conn, tag, verb, args, box):
        try:
            ids = self.search_ids(box, args, uid=verb.startswith("UID"))
        except ValueError as exc:
            conn.send(f"{tag} BAD {exc}")
            return None
        conn.send(("* SEARCH " + " ".join(map(str, ids))).rstrip())
        conn.send(f"{tag} OK {verb} completed")
        return None

    def _fetch(self, conn, tag, verb, args, box):
        uid_mode = verb.startswith("UID")
        seqset, items = astr(args[0]), args[1]
        if not isinstance(items, list):
            items = [items]
        items = [astr(i).upper() if isinstance(i, (str, bytes)) else i for i in items]
        macros = {
            "ALL": ["FLAGS", "INTERNALDATE", "RFC822.SIZE", "ENVELOPE"],
            "FAST": ["FLAGS", "INTERNALDATE", "RFC822.SIZE"],
            "FULL": ["FLAGS", "INTERNALDATE", "RFC822.SIZE", "ENVELOPE", "BODY"],
        }
        if len(items) == 1 and items[0] in macros:
            items = macros[items[0]]
        if uid_mode and "UID" not in items:
            items = ["UID"] + items
        if uid_mode:
            max_uid = box.messages[-1].uid if box.messages else 0
            wanted = _sequence_set(seqset, max_uid)
            targets = [(k, m) for k, m in enumerate(box.messages, 1) if m.uid in wanted]
        else:
            wanted = _sequence_set(seqset, len(box.messages))
            if any(w < 1 or w > len(box.messages) for w in wanted):
                conn.send(f"{tag} BAD invalid message sequence number")
                return None
            targets = [(k, m) for k, m in enumerate(box.messages, 1) if k in wanted]
        if self.shuffle_fetch:
            targets = list(targets)
            self.rng.shuffle(targets)
        for seq, msg in targets:
            rendered = []
            for item in items:
                value = self._fetch_item(msg, item)
                if value is None:
                    conn.send(f"{tag} BAD unsupported fetch item {item}")
                    return None
                rendered.append(value)
            conn.t.write_all(fetch_response(seq, *rendered))
        conn.send(f"{tag} OK {verb} completed")
        return None

    def _fetch_item(self, msg, item):
        if item == "UID":
            return ("UID", str(msg.uid))
        if item == "FLAGS":
            return ("FLAGS", "(" + " ".join(msg.flags) + ")")
        if item == "INTERNALDATE":
            return ("INTERNALDATE", quote(format_internaldate(msg.internal_date)))
        if item == "RFC822.SIZE":
            return ("RFC822.SIZE", str(len(msg.raw)))
        if item == "ENVELOPE":
            return ("ENVELOPE", envelope_of(msg.entity))
        if item == "BODYSTRUCTURE":
            return ("BODYSTRUCTURE", bodystructure_of(msg.entity, extensible=True))
        if item == "BODY":
            return ("BODY", bodystructure_of(msg.entity, extensible=False))
        if item == "RFC822":
            return ("RFC822", literal(msg.raw))
        m = re.match(r"^BODY(\.PEEK)?\[(.*)\]$", item, re.S)
        if m:
            section = m.group(2)
            data = section_bytes(msg.entity, msg.raw, section)
            if data is None:
                return None
            if not m.group(1) and "\\Seen" not in msg.flags:
                msg.flags.append("\\Seen")
            return (f"BODY[{section}]", literal(data))
        return None


def start_stateful(fixtures, **options):
    """Create an endpoint serving ``fixtures`` (mailboxes or a fixture directory).

    Options: ``credentials`` ({user: password}, default accepts anyone),
    ``bearer_tokens`` ({user: token}), ``within`` (advertise WITHIN),
    ``shuffle_fetch`` (emit FETCH responses out of order), ``seed``, ``now``.
    """
    if isinstance(fixtures, (str, os.PathLike)):
        fixtures = load_fixtures(fixtures)
    return MockEndpoint(StatefulHandler(list(fixtures), **options))


def command_log(endpoint):
    return list(endpoint.command_log)


def main(argv=None):
    import argparse
    import time

    parser = argparse.ArgumentParser(prog="python -m mailpost.mockserver", description="Serve fixture mailboxes over loopback TLS.")
    parser.add_argument("--fixtures", default=bundled_fixtures_dir(), help="fixture directory (manifest.json + .eml files)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=3993)
    parser.add_argument("--user", help="only accept this username (password from MAILPOST_PASSWORD)")
    parser.add_argument("--no-within", action="store_true", help="do not advertise the WITHIN extension")
    args = parser.parse_args(argv)
    creds = None
    if args.user:
        creds = {args.user: os.environ.get("MAILPOST_PASSWORD", "")}
    endpoint = start_stateful(args.fixtures, credentials=creds, within=not args.no_within)
    host, port = endpoint.serve_tls(args.host, args.port)
    print(f"serving {args.fixtures} at imaps://{host}:{port} (use --insecure)", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        endpoint.close()


if __name__ == "__main__":
    main()

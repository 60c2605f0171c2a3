"""IMAP4rev1 wire codec.

Outbound: command tagging and argument serialization (atoms, quoted
strings, synchronizing literals).  Inbound: response classification and
parsers for SEARCH, LIST, CAPABILITY, FETCH, ENVELOPE and BODYSTRUCTURE.

Responses are handled as *logical lines*: the raw bytes of a response
line with every ``{N}\\r\\n`` literal and its N octets left inline, so
parsers never need the transport.
"""

import enum
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    MalformedBodyStructure,
    MalformedEnvelope,
    MalformedResponse,
    ProtocolDesync,
    TagSpaceExhausted,
    UnencodableArgument,
)
from .ids import MessageId

MAX_TAG = 9999

KNOWN_VERBS = frozenset(
    """CAPABILITY NOOP LOGOUT LOGIN AUTHENTICATE SELECT EXAMINE CREATE DELETE
    RENAME SUBSCRIBE UNSUBSCRIBE LIST LSUB STATUS APPEND CHECK CLOSE EXPUNGE
    SEARCH FETCH STORE COPY UID""".split()
)

# RFC 3501 atom-specials: ( ) { SP CTL % * " \ ]
_ATOM_SPECIALS = set(b'(){ %*"\\]')


def _is_atom_char(b):
    return 0x20 < b < 0x7F and b not in _ATOM_SPECIALS


def _is_astring_char(b):
    return _is_atom_char(b) or b == ord("]")


# -- tags ---------------------------------------------------------------------


def next_tag(counter):
    """Return ``(tag, new_counter)`` for the command after ``counter``."""
    if counter >= MAX_TAG:
        raise TagSpaceExhausted("tag space exhausted; reconnect to continue")
    counter += 1
    return f"A{counter:04d}", counter


# -- command serialization ----------------------------------------------------


class Atom(str):
    """Argument emitted verbatim (keywords, sequence sets, fetch items)."""


class Quoted(str):
    """Argument that must be sent as an IMAP string, never as an atom."""


def _string_form(data):
    """Render bytes as a quoted string or a literal marker + payload."""
    if 0 in data:
        raise UnencodableArgument("NUL octets cannot be sent")
    if all(0x20 <= b <= 0x7E for b in data) and b'"' not in data and b"\\" not in data:
        return [b'"' + data + b'"']
    return [b"{%d}" % len(data), data]


def _render_arg(arg):
    """Return a list of chunks; a chunk ``{N}`` is followed by raw literal data."""
    if isinstance(arg, bool):
        raise UnencodableArgument("booleans have no IMAP form")
    if arg is None:
        return [b"NIL"]
    if isinstance(arg, int):
        if arg < 0:
            raise UnencodableArgument("numbers must be non-negative")
        return [str(arg).encode()]
    if isinstance(arg, Atom):
        raw = arg.encode("ascii", "strict")
        if not raw or b"\r" in raw or b"\n" in raw:
            raise UnencodableArgument(f"invalid atom {arg!r}")
        return [raw]
    if isinstance(arg, (list, tuple)):
        out = [b"("]
        for i, item in enumerate(arg):
            if i:
                out.append(b" ")
            out.extend(_render_arg(item))
        out.append(b")")
        return out
    if isinstance(arg, (bytes, bytearray)):
        return _string_form(bytes(arg))
    if isinstance(arg, str):
        if "\r" in arg or "\n" in arg:
            raise UnencodableArgument("CR/LF cannot appear in a string argument")
        raw = arg.encode("utf-8")
        if (
            not isinstance(arg, Quoted)
            and raw
            and raw.upper() != b"NIL"
            and all(_is_astring_char(b) for b in raw)
        ):
            return [raw]
        return _string_form(raw)
    raise UnencodableArgument(f"unsupported argument type {type(arg).__name__}")


def serialize_command_parts(tag, verb, args=()):
    """Serialize a command into continuation-separated segments.

    Every segment but the last ends with a ``{N}\\r\\n`` literal announcement;
    the client must wait for a ``+`` continuation before sending the next.
    """
    verb = verb.upper()
    head = verb.split()[-1] if verb.startswith("UID ") else verb
    if verb.split()[0] not in KNOWN_VERBS or head not in KNOWN_VERBS:
        raise UnencodableArgument(f"unknown IMAP verb {verb!r}")
    chunks = [tag.encode("ascii"), b" ", verb.encode("ascii")]
    for arg in args:
        chunks.append(b" ")
        chunks.extend(_render_arg(arg))
    parts = []
    current = bytearray()
    it = iter(chunks)
    for chunk in it:
        if chunk.startswith(b"{") and chunk.endswith(b"}"):
            current += chunk + b"\r\n"
            parts.append(bytes(current))
            current = bytearray(next(it))
        else:
            current += chunk
    current += b"\r\n"
    parts.append(bytes(current))
    return parts


def serialize_command(tag, verb, args=()):
    """Return the full wire form ``<tag> <verb> <args>\\r\\n``."""
    return b"".join(serialize_command_parts(tag, verb, args))


# -- response tokenizer -------------------------------------------------------

_LITERAL_RE = re.compile(rb"\{(\d+)\}\r\n")
_TRAILING_LITERAL_RE = re.compile(rb"\{(\d+)\}\r\n$")


def tokenize(data, pos=0):
    """Tokenize IMAP response data into nested Python values.

    Atoms become ``str`` (``NIL`` becomes ``None``), quoted strings and
    literals become ``bytes``, parenthesized lists become ``list``.
    """
    stack = [[]]
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in b" \r\n":
            pos += 1
        elif c == ord("("):
            stack.append([])
            pos += 1
        elif c == ord(")"):
            if len(stack) == 1:
                raise MalformedResponse("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
            pos += 1
        elif c == ord('"'):
            pos += 1
            buf = bytearray()
            while True:
                if pos >= n:
                    raise MalformedResponse("unterminated quoted string")
                ch = data[pos]
                if ch == ord("\\") and pos + 1 < n:
                    buf.append(data[pos + 1])
                    pos += 2
                elif ch == ord('"'):
                    pos += 1
                    break
                else:
                    buf.append(ch)
                    pos += 1
            stack[-1].append(bytes(buf))
        elif c == ord("{"):
            m = _LITERAL_RE.match(data, pos)
            if not m:
                raise MalformedResponse("bad literal announcement")
            size = int(m.group(1))
            start = m.end()
            if start + size > n:
                raise MalformedResponse("literal shorter than announced")
            stack[-1].append(data[start:start + size])
            pos = start + size
        else:
            start = pos
            while pos < n and data[pos] not in b" ()\r\n":
                if data[pos] == ord("["):
                    depth = 0
                    while pos < n:
                        if data[pos] == ord("["):
                            depth += 1
                        elif data[pos] == ord("]"):
                            depth -= 1
                            if depth == 0:
                                break
                        pos += 1
                    if pos >= n:
                        raise MalformedResponse("unterminated '['")
                pos += 1
            atom = data[start:pos].decode("ascii", "replace")
            stack[-1].append(None if atom.upper() == "NIL" else atom)
    if len(stack) != 1:
        raise MalformedResponse("unbalanced '('")
    return stack[0]


def _text(value):
    """nstring token -> str or None ('' counts as absent)."""
    if value is None:
        return None
    if isinstance(value, (bytes, bytearray)):
        try:
            s = bytes(value).decode("utf-8")
        except UnicodeDecodeError:
            s = bytes(value).decode("latin-1")
    else:
        s = str(value)
    return s or None


# -- response classification --------------------------------------------------


class ResponseKind(enum.Enum):
    UNTAGGED = "untagged"
    TAGGED_OK = "ok"
    TAGGED_NO = "no"
    TAGGED_BAD = "bad"
    CONTINUATION = "continuation"


@dataclass
class StatusText:
    status: str
    text: str
    code: Optional[str] = None


@dataclass
class MessageCount:
    name: str  # EXISTS, RECENT or EXPUNGE
    value: int


@dataclass
class SearchResults:
    ids: list


@dataclass
class CapabilityList:
    capabilities: list


@dataclass
class FolderList:
    name: str
    delimiter: Optional[str]
    flags: list


@dataclass
class FlagList:
    flags: list


@dataclass
class FetchItem:
    seq: int
    attrs: dict


@dataclass
class ServerResponse:
    kind: ResponseKind
    payload: object = None
    tag: Optional[str] = None
    text: str = ""
    raw: bytes = b""

    @property
    def tagged(self):
        return self.kind in (ResponseKind.TAGGED_OK, ResponseKind.TAGGED_NO, ResponseKind.TAGGED_BAD)


_TAGGED_RE = re.compile(rb"^([!#$&'+,\-./0-9:;<=>?@A-Z^_`a-z|~]+) (OK|NO|BAD)(?: (.*))?$", re.I | re.S)
_STATUS_RE = re.compile(rb"^(OK|NO|BAD|PREAUTH|BYE)(?: (.*))?$", re.I | re.S)
_CODE_RE = re.compile(r"^\[([^\]]*)\]\s?(.*)$", re.S)


def _display(raw):
    return raw.decode("ascii", "replace")


def _split_code(text):
    m = _CODE_RE.match(text)
    if m:
        return m.group(1), m.group(2)
    return None, text


def parse_response_line(line):
    """Classify one logical response line into a :class:`ServerResponse`."""
    raw = bytes(line)
    if not raw.endswith(b"\r\n"):
        raise MalformedResponse(f"response not CRLF-terminated: {raw[:60]!r}")
    body = raw[:-2]
    if body.startswith(b"+"):
        return ServerResponse(ResponseKind.CONTINUATION, text=_display(body[1:].lstrip()), raw=raw)
    if body.startswith(b"* "):
        return _parse_untagged(body[2:], raw)
    m = _TAGGED_RE.match(body)
    if m:
        tag = m.group(1).decode("ascii")
        status = m.group(2).upper().decode()
        kind = {"OK": ResponseKind.TAGGED_OK, "NO": ResponseKind.TAGGED_NO, "BAD": ResponseKind.TAGGED_BAD}[status]
        text = _display(m.group(3) or b"")
        code, rest = _split_code(text)
        return ServerResponse(kind, StatusText(status, rest, code), tag=tag, text=rest, raw=raw)
    raise MalformedResponse(f"unclassifiable response: {raw[:60]!r}")


def _parse_untagged(body, raw):
    m = _STATUS_RE.match(body)
    if m:
        status = m.group(1).upper().decode()
        code, text = _split_code(_display(m.group(2) or b""))
        return ServerResponse(ResponseKind.UNTAGGED, StatusText(status, text, code), text=text, raw=raw)
    word, _, rest = body.partition(b" ")
    uword = word.upper()
    if uword == b"CAPABILITY":
        caps = [t.upper() for t in _display(rest).split()]
        return ServerResponse(ResponseKind.UNTAGGED, CapabilityList(caps), raw=raw)
    if uword == b"SEARCH":
        return ServerResponse(ResponseKind.UNTAGGED, SearchResults(parse_search_results(raw)), raw=raw)
    if uword in (b"LIST", b"LSUB"):
        return ServerResponse(ResponseKind.UNTAGGED, _parse_list(rest), raw=raw)
    if uword == b"FLAGS":
        toks = tokenize(rest)
        if not toks or not isinstance(toks[0], list):
            raise MalformedResponse("bad FLAGS response")
        return ServerResponse(ResponseKind.UNTAGGED, FlagList([str(f) for f in toks[0]]), raw=raw)
    if word.isdigit():
        num = int(word)
        name, _, data = rest.partition(b" ")
        uname = name.upper()
        if uname in (b"EXISTS", b"RECENT", b"EXPUNGE"):
            return ServerResponse(ResponseKind.UNTAGGED, MessageCount(uname.decode(), num), raw=raw)
        if uname == b"FETCH":
            return ServerResponse(ResponseKind.UNTAGGED, FetchItem(num, parse_fetch_attrs(data)), raw=raw)
    # unknown extension data is preserved rather than rejected
    text = _display(body)
    return ServerResponse(ResponseKind.UNTAGGED, StatusText("", text), text=text, raw=raw)


def _parse_list(data):
    toks = tokenize(data)
    if len(toks) != 3 or not isinstance(toks[0], list):
        raise MalformedResponse(f"bad LIST response: {data[:60]!r}")
    flags, delim, name = toks
    if isinstance(name, list) or name is None:
        raise MalformedResponse("bad LIST mailbox name")
    if isinstance(name, (bytes, bytearray)):
        name = bytes(name).decode("utf-8", "replace")
    return FolderList(name=name, delimiter=_text(delim), flags=[str(f) for f in flags])


def parse_search_results(line, kind="uid"):
    """Parse a ``* SEARCH`` line into :class:`MessageId` values, server order."""
    raw = bytes(line).rstrip(b"\r\n")
    if not raw.upper().startswith(b"* SEARCH"):
        raise MalformedResponse("not a SEARCH response")
    rest = raw[len(b"* SEARCH"):]
    if rest and not rest.startswith(b" "):
        raise MalformedResponse("not a SEARCH response")
    ids = []
    for tok in rest.split():
        if not tok.isdigit():
            raise MalformedResponse(f"non-numeric search result {tok!r}")
        value = int(tok)
        if value < 1:
            raise MalformedResponse("message ids start at 1")
        ids.append(MessageId(value, kind))
    return ids


def parse_fetch_attrs(data):
    """Parse the ``(NAME value ...)`` part of a FETCH response into a dict.

    Keys are upper-cased item names such as ``UID``, ``BODY[1]`` or
    ``BODY[HEADER.FIELDS (FROM SUBJECT)]``; values are raw tokens.
    """
    toks = tokenize(bytes(data))
    if len(toks) != 1 or not isinstance(toks[0], list) or len(toks[0]) % 2:
        raise MalformedResponse("bad FETCH data")
    items = toks[0]
    attrs = {}
    for name, value in zip(items[0::2], items[1::2]):
        if not isinstance(name, str):
            raise MalformedResponse(f"bad FETCH item name {name!r}")
        attrs[name.upper()] = value
    return attrs


# -- response reading ---------------------------------------------------------


def read_logical_line(transport):
    """Read one response line with any announced literals inlined."""
    chunks = []
    while True:
        line = transport.read_line()
        chunks.append(line)
        m = _TRAILING_LITERAL_RE.search(line)
        if not m:
            return b"".join(chunks)
        chunks.append(transport.read_exact(int(m.group(1))))


def read_response(transport):
    return parse_response_line(read_logical_line(transport))


def read_full_response(transport, tag):
    """Collect responses up to and including the completion for ``tag``."""
    out = []
    while True:
        resp = read_response(transport)
        out.append(resp)
        if resp.tagged:
            if resp.tag != tag:
                raise ProtocolDesync(f"expected completion of {tag}, got {resp.tag}")
            return out


# -- ENVELOPE -----------------------------------------------------------------


@dataclass(frozen=True)
class Address:
    name: Optional[str]
    mailbox: str
    host: str

    @property
    def email(self):
        return f"{self.mailbox}@{self.host}"


@dataclass
class Envelope:
    date: Optional[str] = None
    subject: Optional[str] = None
    from_: list = field(default_factory=list)
    sender: list = field(default_factory=list)
    reply_to: list = field(default_factory=list)
    to: list = field(default_factory=list)
    cc: list = field(default_factory=list)
    bcc: list = field(default_factory=list)
    in_reply_to: Optional[str] = None
    message_id: Optional[str] = None
    internal_date: Optional[str] = None


def _addresses(value):
    if value is None:
        return []
    if not isinstance(value, list):
        raise MalformedEnvelope("address list expected")
    out = []
    for addr in value:
        if not isinstance(addr, list) or len(addr) != 4 or any(isinstance(x, list) for x in addr):
            raise MalformedEnvelope(f"bad address structure {addr!r}")
        name, _adl, mailbox, host = (_text(x) for x in addr)
        if host is None:
            # RFC 2822 group start (mailbox = group name) or end (all NIL)
            continue
        if mailbox is None:
            raise MalformedEnvelope("address has a host but no mailbox")
        out.append(Address(name, mailbox, host))
    return out


def parse_envelope(fetch_payload):
    """Parse an ENVELOPE structure (bytes or already-tokenized list).

    Encoded-words in the subject and display names are left untouched.
    """
    if isinstance(fetch_payload, (bytes, bytearray)):
        try:
            toks = tokenize(bytes(fetch_payload))
        except MalformedResponse as exc:
            raise MalformedEnvelope(str(exc)) from exc
        if len(toks) != 1:
            raise MalformedEnvelope("expected a single parenthesized envelope")
        value = toks[0]
    else:
        value = fetch_payload
    if not isinstance(value, list) or len(value) != 10:
        raise MalformedEnvelope("envelope must have 10 fields")
    date, subject, frm, sender, reply_to, to, cc, bcc, in_reply_to, msgid = value
    for scalar in (date, subject, in_reply_to, msgid):
        if isinstance(scalar, list):
            raise MalformedEnvelope("string field expected")
    return Envelope(
        date=_text(date),
        subject=_text(subject),
        from_=_addresses(frm),
        sender=_addresses(sender),
        reply_to=_addresses(reply_to),
        to=_addresses(to),
        cc=_addresses(cc),
        bcc=_addresses(bcc),
        in_reply_to=_text(in_reply_to),
        message_id=_text(msgid),
    )


# -- BODYSTRUCTURE ------------------------------------------------------------


@dataclass
class BodyStructureNode:
    part_number: str
    maintype: str
    subtype: str
    parameters: dict = field(default_factory=dict)
    transfer_encoding: str = "7bit"
    disposition: Optional[str] = None
    disposition_params: dict = field(default_factory=dict)
    size_octets: int = 0
    children: list = field(default_factory=list)

    @property
    def media_type(self):
        return f"{self.maintype}/{self.subtype}"

    @property
    def is_multipart(self):
        return self.maintype == "multipart"

    @property
    def filename(self):
        return self.disposition_params.get("filename") or self.parameters.get("name")

    @property
    def is_attachment(self):
        return not self.is_multipart and (self.disposition == "attachment" or bool(self.filename))

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def leaves(self):
        return [n for n in self.walk() if not n.children]

    def attachments(self):
        return [n for n in self.walk() if n.is_attachment]


def _lower(value):
    s = _text(value)
    return s.lower() if s else ""


def _params(value):
    if value is None:
        return {}
    if not isinstance(value, list) or len(value) % 2:
        raise MalformedBodyStructure("parameter list must have key/value pairs")
    out = {}
    for k, v in zip(value[0::2], value[1::2]):
        if isinstance(k, list) or isinstance(v, list):
            raise MalformedBodyStructure("nested parameter value")
        out[_lower(k)] = _text(v) or ""
    return out


def _disposition(value):
    if value is None:
        return None, {}
    if not isinstance(value, list) or len(value) != 2:
        raise MalformedBodyStructure("bad disposition")
    return _lower(value[0]), _params(value[1])


def _child_number(prefix, k):
    return f"{prefix}.{k}" if prefix else str(k)


def _parse_body(tok, number, prefix):
    """``number`` is this node's part number, ``prefix`` the one its children extend."""
    if not isinstance(tok, list) or not tok:
        raise MalformedBodyStructure("body must be a non-empty list")
    if isinstance(tok[0], list):
        children = []
        i = 0
        while i < len(tok) and isinstance(tok[i], list):
            children.append(tok[i])
            i += 1
        if i >= len(tok):
            raise MalformedBodyStructure("multipart without subtype")
        subtype = _lower(tok[i])
        ext = tok[i + 1:]
        params = _params(ext[0]) if len(ext) > 0 else {}
        disp, dparams = _disposition(ext[1]) if len(ext) > 1 else (None, {})
        kids = [
            _parse_body(c, _child_number(prefix, k), _child_number(prefix, k))
            for k, c in enumerate(children, 1)
        ]
        return BodyStructureNode(
            part_number=number,
            maintype="multipart",
            subtype=subtype,
            parameters=params,
            disposition=disp,
            disposition_params=dparams,
            size_octets=sum(k.size_octets for k in kids),
            children=kids,
        )
    if len(tok) < 7:
        raise MalformedBodyStructure("single-part body needs 7 basic fields")
    maintype, subtype = _lower(tok[0]), _lower(tok[1])
    params = _params(tok[2])
    encoding = _lower(tok[5]) or "7bit"
    try:
        size = int(tok[6]) if tok[6] is not None else 0
    except (TypeError, ValueError) as exc:
        raise MalformedBodyStructure("body size must be a number") from exc
    rest = tok[7:]
    if maintype == "text":
        rest = rest[1:]
    elif maintype == "message" and subtype == "rfc822":
        rest = rest[3:]
    # extension data: md5, disposition, language, location
    disp, dparams = _disposition(rest[1]) if len(rest) > 1 else (None, {})
    return BodyStructureNode(
        part_number=number,
        maintype=maintype,
        subtype=subtype,
        parameters=params,
        transfer_encoding=encoding,
        disposition=disp,
        disposition_params=dparams,
        size_octets=size,
    )


def parse_bodystructure(fetch_payload):
    """Parse a BODYSTRUCTURE list into a :class:`BodyStructureNode` tree.

    A multipart root gets part number ``""`` and children ``"1"``, ``"2"``...;
    a single-part root is part ``"1"``.
    """
    if isinstance(fetch_payload, (bytes, bytearray)):
        try:
            toks = tokenize(bytes(fetch_payload))
        except MalformedResponse as exc:
            raise MalformedBodyStructure(str(exc)) from exc
        if len(toks) != 1:
            raise MalformedBodyStructure("expected a single parenthesized body")
        value = toks[0]
    else:
        value = fetch_payload
    if isinstance(value, list) and value and isinstance(value[0], list):
        return _parse_body(value, "", "")
    return _parse_body(value, "1", "1")

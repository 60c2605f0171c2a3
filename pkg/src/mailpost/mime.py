"""MIME handling: transfer decoders, RFC 2047 header decoding, a multipart
parser, message-text cleaning and attachment extraction to disk.

Leaf bodies stay transfer-encoded inside :class:`MimeEntity`; decoding is
always an explicit step (:func:`decoded_payload`, :func:`entity_text`).
"""

import codecs
import logging
import os
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import unquote_to_bytes

from .errors import InvalidBase64, MalformedMime

log = logging.getLogger(__name__)

# -- transfer decoding --------------------------------------------------------

_B64_ALPHABET = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_B64_TABLE = bytes(_B64_ALPHABET.index(c) if c in _B64_ALPHABET else 0xFF for c in range(256))
_WS = b" \t\r\n"


def decode_base64(text):
    """Decode base64, ignoring embedded whitespace and tolerating missing padding."""
    data = text.encode("ascii", "replace") if isinstance(text, str) else bytes(text)
    symbols = data.translate(None, _WS)
    stripped = symbols.rstrip(b"=")
    pad = len(symbols) - len(stripped)
    if pad > 2 or (pad and (len(stripped) + pad) % 4):
        raise InvalidBase64("bad padding")
    rem = len(stripped) % 4
    if rem == 1:
        raise InvalidBase64("truncated base64 quantum")
    values = stripped.translate(_B64_TABLE)
    bad = values.find(0xFF)
    if bad >= 0:
        raise InvalidBase64(f"invalid base64 symbol {chr(stripped[bad])!r}")
    if rem:
        values += bytes(4 - rem)
    out = bytearray()
    for i in range(0, len(values), 4):
        a, b, c, d = values[i:i + 4]
        out += ((a << 18) | (b << 12) | (c << 6) | d).to_bytes(3, "big")
    if rem:
        del out[len(out) - (4 - rem):]
    return bytes(out)


_QP_ESCAPE = re.compile(rb"=(?:([0-9A-Fa-f]{2})|[ \t]*(?:\r\n|\n|\Z))")


def _qp_sub(m):
    return bytes((int(m.group(1), 16),)) if m.group(1) else b""


def decode_quoted_printable(data, header=False):
    """Decode quoted-printable bytes.

    ``=XY`` escapes become octets and ``=`` at end of line is a soft break;
    anything else, including malformed escapes, passes through.  With
    ``header=True`` underscores decode to spaces (RFC 2047 "Q").
    """
    if isinstance(data, str):
        data = data.encode("latin-1", "replace")
    data = bytes(data)
    if header:
        data = data.replace(b"_", b" ")
    return _QP_ESCAPE.sub(_qp_sub, data)


# -- charsets -----------------------------------------------------------------


def lookup_charset(charset):
    """Return a Python codec name for a MIME charset, or None if unknown."""
    if not charset:
        return None
    name = charset.strip().strip('"').split("*", 1)[0].lower()
    if name in ("unknown-8bit", "x-unknown"):
        return None
    try:
        return codecs.lookup(name).name
    except LookupError:
        return None


def to_text(data, charset=None):
    """Bytes -> str using ``charset`` (UTF-8 default, Latin-1 fallback)."""
    codec = lookup_charset(charset)
    if charset and codec is None:
        log.warning("unknown charset %r, decoding as latin-1", charset)
        return data.decode("latin-1")
    if codec is None or codec in ("utf-8", "ascii"):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            return data.decode("latin-1")
    return data.decode(codec, "replace")


# -- RFC 2047 -----------------------------------------------------------------

_ENCODED_WORD_RE = re.compile(r"=\?([^?\s]+)\?([BbQq])\?([^?\s]*)\?=")


def _decode_word(charset, encoding, payload):
    codec = lookup_charset(charset)
    if encoding in "Bb":
        raw = decode_base64(payload)
    else:
        raw = decode_quoted_printable(payload.encode("ascii", "replace"), header=True)
    if codec is None:
        log.warning("unknown charset %r in encoded-word, decoding as latin-1", charset)
        return raw.decode("latin-1")
    return raw.decode(codec)


def decode_mime_header(string):
    """Decode every RFC 2047 encoded-word in ``string``.

    Whitespace between adjacent encoded-words is dropped; undecodable words
    are left verbatim.
    """
    if string is None:
        return None
    out = []
    pos = 0
    after_word = False
    for m in _ENCODED_WORD_RE.finditer(string):
        gap = string[pos:m.start()]
        pos = m.end()
        try:
            decoded = _decode_word(m.group(1), m.group(2), m.group(3))
        except (InvalidBase64, UnicodeDecodeError, LookupError):
            out += [gap, m.group(0)]
            after_word = False
            continue
        if not (after_word and gap.strip() == ""):
            out.append(gap)
        out.append(decoded)
        after_word = True
    out.append(string[pos:])
    return "".join(out)


# -- header parsing -----------------------------------------------------------

_HEADER_LINE_RE = re.compile(rb"^([!-9;-~]+)[ \t]*:")
_KNOWN_HEADERS = {
    b"content-type", b"content-transfer-encoding", b"content-disposition", b"mime-version",
    b"from", b"to", b"cc", b"subject", b"date", b"message-id", b"received", b"return-path",
    b"content-id", b"content-description", b"reply-to", b"sender",
}


def _header_text(raw):
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def _split_header_block(raw):
    """Return ``(header_lines, body)`` or ``(None, raw)`` when raw has no headers.

    Header lines keep their folding and line endings.
    """
    lines = []
    pos = 0
    n = len(raw)
    while pos < n:
        nl = raw.find(b"\n", pos)
        end = n if nl < 0 else nl + 1
        line = raw[pos:end]
        if line in (b"\r\n", b"\n"):
            return lines, raw[end:]
        if line[:1] in (b" ", b"\t") and lines:
            lines[-1] += line
        elif _HEADER_LINE_RE.match(line):
            lines.append(line)
        else:
            return None, raw
        pos = end
    return (lines, b"") if lines else (None, raw)


def _parse_header_lines(lines):
    headers = []
    for line in lines:
        name, _, value = line.partition(b":")
        unfolded = re.sub(rb"\r?\n(?=[ \t])", b"", value).rstrip(b"\r\n").strip()
        headers.append((name.strip().decode("ascii"), _header_text(unfolded)))
    return headers


def _unquote(value):
    if len(value) >= 2 and value[0] == value[-1] == '"':
        return re.sub(r"\\(.)", r"\1", value[1:-1])
    return value


def _split_params(text):
    """Split on ';' outside quoted strings."""
    parts, buf, quoted, esc = [], [], False, False
    for ch in text:
        if esc:
            buf.append(ch)
            esc = False
        elif ch == "\\" and quoted:
            buf.append(ch)
            esc = True
        elif ch == '"':
            buf.append(ch)
            quoted = not quoted
        elif ch == ";" and not quoted:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def parse_header_params(value):
    """Parse ``main; k=v; k2="v 2"`` into ``(main, {k: v})``.

    RFC 2231 extended and continued parameters (``k*``, ``k*0*``) are
    reassembled and percent-decoded.
    """
    pieces = _split_params(value or "")
    main = pieces[0].strip()
    simple, extended = {}, {}
    for piece in pieces[1:]:
        if "=" not in piece:
            continue
        k, _, v = piece.partition("=")
        k, v = k.strip().lower(), v.strip()
        m = re.match(r"^([^*]+)\*(?:(\d+)\*?|)$", k) if "*" in k else None
        if m:
            idx = int(m.group(2)) if m.group(2) is not None else 0
            encoded = k.endswith("*")
            extended.setdefault(m.group(1), {})[idx] = (_unquote(v), encoded)
        else:
            simple[k] = _unquote(v)
    for name, sections in extended.items():
        charset = None
        raw = bytearray()
        for idx in sorted(sections):
            text, encoded = sections[idx]
            if encoded:
                if idx == 0 and text.count("'") >= 2:
                    charset, _lang, text = text.split("'", 2)
                raw += unquote_to_bytes(text)
            else:
                raw += text.encode("utf-8")
        simple[name] = to_text(bytes(raw), charset or "utf-8")
    return main, simple


# -- MIME tree ----------------------------------------------------------------


@dataclass
class MimeEntity:
    headers: list = field(default_factory=list)
    maintype: str = "text"
    subtype: str = "plain"
    params: dict = field(default_factory=dict)
    transfer_encoding: str = "7bit"
    disposition: Optional[str] = None
    disposition_params: dict = field(default_factory=dict)
    body: bytes = b""  # leaf: still transfer-encoded
    children: list = field(default_factory=list)
    preamble: bytes = b""
    epilogue: bytes = b""
    raw_header: bytes = b""
    part_number: str = "1"
    defects: list = field(default_factory=list)

    @property
    def media_type(self):
        return f"{self.maintype}/{self.subtype}"

    @property
    def is_multipart(self):
        return self.maintype == "multipart"

    @property
    def charset(self):
        return self.params.get("charset")

    @property
    def boundary(self):
        return self.params.get("boundary")

    @property
    def raw_filename(self):
        return self.disposition_params.get("filename") or self.params.get("name")

    @property
    def filename(self):
        name = self.raw_filename
        return decode_mime_header(name) if name else None

    @property
    def is_attachment(self):
        return not self.is_multipart and (self.disposition == "attachment" or bool(self.raw_filename))

    @property
    def has_defects(self):
        return any(e.defects for e in self.walk())

    def header(self, name, default=None):
        name = name.lower()
        for k, v in self.headers:
            if k.lower() == name:
                return v
        return default

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def find(self, part_number):
        for e in self.walk():
            if e.part_number == part_number:
                return e
        return None


def _child_number(prefix, k):
    return f"{prefix}.{k}" if prefix else str(k)


def _split_multipart(body, boundary):
    """Return ``(preamble, parts, epilogue, closed)``."""
    delim = re.escape(b"--" + boundary)
    pat = re.compile(rb"(?:^|\r?\n)" + delim + rb"(--)?[ \t]*(?=\r?\n|$)")
    preamble, epilogue = b"", b""
    parts = []
    start = None
    closed = False
    for m in pat.finditer(body):
        if start is None:
            preamble = body[:m.start()]
        else:
            parts.append(body[start:m.start()] if m.start() > start else b"")
        if m.group(1):
            closed = True
            rest = body[m.end():]
            epilogue = rest[2:] if rest.startswith(b"\r\n") else rest[1:] if rest.startswith(b"\n") else rest
            break
        nl = 2 if body[m.end():m.end() + 2] == b"\r\n" else 1
        start = m.end() + nl
    else:
        if start is not None:
            parts.append(body[start:])
    return preamble, parts, epilogue, closed


_MAX_DEPTH = 32


def parse_mime(raw_message, _number="", _depth=0, _default_type="text/plain"):
    """Parse a message (or a part with its MIME headers) into a tree.

    Part numbers follow IMAP section numbering: a multipart root is ``""``
    with children ``"1"``, ``"2"``...; a single-part root is ``"1"``.
    A missing closing delimiter is tolerated and recorded in ``defects``.
    """
    if not isinstance(raw_message, (bytes, bytearray)):
        raise MalformedMime("parse_mime expects bytes")
    if _depth > _MAX_DEPTH:
        raise MalformedMime("MIME nesting too deep")
    raw = bytes(raw_message)
    lines, body = _split_header_block(raw)
    ent = MimeEntity()
    if lines is not None:
        ent.headers = _parse_header_lines(lines)
        ent.raw_header = b"".join(lines)
    ctype, params = parse_header_params(ent.header("content-type") or _default_type)
    if "/" in ctype:
        maintype, subtype = (s.strip().lower() for s in ctype.split("/", 1))
    else:
        maintype, subtype = "text", "plain"
        if ent.header("content-type"):
            ent.defects.append("invalid content-type")
    ent.maintype, ent.subtype, ent.params = maintype or "text", subtype or "plain", params
    ent.transfer_encoding = (ent.header("content-transfer-encoding") or "7bit").strip().lower()
    disp = ent.header("content-disposition")
    if disp:
        kind, dparams = parse_header_params(disp)
        ent.disposition = kind.lower() or None
        ent.disposition_params = dparams
    if ent.is_multipart:
        boundary = ent.boundary
        if not boundary:
            ent.defects.append("multipart without boundary")
            ent.maintype, ent.subtype = "text", "plain"
        else:
            preamble, parts, epilogue, closed = _split_multipart(body, boundary.encode("utf-8"))
            if not parts:
                ent.defects.append("no body parts found")
                ent.maintype, ent.subtype = "text", "plain"
            else:
                if not closed:
                    ent.defects.append("missing closing boundary")
                ent.preamble, ent.epilogue = preamble, epilogue
                child_default = "message/rfc822" if ent.subtype == "digest" else "text/plain"
                for k, part in enumerate(parts, 1):
                    ent.children.append(
                        parse_mime(part, _child_number(_number, k), _depth + 1, child_default)
                    )
                ent.part_number = _number
                ent.body = body
                return ent
    ent.body = body
    ent.part_number = _number or "1"
    return ent


def parse_text_section(raw):
    """Parse a headerless section such as ``BODY[TEXT]``.

    The boundary is recovered from the first delimiter line; without one the
    section is a single text leaf.
    """
    raw = bytes(raw)
    lines, _ = _split_header_block(raw)
    if lines is not None and _looks_like_headers(lines):
        return parse_mime(raw)
    m = re.search(rb"(?:^|\n)--([^\r\n]+?)[ \t]*\r?\n", raw)
    if m:
        boundary = m.group(1)
        if boundary.endswith(b"--"):
            boundary = boundary[:-2]
        if boundary and b'"' not in boundary and re.search(b"--" + re.escape(boundary), raw[m.end():]):
            synthetic = b'Content-Type: multipart/mixed; boundary="' + boundary + b'"\r\n\r\n' + raw
            ent = parse_mime(synthetic)
            if ent.is_multipart:
                ent.headers, ent.raw_header = [], b""
                return ent
    return parse_mime(b"\r\n" + raw)


def _looks_like_headers(lines):
    return any(_HEADER_LINE_RE.match(line).group(1).lower() in _KNOWN_HEADERS for line in lines)


def serialize_mime(ent):
    """Re-serialize a parsed tree (headers are re-emitted unfolded)."""
    out = bytearray()
    for name, value in ent.headers:
        out += f"{name}: {value}\r\n".encode("utf-8")
    out += b"\r\n"
    if ent.is_multipart:
        b = ent.boundary.encode("utf-8")
        out += ent.preamble
        if ent.preamble:
            out += b"\r\n"
        for child in ent.children:
            out += b"--" + b + b"\r\n" + serialize_mime(child) + b"\r\n"
        out += b"--" + b + b"--\r\n" + ent.epilogue
    else:
        out += ent.body
    return bytes(out)


def decoded_payload(ent):
    """Transfer-decode a leaf body."""
    enc = ent.transfer_encoding
    if enc == "base64":
        try:
            return decode_base64(ent.body)
        except InvalidBase64:
            log.warning("invalid base64 in part %s, keeping raw bytes", ent.part_number)
            return ent.body
    if enc == "quoted-printable":
        return decode_quoted_printable(ent.body)
    return ent.body


def entity_text(ent):
    """Readable text of an entity: the plain-text leaves, decoded."""
    if not ent.is_multipart:
        return to_text(decoded_payload(ent), ent.charset)
    if ent.subtype == "alternative":
        texts = [c for c in ent.children if c.maintype == "text" or c.is_multipart]
        for c in texts:
            if c.media_type == "text/plain":
                return entity_text(c)
        return entity_text(texts[0]) if texts else ""
    pieces = []
    for c in ent.children:
        if c.is_multipart or (c.maintype == "text" and not c.is_attachment):
            pieces.append(entity_text(c))
    return "\n".join(p for p in pieces if p)


# -- message text cleaning ----------------------------------------------------

_B64_BODY_RE = re.compile(rb"^[A-Za-z0-9+/]+={0,2}$")
_QP_HINT_RE = re.compile(rb"=[0-9A-F]{2}|=\r?\n")


def _printable_ratio(text):
    if not text:
        return 0.0
    ok = sum(1 for ch in text if ch.isprintable() or ch in "\r\n\t")
    return ok / len(text)


def _guess_decode(raw):
    compact = b"".join(raw.split())
    if len(compact) >= 8 and len(compact) % 4 == 0 and _B64_BODY_RE.match(compact):
        try:
            decoded = decode_base64(compact)
            text = decoded.decode("utf-8")
            if _printable_ratio(text) > 0.95:
                return text
        except (InvalidBase64, UnicodeDecodeError):
            pass
    if _QP_HINT_RE.search(raw):
        raw = decode_quoted_printable(raw)
    return to_text(raw)


def _clean_one(payload):
    from .fetch import FetchResult

    if isinstance(payload, FetchResult):
        if not payload.ok or payload.data is None:
            return ""
        if payload.kind == "part" and payload.node is not None:
            ent = MimeEntity(
                maintype=payload.node.maintype, subtype=payload.node.subtype,
                params=payload.node.parameters, transfer_encoding=payload.node.transfer_encoding,
                body=payload.data,
            )
            return _normalize_newlines(entity_text(ent))
        payload = payload.data
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    raw = bytes(payload)
    lines, _ = _split_header_block(raw)
    if lines is not None and _looks_like_headers(lines):
        text = entity_text(parse_mime(raw))
    else:
        ent = parse_text_section(raw)
        text = entity_text(ent) if ent.is_multipart else _guess_decode(raw)
    return _normalize_newlines(text)


def _normalize_newlines(text):
    return text.replace("\r\n", "\n").replace("\r", "\n")


def clean_msg_text(payloads):
    """Decode fetched message texts into readable strings, one per input.

    Accepts raw bytes, str, or :class:`~mailpost.fetch.FetchResult` items.
    Transfer encodings are taken from MIME headers when present and guessed
    (base64 / quoted-printable) otherwise.
    """
    return [_clean_one(p) for p in payloads]


# -- attachments --------------------------------------------------------------


@dataclass
class Attachment:
    source_id: int
    filename: str
    media_type: str
    part_number: str
    content: Optional[bytes] = None


_RESERVED = re.compile(r'[<>:"|?*\x00-\x1f\x7f]')


def sanitize_filename(name, fallback):
    """Reduce ``name`` to a safe single path component."""
    if name:
        name = decode_mime_header(name)
        name = unicodedata.normalize("NFC", name)
        name = name.replace("\\", "/").rsplit("/", 1)[-1]
        name = _RESERVED.sub("_", name).strip().lstrip(".").strip()
        encoded = name.encode("utf-8")
        if len(encoded) > 200:
            stem, dot, ext = name.rpartition(".")
            keep = ext if dot and len(ext) < 16 else ""
            name = encoded[: 200 - len(keep) - 1].decode("utf-8", "ignore") + ("." + keep if keep else "")
    return name or fallback


def _safe_component(name):
    name = _RESERVED.sub("_", str(name).replace("/", "_").replace("\\", "_")).strip().lstrip(".")
    return name or "_"


def _fallback_name(part_number):
    return f"part-{part_number or 1}.bin"


def list_attachments(entity, id=None):
    """Attachment metadata in tree order; content is not decoded."""
    return [
        Attachment(
            source_id=id,
            filename=sanitize_filename(e.raw_filename, _fallback_name(e.part_number)),
            media_type=e.media_type,
            part_number=e.part_number,
        )
        for e in entity.walk()
        if e.is_attachment
    ]


def extract_attachments(entity, id=None):
    """Like :func:`list_attachments` but with transfer-decoded content."""
    out = []
    for att in list_attachments(entity, id):
        att.content = decoded_payload(entity.find(att.part_number))
        out.append(att)
    return out


def _attachments_from_result(result):
    from .protocol import BodyStructureNode

    if result.kind == "part":
        node = result.node or BodyStructureNode(result.part or "1", "application", "octet-stream")
        leaf = MimeEntity(
            maintype=node.maintype, subtype=node.subtype, params=dict(node.parameters),
            transfer_encoding=node.transfer_encoding, body=result.data, part_number=node.part_number,
        )
        return [Attachment(
            source_id=result.id,
            filename=sanitize_filename(node.filename, _fallback_name(node.part_number)),
            media_type=node.media_type,
            part_number=node.part_number,
            content=decoded_payload(leaf),
        )]
    if result.kind == "text":
        entity = parse_text_section(result.data)
    else:
        entity = parse_mime(result.data)
    return extract_attachments(entity, result.id)


def _unique(name, taken):
    if name not in taken:
        return name
    stem, dot, ext = name.rpartition(".")
    if not dot or not stem:
        stem, ext = name, ""
    k = 1
    while True:
        candidate = f"{stem}-{k}.{ext}" if ext else f"{stem}-{k}"
        if candidate not in taken:
            return candidate
        k += 1


def get_attachments(fetched, dest_dir=".", username="", folder="", errors=None):
    """Write the attachments found in fetched items to disk.

    Files land in ``<dest_dir>/<username>/<folder>/<message id>/<filename>``;
    existing files are overwritten.  Returns the absolute paths written.
    Per-file ``OSError``s are logged and, if ``errors`` is a list, appended
    to it as ``(id, filename, exc)`` without aborting the batch.
    """
    root = os.path.realpath(dest_dir)
    base = os.path.join(root, _safe_component(username), _safe_component(folder))
    written = []
    taken = {}
    for result in fetched:
        if not result.ok or result.data is None:
            continue
        for att in _attachments_from_result(result):
            msg_dir = os.path.join(base, str(int(att.source_id)))
            names = taken.setdefault(msg_dir, set())
            name = _unique(att.filename, names)
            names.add(name)
            path = os.path.join(msg_dir, name)
            if os.path.commonpath([root, os.path.realpath(path)]) != root:
                raise MalformedMime(f"refusing to write outside {root}: {name!r}")
            try:
                os.makedirs(msg_dir, exist_ok=True)
                with open(path, "wb") as fh:
                    fh.write(att.content)
            except OSError as exc:
                log.error("cannot write %s: %s", path, exc)
                if errors is not None:
                    errors.append((att.source_id, name, exc))
                continue
            written.append(path)
    return written

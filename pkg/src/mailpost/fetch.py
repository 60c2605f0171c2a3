"""Fetch methods: whole bodies, MIME levels, headers, text, metadata and
attachment parts.

All body fetches use ``BODY.PEEK[...]`` so reading never sets ``\\Seen``.
Ids are fetched in one batched command; results come back aligned with
the requested ids, and an id the server returned nothing for yields a
result carrying :class:`NoSuchMessage` instead of aborting the batch.
"""

import datetime as _dt
import re
from dataclasses import dataclass
from typing import Optional

from .errors import CommandFailed, InvalidArgument, NoAttachments, NoSuchMessage, UnknownAttribute
from .ids import as_ids
from .protocol import Atom, BodyStructureNode, FetchItem, parse_bodystructure, parse_envelope
from .search import MONTHS

METADATA_ATTRIBUTES = ("ENVELOPE", "INTERNALDATE", "FLAGS", "RFC822.SIZE", "UID")
_HEADER_FIELD_RE = re.compile(r"^[!-9;-~]+$")


@dataclass
class FetchResult:
    """One fetched item.

    ``kind`` is one of ``body``, ``header``, ``text``, ``metadata`` or
    ``part``.  ``data`` holds raw bytes (or a dict for metadata); for
    ``part`` results ``part`` is the dotted section and ``node`` its
    BODYSTRUCTURE entry.  Failed ids carry ``error`` and no data.
    """

    id: int
    kind: str
    data: object = None
    part: Optional[str] = None
    node: Optional[BodyStructureNode] = None
    error: Optional[Exception] = None

    @property
    def ok(self):
        return self.error is None


def _response_key(item):
    key = item.upper().replace("BODY.PEEK[", "BODY[").replace('"', "")
    return re.sub(r"\s+", " ", key)


def _fetch_items(session, ids, items):
    """Issue one FETCH for ``ids`` and return ``{id: attrs}`` plus the failure, if any."""
    seqset = ",".join(str(int(i)) for i in ids)
    uid_mode = session.config.use_uid
    verb = "UID FETCH" if uid_mode else "FETCH"
    request = ([Atom("UID")] if uid_mode else []) + [Atom(i) for i in items]
    failure = None
    try:
        untagged = session.execute(verb, [Atom(seqset), request])
    except CommandFailed as exc:
        failure, untagged = exc, []
    wanted = {int(i) for i in ids}
    found = {}
    for resp in untagged:
        if not isinstance(resp.payload, FetchItem):
            continue
        attrs = {_response_key(k): v for k, v in resp.payload.attrs.items()}
        if uid_mode:
            if "UID" not in attrs:
                continue
            key = int(attrs["UID"])
        else:
            key = resp.payload.seq
        if key in wanted:
            found.setdefault(key, {}).update(attrs)
    return found, failure


def _missing(i, failure):
    return failure if failure is not None else NoSuchMessage(i)


def _prepare(session, ids, op):
    session._require_selected(op)
    ids = as_ids(ids, session.id_kind)
    if not ids:
        raise InvalidArgument("at least one message id is required")
    return ids


def _fetch_section(session, ids, section, kind, op):
    ids = _prepare(session, ids, op)
    item = f"BODY.PEEK[{section}]"
    found, failure = _fetch_items(session, ids, [item])
    key = _response_key(item)
    out = []
    for i in ids:
        attrs = found.get(int(i))
        if attrs is None or key not in attrs:
            out.append(FetchResult(i, kind, error=_missing(i, failure)))
            continue
        data = attrs[key]
        if data is None:
            data = b""
        if not isinstance(data, (bytes, bytearray)):
            out.append(FetchResult(i, kind, error=InvalidArgument(f"unexpected {key} value")))
            continue
        out.append(FetchResult(i, kind, bytes(data), part=section or None))
    return out


def fetch_body(session, ids, mime_level=None):
    """Full message (``BODY[]``) or top-level MIME part ``mime_level`` (``BODY[k]``)."""
    if mime_level is not None:
        if isinstance(mime_level, bool) or not isinstance(mime_level, int) or mime_level < 1:
            raise InvalidArgument("mime_level must be an integer >= 1")
        section = str(mime_level)
    else:
        section = ""
    return _fetch_section(session, ids, section, "body", "fetch_body")


def fetch_header(session, ids, fields=None):
    if fields:
        names = []
        for f in fields:
            if not _HEADER_FIELD_RE.match(f):
                raise InvalidArgument(f"invalid header field name {f!r}")
            names.append(f.upper())
        section = f"HEADER.FIELDS ({' '.join(names)})"
    else:
        section = "HEADER"
    return _fetch_section(session, ids, section, "header", "fetch_header")


def fetch_text(session, ids):
    return _fetch_section(session, ids, "TEXT", "text", "fetch_text")


_INTERNALDATE_RE = re.compile(r"^\s*(\d{1,2})-([A-Za-z]{3})-(\d{4}) (\d\d):(\d\d):(\d\d) ([+-])(\d\d)(\d\d)\s*$")


def parse_internaldate(value):
    """Parse ``DD-Mon-YYYY HH:MM:SS +ZZZZ`` into an aware datetime (locale independent)."""
    text = value.decode("ascii") if isinstance(value, (bytes, bytearray)) else str(value)
    m = _INTERNALDATE_RE.match(text)
    if not m or m.group(2).capitalize() not in MONTHS:
        raise InvalidArgument(f"malformed INTERNALDATE {text!r}")
    day, mon, year, hh, mm, ss, sign, zh, zm = m.groups()
    offset = _dt.timedelta(hours=int(zh), minutes=int(zm)) * (-1 if sign == "-" else 1)
    return _dt.datetime(
        int(year), MONTHS.index(mon.capitalize()) + 1, int(day), int(hh), int(mm), int(ss),
        tzinfo=_dt.timezone(offset),
    )


def fetch_metadata(session, ids, attributes=("ENVELOPE",)):
    """Fetch message attributes and parse them into native values.

    ``data`` maps each requested attribute to: an :class:`Envelope`, an
    aware ``datetime`` (INTERNALDATE), a list of flag strings, or an int.
    """
    if isinstance(attributes, str):
        attributes = [attributes]
    attrs = [a.upper() for a in attributes]
    if not attrs:
        raise InvalidArgument("at least one attribute is required")
    for a in attrs:
        if a not in METADATA_ATTRIBUTES:
            raise UnknownAttribute(f"unknown metadata attribute {a!r}")
    ids = _prepare(session, ids, "fetch_metadata")
    found, failure = _fetch_items(session, ids, [a for a in attrs if a != "UID"] or ["UID"])
    out = []
    for i in ids:
        raw = found.get(int(i))
        if raw is None or any(a not in raw for a in attrs):
            out.append(FetchResult(i, "metadata", error=_missing(i, failure)))
            continue
        meta = {}
        for a in attrs:
            v = raw[a]
            if a == "ENVELOPE":
                meta[a] = parse_envelope(v)
            elif a == "INTERNALDATE":
                meta[a] = parse_internaldate(v)
            elif a == "FLAGS":
                meta[a] = [str(f) for f in (v or [])]
            else:
                meta[a] = int(v)
        if "ENVELOPE" in meta and "INTERNALDATE" in raw:
            meta["ENVELOPE"].internal_date = (
                raw["INTERNALDATE"].decode("ascii") if isinstance(raw["INTERNALDATE"], bytes) else str(raw["INTERNALDATE"])
            )
        out.append(FetchResult(i, "metadata", meta))
    return out


def fetch_bodystructure(session, ids):
    """Return ``{id: BodyStructureNode or exception}`` in request order."""
    ids = _prepare(session, ids, "fetch_bodystructure")
    found, failure = _fetch_items(session, ids, ["BODYSTRUCTURE"])
    out = {}
    for i in ids:
        attrs = found.get(int(i))
        if attrs is None or "BODYSTRUCTURE" not in attrs:
            out[i] = _missing(i, failure)
        else:
            out[i] = parse_bodystructure(attrs["BODYSTRUCTURE"])
    return out


def fetch_attachments(session, ids):
    """Locate attachment parts via BODYSTRUCTURE and fetch each one.

    Returned ``part`` results hold the still transfer-encoded bytes;
    decoding is left to :mod:`mailpost.mime`.
    """
    structures = fetch_bodystructure(session, ids)
    out = []
    for i, tree in structures.items():
        if isinstance(tree, Exception):
            out.append(FetchResult(i, "part", error=tree))
            continue
        parts = tree.attachments()
        if not parts:
            out.append(FetchResult(i, "part", error=NoAttachments(i)))
            continue
        items = [f"BODY.PEEK[{n.part_number}]" for n in parts]
        found, failure = _fetch_items(session, [i], items)
        attrs = found.get(int(i), {})
        for node, item in zip(parts, items):
            key = _response_key(item)
            if key not in attrs:
                out.append(FetchResult(i, "part", part=node.part_number, node=node, error=_missing(i, failure)))
                continue
            data = attrs[key] or b""
            out.append(FetchResult(i, "part", bytes(data), part=node.part_number, node=node))
    return out

"""Search criteria as a small AST, rendered to IMAP SEARCH keys.

Single-criterion helpers (``search_period``, ``search_string``, ...) are
thin sugar over :func:`search` with the matching criterion, so they send
byte-identical commands.
"""

import datetime as _dt
import functools
import re
from dataclasses import dataclass

from .errors import CapabilityMissing, InvalidArgument, InvalidRange, SearchRefused
from .protocol import Atom, Quoted, SearchResults, _render_arg

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
_DATE_RE = re.compile(r"^\s*(\d{1,2})-([A-Za-z]{3})-(\d{4})\s*$")


@functools.total_ordering
@dataclass(frozen=True, eq=True)
class ImapDate:
    """A calendar date rendered as ``DD-Mon-YYYY``."""

    day: int
    month: int
    year: int

    def __init__(self, day, month, year):
        if isinstance(month, str):
            try:
                month = MONTHS.index(month.capitalize()) + 1
            except ValueError:
                raise InvalidArgument(f"unknown month {month!r}") from None
        try:
            _dt.date(year, month, day)
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"invalid date {day}-{month}-{year}: {exc}") from None
        object.__setattr__(self, "day", day)
        object.__setattr__(self, "month", month)
        object.__setattr__(self, "year", year)

    @classmethod
    def parse(cls, text):
        m = _DATE_RE.match(text)
        if not m:
            raise InvalidArgument(f"expected DD-Mon-YYYY, got {text!r}")
        return cls(int(m.group(1)), m.group(2), int(m.group(3)))

    @classmethod
    def coerce(cls, value):
        if isinstance(value, ImapDate):
            return value
        if isinstance(value, _dt.datetime):
            value = value.date()
        if isinstance(value, _dt.date):
            return cls(value.day, value.month, value.year)
        if isinstance(value, str):
            return cls.parse(value)
        raise InvalidArgument(f"cannot interpret {value!r} as a date")

    def to_date(self):
        return _dt.date(self.year, self.month, self.day)

    def __lt__(self, other):
        if not isinstance(other, ImapDate):
            return NotImplemented
        return self.to_date() < other.to_date()

    def __str__(self):
        return f"{self.day:02d}-{MONTHS[self.month - 1]}-{self.year:04d}"


# -- criteria -----------------------------------------------------------------

STRING_FIELDS = ("FROM", "TO", "CC", "BCC", "SUBJECT", "BODY", "TEXT")
FLAGS = ("SEEN", "ANSWERED", "FLAGGED", "DELETED", "DRAFT", "RECENT")
_HEADER_NAME_RE = re.compile(r"^[!-9;-~]+$")


class Criterion:
    """Base class of every search AST node."""

    def __and__(self, other):
        return And([self, other])

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class AllMessages(Criterion):
    """Matches every message in the folder."""


@dataclass(frozen=True)
class Since(Criterion):
    date: ImapDate

    def __post_init__(self):
        object.__setattr__(self, "date", ImapDate.coerce(self.date))


@dataclass(frozen=True)
class Before(Criterion):
    date: ImapDate

    def __post_init__(self):
        object.__setattr__(self, "date", ImapDate.coerce(self.date))


@dataclass(frozen=True)
class OnDate(Criterion):
    date: ImapDate

    def __post_init__(self):
        object.__setattr__(self, "date", ImapDate.coerce(self.date))


@dataclass(frozen=True)
class StringMatch(Criterion):
    """Substring match on a standard field or, for any other name, a header."""

    where: str
    expr: str

    def __post_init__(self):
        where = self.where.upper() if self.where.upper() in STRING_FIELDS else self.where
        if where not in STRING_FIELDS and not _HEADER_NAME_RE.match(where):
            raise InvalidArgument(f"invalid header field name {self.where!r}")
        if not isinstance(self.expr, str) or not self.expr:
            raise InvalidArgument("search expression must be a non-empty string")
        if any(c in self.expr for c in "\r\n\x00"):
            raise InvalidArgument("search expression cannot contain CR, LF or NUL")
        object.__setattr__(self, "where", where)


@dataclass(frozen=True)
class FlagSet(Criterion):
    flag: str
    negated: bool = False

    def __post_init__(self):
        flag = self.flag.lstrip("\\").upper()
        if flag not in FLAGS:
            raise InvalidArgument(f"unknown flag {self.flag!r}")
        object.__setattr__(self, "flag", flag)


@dataclass(frozen=True)
class Size(Criterion):
    relation: str  # LARGER or SMALLER
    octets: int

    def __post_init__(self):
        rel = self.relation.upper()
        if rel not in ("LARGER", "SMALLER"):
            raise InvalidArgument(f"size relation must be LARGER or SMALLER, not {self.relation!r}")
        if isinstance(self.octets, bool) or not isinstance(self.octets, int) or self.octets < 1:
            raise InvalidArgument("size must be a positive number of octets")
        object.__setattr__(self, "relation", rel)


@dataclass(frozen=True)
class Within(Criterion):
    relation: str  # YOUNGER or OLDER
    seconds: int

    def __post_init__(self):
        rel = self.relation.upper()
        if rel not in ("YOUNGER", "OLDER"):
            raise InvalidArgument(f"within relation must be YOUNGER or OLDER, not {self.relation!r}")
        if isinstance(self.seconds, bool) or not isinstance(self.seconds, int) or self.seconds < 1:
            raise InvalidArgument("interval must be at least one second")
        object.__setattr__(self, "relation", rel)


@dataclass(frozen=True)
class And(Criterion):
    items: tuple

    def __init__(self, items):
        items = tuple(items)
        if not items:
            raise InvalidArgument("And needs at least one criterion")
        for c in items:
            if not isinstance(c, Criterion):
                raise InvalidArgument(f"not a criterion: {c!r}")
        object.__setattr__(self, "items", items)


@dataclass(frozen=True)
class Or(Criterion):
    left: Criterion
    right: Criterion


@dataclass(frozen=True)
class Not(Criterion):
    inner: Criterion


def contains_within(c):
    if isinstance(c, Within):
        return True
    if isinstance(c, And):
        return any(contains_within(i) for i in c.items)
    if isinstance(c, Or):
        return contains_within(c.left) or contains_within(c.right)
    if isinstance(c, Not):
        return contains_within(c.inner)
    return False


def criterion_args(c, nested=False):
    """Flatten a criterion into protocol arguments for the SEARCH command."""
    if isinstance(c, AllMessages):
        return [Atom("ALL")]
    if isinstance(c, Since):
        return [Atom("SINCE"), Atom(str(c.date))]
    if isinstance(c, Before):
        return [Atom("BEFORE"), Atom(str(c.date))]
    if isinstance(c, OnDate):
        return [Atom("ON"), Atom(str(c.date))]
    if isinstance(c, StringMatch):
        if c.where in STRING_FIELDS:
            return [Atom(c.where), Quoted(c.expr)]
        return [Atom("HEADER"), c.where, Quoted(c.expr)]
    if isinstance(c, FlagSet):
        return ([Atom("NOT")] if c.negated else []) + [Atom(c.flag)]
    if isinstance(c, Size):
        return [Atom(c.relation), c.octets]
    if isinstance(c, Within):
        return [Atom(c.relation), c.seconds]
    if isinstance(c, And):
        if len(c.items) == 1:
            return criterion_args(c.items[0], nested)
        flat = [a for item in c.items for a in criterion_args(item, nested=False)]
        return [flat] if nested else flat
    if isinstance(c, Or):
        return [Atom("OR")] + _operand(c.left) + _operand(c.right)
    if isinstance(c, Not):
        return [Atom("NOT")] + _operand(c.inner)
    raise InvalidArgument(f"not a search criterion: {c!r}")


def _operand(c):
    # a multi-key operand of OR/NOT must be a single parenthesized key
    return criterion_args(c, nested=True)


def render_criterion(c):
    """Render a criterion as the text of an IMAP search-key list."""
    chunks = []
    for i, arg in enumerate(criterion_args(c)):
        if i:
            chunks.append(b" ")
        for piece in _render_arg(arg):
            chunks.append(piece + b"\r\n" if piece.startswith(b"{") and piece.endswith(b"}") else piece)
    return b"".join(chunks).decode("utf-8")


# -- execution ----------------------------------------------------------------


def search(session, c):
    """Run ``c`` against the selected folder and return ids in server order."""
    session._require_selected("search")
    if not isinstance(c, Criterion):
        raise InvalidArgument(f"not a search criterion: {c!r}")
    if contains_within(c) and not session.has_capability("WITHIN"):
        raise CapabilityMissing("WITHIN")
    verb = "UID SEARCH" if session.config.use_uid else "SEARCH"
    untagged = session.execute(verb, criterion_args(c), failure=SearchRefused)
    ids = []
    for resp in untagged:
        if isinstance(resp.payload, SearchResults):
            ids.extend(type(i)(int(i), session.id_kind) for i in resp.payload.ids)
    return ids


def search_period(session, since, before):
    since, before = ImapDate.coerce(since), ImapDate.coerce(before)
    if not since < before:
        raise InvalidRange(f"since ({since}) must be earlier than before ({before})")
    return search(session, And([Since(since), Before(before)]))


def search_on(session, date):
    return search(session, OnDate(date))


def search_since(session, date):
    return search(session, Since(date))


def search_before(session, date):
    return search(session, Before(date))


def search_string(session, expr, where):
    return search(session, StringMatch(where, expr))


def search_flag(session, flag, negated=False):
    return search(session, FlagSet(flag, negated))


def search_size(session, relation, octets):
    return search(session, Size(relation, octets))


def search_within(session, relation, seconds):
    return search(session, Within(relation, seconds))

"""Mail analytics: sender frequency and lexicon-based sentiment counts.

Both analyses consume already-fetched data (envelopes, message text) and
produce small tables that can be written as CSV; the frequency report can
also be drawn as a standalone SVG bar chart.
"""

import csv
import io
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional
from xml.sax.saxutils import escape

from .errors import BadLexiconLine, InvalidArgument
from .mime import decode_mime_header

CATEGORIES = (
    "anger", "anticipation", "disgust", "fear", "joy",
    "sadness", "surprise", "trust", "negative", "positive",
)


# -- sender frequency ---------------------------------------------------------


@dataclass
class FrequencyRow:
    email: str
    name: str
    count: int


@dataclass
class FrequencyReport:
    rows: list = field(default_factory=list)
    period: Optional[tuple] = None  # (since, before) as ImapDate
    total: int = 0
    skipped: int = 0

    def period_label(self):
        """``Period: 01-Nov to 01-Dec-2020`` style subtitle (empty without a period)."""
        if not self.period:
            return ""
        since, before = self.period
        s, b = str(since), str(before)
        if s[-4:] == b[-4:]:
            s = s[:-5]
        return f"Period: {s} to {b}"


def sender_frequency(envelopes, top_n=5, period=None):
    """Count messages per from-address and keep the ``top_n`` busiest senders.

    ``envelopes`` is an iterable of ``(id, Envelope)`` pairs.  Only the first
    from-address of each envelope counts; envelopes without one are tallied
    in ``skipped``.  Ties are broken by address, ascending.
    """
    if isinstance(top_n, bool) or not isinstance(top_n, int) or top_n < 1:
        raise InvalidArgument("top_n must be a positive integer")
    counts = Counter()
    names = {}
    total = skipped = 0
    for _id, env in envelopes:
        total += 1
        if env is None or not env.from_:
            skipped += 1
            continue
        addr = env.from_[0]
        email = addr.email.lower()
        counts[email] += 1
        if not names.get(email) and addr.name:
            names[email] = decode_mime_header(addr.name)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    rows = [FrequencyRow(email, names.get(email, ""), n) for email, n in ranked]
    return FrequencyReport(rows, period, total, skipped)


def frequency_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["email", "name", "count"])
    for row in report.rows:
        w.writerow([row.email, row.name, row.count])
    return buf.getvalue()


def render_frequency_chart(report, path, title="E-mail frequency by sender"):
    """Write ``report`` as a horizontal SVG bar chart, one ``<rect>`` per row."""
    if not report.rows:
        raise InvalidArgument("cannot chart an empty report")
    bar_h, gap, label_w, plot_w = 22, 8, 260, 360
    top = 64
    height = top + len(report.rows) * (bar_h + gap) + 20
    width = label_w + plot_w + 60
    peak = max(r.count for r in report.rows)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<text x="{width // 2}" y="44" text-anchor="middle" class="subtitle">{escape(report.period_label())}</text>',
    ]
    for k, row in enumerate(report.rows):
        y = top + k * (bar_h + gap)
        w = max(1, round(plot_w * row.count / peak))
        out.append(f'<text x="{label_w - 6}" y="{y + bar_h - 6}" text-anchor="end" class="label">{escape(row.email)}</text>')
        out.append(f'<rect x="{label_w}" y="{y}" width="{w}" height="{bar_h}" fill="#4a7ab5"/>')
        out.append(f'<text x="{label_w + w + 6}" y="{y + bar_h - 6}" class="count">{row.count}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# -- text cleaning and sentiment ----------------------------------------------

_DROP = re.compile(r"\d|_|http|www|nbsp|@")
_NONWORD = re.compile(r"\W+")
_NONALPHA = re.compile(r"[^a-zA-Z]")


def _case_change(word):
    return any(a.islower() and b.isupper() for a, b in zip(word, word[1:]))


def tokenize_clean(text):
    """Split message text into lowercase alphabetic words.

    Steps, in order: line breaks to spaces; split on single spaces; drop
    tokens with digits, underscores, URLs, ``nbsp``, ``@`` or a lower-to-upper
    case change; strip non-word characters and lowercase; strip anything
    non-alphabetic; drop empties.
    """
    text = text.replace("\r\n", " ").replace("\n", " ")
    words = [w for w in text.split(" ") if not _DROP.search(w) and not _case_change(w)]
    words = [_NONWORD.sub("", w).lower() for w in words]
    words = [_NONALPHA.sub("", w) for w in words]
    return [w for w in words if w]


@dataclass
class SentimentLexicon:
    entries: dict = field(default_factory=dict)  # word -> frozenset of categories

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def categories(self, word):
        return self.entries.get(word, frozenset())


_WORD_RE = re.compile(r"^[a-z]+$")


def load_lexicon(path):
    """Read ``word,category`` lines (UTF-8, LF or CRLF) into a lexicon."""
    entries = {}
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise BadLexiconLine(lineno, "expected word,category")
        word, cat = parts[0].lower(), parts[1].lower()
        if lineno == 1 and (word, cat) == ("word", "category"):
            continue
        if not _WORD_RE.match(word):
            raise BadLexiconLine(lineno, f"not a single alphabetic word: {parts[0]!r}")
        if cat not in CATEGORIES:
            raise BadLexiconLine(lineno, f"unknown category {parts[1]!r}")
        entries.setdefault(word, set()).add(cat)
    return SentimentLexicon({w: frozenset(c) for w, c in entries.items()})


def demo_lexicon():
    """The small hand-written lexicon shipped with the package."""
    with resources.as_file(resources.files("mailpost") / "data" / "demo_lexicon.csv") as p:
        return load_lexicon(p)


def sentiment_counts(tokens, lexicon):
    counts = dict.fromkeys(CATEGORIES, 0)
    for tok in tokens:
        for cat in lexicon.categories(tok):
            counts[cat] += 1
    return counts


@dataclass
class SentimentRow:
    label: str
    counts: dict


@dataclass
class SentimentReport:
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        return list(CATEGORIES)


def sentiment_report(texts, lexicon):
    """One row per text, labelled ``body1``, ``body2``, ..."""
    rows = [
        SentimentRow(f"body{k}", sentiment_counts(tokenize_clean(t), lexicon))
        for k, t in enumerate(texts, 1)
    ]
    return SentimentReport(rows)


def sentiment_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", *CATEGORIES])
    for row in report.rows:
        w.writerow([row.label, *(row.counts[c] for c in CATEGORIES)])
    return buf.getvalue()

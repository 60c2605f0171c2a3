"""mailpost: an IMAP4rev1 client library and CLI for mailbox retrieval and analysis."""

from .analytics import (
    CATEGORIES,
    FrequencyReport,
    SentimentLexicon,
    SentimentReport,
    load_lexicon,
    render_frequency_chart,
    sender_frequency,
    sentiment_counts,
    sentiment_report,
    tokenize_clean,
)
from .errors import *  # noqa: F401,F403
from .fetch import FetchResult
from .ids import SEQUENCE, UID, MessageId
from .mime import (
    Attachment,
    MimeEntity,
    clean_msg_text,
    decode_base64,
    decode_mime_header,
    decode_quoted_printable,
    extract_attachments,
    get_attachments,
    parse_mime,
)
from .protocol import Address, BodyStructureNode, Envelope, parse_bodystructure, parse_envelope
from .search import (
    AllMessages,
    And,
    Before,
    FlagSet,
    ImapDate,
    Not,
    OnDate,
    Or,
    Since,
    Size,
    StringMatch,
    Within,
    render_criterion,
)
from .session import ImapConfig, Password, Phase, Session, XOAuth2Bearer, configure_imap
from .transport import Endpoint, parse_url

__version__ = "0.1.0"

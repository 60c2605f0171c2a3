"""``mailpost`` command-line front end.

Exit codes: 0 success, 2 usage or configuration problem, 3 connection or
authentication failure, 4 protocol refusal or per-message failure.

Credentials never come from the command line.  The password (or XOAuth2
bearer token) is read, in order, from the variable named by
``--password-env``, from ``password_env`` / ``password_file`` in the config
file, from ``MAILPOST_PASSWORD``, or from an interactive prompt.
"""

import argparse
import csv
import getpass
import io
import json
import logging
import os
import sys

from . import analytics
from .errors import (
    AuthFailed,
    BadLexiconLine,
    CapabilityMissing,
    InvalidArgument,
    MailpostError,
    MalformedUrl,
    NoAttachments,
    TransportError,
    UnsupportedScheme,
)
from .mime import clean_msg_text, decode_mime_header, get_attachments
from .search import (
    AllMessages,
    And,
    Before,
    FlagSet,
    ImapDate,
    Not,
    Or,
    Since,
    Size,
    StringMatch,
    Within,
)
from .session import ImapConfig, Password, XOAuth2Bearer, configure_imap

log = logging.getLogger("mailpost")

DEFAULT_CONFIG = os.path.join("~", ".config", "mailpost", "config")
EXIT_OK, EXIT_CONFIG, EXIT_CONNECT, EXIT_PROTOCOL = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


# -- configuration ------------------------------------------------------------


def read_config_file(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip().lower()] = value.strip()
    if "password" in values:
        raise ConfigError(f"{path}: store the password via password_env or password_file, not inline")
    return values


def _load_config(args):
    path = args.config or os.environ.get("MAILPOST_CONFIG")
    if path:
        path = os.path.expanduser(path)
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
    else:
        path = os.path.expanduser(DEFAULT_CONFIG)
        if not os.path.exists(path):
            return {}
    return read_config_file(path)


def _secret(args, conf):
    if args.password_env:
        value = os.environ.get(args.password_env)
        if value is None:
            raise ConfigError(f"environment variable {args.password_env} is not set")
        return value
    if conf.get("password_env"):
        value = os.environ.get(conf["password_env"])
        if value is None:
            raise ConfigError(f"environment variable {conf['password_env']} is not set")
        return value
    if conf.get("password_file"):
        try:
            with open(os.path.expanduser(conf["password_file"]), encoding="utf-8") as fh:
                return fh.read().strip("\r\n")
        except OSError as exc:
            raise ConfigError(f"cannot read password_file: {exc.strerror}") from None
    if "MAILPOST_PASSWORD" in os.environ:
        return os.environ["MAILPOST_PASSWORD"]
    if sys.stdin.isatty():
        return getpass.getpass("IMAP password: ")
    raise ConfigError("no password source: set MAILPOST_PASSWORD or use --password-env")


def _truthy(value):
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def build_config(args):
    conf = _load_config(args)
    url = args.url or conf.get("url")
    username = args.username or conf.get("username")
    if not url or not username:
        raise ConfigError("both url and username are required (flags or config file)")
    timeout = args.timeout if args.timeout is not None else conf.get("timeout", 10000)
    try:
        timeout = int(timeout)
    except ValueError:
        raise ConfigError(f"timeout must be an integer number of milliseconds, got {timeout!r}") from None
    secret = _secret(args, conf)
    auth_kind = (args.auth or conf.get("auth", "password")).lower()
    if auth_kind not in ("password", "xoauth2"):
        raise ConfigError(f"auth must be password or xoauth2, not {auth_kind!r}")
    auth = XOAuth2Bearer(secret) if auth_kind == "xoauth2" else Password(secret)
    insecure = args.insecure or _truthy(conf.get("insecure", "no"))
    folder = args.folder or conf.get("folder") or "INBOX"
    try:
        config = ImapConfig(url, username, auth, timeout_ms=timeout, verify_tls=not insecure)
    except (UnsupportedScheme, MalformedUrl, InvalidArgument) as exc:
        raise ConfigError(str(exc)) from None
    return config, folder


def _open(args, folder=None):
    config, default_folder = build_config(args)
    session = configure_imap(config)
    target = folder if folder is not None else default_folder
    return session, config, target


# -- output helpers -----------------------------------------------------------


def _emit_list(args, items):
    if args.json:
        print(json.dumps(items))
    else:
        for item in items:
            print(item)


def _read_ids(args):
    if args.ids and args.stdin:
        raise UsageError("use either --ids or --stdin, not both")
    if args.ids:
        text = args.ids.replace(",", " ")
    elif args.stdin:
        text = sys.stdin.read()
        stripped = text.strip()
        if stripped.startswith("["):
            text = " ".join(str(v) for v in json.loads(stripped))
    else:
        raise UsageError("message ids are required (--ids or --stdin)")
    ids = []
    for tok in text.split():
        if not tok.isdigit() or int(tok) < 1:
            raise UsageError(f"not a message id: {tok!r}")
        ids.append(int(tok))
    return ids


def _report_failures(results):
    failed = 0
    for r in results:
        if not r.ok:
            failed += 1
            print(f"mailpost: message {int(r.id)}: {r.error}", file=sys.stderr)
    return failed


# -- subcommands --------------------------------------------------------------


def cmd_capabilities(args):
    session, _, _ = _open(args)
    with session:
        caps = session.list_server_capabilities()
    if args.json:
        print(json.dumps(caps))
    else:
        print(" ".join(caps))
    return EXIT_OK


def cmd_folders(args):
    session, _, _ = _open(args)
    with session:
        if args.action == "list":
            _emit_list(args, session.list_folders())
        elif args.action == "create":
            session.create_folder(args.name)
        elif args.action == "rename":
            session.rename_folder(args.name, args.new_name)
        elif args.action == "delete":
            session.delete_folder(args.name)
    return EXIT_OK


def _date(text):
    try:
        return ImapDate.parse(text)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None


def build_criterion(args):
    """Translate search flags into a criterion; ``None`` when none were given."""
    parts = []
    if args.since:
        parts.append(Since(_date(args.since)))
    if args.before:
        parts.append(Before(_date(args.before)))
    try:
        for where in ("from", "to", "subject", "body", "text"):
            value = getattr(args, where, None)
            if value is not None:
                parts.append(StringMatch(where.upper(), value))
        for flag in args.flag or []:
            name = flag.lstrip("\\")
            negated = name.lower().startswith("un")
            parts.append(FlagSet(name[2:] if negated else name, negated))
        if args.larger is not None:
            parts.append(Size("LARGER", args.larger))
        if args.smaller is not None:
            parts.append(Size("SMALLER", args.smaller))
        if args.younger is not None:
            parts.append(Within("YOUNGER", args.younger))
        if args.older is not None:
            parts.append(Within("OLDER", args.older))
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    if not parts:
        return None
    if args.or_:
        if len(parts) < 2:
            raise UsageError("--or needs at least two criteria")
        crit = parts[-1]
        for p in reversed(parts[:-1]):
            crit = Or(p, crit)
    else:
        if args.since and args.before and not parts[0].date < parts[1].date:
            raise UsageError(f"--since ({args.since}) must be earlier than --before ({args.before})")
        crit = And(parts) if len(parts) > 1 else parts[0]
    return Not(crit) if args.not_ else crit


def cmd_search(args):
    crit = build_criterion(args)
    if crit is None:
        raise UsageError("at least one search criterion is required")
    session, _, folder = _open(args, args.folder)
    with session:
        session.select_folder(folder)
        ids = session.search(crit)
    _emit_list(args, [int(i) for i in ids])
    return EXIT_OK


def _metadata_rows(results, attrs):
    cols = ["id"]
    for a in attrs:
        cols += {"ENVELOPE": ["from", "to", "subject", "date"], "INTERNALDATE": ["internaldate"],
                 "FLAGS": ["flags"], "RFC822.SIZE": ["size"], "UID": ["uid"]}[a]
    rows = []
    for r in results:
        if not r.ok:
            continue
        row = [int(r.id)]
        for a in attrs:
            v = r.data[a]
            if a == "ENVELOPE":
                row += [
                    "; ".join(_fmt_addr(x) for x in v.from_),
                    "; ".join(_fmt_addr(x) for x in v.to),
                    decode_mime_header(v.subject or ""),
                    v.date or "",
                ]
            elif a == "INTERNALDATE":
                row.append(v.isoformat())
            elif a == "FLAGS":
                row.append(" ".join(v))
            else:
                row.append(v)
        rows.append(row)
    return cols, rows


def _fmt_addr(addr):
    name = decode_mime_header(addr.name) if addr.name else ""
    return f"{name} <{addr.email}>" if name else addr.email


def cmd_fetch(args):
    ids = _read_ids(args)
    if args.mime_level is not None and args.part != "body":
        raise UsageError("--mime-level only applies to --part body")
    session, _, folder = _open(args, args.folder)
    with session:
        session.select_folder(folder)
        if args.part == "body":
            results = session.fetch_body(ids, args.mime_level)
        elif args.part == "header":
            fields = [f.strip() for f in args.fields.split(",")] if args.fields else None
            results = session.fetch_header(ids, fields)
        elif args.part == "text":
            results = session.fetch_text(ids)
        else:
            attrs = [a.strip().upper() for a in (args.attrs or "ENVELOPE").split(",") if a.strip()]
            results = session.fetch_metadata(ids, attrs)
    failed = _report_failures(results)
    if args.part == "metadata":
        cols, rows = _metadata_rows(results, attrs)
        if args.json:
            print(json.dumps([dict(zip(cols, r)) for r in rows]))
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            w.writerows(rows)
            text = buf.getvalue()
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, "metadata.csv"), "w", encoding="utf-8") as fh:
                    fh.write(text)
                print(os.path.join(args.out, "metadata.csv"))
            else:
                sys.stdout.write(text)
        return EXIT_PROTOCOL if failed else EXIT_OK
    good = [r for r in results if r.ok]
    payloads = clean_msg_text(good) if args.clean else [r.data for r in good]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for r, data in zip(good, payloads):
            path = os.path.join(args.out, f"{int(r.id)}.{args.part}" + (".txt" if args.clean else ""))
            with open(path, "wb") as fh:
                fh.write(data.encode("utf-8") if isinstance(data, str) else data)
            print(path)
    elif args.json:
        out = [
            {"id": int(r.id), "data": d if isinstance(d, str) else d.decode("utf-8", "replace")}
            for r, d in zip(good, payloads)
        ]
        print(json.dumps(out))
    else:
        stream = sys.stdout.buffer
        for r, data in zip(good, payloads):
            if len(ids) > 1:
                stream.write(f"--- {int(r.id)} ---\n".encode())
            stream.write(data.encode("utf-8") if isinstance(data, str) else data)
            if len(ids) > 1 and not (data.endswith("\n") if isinstance(data, str) else data.endswith(b"\n")):
                stream.write(b"\n")
        stream.flush()
    return EXIT_PROTOCOL if failed else EXIT_OK


def cmd_attachments(args):
    ids = _read_ids(args)
    session, config, folder = _open(args, args.folder)
    with session:
        session.select_folder(folder)
        if args.direct:
            results = session.fetch_attachments(ids)
        else:
            results = session.fetch_body(ids)
    failed = 0
    for r in results:
        if not r.ok and not isinstance(r.error, NoAttachments):
            failed += 1
            print(f"mailpost: message {int(r.id)}: {r.error}", file=sys.stderr)
    errors = []
    paths = get_attachments(
        [r for r in results if r.ok], args.dest, username=config.username, folder=folder, errors=errors,
    )
    for msg_id, name, exc in errors:
        failed += 1
        print(f"mailpost: message {int(msg_id)}: cannot write {name}: {exc.strerror or exc}", file=sys.stderr)
    _emit_list(args, paths)
    return EXIT_PROTOCOL if failed else EXIT_OK


def _period(args):
    since = _date(args.since) if args.since else None
    before = _date(args.before) if args.before else None
    if since and before and not since < before:
        raise UsageError(f"--since ({args.since}) must be earlier than --before ({args.before})")
    parts = [c for c in (Since(since) if since else None, Before(before) if before else None) if c]
    crit = And(parts) if len(parts) > 1 else (parts[0] if parts else AllMessages())
    return crit, (since, before) if since and before else None


def cmd_report(args):
    crit, period = _period(args)
    if args.kind == "frequency":
        if args.top < 1:
            raise UsageError("--top must be at least 1")
        lexicon = None
    else:
        try:
            lexicon = analytics.load_lexicon(args.lexicon) if args.lexicon else analytics.demo_lexicon()
        except OSError as exc:
            raise ConfigError(f"cannot read lexicon: {exc.strerror}") from None
        except (InvalidArgument, BadLexiconLine) as exc:
            raise ConfigError(f"bad lexicon: {exc}") from None
    session, _, folder = _open(args, args.folder)
    with session:
        session.select_folder(folder)
        ids = session.search(crit)
        if not ids:
            results = []
        elif args.kind == "frequency":
            results = session.fetch_metadata(ids, ["ENVELOPE"])
        else:
            results = session.fetch_body(ids, mime_level=1)
    failed = _report_failures(results)
    good = [r for r in results if r.ok]
    if args.kind == "frequency":
        report = analytics.sender_frequency([(r.id, r.data["ENVELOPE"]) for r in good], args.top, period)
        if args.json:
            print(json.dumps([{"email": r.email, "name": r.name, "count": r.count} for r in report.rows]))
        else:
            sys.stdout.write(analytics.frequency_csv(report))
        if args.svg:
            if report.rows:
                analytics.render_frequency_chart(report, args.svg)
            else:
                print("mailpost: no messages in period; chart not written", file=sys.stderr)
    else:
        report = analytics.sentiment_report(clean_msg_text(good), lexicon)
        if args.json:
            print(json.dumps([{"label": r.label, **r.counts} for r in report.rows]))
        else:
            sys.stdout.write(analytics.sentiment_csv(report))
    return EXIT_PROTOCOL if failed else EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_id_source(p):
    p.add_argument("--ids", help="comma or space separated message ids")
    p.add_argument("--stdin", action="store_true", help="read ids from standard input (e.g. piped from search)")


def build_parser():
    parser = argparse.ArgumentParser(prog="mailpost", description="IMAP mailbox client: search, fetch, attachments, reports.")
    parser.add_argument("--config", help=f"key=value config file (default {DEFAULT_CONFIG}, or $MAILPOST_CONFIG)")
    parser.add_argument("--url", help="server URL, e.g. imaps://imap.example.com")
    parser.add_argument("--username")
    parser.add_argument("--password-env", metavar="NAME", help="read the password from this environment variable")
    parser.add_argument("--auth", choices=("password", "xoauth2"), help="treat the secret as a password (default) or an OAuth2 bearer token")
    parser.add_argument("--timeout", type=int, metavar="MS", help="network timeout in milliseconds")
    parser.add_argument("--insecure", action="store_true", help="skip TLS certificate verification")
    parser.add_argument("--json", action="store_true", help="JSON output for list-producing commands")
    parser.add_argument("--folder", help="folder to select (default INBOX)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capabilities", help="list server capabilities")
    p.set_defaults(func=cmd_capabilities)

    p = sub.add_parser("folders", help="list, create, rename or delete folders")
    fsub = p.add_subparsers(dest="action", required=True)
    fsub.add_parser("list")
    fsub.add_parser("create").add_argument("name")
    r = fsub.add_parser("rename")
    r.add_argument("name")
    r.add_argument("new_name")
    fsub.add_parser("delete").add_argument("name")
    p.set_defaults(func=cmd_folders)

    p = sub.add_parser("search", help="print matching message ids, one per line")
    p.add_argument("--folder", dest="folder", default=argparse.SUPPRESS)
    p.add_argument("--since", metavar="DD-Mon-YYYY")
    p.add_argument("--before", metavar="DD-Mon-YYYY")
    for name in ("from", "to", "subject", "body", "text"):
        p.add_argument(f"--{name}", dest=name)
    p.add_argument("--flag", action="append", help="seen, flagged, ... or unseen, unflagged, ... (repeatable)")
    p.add_argument("--larger", type=int, metavar="OCTETS")
    p.add_argument("--smaller", type=int, metavar="OCTETS")
    p.add_argument("--younger", type=int, metavar="SECONDS", help="needs the server's WITHIN extension")
    p.add_argument("--older", type=int, metavar="SECONDS", help="needs the server's WITHIN extension")
    p.add_argument("--not", dest="not_", action="store_true", help="negate the combined criteria")
    p.add_argument("--or", dest="or_", action="store_true", help="combine criteria with OR instead of AND")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fetch", help="fetch bodies, headers, text or metadata")
    p.add_argument("--folder", dest="folder", default=argparse.SUPPRESS)
    _add_id_source(p)
    p.add_argument("--part", choices=("body", "header", "text", "metadata"), default="body")
    p.add_argument("--mime-level", type=int, metavar="K", help="fetch top-level MIME part K instead of the whole body")
    p.add_argument("--fields", help="comma separated header fields (with --part header)")
    p.add_argument("--attrs", help="comma separated metadata attributes (default ENVELOPE)")
    p.add_argument("--clean", action="store_true", help="decode transfer encodings and print readable text")
    p.add_argument("--out", metavar="DIR", help="write <DIR>/<id>.<part> files instead of stdout")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("attachments", help="save attachments as <dest>/<user>/<folder>/<id>/<file>")
    p.add_argument("--folder", dest="folder", default=argparse.SUPPRESS)
    _add_id_source(p)
    p.add_argument("--dest", default=".", metavar="DIR")
    p.add_argument("--direct", action="store_true", help="fetch only attachment parts (via BODYSTRUCTURE)")
    p.set_defaults(func=cmd_attachments)

    p = sub.add_parser("report", help="sender frequency or sentiment tables")
    p.add_argument("kind", choices=("frequency", "sentiment"))
    p.add_argument("--folder", dest="folder", default=argparse.SUPPRESS)
    p.add_argument("--since", metavar="DD-Mon-YYYY")
    p.add_argument("--before", metavar="DD-Mon-YYYY")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--svg", metavar="PATH", help="also draw the frequency table as an SVG chart")
    p.add_argument("--lexicon", metavar="CSV", help="word,category lexicon (default: bundled demo lexicon)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mailpost: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"mailpost: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, AuthFailed) as exc:
        print(f"mailpost: connection failed: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except CapabilityMissing as exc:
        print(f"mailpost: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except InvalidArgument as exc:
        print(f"mailpost: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MailpostError as exc:
        print(f"mailpost: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"mailpost: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_PROTOCOL


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

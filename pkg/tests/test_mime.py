import base64
import binascii
import os
import quopri
from email.mime.application import MIMEApplication
from email.mime.multipart import MIMEMultipart
from email.mime.text import MIMEText

import pytest
from hypothesis import given, settings, strategies as st

from conftest import USER, fixture_boxes
from mailpost.errors import InvalidBase64, MalformedMime
from mailpost.fetch import FetchResult
from mailpost.ids import MessageId
from mailpost.mime import (
    clean_msg_text,
    decode_base64,
    decode_mime_header,
    decode_quoted_printable,
    extract_attachments,
    get_attachments,
    list_attachments,
    parse_mime,
    sanitize_filename,
    serialize_mime,
)
from oracles import attachment_parts
from rfc2047_table import CASES

INBOX = {m.uid: m for m in fixture_boxes()[0].messages}


def crlf(data):
    return data.replace(b"\r\n", b"\n").replace(b"\n", b"\r\n")


def build(*parts, subtype="mixed"):
    msg = MIMEMultipart(subtype)
    for p in parts:
        msg.attach(p)
    msg["From"] = "a@b.c"
    msg["Subject"] = "test"
    return crlf(msg.as_bytes())


def attachment(data, name, disposition="attachment"):
    part = MIMEApplication(data, "octet-stream")
    part.add_header("Content-Disposition", disposition, filename=name)
    return part


class TestBase64:
    @pytest.mark.parametrize("text,expected", [("aGVsbG8=", b"hello"), ("", b""), ("aGVs\r\nbG8=", b"hello"), ("aGVsbG8", b"hello")])
    def test_examples(self, text, expected):
        assert decode_base64(text) == expected

    @pytest.mark.parametrize("bad", ["a===", "a", "aGV$", "aG=8", "====="])
    def test_invalid(self, bad):
        with pytest.raises(InvalidBase64):
            decode_base64(bad)

    @settings(max_examples=200)
    @given(st.binary(max_size=4096))
    def test_round_trip_reference_encoder(self, data):
        assert decode_base64(base64.b64encode(data)) == data
        assert decode_base64(base64.encodebytes(data)) == data

    def test_large(self):
        data = os.urandom(64 * 1024)
        assert decode_base64(binascii.b2a_base64(data)) == data


class TestQuotedPrintable:
    def test_examples(self):
        assert decode_quoted_printable(b"caf=C3=A9").decode() == "café"
        assert decode_quoted_printable(b"line one=\r\nline two") == b"line oneline two"
        assert decode_quoted_printable(b"100% plain") == b"100% plain"

    def test_tolerant(self):
        assert decode_quoted_printable(b"x=ZZ y=") == b"x=ZZ y"
        assert decode_quoted_printable(b"soft=  \nnext") == b"softnext"
        assert decode_quoted_printable(b"lower=c3=a9") == "loweré".encode()

    def test_header_underscore(self):
        assert decode_quoted_printable(b"a_b=5F", header=True) == b"a b_"
        assert decode_quoted_printable(b"a_b") == b"a_b"

    @settings(max_examples=200)
    @given(st.binary(max_size=4096), st.booleans())
    def test_round_trip_reference_encoder(self, data, tabs):
        assert decode_quoted_printable(quopri.encodestring(data, quotetabs=tabs)) == data
        assert decode_quoted_printable(binascii.b2a_qp(data, quotetabs=tabs)) == data


class TestHeaders:
    @pytest.mark.parametrize("raw,expected", CASES)
    def test_table(self, raw, expected):
        assert decode_mime_header(raw) == expected

    def test_none(self):
        assert decode_mime_header(None) is None

    @given(st.text(max_size=60).filter(lambda t: "=?" not in t))
    def test_identity_on_plain_text(self, text):
        assert decode_mime_header(text) == text

    @given(
        st.text(st.characters(blacklist_categories=("Cc", "Cs")), min_size=1, max_size=40).filter(lambda t: "=?" not in t),
        st.sampled_from(["B", "Q"]),
    )
    def test_idempotent(self, text, enc):
        from email.header import Header

        encoded = Header(text, "utf-8").encode() if enc == "B" else "=?utf-8?q?" + quopri.encodestring(
            text.encode(), quotetabs=True, header=True
        ).decode().replace("=\n", "").replace("?", "=3F") + "?="
        once = decode_mime_header(encoded)
        assert once == text
        assert decode_mime_header(once) == once


class TestParse:
    def test_single_part(self):
        ent = parse_mime(b"Content-Type: text/plain\r\n\r\nhello\r\n")
        assert not ent.children and ent.body == b"hello\r\n" and ent.part_number == "1"

    def test_no_headers(self):
        ent = parse_mime(b"\r\njust text")
        assert ent.media_type == "text/plain" and ent.body == b"just text"

    def test_three_parts_against_boundary_split(self):
        raw = INBOX[141].raw
        ent = parse_mime(raw)
        boundary = ent.boundary.encode()
        # independent split on the delimiter string
        pieces = raw.split(b"--" + boundary)
        inner = [p for p in pieces[1:] if not p.startswith(b"--")]
        assert len(ent.children) == len(inner) == 4
        for child, piece in zip(ent.children, inner):
            assert piece.strip(b"\r\n").endswith(child.body.strip(b"\r\n"))
        assert [c.part_number for c in ent.children] == ["1", "2", "3", "4"]

    def test_folded_headers(self):
        ent = parse_mime(b"Subject: one\r\n two\r\nContent-Type: text/plain;\r\n\tcharset=utf-8\r\n\r\nx")
        assert ent.header("subject") == "one two" and ent.charset == "utf-8"

    def test_missing_terminator(self):
        raw = (
            b'Content-Type: multipart/mixed; boundary="b1"\r\n\r\n'
            b"--b1\r\nContent-Type: text/plain\r\n\r\nfirst\r\n"
            b"--b1\r\nContent-Type: text/plain\r\n\r\nsecond\r\n"
        )
        ent = parse_mime(raw)
        assert [c.body.strip() for c in ent.children] == [b"first", b"second"]
        assert ent.has_defects and "missing closing boundary" in ent.defects

    def test_not_bytes(self):
        with pytest.raises(MalformedMime):
            parse_mime("text")

    def test_nested_numbering(self):
        ent = parse_mime(INBOX[144].raw)
        leaves = [e.part_number for e in ent.walk() if not e.is_multipart]
        assert leaves == ["1.1.1", "1.1.2", "1.2", "2", "3"]

    @pytest.mark.parametrize("uid", sorted(INBOX))
    def test_serialize_round_trip(self, uid):
        def shape(e):
            return (e.media_type, e.part_number, e.transfer_encoding, e.disposition, e.params,
                    e.body if not e.is_multipart else None, [shape(c) for c in e.children])

        first = parse_mime(INBOX[uid].raw)
        again = parse_mime(serialize_mime(first))
        assert shape(again) == shape(first)


class TestClean:
    def test_receipt(self):
        [text] = clean_msg_text([INBOX[60].raw])
        lines = text.splitlines()
        assert "Receipt Number: 4815162342" in lines
        assert "Thank you for the payment." in lines
        assert "soft line break in the fixture text body." in text
        assert "=\n" not in text and "=20" not in text

    def test_base64_text_part(self):
        original = "Olá, relatório em anexo.\nSaudações\n"
        part = MIMEText(original, "plain", "utf-8")
        assert part["Content-Transfer-Encoding"] == "base64"
        [text] = clean_msg_text([crlf(part.as_bytes())])
        assert text == original

    def test_headerless_base64(self):
        original = "Grüße aus Köln, bis bald.\n"
        [text] = clean_msg_text([base64.encodebytes(original.encode())])
        assert text == original

    def test_plain_ascii(self):
        assert clean_msg_text([b"line one\r\nline two\r\n"]) == ["line one\nline two\n"]

    def test_latin1_fallback(self):
        assert clean_msg_text([b"caf\xe9"]) == ["café"]

    def test_order_and_results(self):
        results = [FetchResult(MessageId(1), "body", b"first"), FetchResult(MessageId(2), "body", error=ValueError()),
                   FetchResult(MessageId(3), "body", b"third")]
        assert clean_msg_text(results) == ["first", "", "third"]


class TestListing:
    def test_message_141(self):
        names = [a.filename for a in list_attachments(parse_mime(INBOX[141].raw), 141)]
        assert names == ["final.zip", "prob_plot.svg", "staa2072.pdf"]

    def test_none(self):
        assert list_attachments(parse_mime(INBOX[145].raw)) == []

    def test_encoded_word_name(self):
        raw = build(MIMEText("x"), attachment(b"%PDF", "=?UTF-8?B?cmVsYXTDs3Jpby5wZGY?="))
        assert [a.filename for a in list_attachments(parse_mime(raw))] == ["relatório.pdf"]

    def test_rfc2231_name(self):
        assert [a.filename for a in list_attachments(parse_mime(INBOX[150].raw))] == ["relatório.pdf"]

    @pytest.mark.parametrize("uid", sorted(INBOX))
    def test_content_matches_stdlib(self, uid):
        raw = INBOX[uid].raw
        got = [(a.part_number, a.filename, a.content) for a in extract_attachments(parse_mime(raw), uid)]
        assert got == attachment_parts(raw)


class TestSanitize:
    @pytest.mark.parametrize(
        "name,expected",
        [
            ("../evil.sh", "evil.sh"),
            ("/etc/passwd", "passwd"),
            ("..\\..\\win.ini", "win.ini"),
            (".hidden", "hidden"),
            ("a:b?.txt", "a_b_.txt"),
            ("", "part-2.bin"),
            ("..", "part-2.bin"),
            (None, "part-2.bin"),
            ("report.pdf", "report.pdf"),
        ],
    )
    def test_names(self, name, expected):
        assert sanitize_filename(name, "part-2.bin") == expected

    def test_long_name_keeps_extension(self):
        out = sanitize_filename("x" * 400 + ".pdf", "f")
        assert out.endswith(".pdf") and len(out.encode()) <= 200

    @given(st.text(max_size=80))
    def test_always_single_component(self, name):
        out = sanitize_filename(name, "fallback.bin")
        assert out and "/" not in out and "\\" not in out and not out.startswith(".")
        assert "\x00" not in out


def tree_results():
    return [FetchResult(MessageId(u), "body", INBOX[u].raw) for u in (141, 144)]


class TestGetAttachments:
    def test_two_message_tree(self, tmp_path):
        written = get_attachments(tree_results(), tmp_path, USER, "INBOX")
        rel = sorted(os.path.relpath(p, tmp_path).replace(os.sep, "/") for p in written)
        assert rel == [
            "user@company.com/INBOX/141/final.zip",
            "user@company.com/INBOX/141/prob_plot.svg",
            "user@company.com/INBOX/141/staa2072.pdf",
            "user@company.com/INBOX/144/app.R",
            "user@company.com/INBOX/144/image001.png",
            "user@company.com/INBOX/144/recording.mp4",
        ]
        assert all(os.path.isabs(p) for p in written)
        for uid in (141, 144):
            for _, name, content in attachment_parts(INBOX[uid].raw):
                with open(tmp_path / USER / "INBOX" / str(uid) / name, "rb") as fh:
                    assert fh.read() == content

    def test_text_section_input(self, tmp_path):
        body = INBOX[141].raw.split(b"\r\n\r\n", 1)[1]
        written = get_attachments([FetchResult(MessageId(141), "text", body)], tmp_path, USER, "INBOX")
        assert sorted(os.path.basename(p) for p in written) == ["final.zip", "prob_plot.svg", "staa2072.pdf"]

    def test_no_attachments_no_directory(self, tmp_path):
        written = get_attachments([FetchResult(MessageId(145), "body", INBOX[145].raw)], tmp_path, USER, "INBOX")
        assert written == [] and not (tmp_path / USER / "INBOX" / "145").exists()

    def test_overwrite_on_rerun(self, tmp_path):
        first = get_attachments(tree_results(), tmp_path, USER, "INBOX")
        with open(first[0], "wb") as fh:
            fh.write(b"stale")
        second = get_attachments(tree_results(), tmp_path, USER, "INBOX")
        assert sorted(first) == sorted(second)
        with open(first[0], "rb") as fh:
            assert fh.read() != b"stale"

    def test_collision_suffix(self, tmp_path):
        raw = build(MIMEText("x"), attachment(b"one", "same.txt"), attachment(b"two", "same.txt"), attachment(b"three", "same.txt"))
        written = get_attachments([FetchResult(MessageId(9), "body", raw)], tmp_path, "u", "F")
        names = [os.path.basename(p) for p in written]
        assert names == ["same.txt", "same-1.txt", "same-2.txt"]
        assert [open(p, "rb").read() for p in written] == [b"one", b"two", b"three"]

    def test_adversarial_names_stay_inside(self, tmp_path):
        names = ["../evil.sh", "../../../../tmp/x", "/abs/path.txt", "..\\win.ini", ".", "..", "", "a/../../b", "\x00nul"]
        raw = build(MIMEText("x"), *[attachment(b"%d" % k, n) for k, n in enumerate(names)])
        dest = tmp_path / "dest"
        written = get_attachments([FetchResult(MessageId(7), "body", raw)], dest, "../up", "../../F")
        root = os.path.realpath(dest)
        assert len(written) == len(names)
        for p in written:
            assert os.path.commonpath([root, os.path.realpath(p)]) == root
        assert set(os.listdir(tmp_path)) == {"dest"}

    def test_io_errors_collected(self, tmp_path):
        (tmp_path / "u").mkdir()
        (tmp_path / "u" / "F").write_text("a file where a directory belongs")
        errors = []
        written = get_attachments(tree_results(), tmp_path, "u", "F", errors=errors)
        assert written == [] and len(errors) == 6
        assert all(isinstance(e[2], OSError) for e in errors)

    @pytest.mark.parametrize("uid", sorted(INBOX))
    def test_completeness(self, tmp_path, uid):
        raw = INBOX[uid].raw
        written = get_attachments([FetchResult(MessageId(uid), "body", raw)], tmp_path, USER, "INBOX")
        listed = [a.filename for a in list_attachments(parse_mime(raw), uid)]
        assert sorted(os.path.basename(p) for p in written) == sorted(listed)
        expected = {name: content for _, name, content in attachment_parts(raw)}
        for p in written:
            with open(p, "rb") as fh:
                assert fh.read() == expected[os.path.basename(p)]

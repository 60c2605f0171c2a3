"""Acceptance checks, one test per headline criterion.

Each test prints a single ``PASS``/``FAIL`` line (shown even under output
capture) and then asserts, so the pytest result and the printed verdict
always agree.
"""

import binascii
import os
import quopri
import random
import time
import xml.etree.ElementTree as ET

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from abnf import accepts_command, check_search_keys
from conftest import SECRET_PW, USER, fixture_boxes, open_session
from mailpost.analytics import (
    CATEGORIES,
    demo_lexicon,
    render_frequency_chart,
    sender_frequency,
    sentiment_counts,
    sentiment_csv,
    sentiment_report,
    tokenize_clean,
)
from mailpost.mime import decode_base64, decode_mime_header, decode_quoted_printable, get_attachments
from mailpost.mockserver import ScriptStep, decode_command, start_scripted, start_stateful
from mailpost.protocol import Address, Atom, Envelope, Quoted, serialize_command
from mailpost.search import ImapDate, criterion_args, render_criterion
from oracles import attachment_parts, brute_force_search, random_search_spec, spec_to_criterion, tally_oracle
from rfc2047_table import CASES as RFC2047_CASES
from statematrix import OPERATIONS, PHASES, run_cell
from strategies import commands, shallow_criteria
from tokenize_table import CASES as TOKENIZE_CASES

KSU_IDS = [60, 145, 147, 159, 332, 333, 336, 338, 341, 428]
TREE = {
    141: ["final.zip", "prob_plot.svg", "staa2072.pdf"],
    144: ["app.R", "image001.png", "recording.mp4"],
}


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line, then fail the test if the check failed."""

    def report(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
        assert ok, f"{name}: {detail}"

    return report


def _reencode(args):
    out = []
    for a in args:
        if isinstance(a, list):
            out.append(_reencode(a))
        elif isinstance(a, bytes):
            out.append(Quoted(a.decode("utf-8")))
        else:
            out.append(Atom(a))
    return out


def test_search_pipeline(verdict):
    t0 = time.perf_counter()
    ep = start_scripted([
        ScriptStep("LOGIN"),
        ScriptStep("SELECT", ["* 17 EXISTS", "* OK [UIDVALIDITY 1] ok"]),
        ScriptStep('UID SEARCH FROM "@ksu.edu"', ["* SEARCH " + " ".join(map(str, KSU_IDS))]),
    ])
    s = open_session(ep)
    s.select_folder("INBOX")
    ids = s.search_string("@ksu.edu", "FROM")
    s.logout()
    elapsed = time.perf_counter() - t0
    ok = [int(i) for i in ids] == KSU_IDS and not ep.unexpected and elapsed < 1.0
    verdict("search pipeline returns the ten-id vector", ok, f"{elapsed:.3f}s, got {[int(i) for i in ids]}")


def test_attachment_tree(tmp_path, verdict):
    t0 = time.perf_counter()
    ep = start_stateful(fixture_boxes())
    s = open_session(ep)
    s.select_folder("INBOX")
    fetched = s.fetch_body([141, 144])
    written = get_attachments(fetched, str(tmp_path), username=USER, folder="INBOX")
    s.logout()
    elapsed = time.perf_counter() - t0
    expected = sorted(f"{USER}/INBOX/{uid}/{name}" for uid, names in TREE.items() for name in names)
    found = sorted(
        os.path.relpath(os.path.join(d, f), tmp_path) for d, _, files in os.walk(tmp_path) for f in files
    )
    raws = {m.uid: m.raw for m in fixture_boxes()[0].messages}
    content_ok = all(
        (tmp_path / USER / "INBOX" / str(uid) / name).read_bytes() == data
        for uid in TREE for _, name, data in attachment_parts(raws[uid])
    )
    ok = found == expected and sorted(os.path.relpath(p, tmp_path) for p in written) == expected
    ok = ok and content_ok and elapsed < 2.0
    verdict("attachment tree with independently decoded content", ok, f"{elapsed:.3f}s, {found}")


def test_decoder_oracles(verdict):
    rng = random.Random(3501)
    t0 = time.perf_counter()
    failures = []
    for k in range(1000):
        data = rng.randbytes(rng.randrange(0, 2048))
        encoded = binascii.b2a_base64(data, newline=False) if k % 2 else __import__("base64").encodebytes(data)
        if decode_base64(encoded) != data:
            failures.append(("base64", k))
    for k in range(1000):
        n = rng.randrange(0, 2048)
        if k % 2:
            # text with canonical CRLF breaks, so soft breaks and trailing-space escapes occur
            lines = [bytes(rng.choice(b"abc xyz=\t.\xe9\x00") for _ in range(rng.randrange(0, 120)))
                     for _ in range(max(1, n // 60))]
            data = b"\r\n".join(lines)
            encoded = quopri.encodestring(data, quotetabs=bool(k % 4 == 1))
        else:
            # arbitrary bytes need the binary form, where CR and LF are escaped
            data = rng.randbytes(n)
            encoded = binascii.b2a_qp(data, quotetabs=bool(k % 4), istext=False)
        assert quopri.decodestring(encoded) == data  # input is representable
        if decode_quoted_printable(encoded) != data:
            failures.append(("qp", k))
    for text, expected in RFC2047_CASES:
        if decode_mime_header(text) != expected:
            failures.append(("rfc2047", text))
    elapsed = time.perf_counter() - t0
    ok = not failures and len(RFC2047_CASES) == 50 and elapsed < 5.0
    verdict("decoder oracles: 1000 base64, 1000 QP, 50 encoded words", ok, f"{elapsed:.3f}s, failures {failures[:5]}")


def test_wire_grammar(verdict):
    counts = {"commands": 0, "asts": 0}
    bad = []

    # inputs are drawn in batches of 100; per-example overhead would otherwise dominate the run
    batch = settings(max_examples=10, deadline=None, database=None, derandomize=True,
                     suppress_health_check=list(HealthCheck))

    @batch
    @given(st.lists(commands, min_size=100, max_size=100))
    def check_commands(cmds):
        for verb, args in cmds:
            counts["commands"] += 1
            wire = serialize_command("A0001", verb, args)
            tag, got_verb, got_args = decode_command(wire)
            if not accepts_command(wire) or got_verb != verb or serialize_command(tag, got_verb, _reencode(got_args)) != wire:
                bad.append(wire)

    @batch
    @given(st.lists(shallow_criteria, min_size=100, max_size=100))
    def check_asts(crits):
        for crit in crits:
            counts["asts"] += 1
            check_search_keys(render_criterion(crit))
            wire = serialize_command("A0001", "UID SEARCH", criterion_args(crit))
            _, _, got = decode_command(wire)
            if not accepts_command(wire) or serialize_command("A0001", "UID SEARCH", _reencode(got)) != wire:
                bad.append(wire)

    t0 = time.perf_counter()
    check_commands()
    check_asts()
    elapsed = time.perf_counter() - t0
    ok = not bad and counts["commands"] >= 1000 and counts["asts"] >= 1000 and elapsed < 10.0
    verdict("wire grammar: 1000 commands and 1000 search ASTs accepted and round-tripped", ok,
            f"{elapsed:.3f}s, {counts}, bad {bad[:2]}")


def test_state_matrix(verdict):
    ep = start_stateful(fixture_boxes(), credentials={USER: SECRET_PW})
    cells = [(p, op) for p in PHASES for op in sorted(OPERATIONS)]
    bad = []
    for phase, op in cells:
        outcome, detail = run_cell(ep, phase, op, USER, SECRET_PW)
        if outcome != "ok":
            bad.append((phase.name, op, detail))
    forbidden = sum(1 for p, op in cells if p not in OPERATIONS[op][1])
    verdict("state matrix: StateError exactly in forbidden cells", not bad,
            f"{len(cells)} cells, {forbidden} forbidden, bad {bad[:3]}")


def test_sender_frequency_oracle(tmp_path, verdict):
    rng = random.Random(2020)
    senders = [("ann", "ksu.edu", "Ann Lee"), ("bob", "ksu.edu", "=?UTF-8?Q?Bob_M=C3=BCller?="),
               ("Cy", "Stat.org", None), ("dee", "x.com", "Dee"), ("eve", "x.com", ""),
               ("fay", "y.net", "Fay"), ("gus", "y.net", None)]
    pairs = []
    for k in range(200):
        if rng.random() < 0.03:
            pairs.append((k, Envelope(from_=[])))
            continue
        mailbox, host, name = rng.choice(senders[:4] if rng.random() < 0.6 else senders)
        if rng.random() < 0.2:
            mailbox = mailbox.upper()
        pairs.append((k, Envelope(from_=[Address(name, mailbox, host)])))
    period = (ImapDate(1, 11, 2020), ImapDate(1, 12, 2020))
    report = sender_frequency(pairs, top_n=5, period=period)
    rows = [(r.email, r.name, r.count) for r in report.rows]
    svg = tmp_path / "freq.svg"
    render_frequency_chart(report, svg)
    root = ET.parse(svg).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    texts = [t.text for t in root.iter(ns + "text")]
    ok = (
        rows == tally_oracle(pairs, 5)
        and len(rows) == 5
        and len(root.findall(ns + "rect")) == len(rows)
        and all(r[0] in texts for r in rows)
        and "Period: 01-Nov to 01-Dec-2020" in texts
    )
    verdict("sender frequency equals tally oracle, SVG one bar per row with period", ok, f"{rows}")


def test_sentiment_oracle(verdict):
    golden_bad = [t for t, expected in TOKENIZE_CASES if tokenize_clean(t) != expected]
    lex = demo_lexicon()
    flat = [(w, c) for w, cats in lex.entries.items() for c in cats]
    vocab = sorted(lex.entries) + ["mail", "zzz", "thanks", "report"]
    rng = random.Random(42)
    oracle_bad = 0
    for _ in range(500):
        tokens = [rng.choice(vocab) for _ in range(rng.randrange(0, 80))]
        expected = {c: 0 for c in CATEGORIES}
        for t in tokens:
            for w, c in flat:
                if w == t:
                    expected[c] += 1
        if sentiment_counts(tokens, lex) != expected:
            oracle_bad += 1
    report = sentiment_report(["good news today", "", "terrible awful delay"], lex)
    header = sentiment_csv(report).splitlines()[0].split(",")
    shape_ok = report.columns == list(CATEGORIES) and header[1:] == list(CATEGORIES) and len(header[1:]) == 10
    shape_ok = shape_ok and all(list(r.counts) == list(CATEGORIES) for r in report.rows)
    ok = not golden_bad and len(TOKENIZE_CASES) == 20 and oracle_bad == 0 and shape_ok
    verdict("sentiment: 20 golden tokenizations, 500 lookup-oracle runs, 10 columns", ok,
            f"golden failures {golden_bad}, oracle mismatches {oracle_bad}")


def test_direct_vs_fetch_then_extract(tmp_path, verdict):
    boxes = fixture_boxes()
    ep = start_stateful(boxes)
    s = open_session(ep)
    compared, mismatched = 0, []
    for box in boxes:
        ids = [m.uid for m in box.messages]
        if not ids:
            continue
        s.select_folder(box.name)
        a = get_attachments(s.fetch_body(ids), str(tmp_path / "a"), username=USER, folder=box.name)
        b = get_attachments([r for r in s.fetch_attachments(ids) if r.ok], str(tmp_path / "b"),
                            username=USER, folder=box.name)
        rel_a = sorted(os.path.relpath(p, tmp_path / "a") for p in a)
        rel_b = sorted(os.path.relpath(p, tmp_path / "b") for p in b)
        if rel_a != rel_b:
            mismatched.append((box.name, rel_a, rel_b))
            continue
        for rel in rel_a:
            compared += 1
            if (tmp_path / "a" / rel).read_bytes() != (tmp_path / "b" / rel).read_bytes():
                mismatched.append(rel)
    s.logout()
    ok = compared > 0 and not mismatched
    verdict("direct part fetch and fetch-then-extract give byte-identical files", ok,
            f"{compared} files compared, mismatches {mismatched[:3]}")


def test_search_oracle(verdict):
    boxes = fixture_boxes()
    ep = start_stateful(boxes)
    s = open_session(ep)
    s.select_folder("INBOX")
    messages = boxes[0].messages
    rng = random.Random(1101)
    t0 = time.perf_counter()
    bad = []
    kinds = set()
    for _ in range(500):
        spec = random_search_spec(rng, messages)
        kinds.add(spec[0])
        got = [int(i) for i in s.search(spec_to_criterion(spec))]
        if got != brute_force_search(messages, spec):
            bad.append(spec)
    elapsed = time.perf_counter() - t0
    s.logout()
    ok = not bad and elapsed < 10.0 and len(kinds) == 7
    verdict("stateful SEARCH agrees with brute force on 500 random criteria", ok,
            f"{elapsed:.3f}s, kinds {sorted(kinds)}, mismatches {bad[:3]}")

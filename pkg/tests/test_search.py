import datetime as dt

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from abnf import accepts_command, check_search_keys
from conftest import USER, fixture_boxes, open_session
from mailpost.errors import CapabilityMissing, InvalidArgument, InvalidRange, SearchRefused, StateError
from mailpost.ids import SEQUENCE, UID
from mailpost.mockserver import ScriptStep, start_scripted, start_stateful
from mailpost.protocol import serialize_command
from mailpost.search import (
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
    criterion_args,
    render_criterion,
)
from strategies import dates, leaf_criteria, nonempty_text, shallow_criteria

KSU_IDS = [60, 145, 147, 159, 332, 333, 336, 338, 341, 428]
NOV, DEC = ImapDate(1, "Nov", 2020), ImapDate(1, "Dec", 2020)


class TestImapDate:
    def test_render(self):
        assert str(ImapDate(1, 11, 2020)) == "01-Nov-2020"
        assert str(ImapDate.parse("1-nov-2020")) == "01-Nov-2020"

    @pytest.mark.parametrize("bad", ["31-Feb-2020", "29-Feb-2021", "00-Jan-2020", "01-Foo-2020", "2020-11-01", ""])
    def test_invalid(self, bad):
        with pytest.raises(InvalidArgument):
            ImapDate.parse(bad)

    def test_leap_day(self):
        assert str(ImapDate(29, "Feb", 2024)) == "29-Feb-2024"

    def test_round_trip_exhaustive(self):
        day, end = dt.date(1990, 1, 1), dt.date(2100, 12, 31)
        n = 0
        while day <= end:
            text = str(ImapDate.coerce(day))
            assert len(text) == 11 and text[2] == "-" and text[6] == "-"
            assert text[3:6] == "Jan Feb Mar Apr May Jun Jul Aug Sep Oct Nov Dec".split()[day.month - 1]
            assert ImapDate.parse(text).to_date() == day
            day += dt.timedelta(days=1)
            n += 1
        assert n == (end - dt.date(1990, 1, 1)).days + 1

    def test_ordering(self):
        assert NOV < DEC and not DEC < NOV


class TestRender:
    def test_period(self):
        assert render_criterion(And([Since(NOV), Before(DEC)])) == "SINCE 01-Nov-2020 BEFORE 01-Dec-2020"

    def test_from(self):
        assert render_criterion(StringMatch("FROM", "@ksu.edu")) == 'FROM "@ksu.edu"'

    def test_not_seen(self):
        assert render_criterion(Not(FlagSet("Seen"))) == "NOT SEEN"
        assert render_criterion(FlagSet("\\Seen", negated=True)) == "NOT SEEN"

    def test_or(self):
        c = Or(Size("Larger", 512000), Within("Younger", 3600))
        assert render_criterion(c) == "OR LARGER 512000 YOUNGER 3600"

    def test_header_field(self):
        assert render_criterion(StringMatch("X-Mailer", "Outlook")) == 'HEADER X-Mailer "Outlook"'

    def test_on_and_all(self):
        assert render_criterion(OnDate("05-Nov-2020")) == "ON 05-Nov-2020"
        assert render_criterion(AllMessages()) == "ALL"

    def test_nested_operands_are_parenthesized(self):
        c = Or(And([FlagSet("SEEN"), Size("SMALLER", 10)]), Not(And([Since(NOV), Before(DEC)])))
        out = render_criterion(c)
        assert out == "OR (SEEN SMALLER 10) NOT (SINCE 01-Nov-2020 BEFORE 01-Dec-2020)"
        check_search_keys(out)

    def test_operators(self):
        a, b = FlagSet("SEEN"), FlagSet("FLAGGED")
        assert a & b == And([a, b]) and (a | b) == Or(a, b) and ~a == Not(a)

    def test_non_ascii_uses_literal(self):
        out = render_criterion(StringMatch("SUBJECT", "Reunião"))
        assert out.startswith("SUBJECT {") and out.endswith("Reunião")

    @pytest.mark.parametrize(
        "make",
        [
            lambda: StringMatch("TEXT", ""),
            lambda: StringMatch("FROM", "a\r\nb"),
            lambda: StringMatch("bad field", "x"),
            lambda: Size("LARGER", 0),
            lambda: Size("BIGGER", 5),
            lambda: Within("YOUNGER", 0),
            lambda: FlagSet("Important"),
            lambda: And([]),
        ],
    )
    def test_invalid_nodes(self, make):
        with pytest.raises(InvalidArgument):
            make()

    @settings(max_examples=300, deadline=None)
    @given(shallow_criteria)
    def test_random_asts_pass_grammar(self, c):
        check_search_keys(render_criterion(c))
        assert accepts_command(serialize_command("A0001", "UID SEARCH", criterion_args(c)))


class TestExecute:
    def test_ksu_vector_scripted(self):
        ep = start_scripted([
            ScriptStep("LOGIN"),
            ScriptStep("SELECT", ["* 17 EXISTS"]),
            ScriptStep('UID SEARCH FROM "@ksu.edu"', ["* SEARCH 60 145 147 159 332 333 336 338 341 428"]),
        ])
        s = open_session(ep)
        s.select_folder("INBOX")
        ids = s.search_string("@ksu.edu", "FROM")
        assert ids == KSU_IDS and all(i.kind == UID for i in ids)
        s.logout()
        assert ep.unexpected == []

    def test_empty_result(self):
        ep = start_scripted([ScriptStep("LOGIN"), ScriptStep("SELECT"), ScriptStep("UID SEARCH", ["* SEARCH"])])
        s = open_session(ep)
        s.select_folder("INBOX")
        assert s.search_string("nothing-matches", "SUBJECT") == []
        s.logout()

    def test_subject_scripted(self):
        ep = start_scripted([
            ScriptStep("LOGIN"), ScriptStep("SELECT"),
            ScriptStep('UID SEARCH SUBJECT "invoice"', ["* SEARCH 4 9"]),
        ])
        s = open_session(ep)
        s.select_folder("INBOX")
        assert s.search_string("invoice", "SUBJECT") == [4, 9]
        s.logout()

    def test_server_order_kept(self):
        ep = start_scripted([ScriptStep("LOGIN"), ScriptStep("SELECT"), ScriptStep("UID SEARCH", ["* SEARCH 9 3 5"])])
        s = open_session(ep)
        s.select_folder("INBOX")
        assert s.search_flag("SEEN") == [9, 3, 5]
        s.logout()

    def test_refused(self):
        ep = start_scripted([ScriptStep("LOGIN"), ScriptStep("SELECT"), ScriptStep("UID SEARCH", ["{tag} NO search failed"])])
        s = open_session(ep)
        s.select_folder("INBOX")
        with pytest.raises(SearchRefused):
            s.search_flag("SEEN")
        s.logout()

    def test_within_scripted(self):
        ep = start_scripted([
            ScriptStep("LOGIN", ["{tag} OK [CAPABILITY IMAP4rev1 WITHIN] done"]),
            ScriptStep("SELECT"),
            ScriptStep("UID SEARCH YOUNGER 3600", ["* SEARCH 450"]),
        ])
        s = open_session(ep)
        s.select_folder("INBOX")
        assert s.search_within("YOUNGER", 3600) == [450]
        s.logout()

    def test_ksu_vector_stateful(self, inbox):
        assert inbox.search_string("@ksu.edu", "FROM") == KSU_IDS

    def test_period_stateful(self, inbox):
        ids = inbox.search_period("01-Nov-2020", "01-Dec-2020")
        assert 60 in ids and 341 in ids and 20 not in ids and 428 not in ids

    def test_invalid_range(self, inbox):
        with pytest.raises(InvalidRange):
            inbox.search_period(NOV, NOV)
        with pytest.raises(InvalidRange):
            inbox.search_period(DEC, NOV)

    def test_degenerate_args(self, inbox):
        sent = len(inbox.transport.sent)
        with pytest.raises(InvalidArgument):
            inbox.search_string("", "TEXT")
        with pytest.raises(InvalidArgument):
            inbox.search_size("LARGER", 0)
        with pytest.raises(InvalidArgument):
            inbox.search("FROM x")
        assert len(inbox.transport.sent) == sent

    def test_flag_wire_form(self, stateful, inbox):
        inbox.search_flag("SEEN", negated=True)
        assert stateful.command_log[-1].split(" ", 1)[1] == "UID SEARCH NOT SEEN"

    def test_requires_selected(self, session):
        with pytest.raises(StateError):
            session.search_flag("SEEN")


class TestCapabilityPrecheck:
    def test_missing_within_sends_nothing(self):
        ep = start_stateful(fixture_boxes(), within=False)
        s = open_session(ep)
        s.select_folder("INBOX")
        sent, logged = len(s.transport.sent), len(ep.command_log)
        for c in (Within("YOUNGER", 3600), Not(Within("OLDER", 60)), And([FlagSet("SEEN"), Or(Size("LARGER", 1), Within("OLDER", 5))])):
            with pytest.raises(CapabilityMissing) as info:
                s.search(c)
            assert info.value.capability == "WITHIN"
        with pytest.raises(CapabilityMissing):
            s.search_within("OLDER", 60)
        assert len(s.transport.sent) == sent and len(ep.command_log) == logged
        assert "WITHIN" not in s.list_server_capabilities()
        s.logout()

    def test_present(self, inbox):
        assert inbox.search_within("OLDER", 3600) != []


@pytest.fixture(scope="module")
def shared():
    ep = start_stateful(fixture_boxes())
    s = open_session(ep)
    s.select_folder("INBOX")
    seq = open_session(ep, use_uid=False)
    seq.select_folder("INBOX")
    yield ep, s, seq
    s.logout()
    seq.logout()
    ep.close()


def _last_command(ep):
    return ep.command_log[-1].split(" ", 1)[1]


class TestDesugaring:
    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(a=dates, b=dates)
    def test_period(self, shared, a, b):
        ep, s, _ = shared
        if not a < b:
            with pytest.raises(InvalidRange):
                s.search_period(a, b)
            return
        via_helper = s.search_period(a, b)
        helper_wire = _last_command(ep)
        via_ast = s.search(And([Since(a), Before(b)]))
        assert _last_command(ep) == helper_wire and via_ast == via_helper

    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        where=st.sampled_from(["FROM", "TO", "SUBJECT", "BODY", "TEXT", "CC", "BCC", "X-Mailer"]),
        expr=nonempty_text,
    )
    def test_string(self, shared, where, expr):
        ep, s, _ = shared
        r1 = s.search_string(expr, where)
        w1 = _last_command(ep)
        r2 = s.search(StringMatch(where, expr))
        assert _last_command(ep) == w1 and r1 == r2

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        kind=st.sampled_from(["flag", "size", "within", "on", "since", "before"]),
        flag=st.sampled_from(["SEEN", "FLAGGED", "ANSWERED", "DELETED", "DRAFT", "RECENT"]),
        neg=st.booleans(),
        rel=st.booleans(),
        n=st.integers(1, 10**7),
        d=dates,
    )
    def test_single_criteria(self, shared, kind, flag, neg, rel, n, d):
        ep, s, _ = shared
        helper, ast = {
            "flag": (lambda: s.search_flag(flag, neg), FlagSet(flag, neg)),
            "size": (lambda: s.search_size("LARGER" if rel else "SMALLER", n), Size("LARGER" if rel else "SMALLER", n)),
            "within": (lambda: s.search_within("YOUNGER" if rel else "OLDER", n), Within("YOUNGER" if rel else "OLDER", n)),
            "on": (lambda: s.search_on(d), OnDate(d)),
            "since": (lambda: s.search_since(d), Since(d)),
            "before": (lambda: s.search_before(d), Before(d)),
        }[kind]
        r1 = helper()
        w1 = _last_command(ep)
        assert s.search(ast) == r1 and _last_command(ep) == w1


class TestUidPrefix:
    @settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(c=leaf_criteria)
    def test_prefix_for_every_shape(self, shared, c):
        ep, s, seq = shared
        uids = s.search(c)
        assert _last_command(ep).startswith("UID SEARCH ")
        seqs = seq.search(c)
        assert _last_command(ep).startswith("SEARCH ")
        assert all(i.kind == UID for i in uids) and all(i.kind == SEQUENCE for i in seqs)
        assert len(uids) == len(seqs)

    def test_composites(self, shared):
        ep, s, seq = shared
        for c in (And([FlagSet("SEEN"), Size("LARGER", 1)]), Or(FlagSet("SEEN"), FlagSet("FLAGGED")), Not(FlagSet("SEEN"))):
            s.search(c)
            assert _last_command(ep).startswith("UID SEARCH ")
            seq.search(c)
            assert _last_command(ep).startswith("SEARCH ")


def test_username_constant_is_an_address():
    assert "@" in USER

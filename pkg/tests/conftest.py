import logging
import os
import sys

import pytest

from mailpost.mockserver import bundled_fixtures_dir, load_fixtures, start_stateful
from mailpost.session import configure_imap

sys.path.insert(0, os.path.dirname(__file__))

USER = "user@company.com"
SECRET_PW = "s3cr3t-PASSWORD-xyz"
SECRET_TOKEN = "ya29.TOKEN-abc"
SECRETS = (SECRET_PW, SECRET_TOKEN)
FIXTURES = bundled_fixtures_dir()


@pytest.fixture(autouse=True)
def no_secret_leaks(caplog):
    """Fail any test whose log records mention a test credential."""
    caplog.set_level(logging.DEBUG)
    yield
    text = caplog.text + "".join(str(r.args) for r in caplog.records)
    for secret in SECRETS:
        assert secret not in text, "credential leaked into logs"


def fixture_boxes():
    return load_fixtures(FIXTURES)


@pytest.fixture
def stateful():
    ep = start_stateful(
        fixture_boxes(),
        credentials={USER: SECRET_PW},
        bearer_tokens={USER: SECRET_TOKEN},
    )
    yield ep
    ep.close()


def open_session(endpoint, **kwargs):
    kwargs.setdefault("url", "imaps://mock.test")
    kwargs.setdefault("username", USER)
    if "xoauth2_bearer" not in kwargs:
        kwargs.setdefault("password", SECRET_PW)
    return configure_imap(transport=endpoint.connect(), **kwargs)


@pytest.fixture
def session(stateful):
    s = open_session(stateful)
    yield s
    s.logout()


@pytest.fixture
def inbox(session):
    session.select_folder("INBOX")
    return session

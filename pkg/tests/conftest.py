import socket

import pytest

from traceplay.data import read_data
from traceplay.model import parse_model
from traceplay.terms import Sort, SortTable


@pytest.fixture(scope="session")
def nspk():
    return parse_model(read_data("models/nspk.model"))


@pytest.fixture(scope="session")
def nsl():
    return parse_model(read_data("models/nsl.model"))


@pytest.fixture(scope="session")
def tls():
    return parse_model(read_data("models/tls.model"))


@pytest.fixture
def table():
    """A permissive sort table for ad-hoc term tests."""
    t = SortTable()
    for name in ("a", "b", "i", "I"):
        t.declare(name, Sort.AGENT)
    for name in ("ka", "kb", "ki", "ks"):
        t.declare(name, Sort.PUBKEY)
    for name in ("sk", "sk2"):
        t.declare(name, Sort.SYMKEY)
    for name in ("Na", "Nb", "Ni", "na", "nb", "PMS"):
        t.declare(name, Sort.NONCE)
    for name in ("Sid", "sid"):
        t.declare(name, Sort.SESSIONID)
    for name in ("Pa", "Pi1", "pa"):
        t.declare(name, Sort.PREFS)
    for name in ("prf", "keygen"):
        t.declare(name, Sort.FUNCTION)
    t.declare("start", Sort.TEXT)
    return t


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def port():
    return free_port()

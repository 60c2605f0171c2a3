"""Byte-level connections: implicit-TLS sockets and in-memory pipes.

Both flavours share the buffered :class:`Transport` base, which turns a
stream of arbitrarily fragmented chunks into CRLF-terminated lines and
fixed-size literal reads.
"""

import logging
import re
import socket
import ssl
import threading
import time
from dataclasses import dataclass

from .errors import (
    ConnectionClosed,
    ConnectTimeout,
    MalformedUrl,
    ReadTimeout,
    Refused,
    TlsFailure,
    UnsupportedScheme,
)

log = logging.getLogger(__name__)

DEFAULT_PORT = 993
DEFAULT_TIMEOUT_MS = 10_000

_URL_RE = re.compile(r"^(?P<scheme>[A-Za-z][A-Za-z0-9+.-]*)://(?P<rest>.*)$", re.S)


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int = DEFAULT_PORT
    use_tls: bool = True

    def __post_init__(self):
        if not self.host or any(c.isspace() for c in self.host):
            raise MalformedUrl(f"invalid host {self.host!r}")
        if not 1 <= self.port <= 65535:
            raise MalformedUrl(f"port out of range: {self.port}")


def parse_url(url):
    """Parse an ``imaps://host[:port][/]`` URL into an :class:`Endpoint`."""
    if not isinstance(url, str):
        raise MalformedUrl("url must be a string")
    m = _URL_RE.match(url.strip())
    if not m:
        raise MalformedUrl(f"missing scheme in {url!r}")
    scheme = m.group("scheme").lower()
    if scheme != "imaps":
        raise UnsupportedScheme(f"unsupported scheme {scheme!r}; only imaps:// is supported")
    hostport = m.group("rest").split("/", 1)[0]
    if "@" in hostport:
        raise MalformedUrl("credentials must not be embedded in the url")
    port = DEFAULT_PORT
    if hostport.startswith("["):
        end = hostport.find("]")
        if end < 0:
            raise MalformedUrl(f"unterminated IPv6 literal in {url!r}")
        host, tail = hostport[1:end], hostport[end + 1:]
        if tail:
            if not tail.startswith(":"):
                raise MalformedUrl(f"garbage after host in {url!r}")
            port = _parse_port(tail[1:], url)
    elif ":" in hostport:
        host, _, p = hostport.rpartition(":")
        port = _parse_port(p, url)
    else:
        host = hostport
    if not host:
        raise MalformedUrl(f"empty host in {url!r}")
    return Endpoint(host=host, port=port, use_tls=True)


def _parse_port(text, url):
    if not text.isdigit() or not text.isascii():
        raise MalformedUrl(f"bad port in {url!r}")
    port = int(text)
    if not 1 <= port <= 65535:
        raise MalformedUrl(f"port out of range in {url!r}")
    return port


class Transport:
    """Buffered, single-owner duplex byte stream.

    Subclasses provide ``_recv(timeout_s)`` (returning ``b""`` on EOF and
    ``None`` on timeout), ``_send(data)`` and ``_shutdown()``.
    """

    def __init__(self, timeout_ms=DEFAULT_TIMEOUT_MS):
        self.timeout_ms = timeout_ms
        self._buf = bytearray()
        self._eof = False
        self.closed = False

    def _check_open(self):
        if self.closed:
            raise ConnectionClosed("transport is closed")

    def write_all(self, data):
        self._check_open()
        if data:
            self._send(bytes(data))

    def _fill(self, deadline):
        if self._eof:
            raise ConnectionClosed("peer closed the connection")
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ReadTimeout(f"no data within {self.timeout_ms} ms")
        chunk = self._recv(remaining)
        if chunk is None:
            raise ReadTimeout(f"no data within {self.timeout_ms} ms")
        if not chunk:
            self._eof = True
            raise ConnectionClosed("peer closed the connection")
        self._buf += chunk

    def read_line(self):
        """Return the next line including its CRLF terminator."""
        self._check_open()
        deadline = time.monotonic() + self.timeout_ms / 1000
        start = 0
        while True:
            idx = self._buf.find(b"\r\n", start)
            if idx >= 0:
                line = bytes(self._buf[: idx + 2])
                del self._buf[: idx + 2]
                return line
            # a CR may be waiting for its LF in the next chunk
            start = max(len(self._buf) - 1, 0)
            self._fill(deadline)

    def read_exact(self, n):
        self._check_open()
        if n < 0:
            raise ValueError("n must be >= 0")
        deadline = time.monotonic() + self.timeout_ms / 1000
        while len(self._buf) < n:
            self._fill(deadline)
        data = bytes(self._buf[:n])
        del self._buf[:n]
        return data

    def close(self):
        if self.closed:
            return
        self.closed = True
        try:
            self._shutdown()
        except OSError:
            log.debug("error while closing transport", exc_info=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SocketTransport(Transport):
    def __init__(self, sock, timeout_ms=DEFAULT_TIMEOUT_MS):
        super().__init__(timeout_ms)
        self.sock = sock

    def _recv(self, timeout_s):
        self.sock.settimeout(timeout_s)
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            return None
        except (ConnectionResetError, BrokenPipeError, ssl.SSLEOFError):
            return b""

    def _send(self, data):
        self.sock.settimeout(self.timeout_ms / 1000)
        try:
            self.sock.sendall(data)
        except socket.timeout as exc:
            raise ReadTimeout("write timed out") from exc
        except OSError as exc:
            raise ConnectionClosed(str(exc)) from exc

    def _shutdown(self):
        self.sock.close()


def connect(endpoint, timeout_ms=DEFAULT_TIMEOUT_MS, verify_tls=True):
    """Open a TLS connection; the server greeting is left unread."""
    timeout_s = timeout_ms / 1000
    ctx = ssl.create_default_context()
    if not verify_tls:
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
    try:
        raw = socket.create_connection((endpoint.host, endpoint.port), timeout=timeout_s)
    except socket.timeout as exc:
        raise ConnectTimeout(f"connecting to {endpoint.host}:{endpoint.port} timed out") from exc
    except ConnectionRefusedError as exc:
        raise Refused(f"{endpoint.host}:{endpoint.port} refused the connection") from exc
    except OSError as exc:
        raise Refused(f"cannot reach {endpoint.host}:{endpoint.port}: {exc}") from exc
    try:
        raw.settimeout(timeout_s)
        sock = ctx.wrap_socket(raw, server_hostname=endpoint.host)
    except socket.timeout as exc:
        raw.close()
        raise ConnectTimeout(f"TLS handshake with {endpoint.host} timed out") from exc
    except ssl.SSLError as exc:
        raw.close()
        raise TlsFailure(str(exc)) from exc
    except (ConnectionResetError, BrokenPipeError) as exc:
        raw.close()
        raise Refused(f"{endpoint.host} closed the connection during handshake") from exc
    except OSError as exc:
        raw.close()
        raise TlsFailure(str(exc)) from exc
    return SocketTransport(sock, timeout_ms)


class _Pipe:
    """One-directional in-memory byte channel."""

    def __init__(self):
        self._data = bytearray()
        self._cond = threading.Condition()
        self.writer_closed = False
        self.reader_closed = False

    def write(self, data):
        with self._cond:
            if self.writer_closed or self.reader_closed:
                raise ConnectionClosed("pipe is closed")
            self._data += data
            self._cond.notify_all()

    def read(self, timeout_s):
        with self._cond:
            ok = self._cond.wait_for(lambda: self._data or self.writer_closed, timeout_s)
            if not ok:
                return None
            if self._data:
                out = bytes(self._data)
                self._data.clear()
                return out
            return b""

    def close_writer(self):
        with self._cond:
            self.writer_closed = True
            self._cond.notify_all()

    def close_reader(self):
        with self._cond:
            self.reader_closed = True
            self._cond.notify_all()


class PipeTransport(Transport):
    """One end of an in-memory duplex connection (see :func:`pipe_pair`)."""

    def __init__(self, inbound, outbound, timeout_ms=DEFAULT_TIMEOUT_MS):
        super().__init__(timeout_ms)
        self._in = inbound
        self._out = outbound
        self.sent = bytearray()

    def _recv(self, timeout_s):
        return self._in.read(timeout_s)

    def _send(self, data):
        self._out.write(data)
        self.sent += data

    def _shutdown(self):
        self._out.close_writer()
        self._in.close_reader()


def pipe_pair(timeout_ms=DEFAULT_TIMEOUT_MS):
    """Return two connected :class:`PipeTransport` ends ``(client, server)``."""
    a, b = _Pipe(), _Pipe()
    return PipeTransport(a, b, timeout_ms), PipeTransport(b, a, timeout_ms)

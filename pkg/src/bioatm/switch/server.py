"""Switch service: binary TCP front end, JSON HTTP gateway, session sweeper.

Both front ends funnel every request through `session.transition`, so their
behavior is identical by construction.  The TCP side owns one session per
connection; the HTTP side addresses sessions by token.  A background sweeper
expires idle sessions; handlers also check staleness lazily so expiry does
not depend on sweep timing.
"""

from __future__ import annotations

import json
import logging
import os
import re
import secrets
import socketserver
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from filelock import FileLock, Timeout as LockTimeout

from .. import wire
from ..minutiae import (
    FingerprintTemplate,
    Minutia,
    MinutiaKind,
    TemplateError,
    load_template,
)
from ..vault import Vault
from .config import SwitchConfig, config_from_args, split_addr
from .session import AuditEvent, Session, SessionPhase, expire, transition

log = logging.getLogger("bioatm.switch")

JOURNAL_FILENAME = "journal.log"
LOCK_FILENAME = "journal.lock"
SAMPLES_DIRNAME = "samples"
_SAMPLE_ID_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")
_RECV_CHUNK = 4096
_SWEEP_INTERVAL_SECS = 1.0


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class SwitchService:
    """Shared state behind both front ends: vault, sessions, audit log."""

    def __init__(self, config: SwitchConfig, clock=None, token_source=None):
        self.config = config
        self.clock = clock if clock is not None else _now_ms
        self._token_source = token_source if token_source is not None else (
            lambda: secrets.token_bytes(wire.TOKEN_LEN)
        )
        os.makedirs(config.data_dir, exist_ok=True)
        self.lock_path = os.path.join(config.data_dir, LOCK_FILENAME)
        self._file_lock = FileLock(self.lock_path)
        try:
            self._file_lock.acquire(timeout=0)
        except LockTimeout:
            raise RuntimeError(
                f"journal already in use (lock {self.lock_path})"
            ) from None
        self.vault = Vault(os.path.join(config.data_dir, JOURNAL_FILENAME))
        self._lock = threading.Lock()
        self._sessions: dict[bytes, Session] = {}
        self.audit_log: list[AuditEvent] = []

    def close(self) -> None:
        self.vault.close()
        self._file_lock.release()

    # -- sessions ----------------------------------------------------------

    def new_session(self) -> Session:
        now = self.clock()
        return Session(created_at_ms=now, last_activity_ms=now)

    def _fresh_token(self) -> bytes:
        token = self._token_source()
        while token in self._sessions or token == wire.ZERO_TOKEN:
            token = self._token_source()
        return token

    def find_session(self, token: bytes) -> Session | None:
        with self._lock:
            return self._sessions.get(token)

    def handle(self, session: Session, msg: wire.Message) -> wire.Message:
        """Run one request through the state machine under the service lock."""
        with self._lock:
            now = self.clock()
            self._expire_if_stale(session, now)
            resp, event = transition(
                session, msg, self.vault, self.config, now, self._fresh_token
            )
            if session.phase is SessionPhase.AWAIT_BIO and isinstance(msg, wire.AuthCardReq):
                self._sessions[session.token] = session
            if session.phase is SessionPhase.TERMINATED:
                self._sessions.pop(session.token, None)
            self.audit_log.append(event)
            log.info("%s %s", event.kind.value, event.detail)
            return resp

    def _expire_if_stale(self, session: Session, now: int) -> None:
        timeout_ms = int(self.config.session_timeout_secs * 1000)
        if (
            session.phase is not SessionPhase.TERMINATED
            and now - session.last_activity_ms > timeout_ms
        ):
            self.audit_log.append(expire(session, now))
            self._sessions.pop(session.token, None)

    def sweep(self) -> None:
        with self._lock:
            now = self.clock()
            for session in list(self._sessions.values()):
                self._expire_if_stale(session, now)

    # -- demo samples ------------------------------------------------------

    def sample_ids(self) -> list[str]:
        samples_dir = os.path.join(self.config.data_dir, SAMPLES_DIRNAME)
        if not os.path.isdir(samples_dir):
            return []
        ids = [
            name[:-4]
            for name in os.listdir(samples_dir)
            if name.endswith(".mnt") and _SAMPLE_ID_RE.match(name[:-4])
        ]
        return sorted(ids)

    def load_sample(self, sample_id: str) -> FingerprintTemplate:
        if not _SAMPLE_ID_RE.match(sample_id):
            raise TemplateError(f"bad sample id: {sample_id!r}")
        path = os.path.join(self.config.data_dir, SAMPLES_DIRNAME, sample_id + ".mnt")
        if not os.path.isfile(path):
            raise TemplateError(f"no such sample: {sample_id}")
        return load_template(path)


# ---------------------------------------------------------------------------
# Binary TCP front end

class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        service: SwitchService = self.server.service
        session = service.new_session()
        self.request.settimeout(service.config.session_timeout_secs + 5.0)
        buf = b""
        while True:
            try:
                frame, msg, buf = self._next_message(buf)
            except wire.FrameError as exc:
                # transport-level corruption: drop the connection
                log.warning("closing connection: %s", exc)
                return
            except (ConnectionError, OSError):
                return
            if msg is None:
                return  # clean EOF between frames
            if isinstance(msg, wire.PayloadError):
                resp = _malformed_response(frame.msg_type)
            else:
                resp = service.handle(session, msg)
            try:
                self.request.sendall(wire.encode_message(resp))
            except OSError:
                return

    def _next_message(self, buf: bytes):
        """Read until one full frame decodes; returns (frame, msg, rest).

        msg is None on clean EOF, or a PayloadError instance when the frame
        was sound but its payload was not (answered, not fatal); rest holds
        the unconsumed bytes after the frame.
        """
        while True:
            try:
                frame, consumed = wire.decode_frame(buf)
            except wire.IncompleteFrame:
                chunk = self.request.recv(_RECV_CHUNK)
                if not chunk:
                    if buf:
                        raise wire.FrameError("connection closed mid-frame")
                    return None, None, b""
                buf += chunk
                continue
            rest = buf[consumed:]
            try:
                return frame, wire.decode_payload(frame.msg_type, frame.payload), rest
            except wire.PayloadError as exc:
                return frame, exc, rest


def _malformed_response(msg_type: wire.MessageType) -> wire.Message:
    code = wire.ResponseCode.MALFORMED
    if msg_type is wire.MessageType.AUTH_CARD_REQ:
        return wire.AuthCardResp(code)
    if msg_type is wire.MessageType.BIO_VERIFY_REQ:
        return wire.BioVerifyResp(code)
    if msg_type is wire.MessageType.TXN_REQ:
        return wire.TxnResp(code)
    return wire.Status(code)


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, service: SwitchService):
        super().__init__(addr, _TcpHandler)
        self.service = service


# ---------------------------------------------------------------------------
# JSON HTTP gateway

_HTTP_STATUS_FOR = {
    wire.ResponseCode.APPROVED: 200,
    wire.ResponseCode.MALFORMED: 400,
}


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> SwitchService:
        return self.server.service

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("http: " + fmt, *args)

    # -- plumbing ----------------------------------------------------------

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _read_json(self) -> dict | None:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b"{}"
            body = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None
        return body if isinstance(body, dict) else None

    def _respond_code(self, code: wire.ResponseCode, extra: dict | None = None) -> None:
        status = _HTTP_STATUS_FOR.get(code, 409)
        body = {"code": wire.code_name(code)}
        if extra:
            body.update(extra)
        if code is wire.ResponseCode.APPROVED:
            self._send_json(200, extra or {})
        else:
            self._send_json(status, body)

    # -- routing -----------------------------------------------------------

    def do_OPTIONS(self) -> None:
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self) -> None:
        if self.path == "/api/samples":
            self._send_json(200, {"samples": self.service.sample_ids()})
            return
        self._serve_static()

    def do_POST(self) -> None:
        if self.path == "/api/session":
            self._post_session()
            return
        m = re.match(r"^/api/session/([0-9a-fA-F]{16})/(biometric|txn)$", self.path)
        if m is None:
            self._send_json(404, {"error": "no such endpoint"})
            return
        token = bytes.fromhex(m.group(1))
        session = self.service.find_session(token)
        if session is None:
            self._send_json(404, {"error": "unknown token"})
            return
        if m.group(2) == "biometric":
            self._post_biometric(session, token)
        else:
            self._post_txn(session, token)

    def do_DELETE(self) -> None:
        m = re.match(r"^/api/session/([0-9a-fA-F]{16})$", self.path)
        if m is None:
            self._send_json(404, {"error": "no such endpoint"})
            return
        token = bytes.fromhex(m.group(1))
        session = self.service.find_session(token)
        if session is None:
            self._send_json(404, {"error": "unknown token"})
            return
        resp = self.service.handle(session, wire.EndSession(token))
        self._respond_code(resp.code, {})

    # -- endpoints ---------------------------------------------------------

    def _post_session(self) -> None:
        body = self._read_json()
        if body is None:
            self._send_json(400, {"error": "request body is not a JSON object"})
            return
        pan, pin = body.get("pan"), body.get("pin")
        if not isinstance(pan, str) or not isinstance(pin, str):
            self._send_json(400, {"error": "pan and pin must be strings"})
            return
        try:
            req = wire.AuthCardReq(pan, wire.encode_pin_block(pin, pan))
        except wire.PayloadError:
            self._respond_code(wire.ResponseCode.MALFORMED)
            return
        session = self.service.new_session()
        resp = self.service.handle(session, req)
        extra = {"retries_remaining": resp.retries_remaining}
        if resp.code is wire.ResponseCode.APPROVED:
            extra["token"] = resp.token.hex()
        self._respond_code(resp.code, extra)

    def _post_biometric(self, session: Session, token: bytes) -> None:
        body = self._read_json()
        if body is None:
            self._send_json(400, {"error": "request body is not a JSON object"})
            return
        try:
            template = self._template_from_body(body)
        except (TemplateError, wire.PayloadError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        resp = self.service.handle(session, wire.BioVerifyReq(token, template))
        self._respond_code(resp.code, {"score": resp.score_milli / 1000})

    def _template_from_body(self, body: dict) -> FingerprintTemplate:
        if "sample_id" in body:
            if not isinstance(body["sample_id"], str):
                raise TemplateError("sample_id must be a string")
            return self.service.load_sample(body["sample_id"])
        points = body.get("minutiae")
        if not isinstance(points, list):
            raise TemplateError("body needs minutiae list or sample_id")
        minutiae = []
        for p in points:
            if not isinstance(p, dict):
                raise TemplateError("each minutia must be an object")
            try:
                kind = MinutiaKind(p.get("kind"))
                minutiae.append(Minutia(int(p["x"]), int(p["y"]), int(p["angle"]), kind))
            except (KeyError, TypeError, ValueError) as exc:
                raise TemplateError(f"bad minutia entry: {exc}") from None
        return FingerprintTemplate(tuple(minutiae))

    def _post_txn(self, session: Session, token: bytes) -> None:
        body = self._read_json()
        if body is None:
            self._send_json(400, {"error": "request body is not a JSON object"})
            return
        type_name = body.get("type")
        amount = body.get("amount", 0)
        types = {
            "withdraw": wire.TxnType.WITHDRAW,
            "deposit": wire.TxnType.DEPOSIT,
            "balance": wire.TxnType.BALANCE,
            "statement": wire.TxnType.STATEMENT,
        }
        if type_name not in types or not isinstance(amount, int) or amount < 0:
            self._send_json(400, {"error": "type must name a transaction, amount a non-negative integer"})
            return
        try:
            req = wire.TxnReq(token, types[type_name], amount)
        except wire.PayloadError:
            self._respond_code(wire.ResponseCode.MALFORMED)
            return
        resp = self.service.handle(session, req)
        extra = {"balance": resp.balance}
        if resp.records:
            extra["records"] = [
                {
                    "seq": r.seq,
                    "kind": "withdraw" if r.kind is wire.RecordKind.WITHDRAW else "deposit",
                    "amount": r.amount,
                    "resulting_balance": r.resulting_balance,
                    "timestamp_ms": r.timestamp_ms,
                }
                for r in resp.records
            ]
        self._respond_code(resp.code, extra)

    # -- kiosk static files ------------------------------------------------

    _STATIC_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript; charset=utf-8",
        ".css": "text/css; charset=utf-8",
        ".map": "application/json",
        ".svg": "image/svg+xml",
    }

    def _serve_static(self) -> None:
        root = self.service.config.kiosk_dir
        if root is None:
            self._send_json(404, {"error": "no such endpoint"})
            return
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        path = os.path.realpath(os.path.join(root, rel))
        if not path.startswith(os.path.realpath(root) + os.sep):
            self._send_json(404, {"error": "no such file"})
            return
        ext = os.path.splitext(path)[1]
        if not os.path.isfile(path) or ext not in self._STATIC_TYPES:
            self._send_json(404, {"error": "no such file"})
            return
        with open(path, "rb") as fh:
            data = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", self._STATIC_TYPES[ext])
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)


class _HttpServer(ThreadingHTTPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, service: SwitchService):
        super().__init__(addr, _HttpHandler)
        self.service = service


# ---------------------------------------------------------------------------
# Lifecycle

class Switch:
    """Runs the TCP listener, HTTP gateway, and sweeper for one service."""

    def __init__(self, config: SwitchConfig):
        self.service = SwitchService(config)
        try:
            self._tcp = _TcpServer(split_addr(config.listen_addr), self.service)
            self._http = _HttpServer(split_addr(config.http_addr), self.service)
        except OSError:
            self.service.close()
            raise
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    @property
    def tcp_addr(self) -> tuple[str, int]:
        return self._tcp.server_address[:2]

    @property
    def http_addr(self) -> tuple[str, int]:
        return self._http.server_address[:2]

    def start(self) -> None:
        for name, target in (
            ("tcp", self._tcp.serve_forever),
            ("http", self._http.serve_forever),
            ("sweeper", self._sweep_loop),
        ):
            t = threading.Thread(target=target, name=f"switch-{name}", daemon=True)
            t.start()
            self._threads.append(t)
        log.info(
            "switch up: binary %s:%d, http %s:%d", *self.tcp_addr, *self.http_addr
        )

    def _sweep_loop(self) -> None:
        while not self._stop.wait(_SWEEP_INTERVAL_SECS):
            self.service.sweep()

    def stop(self) -> None:
        self._stop.set()
        self._tcp.shutdown()
        self._http.shutdown()
        self._tcp.server_close()
        self._http.server_close()
        for t in self._threads:
            t.join(timeout=5)
        self.service.close()

    def serve_forever(self) -> None:
        self.start()
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    config = config_from_args(argv)
    try:
        switch = Switch(config)
    except (RuntimeError, OSError) as exc:
        log.error("cannot start: %s", exc)
        return 1
    switch.serve_forever()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

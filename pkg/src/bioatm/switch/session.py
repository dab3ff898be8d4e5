"""Per-terminal session state machine: card -> PIN -> fingerprint -> menu.

`transition` is the single authority for session behavior; the TCP and HTTP
front ends both call it, so the two paths cannot diverge.  It maps one
decoded request to exactly one response and one audit event, mutating only
the given session and vault.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .. import wire
from ..minutiae import match_templates
from ..vault import PinStatus, Vault
from .config import SwitchConfig

STATEMENT_DEPTH = 10


class SessionPhase(Enum):
    AWAIT_CARD = "await_card"
    AWAIT_BIO = "await_biometric"
    MENU = "menu"
    TERMINATED = "terminated"


class AuditKind(Enum):
    AUTH_OK = "AuthOk"
    CARD_FAIL = "CardFail"
    PIN_FAIL = "PinFail"
    BIO_OK = "BioOk"
    BIO_FAIL = "BioFail"
    TXN_OK = "TxnOk"
    TXN_FAIL = "TxnFail"
    TIMEOUT = "Timeout"
    END = "End"
    REJECT = "Reject"


@dataclass(frozen=True)
class AuditEvent:
    timestamp_ms: int
    token: bytes
    kind: AuditKind
    detail: str


@dataclass
class Session:
    created_at_ms: int
    last_activity_ms: int
    phase: SessionPhase = SessionPhase.AWAIT_CARD
    pan: str | None = None
    token: bytes = wire.ZERO_TOKEN
    bio_failures: int = 0


TokenSource = Callable[[], bytes]


def _event(now_ms: int, session: Session, kind: AuditKind, detail: str) -> AuditEvent:
    return AuditEvent(now_ms, session.token, kind, detail)


def expire(session: Session, now_ms: int) -> AuditEvent:
    """Mark an idle session Terminated; returns the Timeout audit event."""
    session.phase = SessionPhase.TERMINATED
    return _event(now_ms, session, AuditKind.TIMEOUT, "idle session expired")


def transition(
    session: Session,
    msg: wire.Message,
    vault: Vault,
    config: SwitchConfig,
    now_ms: int,
    token_source: TokenSource,
) -> tuple[wire.Message, AuditEvent]:
    """Apply one decoded request to a session.

    Deterministic given (session, message, vault state, clock, token source);
    every call emits exactly one response and one audit event.  Out-of-order
    requests get a response of the paired type with InvalidSession (or
    Malformed for messages a terminal should never send) and leave the state
    unchanged; Terminated is absorbing.
    """
    session.last_activity_ms = now_ms

    if isinstance(msg, wire.EndSession):
        return _handle_end(session, msg, now_ms)
    if isinstance(msg, wire.AuthCardReq):
        if session.phase is not SessionPhase.AWAIT_CARD:
            return _reject(session, now_ms, wire.AuthCardResp(wire.ResponseCode.INVALID_SESSION))
        return _handle_auth(session, msg, vault, config, now_ms, token_source)
    if isinstance(msg, wire.BioVerifyReq):
        if session.phase is not SessionPhase.AWAIT_BIO:
            return _reject(session, now_ms, wire.BioVerifyResp(wire.ResponseCode.INVALID_SESSION))
        if msg.token != session.token:
            return _reject(session, now_ms, wire.BioVerifyResp(wire.ResponseCode.INVALID_SESSION))
        return _handle_bio(session, msg, vault, config, now_ms)
    if isinstance(msg, wire.TxnReq):
        if session.phase is not SessionPhase.MENU:
            return _reject(session, now_ms, wire.TxnResp(wire.ResponseCode.INVALID_SESSION))
        if msg.token != session.token:
            return _reject(session, now_ms, wire.TxnResp(wire.ResponseCode.INVALID_SESSION))
        return _handle_txn(session, msg, vault, config, now_ms)
    # response-typed or status messages arriving at the switch
    return _reject(session, now_ms, wire.Status(wire.ResponseCode.MALFORMED))


def _reject(session: Session, now_ms: int, resp: wire.Message) -> tuple[wire.Message, AuditEvent]:
    code = wire.code_name(resp.code)
    detail = f"{type(resp).__name__} {code} in {session.phase.value}"
    return resp, _event(now_ms, session, AuditKind.REJECT, detail)


def _handle_end(
    session: Session, msg: wire.EndSession, now_ms: int
) -> tuple[wire.Message, AuditEvent]:
    if session.phase is SessionPhase.TERMINATED:
        return _reject(session, now_ms, wire.Status(wire.ResponseCode.INVALID_SESSION))
    if session.phase is not SessionPhase.AWAIT_CARD and msg.token != session.token:
        return _reject(session, now_ms, wire.Status(wire.ResponseCode.INVALID_SESSION))
    session.phase = SessionPhase.TERMINATED
    event = _event(now_ms, session, AuditKind.END, "session ended by terminal")
    return wire.Status(wire.ResponseCode.APPROVED), event


def _handle_auth(
    session: Session,
    msg: wire.AuthCardReq,
    vault: Vault,
    config: SwitchConfig,
    now_ms: int,
    token_source: TokenSource,
) -> tuple[wire.Message, AuditEvent]:
    try:
        pin = wire.extract_pin(msg.pin_block, msg.pan)
    except wire.PayloadError:
        # block not built for this PAN: terminal defect, not a PIN failure
        resp = wire.AuthCardResp(wire.ResponseCode.MALFORMED)
        return resp, _event(now_ms, session, AuditKind.REJECT, "undecodable PIN block")

    card = vault.lookup(msg.pan)
    if card is None:
        resp = wire.AuthCardResp(wire.ResponseCode.INVALID_CARD)
        return resp, _event(now_ms, session, AuditKind.CARD_FAIL, "unknown card")
    if card.blocked:
        session.phase = SessionPhase.TERMINATED
        resp = wire.AuthCardResp(wire.ResponseCode.CARD_BLOCKED)
        return resp, _event(now_ms, session, AuditKind.CARD_FAIL, "card blocked")

    check = vault.verify_pin(msg.pan, pin, config.pin_max_tries)
    if check.status is PinStatus.OK:
        session.pan = msg.pan
        session.token = token_source()
        session.phase = SessionPhase.AWAIT_BIO
        resp = wire.AuthCardResp(
            wire.ResponseCode.APPROVED, session.token, check.retries_remaining
        )
        return resp, _event(now_ms, session, AuditKind.AUTH_OK, "card and PIN approved")
    if check.status is PinStatus.BLOCKED:
        session.phase = SessionPhase.TERMINATED
        resp = wire.AuthCardResp(wire.ResponseCode.PIN_TRIES_EXCEEDED)
        return resp, _event(now_ms, session, AuditKind.PIN_FAIL, "PIN tries exhausted")
    resp = wire.AuthCardResp(
        wire.ResponseCode.INVALID_PIN, retries_remaining=check.retries_remaining
    )
    detail = f"wrong PIN, {check.retries_remaining} tries left"
    return resp, _event(now_ms, session, AuditKind.PIN_FAIL, detail)


def _handle_bio(
    session: Session,
    msg: wire.BioVerifyReq,
    vault: Vault,
    config: SwitchConfig,
    now_ms: int,
) -> tuple[wire.Message, AuditEvent]:
    card = vault.lookup(session.pan)
    if card is None or card.blocked:
        session.phase = SessionPhase.TERMINATED
        resp = wire.BioVerifyResp(wire.ResponseCode.CARD_BLOCKED)
        return resp, _event(now_ms, session, AuditKind.CARD_FAIL, "card gone or blocked")
    result = match_templates(msg.template, card.template, config.match_params)
    score_milli = min(int(result.score * 1000), 1000)
    if result.score >= config.match_threshold:
        session.phase = SessionPhase.MENU
        resp = wire.BioVerifyResp(wire.ResponseCode.APPROVED, score_milli)
        return resp, _event(now_ms, session, AuditKind.BIO_OK, f"score {result.score:.3f}")
    session.bio_failures += 1
    if session.bio_failures >= config.bio_max_tries:
        session.phase = SessionPhase.TERMINATED
        detail = f"score {result.score:.3f}, logged off"
    else:
        detail = f"score {result.score:.3f}, retry allowed"
    resp = wire.BioVerifyResp(wire.ResponseCode.BIOMETRIC_MISMATCH, score_milli)
    return resp, _event(now_ms, session, AuditKind.BIO_FAIL, detail)


def _handle_txn(
    session: Session,
    msg: wire.TxnReq,
    vault: Vault,
    config: SwitchConfig,
    now_ms: int,
) -> tuple[wire.Message, AuditEvent]:
    pan = session.pan
    if msg.txn_type in (wire.TxnType.BALANCE, wire.TxnType.STATEMENT):
        if msg.amount != 0:
            resp = wire.TxnResp(wire.ResponseCode.MALFORMED, vault.balance(pan))
            return resp, _event(now_ms, session, AuditKind.TXN_FAIL, "amount on inquiry")
        if msg.txn_type is wire.TxnType.BALANCE:
            resp = wire.TxnResp(wire.ResponseCode.APPROVED, vault.balance(pan))
            return resp, _event(now_ms, session, AuditKind.TXN_OK, "balance inquiry")
        records = tuple(vault.statement(pan, STATEMENT_DEPTH))
        resp = wire.TxnResp(wire.ResponseCode.APPROVED, vault.balance(pan), records)
        return resp, _event(now_ms, session, AuditKind.TXN_OK, "statement inquiry")

    if msg.txn_type is wire.TxnType.WITHDRAW:
        outcome = vault.withdraw(pan, msg.amount, config.dispense_multiple)
        label = "withdraw"
    else:
        outcome = vault.deposit(pan, msg.amount)
        label = "deposit"
    records = (outcome.record,) if outcome.record is not None else ()
    resp = wire.TxnResp(outcome.code, outcome.balance, records)
    kind = AuditKind.TXN_OK if outcome.ok else AuditKind.TXN_FAIL
    detail = f"{label} {msg.amount}: {wire.code_name(outcome.code)}"
    return resp, _event(now_ms, session, kind, detail)

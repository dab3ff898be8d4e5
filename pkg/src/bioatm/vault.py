"""Cardholder records and account state behind an append-only journal.

The vault never stores a PIN: enrollment keeps a salted PBKDF2-HMAC-SHA256
digest and verification recomputes it.  Every durable change (enrollment,
block/unblock, deposit, withdrawal) is one CRC-guarded journal line, written
and fsynced before the in-memory state changes, so replaying the journal
rebuilds the exact same vault.  A torn final line is dropped on open; damage
anywhere earlier is refused as corruption.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import wire
from .minutiae import FingerprintTemplate

PBKDF2_ITERATIONS = 10_000
SALT_LEN = 16
DIGEST_LEN = 32
TEMPLATE_ID_LEN = 16
DEFAULT_MAX_TRIES = 3

_PAN_RE = re.compile(r"^[0-9]{11,19}$")
_ACCOUNT_SEQ_WIDTH = 6


class VaultError(Exception):
    """Base class for vault failures."""


class JournalCorrupt(VaultError):
    """A non-final journal line is damaged; the store needs intervention."""


class UnknownCard(VaultError):
    pass


class DuplicateCard(VaultError):
    pass


class LuhnError(VaultError):
    pass


def _luhn_checksum(digits: str) -> int:
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = ord(ch) - 48
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10


def luhn_check(digits: str) -> bool:
    """True iff the digit string's Luhn checksum is 0 mod 10.

    Pure checksum predicate; card-number length rules are enforced at
    enrollment, not here.
    """
    if not digits or not (digits.isascii() and digits.isdigit()):
        raise LuhnError(f"Luhn input must be non-empty ASCII digits: {digits!r}")
    return _luhn_checksum(digits) == 0


def luhn_check_digit(partial: str) -> str:
    """Digit that makes partial + digit pass luhn_check."""
    if not (partial.isascii() and partial.isdigit() and partial):
        raise LuhnError("partial PAN must be ASCII digits")
    return str((10 - _luhn_checksum(partial + "0")) % 10)


def pin_digest(pin: str, salt: bytes, iterations: int = PBKDF2_ITERATIONS) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", pin.encode("ascii"), salt, iterations, DIGEST_LEN)


def template_id(template: FingerprintTemplate) -> str:
    """Stable hex identifier of a template's canonical wire encoding."""
    return hashlib.sha256(wire.encode_minutiae(template)).hexdigest()[:TEMPLATE_ID_LEN]


class PinStatus(Enum):
    OK = "ok"
    WRONG_PIN = "wrong_pin"
    BLOCKED = "blocked"
    INVALID_CARD = "invalid_card"


@dataclass(frozen=True)
class PinCheck:
    status: PinStatus
    retries_remaining: int = 0


@dataclass
class Cardholder:
    pan: str
    salt: bytes
    iterations: int
    digest: bytes
    template_id: str
    account_id: str
    template: FingerprintTemplate
    balance: int
    blocked: bool = False
    failed_pin_attempts: int = 0  # volatile; not journaled, resets on restart


@dataclass(frozen=True)
class TxnOutcome:
    ok: bool
    code: wire.ResponseCode
    balance: int
    record: wire.TxnRecord | None = None


# ---------------------------------------------------------------------------
# Journal line codec
#
# <seq>|<unix_ms>|<kind>|<fields...>|<crc16-hex>\n   CRC over everything
# before the final pipe.

_KINDS = ("ENROLL", "BLOCK", "UNBLOCK", "DEP", "WDR")


def _format_line(seq: int, ts_ms: int, kind: str, fields: list[str]) -> str:
    content = "|".join([str(seq), str(ts_ms), kind, *fields])
    return f"{content}|{wire.crc16(content.encode('ascii')):04x}\n"


def _parse_line(line: str, lineno: int) -> tuple[int, int, str, list[str]]:
    content, _, crc_hex = line.rpartition("|")
    if not content:
        raise JournalCorrupt(f"line {lineno}: no field separators")
    try:
        got = int(crc_hex, 16)
    except ValueError:
        raise JournalCorrupt(f"line {lineno}: bad crc field {crc_hex!r}") from None
    want = wire.crc16(content.encode("ascii", errors="replace"))
    if got != want:
        raise JournalCorrupt(f"line {lineno}: crc mismatch")
    parts = content.split("|")
    if len(parts) < 3:
        raise JournalCorrupt(f"line {lineno}: too few fields")
    try:
        seq, ts_ms = int(parts[0]), int(parts[1])
    except ValueError:
        raise JournalCorrupt(f"line {lineno}: bad seq/timestamp") from None
    kind = parts[2]
    if kind not in _KINDS:
        raise JournalCorrupt(f"line {lineno}: unknown kind {kind!r}")
    return seq, ts_ms, kind, parts[3:]


class Vault:
    """Journal-backed store of cardholders; all methods are thread-safe.

    clock returns milliseconds since the epoch (injectable so tooling can
    emit byte-stable journals); fsync=False trades durability for speed in
    bulk loads and tests.
    """

    def __init__(
        self,
        journal_path,
        max_tries: int = DEFAULT_MAX_TRIES,
        clock: Callable[[], int] | None = None,
        fsync: bool = True,
    ):
        if max_tries < 1:
            raise ValueError("max_tries must be at least 1")
        self._lock = threading.RLock()
        self._path = os.fspath(journal_path)
        self._clock = clock if clock is not None else (lambda: time.time_ns() // 1_000_000)
        self._fsync = fsync
        self.max_tries = max_tries
        self._cards: dict[str, Cardholder] = {}
        self._seq = 0
        self._fh = None
        self._replay_and_open()

    # -- replay ------------------------------------------------------------

    def _replay_and_open(self) -> None:
        keep_bytes = 0
        if os.path.exists(self._path):
            with open(self._path, "rb") as fh:
                raw = fh.read()
            lines = raw.split(b"\n")
            tail = lines.pop()  # b"" when the file ends with a newline
            complete = [ln.decode("ascii", errors="replace") for ln in lines]
            if complete:
                # a torn write can only damage the final line; check its CRC
                # separately so earlier damage is still a hard error
                last = complete[-1]
                body = complete[:-1]
                for lineno, line in enumerate(body, start=1):
                    self._apply(*_parse_line(line, lineno))
                try:
                    parsed = _parse_line(last, len(complete))
                except JournalCorrupt:
                    keep_bytes = sum(len(ln) + 1 for ln in lines[:-1])
                else:
                    self._apply(*parsed)
                    keep_bytes = sum(len(ln) + 1 for ln in lines)
            if tail:
                # unterminated partial line: discard
                pass
        self._fh = open(self._path, "ab")
        if os.path.getsize(self._path) != keep_bytes:
            self._fh.truncate(keep_bytes)
            self._fh.seek(keep_bytes)
            self._sync()

    def _apply(self, seq: int, ts_ms: int, kind: str, fields: list[str]) -> None:
        if seq != self._seq + 1:
            raise JournalCorrupt(f"sequence gap: expected {self._seq + 1}, got {seq}")
        self._seq = seq
        try:
            if kind == "ENROLL":
                pan, salt_hex, iters, digest_hex, tid, account_id, balance, tmpl_hex = fields
                template, used = wire.decode_minutiae(bytes.fromhex(tmpl_hex))
                if used != len(tmpl_hex) // 2:
                    raise ValueError("trailing template bytes")
                if pan in self._cards:
                    raise ValueError(f"duplicate enrollment for {pan}")
                self._cards[pan] = Cardholder(
                    pan=pan,
                    salt=bytes.fromhex(salt_hex),
                    iterations=int(iters),
                    digest=bytes.fromhex(digest_hex),
                    template_id=tid,
                    account_id=account_id,
                    template=template,
                    balance=int(balance),
                )
            elif kind in ("BLOCK", "UNBLOCK"):
                (pan,) = fields
                card = self._cards[pan]
                card.blocked = kind == "BLOCK"
                if kind == "UNBLOCK":
                    card.failed_pin_attempts = 0
            else:  # DEP / WDR
                pan, amount, resulting = fields
                card = self._cards[pan]
                amount_i, resulting_i = int(amount), int(resulting)
                delta = amount_i if kind == "DEP" else -amount_i
                if card.balance + delta != resulting_i or resulting_i < 0:
                    raise ValueError("balance mismatch")
                card.balance = resulting_i
        except JournalCorrupt:
            raise
        except (ValueError, KeyError, wire.PayloadError) as exc:
            raise JournalCorrupt(f"record {seq} ({kind}): {exc}") from None

    # -- journal writes ----------------------------------------------------

    def _sync(self) -> None:
        self._fh.flush()
        if self._fsync:
            os.fsync(self._fh.fileno())

    def _append(self, kind: str, fields: list[str]) -> None:
        line = _format_line(self._seq + 1, self._clock(), kind, fields)
        self._fh.write(line.encode("ascii"))
        self._sync()
        self._seq += 1

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "Vault":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- operations --------------------------------------------------------

    @property
    def journal_path(self) -> str:
        return self._path

    @property
    def seq(self) -> int:
        return self._seq

    def pans(self) -> list[str]:
        with self._lock:
            return sorted(self._cards)

    def lookup(self, pan: str) -> Cardholder | None:
        with self._lock:
            return self._cards.get(pan)

    def enroll(
        self,
        pan: str,
        pin: str,
        template: FingerprintTemplate,
        opening_balance: int = 0,
        salt: bytes | None = None,
    ) -> Cardholder:
        if not _PAN_RE.match(pan):
            raise LuhnError(f"card number must be 11..19 digits: {pan!r}")
        if not luhn_check(pan):
            raise LuhnError(f"card number fails its check digit: {pan}")
        if not wire.valid_pin(pin):
            raise VaultError("PIN must be 4..6 ASCII digits")
        if opening_balance < 0:
            raise VaultError("opening balance must be non-negative")
        if salt is None:
            salt = os.urandom(SALT_LEN)
        elif len(salt) != SALT_LEN:
            raise VaultError(f"salt must be {SALT_LEN} bytes")
        with self._lock:
            if pan in self._cards:
                raise DuplicateCard(f"card already enrolled: {pan}")
            digest = pin_digest(pin, salt)
            tid = template_id(template)
            account_id = f"A{len(self._cards) + 1:0{_ACCOUNT_SEQ_WIDTH}d}"
            encoded = wire.encode_minutiae(template)
            self._append(
                "ENROLL",
                [
                    pan,
                    salt.hex(),
                    str(PBKDF2_ITERATIONS),
                    digest.hex(),
                    tid,
                    account_id,
                    str(opening_balance),
                    encoded.hex(),
                ],
            )
            card = Cardholder(
                pan=pan,
                salt=salt,
                iterations=PBKDF2_ITERATIONS,
                digest=digest,
                template_id=tid,
                account_id=account_id,
                template=template,
                balance=opening_balance,
            )
            self._cards[pan] = card
            return card

    def verify_pin(self, pan: str, pin: str, max_tries: int | None = None) -> PinCheck:
        """Check a PIN; counts failures and blocks the card at max_tries.

        The failure counter is in-memory only: restarts clear it, but an
        exhausted counter writes a durable BLOCK record first.
        """
        limit = self.max_tries if max_tries is None else max_tries
        if limit < 1:
            raise ValueError("max_tries must be at least 1")
        with self._lock:
            card = self._cards.get(pan)
            if card is None:
                return PinCheck(PinStatus.INVALID_CARD)
            if card.blocked:
                return PinCheck(PinStatus.BLOCKED)
            if pin_digest(pin, card.salt, card.iterations) == card.digest:
                card.failed_pin_attempts = 0
                return PinCheck(PinStatus.OK, limit)
            card.failed_pin_attempts += 1
            remaining = limit - card.failed_pin_attempts
            if remaining <= 0:
                self._append("BLOCK", [pan])
                card.blocked = True
                return PinCheck(PinStatus.BLOCKED, 0)
            return PinCheck(PinStatus.WRONG_PIN, remaining)

    def block(self, pan: str) -> None:
        with self._lock:
            card = self._require(pan)
            if not card.blocked:
                self._append("BLOCK", [pan])
                card.blocked = True

    def unblock(self, pan: str) -> None:
        with self._lock:
            card = self._require(pan)
            if card.blocked:
                self._append("UNBLOCK", [pan])
                card.blocked = False
            card.failed_pin_attempts = 0

    def deposit(self, pan: str, amount: int) -> TxnOutcome:
        with self._lock:
            card = self._require(pan)
            if amount <= 0:
                return TxnOutcome(False, wire.ResponseCode.MALFORMED, card.balance)
            resulting = card.balance + amount
            ts = self._clock()
            self._append("DEP", [pan, str(amount), str(resulting)])
            card.balance = resulting
            record = wire.TxnRecord(self._seq, wire.RecordKind.DEPOSIT, amount, resulting, ts)
            return TxnOutcome(True, wire.ResponseCode.APPROVED, resulting, record)

    def withdraw(self, pan: str, amount: int, dispense_multiple: int = 1) -> TxnOutcome:
        """Withdraw amount if positive, dispensable, and covered by funds.

        dispense_multiple models the smallest note the cash unit can pay
        out: amounts that are not a positive multiple of it are refused
        before the balance is even consulted.
        """
        with self._lock:
            card = self._require(pan)
            if amount <= 0:
                return TxnOutcome(False, wire.ResponseCode.MALFORMED, card.balance)
            if dispense_multiple > 1 and amount % dispense_multiple != 0:
                return TxnOutcome(False, wire.ResponseCode.NOT_DISPENSABLE, card.balance)
            if amount > card.balance:
                return TxnOutcome(False, wire.ResponseCode.INSUFFICIENT_FUNDS, card.balance)
            resulting = card.balance - amount
            ts = self._clock()
            self._append("WDR", [pan, str(amount), str(resulting)])
            card.balance = resulting
            record = wire.TxnRecord(self._seq, wire.RecordKind.WITHDRAW, amount, resulting, ts)
            return TxnOutcome(True, wire.ResponseCode.APPROVED, resulting, record)

    def balance(self, pan: str) -> int:
        with self._lock:
            return self._require(pan).balance

    def statement(self, pan: str, depth: int = 10) -> list[wire.TxnRecord]:
        """Most recent deposits/withdrawals for one card, oldest first.

        Rebuilt from the journal on demand; desk-scale journals make the
        rescan cheap.
        """
        with self._lock:
            self._require(pan)
            self._fh.flush()
            records: list[wire.TxnRecord] = []
            with open(self._path, "r", encoding="ascii", errors="replace") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.endswith("\n"):
                        break
                    seq, ts_ms, kind, fields = _parse_line(line.rstrip("\n"), lineno)
                    if kind in ("DEP", "WDR") and fields[0] == pan:
                        rk = wire.RecordKind.DEPOSIT if kind == "DEP" else wire.RecordKind.WITHDRAW
                        records.append(
                            wire.TxnRecord(seq, rk, int(fields[1]), int(fields[2]), ts_ms)
                        )
            return records[-depth:]

    def _require(self, pan: str) -> Cardholder:
        card = self._cards.get(pan)
        if card is None:
            raise UnknownCard(f"no such card: {pan}")
        return card

"""Binary wire protocol between terminals and the authorization switch.

Frames carry a fixed header (magic, version, message type, payload length),
a typed payload, and a CRC-16/CCITT-FALSE over header plus payload.  All
multi-byte integers are big-endian.  Payload codecs live next to the frame
codec so a message can round-trip in one call.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .minutiae import FingerprintTemplate, Minutia, MinutiaKind, TemplateError

MAGIC = b"\xa7\x4d"
VERSION = 0x01
HEADER_LEN = 6  # magic(2) + version(1) + type(1) + length(2)
_HEADER_STRUCT = struct.Struct(">2sBBH")
_CRC_STRUCT = struct.Struct(">H")
MAX_PAYLOAD = 0xFFFF

TOKEN_LEN = 8
ZERO_TOKEN = bytes(TOKEN_LEN)
PIN_BLOCK_LEN = 8

_MINUTIA_STRUCT = struct.Struct(">HHHB")
_COUNT_STRUCT = struct.Struct(">H")
_RECORD_STRUCT = struct.Struct(">IBQQQ")


class FrameError(ValueError):
    """The buffer cannot be decoded as a valid frame."""


class IncompleteFrame(FrameError):
    """The buffer ends before the frame does; read more bytes and retry."""


class PayloadError(ValueError):
    """A structurally valid frame carries an undecodable payload."""


class MessageType(IntEnum):
    AUTH_CARD_REQ = 0x01
    AUTH_CARD_RESP = 0x02
    BIO_VERIFY_REQ = 0x03
    BIO_VERIFY_RESP = 0x04
    TXN_REQ = 0x05
    TXN_RESP = 0x06
    END_SESSION = 0x07
    ERR = 0x7F


class ResponseCode(IntEnum):
    APPROVED = 0x00
    INVALID_CARD = 0x01
    INVALID_PIN = 0x02
    PIN_TRIES_EXCEEDED = 0x03
    BIOMETRIC_MISMATCH = 0x04
    INSUFFICIENT_FUNDS = 0x05
    INVALID_SESSION = 0x06
    CARD_BLOCKED = 0x07
    MALFORMED = 0x08
    NOT_DISPENSABLE = 0x09


_CODE_NAMES = {
    ResponseCode.APPROVED: "Approved",
    ResponseCode.INVALID_CARD: "InvalidCard",
    ResponseCode.INVALID_PIN: "InvalidPin",
    ResponseCode.PIN_TRIES_EXCEEDED: "PinTriesExceeded",
    ResponseCode.BIOMETRIC_MISMATCH: "BiometricMismatch",
    ResponseCode.INSUFFICIENT_FUNDS: "InsufficientFunds",
    ResponseCode.INVALID_SESSION: "InvalidSession",
    ResponseCode.CARD_BLOCKED: "CardBlocked",
    ResponseCode.MALFORMED: "Malformed",
    ResponseCode.NOT_DISPENSABLE: "NotDispensable",
}
_NAME_CODES = {name: code for code, name in _CODE_NAMES.items()}


def code_name(code: ResponseCode) -> str:
    return _CODE_NAMES[code]


def code_from_name(name: str) -> ResponseCode:
    try:
        return _NAME_CODES[name]
    except KeyError:
        raise ValueError(f"unknown response code name: {name!r}") from None


class TxnType(IntEnum):
    WITHDRAW = 1
    DEPOSIT = 2
    BALANCE = 3
    STATEMENT = 4


class RecordKind(IntEnum):
    WITHDRAW = 1
    DEPOSIT = 2


# ---------------------------------------------------------------------------
# CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, xorout 0

def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


# ---------------------------------------------------------------------------
# Frame codec

@dataclass(frozen=True)
class Frame:
    msg_type: MessageType
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not isinstance(self.msg_type, MessageType):
            raise FrameError(f"bad message type: {self.msg_type!r}")
        if len(self.payload) > MAX_PAYLOAD:
            raise FrameError(f"payload too long: {len(self.payload)}")


def encode_frame(frame: Frame) -> bytes:
    head = _HEADER_STRUCT.pack(MAGIC, VERSION, frame.msg_type, len(frame.payload))
    body = head + frame.payload
    return body + _CRC_STRUCT.pack(crc16(body))


def decode_frame(buf: bytes, offset: int = 0) -> tuple[Frame, int]:
    """Decode one frame starting at offset; return (frame, bytes consumed).

    Raises IncompleteFrame when the buffer ends mid-frame (callers keep the
    bytes and retry after the next read) and FrameError for anything
    invalid.  Checks run magic, version, length, CRC, then message type, so
    a corrupt frame is reported by its outermost defect.
    """
    avail = len(buf) - offset
    if avail < HEADER_LEN:
        raise IncompleteFrame(f"need {HEADER_LEN} header bytes, have {avail}")
    magic, version, raw_type, length = _HEADER_STRUCT.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FrameError(f"bad magic: {magic.hex()}")
    if version != VERSION:
        raise FrameError(f"unsupported version: {version:#04x}")
    total = HEADER_LEN + length + 2
    if avail < total:
        raise IncompleteFrame(f"need {total} bytes, have {avail}")
    body_end = offset + HEADER_LEN + length
    (got_crc,) = _CRC_STRUCT.unpack_from(buf, body_end)
    want_crc = crc16(buf[offset:body_end])
    if got_crc != want_crc:
        raise FrameError(f"crc mismatch: got {got_crc:#06x}, want {want_crc:#06x}")
    try:
        msg_type = MessageType(raw_type)
    except ValueError:
        raise FrameError(f"unknown message type: {raw_type:#04x}") from None
    return Frame(msg_type, bytes(buf[offset + HEADER_LEN : body_end])), total


# ---------------------------------------------------------------------------
# PIN block (format 0 style: PIN field XOR PAN field)

PIN_MIN_LEN = 4
PIN_MAX_LEN = 6
PAN_MIN_LEN = 11
PAN_MAX_LEN = 19


def valid_pin(pin: str) -> bool:
    return PIN_MIN_LEN <= len(pin) <= PIN_MAX_LEN and pin.isascii() and pin.isdigit()


def valid_pan_shape(pan: str) -> bool:
    """Digit-count check only; Luhn validity is the vault's concern."""
    return PAN_MIN_LEN <= len(pan) <= PAN_MAX_LEN and pan.isascii() and pan.isdigit()


def _pin_field(pin: str) -> int:
    if not valid_pin(pin):
        raise PayloadError(f"PIN must be {PIN_MIN_LEN}..{PIN_MAX_LEN} ASCII digits")
    nibbles = f"0{len(pin):X}{pin}".ljust(16, "F")
    return int(nibbles, 16)


def _pan_field(pan: str) -> int:
    if not valid_pan_shape(pan):
        raise PayloadError(f"PAN must be {PAN_MIN_LEN}..{PAN_MAX_LEN} ASCII digits")
    # rightmost 12 digits excluding the check digit, left-padded with zeros
    tail = pan[:-1][-12:].rjust(12, "0")
    return int("0000" + tail, 16)


def encode_pin_block(pin: str, pan: str) -> bytes:
    return (_pin_field(pin) ^ _pan_field(pan)).to_bytes(8, "big")


def extract_pin(block: bytes, pan: str) -> str:
    if len(block) != PIN_BLOCK_LEN:
        raise PayloadError(f"PIN block must be {PIN_BLOCK_LEN} bytes")
    clear = int.from_bytes(block, "big") ^ _pan_field(pan)
    nibbles = f"{clear:016X}"
    if nibbles[0] != "0":
        raise PayloadError("PIN block format marker is not 0")
    length = int(nibbles[1], 16)
    if not PIN_MIN_LEN <= length <= PIN_MAX_LEN:
        raise PayloadError(f"PIN length nibble out of range: {length}")
    pin, fill = nibbles[2 : 2 + length], nibbles[2 + length :]
    if not pin.isdigit():
        raise PayloadError("PIN digits are not decimal")
    if fill != "F" * len(fill):
        raise PayloadError("PIN block fill is not all F")
    return pin


# ---------------------------------------------------------------------------
# Minutiae codec (x u16, y u16, angle u16, kind u8)

_KIND_TO_BYTE = {MinutiaKind.RIDGE_ENDING: 0, MinutiaKind.BIFURCATION: 1}
_BYTE_TO_KIND = {0: MinutiaKind.RIDGE_ENDING, 1: MinutiaKind.BIFURCATION}


def encode_minutiae(template: FingerprintTemplate) -> bytes:
    parts = [_COUNT_STRUCT.pack(len(template))]
    for m in template.minutiae:
        parts.append(_MINUTIA_STRUCT.pack(m.x, m.y, m.angle, _KIND_TO_BYTE[m.kind]))
    return b"".join(parts)


def decode_minutiae(data: bytes, offset: int = 0) -> tuple[FingerprintTemplate, int]:
    if len(data) - offset < _COUNT_STRUCT.size:
        raise PayloadError("minutiae block shorter than its count field")
    (count,) = _COUNT_STRUCT.unpack_from(data, offset)
    pos = offset + _COUNT_STRUCT.size
    need = count * _MINUTIA_STRUCT.size
    if len(data) - pos < need:
        raise PayloadError(f"minutiae block truncated: {count} promised")
    minutiae = []
    for _ in range(count):
        x, y, angle, kind_byte = _MINUTIA_STRUCT.unpack_from(data, pos)
        pos += _MINUTIA_STRUCT.size
        kind = _BYTE_TO_KIND.get(kind_byte)
        if kind is None:
            raise PayloadError(f"unknown minutia kind byte: {kind_byte:#04x}")
        try:
            minutiae.append(Minutia(x, y, angle, kind))
        except TemplateError as exc:
            raise PayloadError(str(exc)) from None
    try:
        return FingerprintTemplate(tuple(minutiae)), pos - offset
    except TemplateError as exc:
        raise PayloadError(str(exc)) from None


# ---------------------------------------------------------------------------
# Message payloads

@dataclass(frozen=True)
class AuthCardReq:
    pan: str
    pin_block: bytes
    MSG_TYPE = MessageType.AUTH_CARD_REQ

    def __post_init__(self) -> None:
        if not valid_pan_shape(self.pan):
            raise PayloadError(f"PAN must be {PAN_MIN_LEN}..{PAN_MAX_LEN} ASCII digits")
        if len(self.pin_block) != PIN_BLOCK_LEN:
            raise PayloadError(f"PIN block must be {PIN_BLOCK_LEN} bytes")


@dataclass(frozen=True)
class AuthCardResp:
    code: ResponseCode
    token: bytes = ZERO_TOKEN
    retries_remaining: int = 0
    MSG_TYPE = MessageType.AUTH_CARD_RESP

    def __post_init__(self) -> None:
        if len(self.token) != TOKEN_LEN:
            raise PayloadError(f"token must be {TOKEN_LEN} bytes")
        if not 0 <= self.retries_remaining <= 0xFF:
            raise PayloadError("retries_remaining must fit a byte")


@dataclass(frozen=True)
class BioVerifyReq:
    token: bytes
    template: FingerprintTemplate
    MSG_TYPE = MessageType.BIO_VERIFY_REQ

    def __post_init__(self) -> None:
        if len(self.token) != TOKEN_LEN:
            raise PayloadError(f"token must be {TOKEN_LEN} bytes")


@dataclass(frozen=True)
class BioVerifyResp:
    code: ResponseCode
    score_milli: int = 0
    MSG_TYPE = MessageType.BIO_VERIFY_RESP

    def __post_init__(self) -> None:
        if not 0 <= self.score_milli <= 1000:
            raise PayloadError(f"score_milli out of range: {self.score_milli}")


@dataclass(frozen=True)
class TxnReq:
    token: bytes
    txn_type: TxnType
    amount: int = 0
    MSG_TYPE = MessageType.TXN_REQ

    def __post_init__(self) -> None:
        if len(self.token) != TOKEN_LEN:
            raise PayloadError(f"token must be {TOKEN_LEN} bytes")
        if not 0 <= self.amount <= 0xFFFF_FFFF_FFFF_FFFF:
            raise PayloadError("amount must fit an unsigned 64-bit field")


@dataclass(frozen=True)
class TxnRecord:
    seq: int
    kind: RecordKind
    amount: int
    resulting_balance: int
    timestamp_ms: int


@dataclass(frozen=True)
class TxnResp:
    code: ResponseCode
    balance: int = 0
    records: tuple[TxnRecord, ...] = ()
    MSG_TYPE = MessageType.TXN_RESP

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.records) > 0xFF:
            raise PayloadError("too many records for one response")


@dataclass(frozen=True)
class EndSession:
    token: bytes
    MSG_TYPE = MessageType.END_SESSION

    def __post_init__(self) -> None:
        if len(self.token) != TOKEN_LEN:
            raise PayloadError(f"token must be {TOKEN_LEN} bytes")


@dataclass(frozen=True)
class Status:
    code: ResponseCode
    MSG_TYPE = MessageType.ERR


Message = AuthCardReq | AuthCardResp | BioVerifyReq | BioVerifyResp | TxnReq | TxnResp | EndSession | Status


def encode_payload(msg: Message) -> bytes:
    if isinstance(msg, AuthCardReq):
        pan = msg.pan.encode("ascii")
        return struct.pack(">B", len(pan)) + pan + msg.pin_block
    if isinstance(msg, AuthCardResp):
        return struct.pack(">B", msg.code) + msg.token + struct.pack(">B", msg.retries_remaining)
    if isinstance(msg, BioVerifyReq):
        return msg.token + encode_minutiae(msg.template)
    if isinstance(msg, BioVerifyResp):
        return struct.pack(">BH", msg.code, msg.score_milli)
    if isinstance(msg, TxnReq):
        return msg.token + struct.pack(">BQ", msg.txn_type, msg.amount)
    if isinstance(msg, TxnResp):
        head = struct.pack(">BQB", msg.code, msg.balance, len(msg.records))
        recs = b"".join(
            _RECORD_STRUCT.pack(r.seq, r.kind, r.amount, r.resulting_balance, r.timestamp_ms)
            for r in msg.records
        )
        return head + recs
    if isinstance(msg, EndSession):
        return msg.token
    if isinstance(msg, Status):
        return struct.pack(">B", msg.code)
    raise PayloadError(f"unencodable message: {msg!r}")


def _decode_code(byte: int) -> ResponseCode:
    try:
        return ResponseCode(byte)
    except ValueError:
        raise PayloadError(f"unknown response code: {byte:#04x}") from None


def decode_payload(msg_type: MessageType, payload: bytes) -> Message:
    try:
        return _DECODERS[msg_type](payload)
    except struct.error as exc:
        raise PayloadError(f"short {msg_type.name} payload: {exc}") from None


def _decode_auth_card_req(payload: bytes) -> AuthCardReq:
    if len(payload) < 1:
        raise PayloadError("empty AUTH_CARD_REQ payload")
    pan_len = payload[0]
    if len(payload) != 1 + pan_len + PIN_BLOCK_LEN:
        raise PayloadError(f"AUTH_CARD_REQ length mismatch: pan_len={pan_len}")
    try:
        pan = payload[1 : 1 + pan_len].decode("ascii")
    except UnicodeDecodeError:
        raise PayloadError("PAN is not ASCII") from None
    return AuthCardReq(pan, payload[1 + pan_len :])


def _decode_auth_card_resp(payload: bytes) -> AuthCardResp:
    if len(payload) != 1 + TOKEN_LEN + 1:
        raise PayloadError(f"AUTH_CARD_RESP must be {1 + TOKEN_LEN + 1} bytes")
    return AuthCardResp(_decode_code(payload[0]), payload[1 : 1 + TOKEN_LEN], payload[-1])


def _decode_bio_verify_req(payload: bytes) -> BioVerifyReq:
    if len(payload) < TOKEN_LEN:
        raise PayloadError("BIO_VERIFY_REQ shorter than its token")
    template, used = decode_minutiae(payload, TOKEN_LEN)
    if TOKEN_LEN + used != len(payload):
        raise PayloadError("trailing bytes after minutiae block")
    return BioVerifyReq(payload[:TOKEN_LEN], template)


def _decode_bio_verify_resp(payload: bytes) -> BioVerifyResp:
    if len(payload) != 3:
        raise PayloadError("BIO_VERIFY_RESP must be 3 bytes")
    code_byte, score = struct.unpack(">BH", payload)
    return BioVerifyResp(_decode_code(code_byte), score)


def _decode_txn_req(payload: bytes) -> TxnReq:
    if len(payload) != TOKEN_LEN + 9:
        raise PayloadError(f"TXN_REQ must be {TOKEN_LEN + 9} bytes")
    type_byte, amount = struct.unpack_from(">BQ", payload, TOKEN_LEN)
    try:
        txn_type = TxnType(type_byte)
    except ValueError:
        raise PayloadError(f"unknown transaction type: {type_byte:#04x}") from None
    return TxnReq(payload[:TOKEN_LEN], txn_type, amount)


def _decode_txn_resp(payload: bytes) -> TxnResp:
    if len(payload) < 10:
        raise PayloadError("TXN_RESP shorter than its fixed fields")
    code_byte, balance, count = struct.unpack_from(">BQB", payload, 0)
    pos = 10
    if len(payload) != pos + count * _RECORD_STRUCT.size:
        raise PayloadError(f"TXN_RESP length mismatch: {count} records promised")
    records = []
    for _ in range(count):
        seq, kind_byte, amount, resulting, ts = _RECORD_STRUCT.unpack_from(payload, pos)
        pos += _RECORD_STRUCT.size
        try:
            kind = RecordKind(kind_byte)
        except ValueError:
            raise PayloadError(f"unknown record kind: {kind_byte:#04x}") from None
        records.append(TxnRecord(seq, kind, amount, resulting, ts))
    return TxnResp(_decode_code(code_byte), balance, tuple(records))


def _decode_end_session(payload: bytes) -> EndSession:
    if len(payload) != TOKEN_LEN:
        raise PayloadError(f"END_SESSION must be {TOKEN_LEN} bytes")
    return EndSession(payload)


def _decode_status(payload: bytes) -> Status:
    if len(payload) != 1:
        raise PayloadError("status payload must be 1 byte")
    return Status(_decode_code(payload[0]))


_DECODERS = {
    MessageType.AUTH_CARD_REQ: _decode_auth_card_req,
    MessageType.AUTH_CARD_RESP: _decode_auth_card_resp,
    MessageType.BIO_VERIFY_REQ: _decode_bio_verify_req,
    MessageType.BIO_VERIFY_RESP: _decode_bio_verify_resp,
    MessageType.TXN_REQ: _decode_txn_req,
    MessageType.TXN_RESP: _decode_txn_resp,
    MessageType.END_SESSION: _decode_end_session,
    MessageType.ERR: _decode_status,
}


def encode_message(msg: Message) -> bytes:
    """Serialize a message as one complete frame."""
    return encode_frame(Frame(msg.MSG_TYPE, encode_payload(msg)))


def decode_message(buf: bytes, offset: int = 0) -> tuple[Message, int]:
    """Decode one framed message; return (message, bytes consumed)."""
    frame, used = decode_frame(buf, offset)
    return decode_payload(frame.msg_type, frame.payload), used

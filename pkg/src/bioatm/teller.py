"""Terminal-side client: the ATM machine's half of the wire protocol.

One TellerSession drives both the scripted and interactive modes, so the
bytes on the wire are the same regardless of how the actions were produced.
Scripts are line-oriented: `ACTION [arg] [EXPECT Code]` with `#` comments.
"""

from __future__ import annotations

import argparse
import getpass
import socket
import sys
from dataclasses import dataclass
from typing import Callable, TextIO

from . import wire
from .minutiae import TemplateError, load_template
from .switch.config import ConfigError, split_addr

EXIT_OK = 0
EXIT_CONNECT = 2
EXIT_PARSE = 3
EXIT_EXPECT = 4
EXIT_CONNECTION_LOST = 5

_RECV_CHUNK = 4096

# trace callback: (direction "send"|"recv", message, frame bytes)
TraceHook = Callable[[str, wire.Message, bytes], None]


class TellerError(Exception):
    pass


class ConnectionLost(TellerError):
    pass


class ScriptError(TellerError):
    pass


class ExpectationFailed(TellerError):
    pass


def response_code(msg: wire.Message) -> wire.ResponseCode:
    code = getattr(msg, "code", None)
    if code is None:
        raise TellerError(f"message carries no response code: {type(msg).__name__}")
    return code


class TellerSession:
    """One connection to the switch; tracks pan and session token locally."""

    def __init__(self, addr: tuple[str, int], trace: TraceHook | None = None):
        try:
            self._sock = socket.create_connection(addr, timeout=30)
        except OSError as exc:
            raise ConnectionLost(f"cannot connect to {addr[0]}:{addr[1]}: {exc}") from None
        self._buf = b""
        self._trace = trace
        self.pan: str | None = None
        self.token: bytes = wire.ZERO_TOKEN

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "TellerSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- wire --------------------------------------------------------------

    def _roundtrip(self, msg: wire.Message) -> wire.Message:
        raw = wire.encode_message(msg)
        if self._trace is not None:
            self._trace("send", msg, raw)
        try:
            self._sock.sendall(raw)
        except OSError as exc:
            raise ConnectionLost(f"send failed: {exc}") from None
        while True:
            try:
                resp, consumed = wire.decode_message(self._buf)
            except wire.IncompleteFrame:
                try:
                    chunk = self._sock.recv(_RECV_CHUNK)
                except OSError as exc:
                    raise ConnectionLost(f"receive failed: {exc}") from None
                if not chunk:
                    raise ConnectionLost("switch closed the connection")
                self._buf += chunk
                continue
            except wire.FrameError as exc:
                raise ConnectionLost(f"undecodable response: {exc}") from None
            self._buf = self._buf[consumed:]
            if self._trace is not None:
                self._trace("recv", resp, wire.encode_message(resp))
            return resp

    # -- actions -----------------------------------------------------------

    def card(self, pan: str) -> None:
        """Remember the inserted card; nothing goes on the wire until PIN."""
        self.pan = pan

    def pin(self, digits: str) -> wire.AuthCardResp:
        if self.pan is None:
            raise TellerError("no card inserted")
        req = wire.AuthCardReq(self.pan, wire.encode_pin_block(digits, self.pan))
        resp = self._roundtrip(req)
        if isinstance(resp, wire.AuthCardResp) and resp.code is wire.ResponseCode.APPROVED:
            self.token = resp.token
        return resp

    def fingerprint(self, template_path: str) -> wire.BioVerifyResp:
        template = load_template(template_path)
        return self._roundtrip(wire.BioVerifyReq(self.token, template))

    def withdraw(self, amount: int) -> wire.TxnResp:
        return self._roundtrip(wire.TxnReq(self.token, wire.TxnType.WITHDRAW, amount))

    def deposit(self, amount: int) -> wire.TxnResp:
        return self._roundtrip(wire.TxnReq(self.token, wire.TxnType.DEPOSIT, amount))

    def balance(self) -> wire.TxnResp:
        return self._roundtrip(wire.TxnReq(self.token, wire.TxnType.BALANCE, 0))

    def statement(self) -> wire.TxnResp:
        return self._roundtrip(wire.TxnReq(self.token, wire.TxnType.STATEMENT, 0))

    def end(self) -> wire.Message:
        return self._roundtrip(wire.EndSession(self.token))


# ---------------------------------------------------------------------------
# Script mode

@dataclass(frozen=True)
class ScriptStep:
    lineno: int
    action: str
    arg: str | None
    expect: wire.ResponseCode | None


_NO_ARG = frozenset({"BALANCE", "END"})
_INT_ARG = frozenset({"WITHDRAW", "DEPOSIT"})
_STR_ARG = frozenset({"CARD", "PIN", "FINGERPRINT"})
_OPT_INT_ARG = frozenset({"STATEMENT"})
_ACTIONS = _NO_ARG | _INT_ARG | _STR_ARG | _OPT_INT_ARG


def parse_script(text: str) -> list[ScriptStep]:
    steps = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        action = parts[0].upper()
        if action not in _ACTIONS:
            raise ScriptError(f"line {lineno}: unknown action {parts[0]!r}")
        rest = parts[1:]
        expect = None
        if len(rest) >= 2 and rest[-2].upper() == "EXPECT":
            try:
                expect = wire.code_from_name(rest[-1])
            except ValueError as exc:
                raise ScriptError(f"line {lineno}: {exc}") from None
            rest = rest[:-2]
        if action in _NO_ARG and rest:
            raise ScriptError(f"line {lineno}: {action} takes no argument")
        if action in _STR_ARG and len(rest) != 1:
            raise ScriptError(f"line {lineno}: {action} takes one argument")
        if action in _INT_ARG and (len(rest) != 1 or not rest[0].isdigit()):
            raise ScriptError(f"line {lineno}: {action} takes one integer amount")
        if action in _OPT_INT_ARG:
            if len(rest) > 1 or (rest and not rest[0].isdigit()):
                raise ScriptError(f"line {lineno}: {action} takes at most one integer")
        steps.append(ScriptStep(lineno, action, rest[0] if rest else None, expect))
    return steps


def _describe(resp: wire.Message) -> str:
    code = wire.code_name(response_code(resp))
    if isinstance(resp, wire.AuthCardResp):
        return f"{code} retries_remaining={resp.retries_remaining}"
    if isinstance(resp, wire.BioVerifyResp):
        return f"{code} score={resp.score_milli / 1000:.3f}"
    if isinstance(resp, wire.TxnResp):
        out = f"{code} balance={resp.balance}"
        if resp.records:
            out += f" records={len(resp.records)}"
        return out
    return code


def run_script(
    addr: tuple[str, int], steps: list[ScriptStep], out: TextIO, trace: TraceHook | None = None
) -> int:
    """Execute steps in order; stop at the first unmet expectation."""
    with TellerSession(addr, trace) as session:
        for step in steps:
            resp = _execute(session, step, out)
            if resp is None:
                continue
            print(f"< {_describe(resp)}", file=out)
            if step.expect is not None and response_code(resp) is not step.expect:
                raise ExpectationFailed(
                    f"line {step.lineno}: expected {wire.code_name(step.expect)}, "
                    f"got {wire.code_name(response_code(resp))}"
                )
    return EXIT_OK


def _execute(session: TellerSession, step: ScriptStep, out: TextIO) -> wire.Message | None:
    a = step.action
    if a == "CARD":
        session.card(step.arg)
        print(f"> card {step.arg}", file=out)
        return None
    if a == "PIN":
        print("> pin ****", file=out)
        return session.pin(step.arg)
    if a == "FINGERPRINT":
        print(f"> fingerprint {step.arg}", file=out)
        return session.fingerprint(step.arg)
    if a == "WITHDRAW":
        print(f"> withdraw {step.arg}", file=out)
        return session.withdraw(int(step.arg))
    if a == "DEPOSIT":
        print(f"> deposit {step.arg}", file=out)
        return session.deposit(int(step.arg))
    if a == "BALANCE":
        print("> balance", file=out)
        return session.balance()
    if a == "STATEMENT":
        print("> statement", file=out)
        resp = session.statement()
        limit = int(step.arg) if step.arg else len(resp.records)
        for rec in resp.records[-limit:] if limit else []:
            kind = "withdraw" if rec.kind is wire.RecordKind.WITHDRAW else "deposit"
            print(f"  #{rec.seq} {kind} {rec.amount} -> {rec.resulting_balance}", file=out)
        return resp
    print("> end", file=out)
    return session.end()


# ---------------------------------------------------------------------------
# Interactive mode

_MENU = """
  1) withdraw
  2) deposit
  3) balance
  4) statement
  5) exit
"""


def run_interactive(addr: tuple[str, int], out: TextIO = sys.stdout) -> int:
    """Prompted session mirroring the script actions one-to-one.

    Every user answer is routed through the same TellerSession methods the
    script runner uses, so both modes emit identical wire bytes for
    identical inputs.
    """
    try:
        with TellerSession(addr) as session:
            print("Welcome. Insert your card.", file=out)
            if not _interactive_auth(session, out):
                return EXIT_OK
            if not _interactive_bio(session, out):
                return EXIT_OK
            _interactive_menu(session, out)
            return EXIT_OK
    except ConnectionLost as exc:
        print(f"Connection lost: {exc}", file=out)
        return EXIT_CONNECTION_LOST


def _interactive_auth(session: TellerSession, out: TextIO) -> bool:
    while True:
        session.card(input("Card number: ").strip())
        resp = session.pin(getpass.getpass("PIN: "))
        code = resp.code
        if code is wire.ResponseCode.APPROVED:
            print("Card and PIN accepted.", file=out)
            return True
        if code is wire.ResponseCode.INVALID_PIN:
            print(
                f"Invalid PIN. {resp.retries_remaining} tries remaining; please retry.",
                file=out,
            )
        elif code is wire.ResponseCode.INVALID_CARD:
            print("Invalid card number; please retry.", file=out)
        else:
            print(f"Access denied: {wire.code_name(code)}.", file=out)
            return False


def _interactive_bio(session: TellerSession, out: TextIO) -> bool:
    while True:
        path = input("Fingerprint sample file: ").strip()
        try:
            resp = session.fingerprint(path)
        except (OSError, TemplateError) as exc:
            print(f"Cannot read sample: {exc}", file=out)
            continue
        if resp.code is wire.ResponseCode.APPROVED:
            print("Fingerprint verified.", file=out)
            return True
        print("Access denied: fingerprint does not match. Logging off.", file=out)
        session.end()
        return False


def _interactive_menu(session: TellerSession, out: TextIO) -> None:
    while True:
        print(_MENU, file=out)
        choice = input("Select: ").strip()
        if choice == "1" or choice == "2":
            raw = input("Amount (minor units): ").strip()
            if not raw.isdigit():
                print("Amounts are positive integers.", file=out)
                continue
            resp = session.withdraw(int(raw)) if choice == "1" else session.deposit(int(raw))
            if resp.code is wire.ResponseCode.APPROVED:
                verb = "Withdrawal" if choice == "1" else "Deposit"
                print(f"{verb} successful. New balance: {resp.balance}", file=out)
            else:
                print(f"Declined: {wire.code_name(resp.code)}.", file=out)
        elif choice == "3":
            print(f"Balance: {session.balance().balance}", file=out)
        elif choice == "4":
            resp = session.statement()
            if not resp.records:
                print("No transactions yet.", file=out)
            for rec in resp.records:
                kind = "withdraw" if rec.kind is wire.RecordKind.WITHDRAW else "deposit"
                print(f"  #{rec.seq} {kind} {rec.amount} -> {rec.resulting_balance}", file=out)
        elif choice == "5":
            session.end()
            print("Goodbye.", file=out)
            return
        else:
            print("Choose 1-5.", file=out)


# ---------------------------------------------------------------------------
# CLI

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="teller", description="ATM terminal client")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a script file")
    run.add_argument("--addr", required=True, metavar="HOST:PORT")
    run.add_argument("--script", required=True, metavar="FILE")
    inter = sub.add_parser("interactive", help="prompted session")
    inter.add_argument("--addr", required=True, metavar="HOST:PORT")
    args = parser.parse_args(argv)

    try:
        addr = split_addr(args.addr)
    except ConfigError as exc:
        print(f"teller: {exc}", file=sys.stderr)
        return EXIT_PARSE

    if args.command == "interactive":
        return run_interactive(addr)

    try:
        with open(args.script, "r", encoding="utf-8") as fh:
            steps = parse_script(fh.read())
    except OSError as exc:
        print(f"teller: cannot read script: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScriptError as exc:
        print(f"teller: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        return run_script(addr, steps, sys.stdout)
    except ExpectationFailed as exc:
        print(f"teller: {exc}", file=sys.stderr)
        return EXIT_EXPECT
    except ConnectionLost as exc:
        print(f"teller: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except (OSError, TemplateError, wire.PayloadError, TellerError) as exc:
        print(f"teller: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())

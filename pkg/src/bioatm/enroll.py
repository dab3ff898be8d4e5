"""Bank-operator CLI: enrollment, card status, demo seeding, calibration.

All journal-touching commands run offline against the data directory and
take the same file lock the switch holds while serving, so operator writes
and live traffic can never interleave.  `seed` builds a deterministic demo
population and prints the only copy of its PINs; `eval` sweeps FAR/FRR for
threshold calibration.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from contextlib import contextmanager

from filelock import FileLock, Timeout as LockTimeout

from . import minutiae as mi
from . import vault as vault_mod
from .minutiae import TemplateError, load_template, save_template
from .switch.server import JOURNAL_FILENAME, LOCK_FILENAME, SAMPLES_DIRNAME
from .vault import DuplicateCard, LuhnError, UnknownCard, Vault, VaultError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DUPLICATE = 3
EXIT_BAD_TEMPLATE = 4
EXIT_LOCKED = 5
EXIT_NOT_EMPTY = 6

# fixed clock for seeded journals so equal seeds give byte-identical files
SEED_CLOCK_MS = 1_262_304_000_000

_ROSTER_BANNER = (
    "# WARNING: demo credentials. PINs are printed once, here, and stored\n"
    "# nowhere; capture this roster now if you need it."
)


@contextmanager
def _locked_vault(data_dir: str, clock=None, fsync: bool = True):
    os.makedirs(data_dir, exist_ok=True)
    lock = FileLock(os.path.join(data_dir, LOCK_FILENAME))
    try:
        lock.acquire(timeout=0)
    except LockTimeout:
        raise SystemExit(_fail(EXIT_LOCKED, "journal locked (switch running?)")) from None
    try:
        with Vault(os.path.join(data_dir, JOURNAL_FILENAME), clock=clock, fsync=fsync) as v:
            yield v
    finally:
        lock.release()


def _fail(code: int, message: str) -> int:
    print(f"enroll: {message}", file=sys.stderr)
    return code


def cmd_add(args) -> int:
    try:
        template = load_template(args.template)
    except (OSError, TemplateError) as exc:
        return _fail(EXIT_BAD_TEMPLATE, f"bad template: {exc}")
    try:
        with _locked_vault(args.data_dir) as vault:
            card = vault.enroll(args.pan, args.pin, template, args.balance)
    except LuhnError as exc:
        return _fail(EXIT_INVALID, f"invalid card number: {exc}")
    except DuplicateCard as exc:
        return _fail(EXIT_DUPLICATE, str(exc))
    except VaultError as exc:
        return _fail(EXIT_INVALID, str(exc))
    print(f"enrolled {card.pan} as account {card.account_id}, balance {card.balance}")
    return EXIT_OK


def _roster_pans(rng: random.Random, count: int) -> list[str]:
    pans: list[str] = []
    seen = set()
    while len(pans) < count:
        partial = str(rng.randint(1, 9)) + "".join(str(rng.randint(0, 9)) for _ in range(14))
        pan = partial + vault_mod.luhn_check_digit(partial)
        if pan in seen:
            continue
        seen.add(pan)
        pans.append(pan)
    return pans


def cmd_seed(args) -> int:
    journal_path = os.path.join(args.data_dir, JOURNAL_FILENAME)
    if os.path.exists(journal_path) and os.path.getsize(journal_path) > 0:
        return _fail(EXIT_NOT_EMPTY, f"data dir already holds a journal: {journal_path}")

    cfg = mi.SyntheticConfig(
        seed=args.seed, n_subjects=args.subjects, samples_per_subject=args.samples
    )
    population = mi.synthesize_population(cfg)
    rng = random.Random(f"roster:{args.seed}")
    pans = _roster_pans(rng, args.subjects)
    pins = [f"{rng.randrange(10_000):04d}" for _ in range(args.subjects)]
    balances = [rng.randint(2, 20) * 50_000 for _ in range(args.subjects)]

    samples_dir = os.path.join(args.data_dir, SAMPLES_DIRNAME)
    os.makedirs(samples_dir, exist_ok=True)
    rows = []
    with _locked_vault(args.data_dir, clock=lambda: SEED_CLOCK_MS, fsync=False) as vault:
        for (label, samples), pan, pin, balance in zip(population, pans, pins, balances):
            for k, sample in enumerate(samples):
                save_template(sample, os.path.join(samples_dir, f"{label}_{k}.mnt"))
            salt = rng.randbytes(vault_mod.SALT_LEN)
            card = vault.enroll(pan, pin, samples[0], balance, salt=salt)
            rows.append((label, pan, pin, card.account_id, balance))

    print(_ROSTER_BANNER)
    print("label|pan|pin|account_id|balance")
    for row in rows:
        print("|".join(str(v) for v in row))
    return EXIT_OK


def cmd_block(args) -> int:
    return _set_status(args, block=True)


def cmd_unblock(args) -> int:
    return _set_status(args, block=False)


def _set_status(args, block: bool) -> int:
    try:
        with _locked_vault(args.data_dir) as vault:
            if block:
                vault.block(args.pan)
            else:
                vault.unblock(args.pan)
    except UnknownCard as exc:
        return _fail(EXIT_INVALID, str(exc))
    print(f"{'blocked' if block else 'unblocked'} {args.pan}")
    return EXIT_OK


def cmd_list(args) -> int:
    with _locked_vault(args.data_dir) as vault:
        print("pan|account_id|status|balance|template_id")
        for pan in vault.pans():
            card = vault.lookup(pan)
            status = "Blocked" if card.blocked else "Active"
            print(f"{card.pan}|{card.account_id}|{status}|{card.balance}|{card.template_id}")
    return EXIT_OK


def format_roc_rows(rows) -> list[str]:
    return [f"{r.threshold:.4f}|{r.far:.6f}|{r.frr:.6f}" for r in rows]


def _parse_thresholds(text: str | None):
    if text is None:
        return mi.DEFAULT_THRESHOLDS
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise SystemExit(_fail(EXIT_INVALID, f"bad thresholds list: {text!r}")) from None


def cmd_eval(args) -> int:
    cfg = mi.SyntheticConfig(
        seed=args.seed,
        n_subjects=args.subjects,
        samples_per_subject=args.samples,
        minutiae_per_subject=args.minutiae,
    )
    params = mi.MatchParams(args.dmax, args.atol, args.rot_limit)
    thresholds = _parse_thresholds(args.thresholds)
    try:
        rows = mi.evaluate_far_frr(mi.synthesize_population(cfg), params, thresholds)
    except (mi.EvaluationError, mi.SynthesisError, ValueError) as exc:
        return _fail(EXIT_INVALID, str(exc))
    print("threshold|FAR|FRR")
    for line in format_roc_rows(rows):
        print(line)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="enroll", description="bank-operator tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    add = sub.add_parser("add", help="enroll one cardholder")
    add.add_argument("--data-dir", required=True)
    add.add_argument("--pan", required=True)
    add.add_argument("--pin", required=True)
    add.add_argument("--template", required=True, help="MINUTIAE v1 file")
    add.add_argument("--balance", type=int, default=0, help="opening balance, minor units")
    add.set_defaults(func=cmd_add)

    seed = sub.add_parser("seed", help="create a deterministic demo population")
    seed.add_argument("--data-dir", required=True)
    seed.add_argument("--seed", type=int, default=42)
    seed.add_argument("--subjects", type=int, default=8)
    seed.add_argument("--samples", type=int, default=3, help="fingerprint samples per subject")
    seed.set_defaults(func=cmd_seed)

    block = sub.add_parser("block", help="block a card")
    block.add_argument("--data-dir", required=True)
    block.add_argument("--pan", required=True)
    block.set_defaults(func=cmd_block)

    unblock = sub.add_parser("unblock", help="unblock a card and reset its PIN counter")
    unblock.add_argument("--data-dir", required=True)
    unblock.add_argument("--pan", required=True)
    unblock.set_defaults(func=cmd_unblock)

    lst = sub.add_parser("list", help="list enrolled cards (never PINs)")
    lst.add_argument("--data-dir", required=True)
    lst.set_defaults(func=cmd_list)

    ev = sub.add_parser("eval", help="FAR/FRR threshold sweep on synthetic data")
    ev.add_argument("--seed", type=int, default=42)
    ev.add_argument("--subjects", type=int, default=50)
    ev.add_argument("--samples", type=int, default=5)
    ev.add_argument("--minutiae", type=int, default=40)
    ev.add_argument("--dmax", type=float, default=12.0)
    ev.add_argument("--atol", type=float, default=20.0)
    ev.add_argument("--rot-limit", type=float, default=45.0)
    ev.add_argument("--thresholds", help="comma-separated ascending list in [0,1]")
    ev.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())

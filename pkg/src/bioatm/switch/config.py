"""Switch configuration: defaults, `key = value` config files, CLI flags."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, replace

from ..minutiae import MatchParams, DEFAULT_THRESHOLD

# Default ports spell the frame magic 0xA74D (42829) and its successor.
DEFAULT_LISTEN_ADDR = "127.0.0.1:42829"
DEFAULT_HTTP_ADDR = "127.0.0.1:42830"


class ConfigError(ValueError):
    """Unusable configuration file, key, or value."""


@dataclass(frozen=True)
class SwitchConfig:
    listen_addr: str = DEFAULT_LISTEN_ADDR
    http_addr: str = DEFAULT_HTTP_ADDR
    data_dir: str = "data"
    match_threshold: float = DEFAULT_THRESHOLD
    match_dmax: float = 12.0
    match_atol: float = 20.0
    match_rot_limit: float = 45.0
    pin_max_tries: int = 3
    bio_max_tries: int = 1
    session_timeout_secs: float = 90.0
    dispense_multiple: int = 50_000
    kiosk_dir: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.match_threshold <= 1.0:
            raise ConfigError("match.threshold must lie in [0, 1]")
        MatchParams(self.match_dmax, self.match_atol, self.match_rot_limit)
        if self.pin_max_tries < 1:
            raise ConfigError("pin.max_tries must be at least 1")
        if self.bio_max_tries < 1:
            raise ConfigError("bio.max_tries must be at least 1")
        if self.session_timeout_secs <= 0:
            raise ConfigError("session.timeout_secs must be positive")
        if self.dispense_multiple < 1:
            raise ConfigError("dispense.multiple must be at least 1")
        for name in ("listen_addr", "http_addr"):
            split_addr(getattr(self, name))

    @property
    def match_params(self) -> MatchParams:
        return MatchParams(self.match_dmax, self.match_atol, self.match_rot_limit)


def split_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address must be host:port, got {addr!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ConfigError(f"bad port in address {addr!r}") from None
    if not 0 <= port_num <= 65535:
        raise ConfigError(f"port out of range in address {addr!r}")
    return host, port_num


_KEY_FIELDS = {
    "listen_addr": ("listen_addr", str),
    "http_addr": ("http_addr", str),
    "data_dir": ("data_dir", str),
    "match.threshold": ("match_threshold", float),
    "match.dmax": ("match_dmax", float),
    "match.atol": ("match_atol", float),
    "match.rot_limit": ("match_rot_limit", float),
    "pin.max_tries": ("pin_max_tries", int),
    "bio.max_tries": ("bio_max_tries", int),
    "session.timeout_secs": ("session_timeout_secs", float),
    "dispense.multiple": ("dispense_multiple", int),
    "kiosk.dir": ("kiosk_dir", str),
}


def parse_config_text(text: str, base: SwitchConfig | None = None) -> SwitchConfig:
    """Apply `key = value` lines (# comments, blank lines allowed) to base."""
    overrides = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        try:
            field, cast = _KEY_FIELDS[key]
        except KeyError:
            raise ConfigError(f"line {lineno}: unknown key {key!r}") from None
        try:
            overrides[field] = cast(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    try:
        return replace(base if base is not None else SwitchConfig(), **overrides)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, base: SwitchConfig | None = None) -> SwitchConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def config_from_args(argv: list[str] | None = None) -> SwitchConfig:
    parser = argparse.ArgumentParser(
        prog="switchd", description="ATM authorization switch"
    )
    parser.add_argument("--config", metavar="PATH", help="config file of key = value lines")
    parser.add_argument("--listen", metavar="ADDR", help="binary protocol host:port")
    parser.add_argument("--http", metavar="ADDR", help="JSON gateway host:port")
    parser.add_argument("--data-dir", metavar="PATH", help="journal and samples directory")
    args = parser.parse_args(argv)
    cfg = SwitchConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    if args.listen:
        overrides["listen_addr"] = args.listen
    if args.http:
        overrides["http_addr"] = args.http
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg

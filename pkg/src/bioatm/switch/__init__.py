"""Authorization switch: session state machine plus TCP/HTTP front ends."""

from .config import ConfigError, SwitchConfig, config_from_args, load_config, parse_config_text
from .session import AuditEvent, AuditKind, Session, SessionPhase, expire, transition
from .server import Switch, SwitchService, main

__all__ = [
    "AuditEvent",
    "AuditKind",
    "ConfigError",
    "Session",
    "SessionPhase",
    "Switch",
    "SwitchConfig",
    "SwitchService",
    "config_from_args",
    "expire",
    "load_config",
    "main",
    "parse_config_text",
    "transition",
]

"""Shared fixtures: populations, vaults, live switches, evaluation cache."""

from __future__ import annotations

import os
import secrets
import threading
import time

import pytest

from bioatm import minutiae as mi
from bioatm.switch import Switch, SwitchConfig
from bioatm.switch.server import JOURNAL_FILENAME, SAMPLES_DIRNAME
from bioatm.vault import Vault

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

# well-known Luhn-valid card numbers used across the suite
PAN_A = "79927398713"
PAN_B = "4111111111111111"
PIN_A = "1234"
PIN_B = "8642"


def fixture_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


@pytest.fixture(scope="session")
def small_population():
    """Two subjects, three samples each; cheap enough for most tests."""
    cfg = mi.SyntheticConfig(seed=5, n_subjects=2, samples_per_subject=3)
    return mi.synthesize_population(cfg)


@pytest.fixture(scope="session")
def eval_scores():
    """Genuine/impostor scores for the default 50x5 population, computed once.

    Session-scoped because the sweep is the most expensive computation in the
    suite; every consumer derives its numbers from this single run.  Returns
    (genuine, impostor, elapsed_secs) so callers can hold it to a budget.
    """
    start = time.monotonic()
    population = mi.synthesize_population(mi.SyntheticConfig())
    genuine, impostor = mi.genuine_impostor_scores(population)
    return genuine, impostor, time.monotonic() - start


@pytest.fixture
def vault_factory(tmp_path):
    """Create vaults in the test's tmp dir; closes them at teardown."""
    opened = []
    counter = [0]

    def make(clock=None, fsync=True, max_tries=3, name=None):
        if name is None:
            counter[0] += 1
            name = f"journal{counter[0]}.log"
        v = Vault(tmp_path / name, max_tries=max_tries, clock=clock, fsync=fsync)
        opened.append(v)
        return v

    yield make
    for v in opened:
        v.close()


def make_switch_config(data_dir, **overrides) -> SwitchConfig:
    defaults = dict(
        listen_addr="127.0.0.1:0",
        http_addr="127.0.0.1:0",
        data_dir=os.fspath(data_dir),
        dispense_multiple=1000,
    )
    defaults.update(overrides)
    return SwitchConfig(**defaults)


@pytest.fixture
def live_switch(tmp_path, small_population):
    """A running switch over a one-card vault; yields (switch, context dict)."""
    data_dir = tmp_path / "data"
    samples_dir = data_dir / SAMPLES_DIRNAME
    samples_dir.mkdir(parents=True)
    label, samples = small_population[0]
    _, other_samples = small_population[1]
    with Vault(data_dir / JOURNAL_FILENAME) as v:
        v.enroll(PAN_A, PIN_A, samples[0], opening_balance=10_000)
    mi.save_template(samples[1], samples_dir / "genuine.mnt")
    mi.save_template(other_samples[0], samples_dir / "impostor.mnt")

    switch = Switch(make_switch_config(data_dir))
    switch.start()
    ctx = {
        "data_dir": data_dir,
        "genuine": samples_dir / "genuine.mnt",
        "impostor": samples_dir / "impostor.mnt",
        "template": samples[0],
        "genuine_template": samples[1],
        "impostor_template": other_samples[0],
    }
    try:
        yield switch, ctx
    finally:
        switch.stop()


def boot_switch(tmp_path, template, token_source=None, **overrides):
    """Start a switch over a fresh one-card vault; caller stops it."""
    data_dir = tmp_path / "data"
    (data_dir / SAMPLES_DIRNAME).mkdir(parents=True)
    with Vault(data_dir / JOURNAL_FILENAME) as v:
        v.enroll(PAN_A, PIN_A, template, opening_balance=10_000)
    mi.save_template(template, data_dir / SAMPLES_DIRNAME / "self.mnt")
    switch = Switch(make_switch_config(data_dir, **overrides))
    if token_source is not None:
        switch.service._token_source = token_source
    switch.start()
    return switch


class SequentialTokens:
    """Deterministic token source for transition-level tests."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def __call__(self) -> bytes:
        with self._lock:
            self._n += 1
            return self._n.to_bytes(8, "big")


def random_token() -> bytes:
    return secrets.token_bytes(8)

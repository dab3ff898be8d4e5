"""Fingerprint templates and the matching pipeline built on them.

A template is an ordered set of minutiae (ridge endings and bifurcations) on a
1000x1000 sensor grid.  Matching aligns a live probe against an enrolled
gallery template by trying every pairwise rotation hypothesis and counting
tolerantly-paired minutiae.  The module also carries a synthetic population
generator (stand-in for sensor hardware) and a FAR/FRR sweep used to calibrate
the accept threshold.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

FIELD_MIN = 0
FIELD_MAX = 1000
FIELD_CENTER = 500.0
MAX_MINUTIAE = 200

DEFAULT_DMAX = 12.0
DEFAULT_ATOL = 20.0
DEFAULT_ROT_LIMIT = 45.0
DEFAULT_THRESHOLD = 0.4

# Base minutiae are kept at least two distance tolerances apart so distinct
# points cannot be confused at match time.
MIN_SEPARATION = 2 * DEFAULT_DMAX

_SAMPLING_LO = 100
_SAMPLING_HI = 900
_MAX_REJECTIONS = 10_000

DEFAULT_THRESHOLDS = tuple(i / 20 for i in range(21))


class TemplateError(ValueError):
    """Malformed template text or contents violating template invariants."""


class SynthesisError(ValueError):
    """The synthetic generator cannot satisfy its placement constraints."""


class EvaluationError(ValueError):
    """Invalid inputs to the FAR/FRR sweep."""


class MinutiaKind(Enum):
    RIDGE_ENDING = "E"
    BIFURCATION = "B"


@dataclass(frozen=True)
class Minutia:
    x: int
    y: int
    angle: int
    kind: MinutiaKind

    def __post_init__(self) -> None:
        if not (FIELD_MIN <= self.x <= FIELD_MAX and FIELD_MIN <= self.y <= FIELD_MAX):
            raise TemplateError(f"minutia position out of range: ({self.x}, {self.y})")
        if not 0 <= self.angle <= 359:
            raise TemplateError(f"minutia angle out of range: {self.angle}")
        if not isinstance(self.kind, MinutiaKind):
            raise TemplateError(f"bad minutia kind: {self.kind!r}")


@dataclass(frozen=True)
class FingerprintTemplate:
    minutiae: tuple[Minutia, ...]
    subject_label: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        n = len(self.minutiae)
        if not 1 <= n <= MAX_MINUTIAE:
            raise TemplateError(f"template must hold 1..{MAX_MINUTIAE} minutiae, got {n}")
        seen: set[tuple[int, int]] = set()
        for m in self.minutiae:
            if (m.x, m.y) in seen:
                raise TemplateError(f"duplicate minutia position ({m.x}, {m.y})")
            seen.add((m.x, m.y))

    def __len__(self) -> int:
        return len(self.minutiae)


# ---------------------------------------------------------------------------
# Text format

_HEADER_RE = re.compile(r"^MINUTIAE v1 (0|[1-9][0-9]*)$")
_RECORD_RE = re.compile(r"^([0-9]+) ([0-9]+) ([0-9]+) ([EB])$")


def parse_template(text: str, subject_label: str | None = None) -> FingerprintTemplate:
    """Parse the MINUTIAE v1 text format.

    Line 1 is ``MINUTIAE v1 <count>``; each of the following count lines is
    ``<x> <y> <angle> <E|B>`` (single spaces, LF endings).  Trailing
    whitespace at the end of the document is tolerated.
    """
    lines = text.split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    if not lines:
        raise TemplateError("empty template document")
    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise TemplateError(f"malformed header: {lines[0]!r}")
    count = int(header.group(1))
    records = lines[1:]
    if len(records) != count:
        raise TemplateError(f"header promises {count} records, file holds {len(records)}")
    minutiae = []
    for lineno, line in enumerate(records, start=2):
        rec = _RECORD_RE.match(line)
        if rec is None:
            raise TemplateError(f"malformed record on line {lineno}: {line!r}")
        x, y, angle = int(rec.group(1)), int(rec.group(2)), int(rec.group(3))
        kind = MinutiaKind(rec.group(4))
        try:
            minutiae.append(Minutia(x, y, angle, kind))
        except TemplateError as exc:
            raise TemplateError(f"line {lineno}: {exc}") from None
    return FingerprintTemplate(tuple(minutiae), subject_label)


def serialize_template(template: FingerprintTemplate) -> str:
    lines = [f"MINUTIAE v1 {len(template)}"]
    for m in template.minutiae:
        lines.append(f"{m.x} {m.y} {m.angle} {m.kind.value}")
    return "\n".join(lines) + "\n"


def load_template(path, subject_label: str | None = None) -> FingerprintTemplate:
    with open(path, "r", encoding="ascii") as fh:
        return parse_template(fh.read(), subject_label)


def save_template(template: FingerprintTemplate, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(serialize_template(template))


# ---------------------------------------------------------------------------
# Rigid motion

def _iround(v: float) -> int:
    # nearest integer, halves toward +inf; deterministic across platforms
    return int(math.floor(v + 0.5))


def _clamp(v: int) -> int:
    return min(max(v, FIELD_MIN), FIELD_MAX)


def _nudge_free(x: int, y: int, used: set[tuple[int, int]]) -> tuple[int, int]:
    # Collisions (e.g. after clamping) move the later minutia +1 in x,
    # wrapping at the field edge; terminates because a row can never be full.
    while (x, y) in used:
        x = x + 1 if x < FIELD_MAX else FIELD_MIN
    return x, y


def rigid_transform(
    template: FingerprintTemplate, theta_deg: float, dx: int, dy: int
) -> FingerprintTemplate:
    """Rotate about the field center (500,500), then translate by (dx, dy).

    Coordinates are rounded to the nearest integer and clamped to the field;
    each angle advances by round(theta) mod 360.  Kinds are unchanged.
    """
    rad = math.radians(theta_deg)
    c, s = math.cos(rad), math.sin(rad)
    dangle = _iround(theta_deg)
    used: set[tuple[int, int]] = set()
    out = []
    for m in template.minutiae:
        rx, ry = m.x - FIELD_CENTER, m.y - FIELD_CENTER
        x = _clamp(_iround(FIELD_CENTER + rx * c - ry * s + dx))
        y = _clamp(_iround(FIELD_CENTER + rx * s + ry * c + dy))
        x, y = _nudge_free(x, y, used)
        used.add((x, y))
        out.append(Minutia(x, y, (m.angle + dangle) % 360, m.kind))
    return FingerprintTemplate(tuple(out), template.subject_label)


# ---------------------------------------------------------------------------
# Matching

@dataclass(frozen=True)
class MatchParams:
    dmax: float = DEFAULT_DMAX
    atol: float = DEFAULT_ATOL
    rot_limit: float = DEFAULT_ROT_LIMIT

    def __post_init__(self) -> None:
        if self.dmax <= 0:
            raise ValueError("dmax must be positive")
        if not 0 < self.atol < 90:
            raise ValueError("atol must lie in (0, 90)")
        if not 0 <= self.rot_limit <= 180:
            raise ValueError("rot_limit must lie in [0, 180]")


@dataclass(frozen=True)
class MatchResult:
    score: float
    matched_count: int
    best_rotation_deg: float
    best_translation: tuple[float, float]


def match_templates(
    probe: FingerprintTemplate,
    gallery: FingerprintTemplate,
    params: MatchParams | None = None,
) -> MatchResult:
    """Score a probe template against a gallery template.

    Every same-kind pair (p, g) proposes an alignment: rotate by the circular
    angle difference g.angle - p.angle (skipped beyond rot_limit) and
    translate so the rotated p lands exactly on g.  Under each hypothesis,
    probe minutiae pair greedily with gallery minutiae of equal kind within
    dmax distance and atol angular difference, candidates ordered by
    (distance, probe index, gallery index), each minutia used at most once.
    The score is 2*M / (|probe| + |gallery|) for the best hypothesis; among
    equal scores the hypothesis reached first (probe index major, gallery
    index minor) wins.  The winning alignment is reported as a rotation about
    the field center followed by a translation.
    """
    if params is None:
        params = MatchParams()
    n, m = len(probe), len(gallery)
    pxy = np.array([(mi.x, mi.y) for mi in probe.minutiae], dtype=float)
    gxy = np.array([(mi.x, mi.y) for mi in gallery.minutiae], dtype=float)
    pang = np.array([mi.angle for mi in probe.minutiae], dtype=float)
    gang = np.array([mi.angle for mi in gallery.minutiae], dtype=float)
    pkind = np.array([mi.kind is MinutiaKind.RIDGE_ENDING for mi in probe.minutiae])
    gkind = np.array([mi.kind is MinutiaKind.RIDGE_ENDING for mi in gallery.minutiae])

    kind_ok = pkind[:, None] == gkind[None, :]
    # rotation hypothesis per pair, normalized to (-180, 180]
    dtheta = np.mod(gang[None, :] - pang[:, None], 360.0)
    dtheta = np.where(dtheta > 180.0, dtheta - 360.0, dtheta)
    hyp_ok = kind_ok & (np.abs(dtheta) <= params.rot_limit)

    angdiff_base = pang[:, None] - gang[None, :]
    gg = np.einsum("ij,ij->i", gxy, gxy)
    dmax2 = params.dmax * params.dmax
    max_pairs = min(n, m)

    best_m = 0
    best_hyp: tuple[int, int, float] | None = None
    for pi, gi in np.argwhere(hyp_ok):
        theta = float(dtheta[pi, gi])
        rad = math.radians(theta)
        c, s = math.cos(rad), math.sin(rad)
        rot = np.array(((c, s), (-s, c)))  # right-multiplied transpose
        moved = (pxy - pxy[pi]) @ rot + gxy[gi]
        d2 = np.einsum("ij,ij->i", moved, moved)[:, None] - 2.0 * (moved @ gxy.T) + gg[None, :]
        adiff = np.abs(np.mod(angdiff_base + theta + 180.0, 360.0) - 180.0)
        cand = kind_ok & (d2 <= dmax2) & (adiff <= params.atol)
        bound = min(int(cand.any(axis=1).sum()), int(cand.any(axis=0).sum()))
        if bound <= best_m:
            continue
        ii, jj = np.nonzero(cand)
        order = np.lexsort((jj, ii, d2[ii, jj]))
        p_used = np.zeros(n, dtype=bool)
        g_used = np.zeros(m, dtype=bool)
        paired = 0
        for k in order:
            i, j = ii[k], jj[k]
            if p_used[i] or g_used[j]:
                continue
            p_used[i] = g_used[j] = True
            paired += 1
        if paired > best_m:
            best_m = paired
            best_hyp = (int(pi), int(gi), theta)
            if paired == max_pairs:
                break

    score = 2.0 * best_m / (n + m)
    if best_hyp is None:
        return MatchResult(0.0, 0, 0.0, (0.0, 0.0))
    pi, gi, theta = best_hyp
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    px, py = pxy[pi] - FIELD_CENTER
    tx = gxy[gi][0] - (FIELD_CENTER + px * c - py * s)
    ty = gxy[gi][1] - (FIELD_CENTER + px * s + py * c)
    return MatchResult(score, best_m, theta, (float(tx), float(ty)))


def decide(result: MatchResult, threshold: float) -> bool:
    """Accept when the match score reaches the threshold (inclusive)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold out of range: {threshold}")
    return result.score >= threshold


# ---------------------------------------------------------------------------
# Synthetic population

@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 42
    n_subjects: int = 50
    samples_per_subject: int = 5
    minutiae_per_subject: int = 40
    position_jitter_sigma: float = 3.0
    angle_jitter_sigma: float = 5.0
    dropout_prob: float = 0.1
    spurious_count: int = 2
    rotation_range_deg: float = 30.0
    translation_range: int = 50

    def __post_init__(self) -> None:
        if self.n_subjects < 1 or self.samples_per_subject < 1:
            raise ValueError("population must have at least one subject and sample")
        if not 1 <= self.minutiae_per_subject <= MAX_MINUTIAE:
            raise ValueError("minutiae_per_subject out of range")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.position_jitter_sigma < 0 or self.angle_jitter_sigma < 0:
            raise ValueError("jitter sigmas must be non-negative")
        if self.spurious_count < 0 or self.translation_range < 0:
            raise ValueError("spurious_count and translation_range must be non-negative")
        if self.rotation_range_deg < 0:
            raise ValueError("rotation_range_deg must be non-negative")


Population = list[tuple[str, list[FingerprintTemplate]]]


def _random_base(rng: random.Random, count: int, label: str) -> FingerprintTemplate:
    placed: list[tuple[int, int]] = []
    minutiae = []
    rejections = 0
    min_sep2 = MIN_SEPARATION * MIN_SEPARATION
    while len(minutiae) < count:
        x = rng.randint(_SAMPLING_LO, _SAMPLING_HI)
        y = rng.randint(_SAMPLING_LO, _SAMPLING_HI)
        if any((x - ox) ** 2 + (y - oy) ** 2 < min_sep2 for ox, oy in placed):
            rejections += 1
            if rejections > _MAX_REJECTIONS:
                raise SynthesisError(
                    f"cannot place {count} minutiae with separation {MIN_SEPARATION}"
                )
            continue
        angle = rng.randint(0, 359)
        kind = MinutiaKind.RIDGE_ENDING if rng.random() < 0.5 else MinutiaKind.BIFURCATION
        placed.append((x, y))
        minutiae.append(Minutia(x, y, angle, kind))
    return FingerprintTemplate(tuple(minutiae), label)


def _derive_sample(
    rng: random.Random, base: FingerprintTemplate, cfg: SyntheticConfig
) -> FingerprintTemplate:
    theta = rng.uniform(-cfg.rotation_range_deg, cfg.rotation_range_deg)
    dx = rng.randint(-cfg.translation_range, cfg.translation_range)
    dy = rng.randint(-cfg.translation_range, cfg.translation_range)
    moved = rigid_transform(base, theta, dx, dy)

    raw: list[tuple[int, int, int, MinutiaKind]] = []
    for m in moved.minutiae:
        jx = rng.gauss(0.0, cfg.position_jitter_sigma)
        jy = rng.gauss(0.0, cfg.position_jitter_sigma)
        ja = rng.gauss(0.0, cfg.angle_jitter_sigma)
        dropped = rng.random() < cfg.dropout_prob
        if dropped:
            continue
        x = _clamp(_iround(m.x + jx))
        y = _clamp(_iround(m.y + jy))
        raw.append((x, y, (m.angle + _iround(ja)) % 360, m.kind))
    for _ in range(cfg.spurious_count):
        x = rng.randint(_SAMPLING_LO, _SAMPLING_HI)
        y = rng.randint(_SAMPLING_LO, _SAMPLING_HI)
        angle = rng.randint(0, 359)
        kind = MinutiaKind.RIDGE_ENDING if rng.random() < 0.5 else MinutiaKind.BIFURCATION
        raw.append((x, y, angle, kind))
    if not raw:
        # total dropout with no spurious points; keep one minutia so the
        # sample stays a valid template
        m = moved.minutiae[0]
        raw.append((m.x, m.y, m.angle, m.kind))

    used: set[tuple[int, int]] = set()
    minutiae = []
    for x, y, angle, kind in raw:
        x, y = _nudge_free(x, y, used)
        used.add((x, y))
        minutiae.append(Minutia(x, y, angle, kind))
    return FingerprintTemplate(tuple(minutiae), base.subject_label)


def synthesize_population(cfg: SyntheticConfig) -> Population:
    """Generate a deterministic population of subjects with noisy samples.

    Each subject gets a well-separated base template; each sample is a random
    rotation + translation of it with Gaussian position/angle jitter,
    independent dropout, and a few spurious minutiae.  The same seed always
    yields the same population.
    """
    rng = random.Random(cfg.seed)
    population: Population = []
    for si in range(cfg.n_subjects):
        label = f"s{si:03d}"
        base = _random_base(rng, cfg.minutiae_per_subject, label)
        samples = [_derive_sample(rng, base, cfg) for _ in range(cfg.samples_per_subject)]
        population.append((label, samples))
    return population


# ---------------------------------------------------------------------------
# FAR / FRR evaluation

@dataclass(frozen=True)
class RocRow:
    threshold: float
    far: float
    frr: float


def genuine_impostor_scores(
    dataset: Population,
    params: MatchParams | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> tuple[list[float], list[float]]:
    """Match scores for all genuine and impostor trials of a population.

    Genuine trials are all ordered within-subject sample pairs (i != j);
    impostor trials pit the first sample of each subject against the first
    sample of every other subject.
    """
    if len(dataset) < 2:
        raise EvaluationError("need at least two subjects")
    genuine: list[float] = []
    impostor: list[float] = []
    total = sum(len(s) * (len(s) - 1) for _, s in dataset) + len(dataset) * (len(dataset) - 1)
    done = 0
    for _, samples in dataset:
        for i, probe in enumerate(samples):
            for j, gal in enumerate(samples):
                if i == j:
                    continue
                genuine.append(match_templates(probe, gal, params).score)
                done += 1
                if progress is not None:
                    progress(done, total)
    firsts = [samples[0] for _, samples in dataset]
    for a, probe in enumerate(firsts):
        for b, gal in enumerate(firsts):
            if a == b:
                continue
            impostor.append(match_templates(probe, gal, params).score)
            done += 1
            if progress is not None:
                progress(done, total)
    return genuine, impostor


def roc_from_scores(
    genuine: Sequence[float], impostor: Sequence[float], thresholds: Iterable[float]
) -> list[RocRow]:
    ts = list(thresholds)
    if not ts:
        raise EvaluationError("no thresholds given")
    if any(not 0.0 <= t <= 1.0 for t in ts):
        raise EvaluationError("thresholds must lie in [0, 1]")
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise EvaluationError("thresholds must ascend")
    rows = []
    for t in ts:
        far = sum(1 for s in impostor if s >= t) / len(impostor)
        frr = sum(1 for s in genuine if s < t) / len(genuine)
        rows.append(RocRow(t, far, frr))
    return rows


def evaluate_far_frr(
    dataset: Population,
    params: MatchParams | None = None,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> list[RocRow]:
    genuine, impostor = genuine_impostor_scores(dataset, params)
    return roc_from_scores(genuine, impostor, thresholds)

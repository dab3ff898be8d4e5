"""Templates, rigid motion, matcher (with brute-force oracle), synthesis, ROC."""

import math
import random

import pytest

from bioatm import minutiae as mi
from bioatm.minutiae import (
    FingerprintTemplate,
    MatchParams,
    Minutia,
    MinutiaKind,
    SyntheticConfig,
    TemplateError,
)

RANDOM_SEED = 0x5EED
E, B = MinutiaKind.RIDGE_ENDING, MinutiaKind.BIFURCATION


def T(*points) -> FingerprintTemplate:
    return FingerprintTemplate(tuple(Minutia(*p) for p in points))


# ---------------------------------------------------------------------------
# Oracle: exhaustive hypothesis enumeration + maximum bipartite matching

def _circular_diff(a: float, b: float) -> float:
    d = (a - b) % 360.0
    return d - 360.0 if d > 180.0 else d


def _max_matching(candidates: list[list[int]], n_right: int) -> int:
    """Kuhn's augmenting-path maximum matching; exact on these tiny graphs."""
    match_right = [-1] * n_right

    def try_assign(i: int, seen: list[bool]) -> bool:
        for j in candidates[i]:
            if not seen[j]:
                seen[j] = True
                if match_right[j] == -1 or try_assign(match_right[j], seen):
                    match_right[j] = i
                    return True
        return False

    total = 0
    for i in range(len(candidates)):
        if try_assign(i, [False] * n_right):
            total += 1
    return total


def oracle_best_match(probe, gallery, params: MatchParams) -> int:
    """Best pairing count over all hypotheses, using optimal (not greedy) pairing."""
    best = 0
    for p in probe.minutiae:
        for g in gallery.minutiae:
            if p.kind is not g.kind:
                continue
            theta = _circular_diff(g.angle, p.angle)
            if abs(theta) > params.rot_limit:
                continue
            rad = math.radians(theta)
            c, s = math.cos(rad), math.sin(rad)
            candidates = []
            for pm in probe.minutiae:
                rx, ry = pm.x - p.x, pm.y - p.y
                mx, my = g.x + rx * c - ry * s, g.y + rx * s + ry * c
                row = []
                for j, gm in enumerate(gallery.minutiae):
                    if pm.kind is not gm.kind:
                        continue
                    if (mx - gm.x) ** 2 + (my - gm.y) ** 2 > params.dmax**2:
                        continue
                    if abs(_circular_diff(pm.angle + theta, gm.angle)) > params.atol:
                        continue
                    row.append(j)
                candidates.append(row)
            best = max(best, _max_matching(candidates, len(gallery.minutiae)))
    return best


# ---------------------------------------------------------------------------
# Template model and text format

def test_minutia_range_checks():
    with pytest.raises(TemplateError):
        Minutia(1001, 0, 0, E)
    with pytest.raises(TemplateError):
        Minutia(0, -1, 0, E)
    with pytest.raises(TemplateError):
        Minutia(0, 0, 360, E)


def test_template_size_and_distinctness_invariants():
    with pytest.raises(TemplateError):
        FingerprintTemplate(())
    with pytest.raises(TemplateError):
        FingerprintTemplate(tuple(Minutia(i % 1000, i // 1000, 0, E) for i in range(201)))
    with pytest.raises(TemplateError):
        T((10, 20, 90, E), (10, 20, 45, B))


def test_parse_single_record():
    t = mi.parse_template("MINUTIAE v1 1\n10 20 90 E\n")
    assert t.minutiae == (Minutia(10, 20, 90, E),)


def test_parse_rejects_malformed_inputs():
    bad = [
        "",
        "MINUTIAE v2 1\n10 20 90 E\n",
        "MINUTIAE v1 2\n10 20 90 E\n",  # count mismatch
        "MINUTIAE v1 1\n10 20 90 X\n",
        "MINUTIAE v1 1\n10  20 90 E\n",  # double space
        "MINUTIAE v1 1\n10 20 400 E\n",
        "MINUTIAE v1 2\n10 20 90 E\n10 20 45 B\n",  # duplicate position
        "MINUTIAE v1 0\n",  # empty template
    ]
    for text in bad:
        with pytest.raises(TemplateError):
            mi.parse_template(text)


def test_parse_tolerates_trailing_whitespace_only():
    t = mi.parse_template("MINUTIAE v1 1\n10 20 90 E\n\n  \n")
    assert len(t) == 1


def test_serialize_parse_roundtrip(small_population):
    for _, samples in small_population:
        for sample in samples:
            text = mi.serialize_template(sample)
            again = mi.parse_template(text, sample.subject_label)
            assert again == sample
            assert mi.serialize_template(again) == text


# ---------------------------------------------------------------------------
# Rigid motion

def test_rigid_identity():
    t = T((10, 20, 90, E), (600, 400, 0, B))
    assert mi.rigid_transform(t, 0, 0, 0) == t


def test_rigid_center_is_rotation_fixed():
    t = T((500, 500, 10, E))
    moved = mi.rigid_transform(t, 90, 0, 0)
    assert moved.minutiae == (Minutia(500, 500, 100, E),)


def test_rigid_quarter_turn_example():
    t = T((600, 500, 0, E))
    moved = mi.rigid_transform(t, 90, 0, 0)
    assert moved.minutiae == (Minutia(500, 600, 90, E),)


def test_rigid_translation_only():
    t = T((100, 200, 45, B))
    moved = mi.rigid_transform(t, 0, 30, -40)
    assert moved.minutiae == (Minutia(130, 160, 45, B),)


def test_rigid_clamps_to_field():
    t = T((990, 990, 0, E))
    moved = mi.rigid_transform(t, 0, 100, 100)
    assert moved.minutiae == (Minutia(1000, 1000, 0, E),)


def test_rigid_collision_nudges_later_minutia():
    t = T((990, 500, 0, E), (995, 500, 0, B))
    moved = mi.rigid_transform(t, 0, 50, 0)
    # both clamp to x=1000; the later one steps +1 and wraps to 0
    assert moved.minutiae[0] == Minutia(1000, 500, 0, E)
    assert moved.minutiae[1] == Minutia(0, 500, 0, B)


def test_rigid_angle_wraps_mod_360():
    t = T((500, 500, 350, E))
    assert mi.rigid_transform(t, 20, 0, 0).minutiae[0].angle == 10


# ---------------------------------------------------------------------------
# Matcher

def test_self_match_is_perfect(small_population):
    for _, samples in small_population:
        t = samples[0]
        result = mi.match_templates(t, t)
        assert result.score == 1.0
        assert result.matched_count == len(t)
        assert result.best_rotation_deg == 0.0


def test_translation_invariance(small_population):
    t = small_population[0][1][0]
    moved = mi.rigid_transform(t, 0, 37, -14)
    result = mi.match_templates(t, moved)
    assert result.score == 1.0
    assert result.best_translation == pytest.approx((37.0, -14.0))


def rotation_safe_template(rng: random.Random, count: int) -> FingerprintTemplate:
    """Points within 350 of center stay unclamped under any rotation."""
    pts: list[tuple[int, int]] = []
    while len(pts) < count:
        x, y = rng.randint(150, 850), rng.randint(150, 850)
        if (x - 500) ** 2 + (y - 500) ** 2 > 350**2:
            continue
        if any((x - a) ** 2 + (y - b) ** 2 < mi.MIN_SEPARATION**2 for a, b in pts):
            continue
        pts.append((x, y))
    return FingerprintTemplate(
        tuple(Minutia(x, y, rng.randint(0, 359), rng.choice((E, B))) for x, y in pts)
    )


def test_rotation_robustness_within_limit():
    t = rotation_safe_template(random.Random(RANDOM_SEED + 2), 20)
    for theta in (-45, -30, -7, 7, 30, 45):
        moved = mi.rigid_transform(t, theta, 0, 0)
        result = mi.match_templates(t, moved)
        assert result.score == 1.0, f"theta={theta}: {result}"
        assert result.best_rotation_deg == theta


def test_rotation_beyond_limit_fails_to_align():
    # angles all equal, so the only hypothesis rotation is the pose delta
    base = mi.synthesize_population(
        SyntheticConfig(seed=9, n_subjects=1, samples_per_subject=1, minutiae_per_subject=12,
                        rotation_range_deg=0, translation_range=0, position_jitter_sigma=0,
                        angle_jitter_sigma=0, dropout_prob=0, spurious_count=0)
    )[0][1][0]
    level = FingerprintTemplate(tuple(Minutia(m.x, m.y, 0, m.kind) for m in base.minutiae))
    moved = mi.rigid_transform(level, 90, 0, 0)
    result = mi.match_templates(level, moved, MatchParams(rot_limit=45))
    assert result.score < 1.0


def test_deletion_example_exact_score():
    base = mi.synthesize_population(
        SyntheticConfig(seed=11, n_subjects=1, samples_per_subject=1, minutiae_per_subject=30,
                        rotation_range_deg=0, translation_range=0, position_jitter_sigma=0,
                        angle_jitter_sigma=0, dropout_prob=0, spurious_count=0)
    )[0][1][0]
    gallery = FingerprintTemplate(base.minutiae[:-3])
    result = mi.match_templates(base, gallery)
    assert result.score == 2 * 27 / (30 + 27)
    assert result.matched_count == 27


def test_disjoint_kinds_never_match():
    a = T((100, 100, 0, E), (200, 200, 0, E))
    b = T((100, 100, 0, B), (200, 200, 0, B))
    result = mi.match_templates(a, b)
    assert result.score == 0.0
    assert result.matched_count == 0


def test_score_bounds_fuzz():
    rng = random.Random(RANDOM_SEED)
    kinds = (E, B)
    for _ in range(150):
        def rand_template():
            count = rng.randint(1, 12)
            pts = rng.sample([(x, y) for x in range(0, 1001, 13) for y in range(0, 1001, 13)], count)
            return FingerprintTemplate(
                tuple(Minutia(x, y, rng.randint(0, 359), rng.choice(kinds)) for x, y in pts)
            )
        p, g = rand_template(), rand_template()
        result = mi.match_templates(p, g)
        assert 0.0 <= result.score <= 1.0
        assert result.matched_count <= min(len(p), len(g))


def test_greedy_never_beats_optimal_and_mostly_ties():
    rng = random.Random(RANDOM_SEED + 1)
    params = MatchParams()
    trials, ties = 200, 0
    kinds = (E, B)
    for _ in range(trials):
        def rand_template():
            count = rng.randint(2, 10)
            pts = rng.sample([(x, y) for x in range(300, 701, 9) for y in range(300, 701, 9)], count)
            return FingerprintTemplate(
                tuple(Minutia(x, y, rng.randint(0, 359), rng.choice(kinds)) for x, y in pts)
            )
        p, g = rand_template(), rand_template()
        greedy = mi.match_templates(p, g, params).matched_count
        optimal = oracle_best_match(p, g, params)
        assert greedy <= optimal
        if greedy == optimal:
            ties += 1
    assert ties / trials >= 0.95


def test_decide_boundaries():
    perfect = mi.MatchResult(1.0, 5, 0.0, (0.0, 0.0))
    zero = mi.MatchResult(0.0, 0, 0.0, (0.0, 0.0))
    close = mi.MatchResult(0.39999, 4, 0.0, (0.0, 0.0))
    assert mi.decide(perfect, 0.4)
    assert mi.decide(zero, 0.0)
    assert not mi.decide(close, 0.4)
    with pytest.raises(ValueError):
        mi.decide(perfect, 1.5)


# ---------------------------------------------------------------------------
# Synthesis

def test_population_cardinality():
    pop = mi.synthesize_population(SyntheticConfig(seed=3, n_subjects=2, samples_per_subject=3))
    assert len(pop) == 2
    assert all(len(samples) == 3 for _, samples in pop)


def test_population_determinism():
    cfg = SyntheticConfig(seed=21, n_subjects=3, samples_per_subject=2)
    a, b = mi.synthesize_population(cfg), mi.synthesize_population(cfg)
    for (la, sa), (lb, sb) in zip(a, b):
        assert la == lb
        assert [mi.serialize_template(x) for x in sa] == [mi.serialize_template(x) for x in sb]


def test_population_seeds_differ():
    a = mi.synthesize_population(SyntheticConfig(seed=1, n_subjects=1, samples_per_subject=1))
    b = mi.synthesize_population(SyntheticConfig(seed=2, n_subjects=1, samples_per_subject=1))
    assert a[0][1][0] != b[0][1][0]


def test_noiseless_samples_equal_base():
    cfg = SyntheticConfig(seed=13, n_subjects=2, samples_per_subject=3,
                          position_jitter_sigma=0, angle_jitter_sigma=0,
                          dropout_prob=0, spurious_count=0,
                          rotation_range_deg=0, translation_range=0)
    for _, samples in mi.synthesize_population(cfg):
        assert all(s == samples[0] for s in samples)


def test_base_minutiae_separated():
    cfg = SyntheticConfig(seed=17, n_subjects=1, samples_per_subject=1,
                          position_jitter_sigma=0, angle_jitter_sigma=0,
                          dropout_prob=0, spurious_count=0,
                          rotation_range_deg=0, translation_range=0)
    base = mi.synthesize_population(cfg)[0][1][0]
    pts = [(m.x, m.y) for m in base.minutiae]
    for i, (ax, ay) in enumerate(pts):
        for bx, by in pts[i + 1 :]:
            assert (ax - bx) ** 2 + (ay - by) ** 2 >= mi.MIN_SEPARATION**2


def test_infeasible_separation_reports():
    # a count the field cannot hold at the enforced separation exhausts the
    # rejection budget before any template is built
    with pytest.raises(mi.SynthesisError):
        mi._random_base(random.Random(1), 2000, "dense")


# ---------------------------------------------------------------------------
# FAR / FRR

@pytest.fixture(scope="module")
def tiny_roc():
    cfg = SyntheticConfig(seed=5, n_subjects=3, samples_per_subject=2, minutiae_per_subject=12)
    population = mi.synthesize_population(cfg)
    return mi.evaluate_far_frr(population)


def test_roc_accept_all_boundary(tiny_roc):
    assert tiny_roc[0].threshold == 0.0
    assert tiny_roc[0].far == 1.0
    assert tiny_roc[0].frr == 0.0


def test_roc_monotonicity(tiny_roc):
    for lo, hi in zip(tiny_roc, tiny_roc[1:]):
        assert hi.far <= lo.far
        assert hi.frr >= lo.frr


def test_roc_trial_counts():
    cfg = SyntheticConfig(seed=5, n_subjects=3, samples_per_subject=2, minutiae_per_subject=12)
    population = mi.synthesize_population(cfg)
    genuine, impostor = mi.genuine_impostor_scores(population)
    assert len(genuine) == 3 * 2 * 1  # ordered within-subject pairs
    assert len(impostor) == 3 * 2  # ordered first-sample pairs


def test_roc_rejects_bad_inputs(small_population):
    with pytest.raises(mi.EvaluationError):
        mi.evaluate_far_frr(small_population[:1])
    with pytest.raises(mi.EvaluationError):
        mi.evaluate_far_frr(small_population, thresholds=[0.5, 0.4])
    with pytest.raises(mi.EvaluationError):
        mi.evaluate_far_frr(small_population, thresholds=[1.1])

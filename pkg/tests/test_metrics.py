import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msakit.annotations import Annotation, Segment, boundaries_of
from msakit.metrics import (
    EmptyReference,
    EvalConfig,
    PRF,
    boundary_hit_rate,
    chorus_boundary_hit_rate,
    chorus_pairwise_f1,
    chorus_runs,
    evaluate_corpus,
    evaluate_song,
    frame_accuracy,
    matching_count,
    pairwise_counts,
)
from msakit.taxonomy import StructuralFunction as SF

from conftest import random_annotation


# ---------------------------------------------------------------- oracles

def exhaustive_max_matching(ref, est, window):
    """Bitmask DP over est assignments; exponential-state but exact."""
    m = len(est)
    edges = [
        sum(1 << j for j in range(m) if abs(r - est[j]) <= window) for r in ref
    ]

    @functools.lru_cache(maxsize=None)
    def go(i, used):
        if i == len(ref):
            return 0
        best = go(i + 1, used)
        avail = edges[i] & ~used
        j = 0
        while avail:
            if avail & 1:
                best = max(best, 1 + go(i + 1, used | (1 << j)))
            avail >>= 1
            j += 1
        return best

    result = go(0, 0)
    go.cache_clear()
    return result


def pairwise_counts_bruteforce(ref_bin, est_bin):
    """Literal enumeration of all unordered frame pairs."""
    T = len(ref_bin)
    iu = np.triu_indices(T, k=1)
    ref_same = np.equal.outer(ref_bin, ref_bin)[iu]
    est_same = np.equal.outer(est_bin, est_bin)[iu]
    return int((ref_same & est_same).sum()), int(est_same.sum()), int(ref_same.sum())


def accuracy_bruteforce(ref, est, frame):
    """Literal per-center loop."""
    matches = total = 0
    n = int(min(ref.duration, est.duration) / frame + 1e-9)
    for i in range(n):
        c = (i + 0.5) * frame
        ref_label = next(
            (s.label for s in ref.segments if s.start <= c < s.end), None
        )
        if ref_label is None:
            continue
        est_label = next(
            (s.label for s in est.segments if s.start <= c < s.end), None
        )
        total += 1
        matches += int(est_label is ref_label)
    return matches / total


# ---------------------------------------------------------------- hit rate

def test_hit_rate_derived_fixture():
    prf = boundary_hit_rate([0, 10, 20, 30], [0, 10.3, 19.2, 30])
    # Oracle: exhaustive matching of <= 4 nodes gives 3 matches.
    assert exhaustive_max_matching([0, 10, 20, 30], [0, 10.3, 19.2, 30], 0.5) == 3
    assert prf.precision == pytest.approx(0.75, abs=1e-12)
    assert prf.recall == pytest.approx(0.75, abs=1e-12)
    assert prf.f1 == pytest.approx(0.75, abs=1e-12)


def test_hit_rate_identity():
    times = [0.0, 12.5, 40.0]
    assert boundary_hit_rate(times, times).f1 == 1.0


def test_hit_rate_optimal_not_greedy():
    # Both assignments are feasible for one est point; optimal picks one match.
    prf = boundary_hit_rate([10.0, 10.6], [10.3])
    assert exhaustive_max_matching([10.0, 10.6], [10.3], 0.5) == 1
    assert prf.precision == 1.0
    assert prf.recall == 0.5


def test_hit_rate_shared_target_needs_optimality():
    # Greedy nearest-first matching of ref 10.0 to est 10.05 would strand ref 9.6;
    # the optimal matching pairs (9.6, 10.05) and (10.0, 10.45).
    ref = [9.6, 10.0]
    est = [10.05, 10.45]
    assert matching_count(ref, est, 0.5) == 2
    assert boundary_hit_rate(ref, est).f1 == 1.0


def test_hit_rate_empty_conventions():
    assert boundary_hit_rate([], []) == PRF(1.0, 1.0, 1.0)
    assert boundary_hit_rate([1.0], []) == PRF(0.0, 0.0, 0.0)
    assert boundary_hit_rate([], [1.0]) == PRF(0.0, 0.0, 0.0)


def test_hit_rate_window_inclusive():
    assert boundary_hit_rate([10.0], [10.5]).f1 == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matching_equals_exhaustive(seed):
    rng = np.random.default_rng(seed)
    ref = np.sort(rng.uniform(0, 30, size=rng.integers(0, 9)))
    est = np.sort(rng.uniform(0, 30, size=rng.integers(0, 9)))
    assert matching_count(ref, est, 0.5) == exhaustive_max_matching(
        list(ref), list(est), 0.5
    )


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hit_rate_symmetry(seed):
    rng = np.random.default_rng(seed)
    ref = np.sort(rng.uniform(0, 30, size=rng.integers(1, 9)))
    est = np.sort(rng.uniform(0, 30, size=rng.integers(1, 9)))
    fwd = boundary_hit_rate(ref, est)
    rev = boundary_hit_rate(est, ref)
    assert fwd.precision == pytest.approx(rev.recall, abs=1e-12)
    assert fwd.recall == pytest.approx(rev.precision, abs=1e-12)
    assert fwd.f1 == pytest.approx(rev.f1, abs=1e-12)


# ---------------------------------------------------------------- accuracy

def make_ann(song_id, duration, spans):
    return Annotation(song_id, duration, tuple(Segment(*s) for s in spans))


def test_accuracy_derived_fixture():
    ref = make_ann("a", 10.0, [(0, 10, SF.CHORUS)])
    est = make_ann("a", 10.0, [(0, 6, SF.CHORUS), (6, 10, SF.VERSE)])
    assert accuracy_bruteforce(ref, est, 0.1) == pytest.approx(0.6)
    assert frame_accuracy(ref, est) == pytest.approx(0.6, abs=1e-12)


def test_accuracy_identity():
    ref = make_ann("a", 30.0, [(0, 12, SF.INTRO), (12, 30, SF.VERSE)])
    assert frame_accuracy(ref, ref) == 1.0


def test_accuracy_excludes_unlabeled_reference():
    ref = make_ann("a", 10.0, [(0, 5, SF.VERSE)])
    est = make_ann("a", 10.0, [(0, 5, SF.VERSE), (5, 10, SF.CHORUS)])
    assert frame_accuracy(ref, est) == 1.0


def test_accuracy_empty_reference():
    ref = Annotation("a", 10.0, ())
    est = make_ann("a", 10.0, [(0, 10, SF.VERSE)])
    with pytest.raises(EmptyReference):
        frame_accuracy(ref, est)


def test_accuracy_duration_mismatch():
    ref = make_ann("a", 10.0, [(0, 10, SF.VERSE)])
    est = make_ann("a", 12.0, [(0, 12, SF.VERSE)])
    with pytest.raises(ValueError):
        frame_accuracy(ref, est)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_accuracy_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    ref = random_annotation("a", rng, align_centers=False)
    est_segments = tuple(
        Segment(s.start, s.end, SF(int(rng.integers(0, 6)))) for s in ref.segments
    )
    est = Annotation("a", ref.duration, est_segments)
    assert frame_accuracy(ref, est) == pytest.approx(
        accuracy_bruteforce(ref, est, 0.1), abs=1e-12
    )


def test_accuracy_invariant_to_subdivision(rng):
    ref = make_ann("a", 20.0, [(0, 10, SF.VERSE), (10, 20, SF.CHORUS)])
    est = make_ann("a", 20.0, [(0, 12, SF.VERSE), (12, 20, SF.CHORUS)])
    split = make_ann(
        "a", 20.0, [(0, 5, SF.VERSE), (5, 10, SF.VERSE), (10, 20, SF.CHORUS)]
    )
    assert frame_accuracy(ref, est) == frame_accuracy(split, est)


# ---------------------------------------------------------------- chorus metrics

def test_chorus_runs_merge():
    ann = make_ann(
        "a", 100.0,
        [(0, 30, SF.VERSE), (30, 60, SF.CHORUS), (60, 90, SF.CHORUS), (90, 100, SF.OUTRO)],
    )
    assert chorus_runs(ann) == [(30.0, 90.0)]


def test_chorus_hit_rate_fixture():
    ref = make_ann("a", 90.0, [(0, 30, SF.VERSE), (30, 60, SF.CHORUS), (60, 90, SF.VERSE)])
    est = make_ann(
        "a", 90.0, [(0, 30.2, SF.VERSE), (30.2, 59.8, SF.CHORUS), (59.8, 90, SF.VERSE)]
    )
    assert chorus_boundary_hit_rate(ref, est).f1 == 1.0


def test_chorus_hit_rate_missing_side():
    ref = make_ann("a", 60.0, [(0, 30, SF.CHORUS), (30, 60, SF.VERSE)])
    est = make_ann("a", 60.0, [(0, 60, SF.VERSE)])
    assert chorus_boundary_hit_rate(ref, est).f1 == 0.0
    assert chorus_boundary_hit_rate(est, ref).f1 == 0.0
    # Neither side has a chorus: vacuous perfection.
    assert chorus_boundary_hit_rate(est, est).f1 == 1.0


def test_pairwise_derived_fixture():
    # 4 frames, ref [C,C,N,N] vs est [C,N,N,N].
    ref = make_ann("a", 0.4, [(0, 0.2, SF.CHORUS), (0.2, 0.4, SF.VERSE)])
    est = make_ann("a", 0.4, [(0, 0.1, SF.CHORUS), (0.1, 0.4, SF.VERSE)])
    oracle = pairwise_counts_bruteforce(
        np.array([1, 1, 0, 0], bool), np.array([1, 0, 0, 0], bool)
    )
    assert oracle == (1, 3, 2)
    prf = chorus_pairwise_f1(ref, est)
    assert prf.precision == pytest.approx(1 / 3, abs=1e-12)
    assert prf.recall == pytest.approx(1 / 2, abs=1e-12)
    assert prf.f1 == pytest.approx(0.4, abs=1e-12)


def test_pairwise_all_chorus_estimate():
    ref = make_ann("a", 0.4, [(0, 0.2, SF.CHORUS), (0.2, 0.4, SF.VERSE)])
    est = make_ann("a", 0.4, [(0, 0.4, SF.CHORUS)])
    oracle = pairwise_counts_bruteforce(
        np.array([1, 1, 0, 0], bool), np.array([1, 1, 1, 1], bool)
    )
    assert oracle == (2, 6, 2)
    prf = chorus_pairwise_f1(ref, est)
    assert prf.precision == pytest.approx(1 / 3, abs=1e-12)
    assert prf.recall == pytest.approx(1.0, abs=1e-12)


def test_pairwise_identity():
    ref = make_ann("a", 30.0, [(0, 12, SF.CHORUS), (12, 30, SF.VERSE)])
    assert chorus_pairwise_f1(ref, ref).f1 == 1.0


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 200))
def test_pairwise_counts_equal_bruteforce(seed, T):
    rng = np.random.default_rng(seed)
    ref_bin = rng.random(T) < 0.4
    est_bin = rng.random(T) < 0.4
    assert pairwise_counts(ref_bin, est_bin) == pairwise_counts_bruteforce(ref_bin, est_bin)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pairwise_symmetry(seed):
    rng = np.random.default_rng(seed)
    ref_bin = rng.random(40) < 0.5
    est_bin = rng.random(40) < 0.5
    both, est_pairs, ref_pairs = pairwise_counts(ref_bin, est_bin)
    both2, est2, ref2 = pairwise_counts(est_bin, ref_bin)
    assert (both, est_pairs, ref_pairs) == (both2, ref2, est2)


# ---------------------------------------------------------------- reports

def test_evaluate_song_perfect(rng):
    ref = random_annotation("song", rng)
    row = evaluate_song(ref, ref)
    assert (row.hr5f, row.acc, row.chr5f, row.cf1) == (1.0, 1.0, 1.0, 1.0)


def test_evaluate_corpus_means_and_missing(rng):
    refs = [random_annotation(f"s{i}", rng) for i in range(3)]
    pairs = [(refs[0], refs[0]), (refs[1], refs[1]), (refs[2], None)]
    report = evaluate_corpus(pairs)
    assert len(report.rows) == 2
    assert report.missing == ["s2"]
    assert report.means() == {"hr5f": 1.0, "acc": 1.0, "chr5f": 1.0, "cf1": 1.0}


def test_evaluate_corpus_sorted_and_single(rng):
    refs = [random_annotation(f"s{i}", rng) for i in range(3)]
    report = evaluate_corpus([(r, r) for r in reversed(refs)])
    assert [r.song_id for r in report.rows] == ["s0", "s1", "s2"]
    single = evaluate_corpus([(refs[0], refs[0])])
    assert single.rows[0] == evaluate_song(refs[0], refs[0])


def test_report_csv_and_summary(rng):
    ref = random_annotation("only", rng)
    report = evaluate_corpus([(ref, ref)])
    csv_text = report.to_csv()
    assert csv_text.splitlines()[0] == "song_id,hr5f,acc,chr5f,cf1"
    assert "only" in csv_text
    summary = report.summary(version="9.9")
    assert summary["num_songs"] == 1
    assert summary["toolkit_version"] == "9.9"
    assert summary["means"]["acc"] == 1.0


def test_duration_weighted_means():
    a = make_ann("a", 10.0, [(0, 10, SF.CHORUS)])
    b = make_ann("b", 30.0, [(0, 30, SF.CHORUS)])
    b_est = make_ann("b", 30.0, [(0, 30, SF.VERSE)])
    cfg = EvalConfig(duration_weighted=True)
    report = evaluate_corpus([(a, a), (b, b_est)], cfg)
    # acc weights: 10/40 for the perfect song, 30/40 for the wrong one.
    assert report.means()["acc"] == pytest.approx(0.25)


def test_trim_option():
    ref = make_ann("a", 40.0, [(0, 20, SF.VERSE), (20, 40, SF.CHORUS)])
    assert boundaries_of(ref, trim=True) == [20.0]
    est = make_ann("a", 40.0, [(0, 19.0, SF.VERSE), (19.0, 40, SF.CHORUS)])
    trimmed = evaluate_song(ref, est, EvalConfig(trim=True))
    untrimmed = evaluate_song(ref, est, EvalConfig(trim=False))
    assert trimmed.hr5f == 0.0  # single boundary 1 s off
    assert untrimmed.hr5f == pytest.approx(2 * (2 / 3) * (2 / 3) / (4 / 3))

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avgsim.dynamics import ActivationSchedule, run
from avgsim.errors import MissingObserver, ScheduleTooShort
from avgsim.graphgen import balanced_chi, generate_clustered_regular
from avgsim.metrics import (
    bad_set_series,
    csl_evaluate,
    good_node_window,
    non_ephemeral_pass_fraction,
    stopping_time_coverage,
    threshold_set_series,
    uniformity_fraction,
    uniformity_report,
    weak_reconstruction_error,
    write_score_json,
)

CHI = balanced_chi(20)


def test_weak_error_uses_best_orientation():
    labels = CHI.copy()
    labels[:3] *= -1
    s = weak_reconstruction_error(labels, CHI)
    assert s.error_fraction == pytest.approx(0.15) and not s.flip_used
    s2 = weak_reconstruction_error(-labels, CHI)
    assert s2.error_fraction == pytest.approx(0.15) and s2.flip_used
    assert s.per_community_errors == (pytest.approx(0.3), 0.0)
    assert s.w1_size == 7 and s.w2_size == 10


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([-1, 1]), min_size=20, max_size=20))
def test_property_weak_error_at_most_half_and_sign_invariant(lab):
    lab = np.array(lab)
    a = weak_reconstruction_error(lab, CHI).error_fraction
    assert a <= 0.5
    assert a == weak_reconstruction_error(-lab, CHI).error_fraction


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([-1, 1]), min_size=20, max_size=20))
def test_property_single_bit_csl_against_weak_error(lab):
    lab = np.array(lab)
    s = csl_evaluate(lab[:, None], CHI, 0.1)
    w = weak_reconstruction_error(lab, CHI).error_fraction
    assert s.gamma <= w + 1e-12
    if not np.array_equal(s.reference_strings[0], s.reference_strings[1]):
        assert s.gamma == pytest.approx(w)


def test_csl_perfect_labels():
    L = np.repeat(CHI[:, None], 6, axis=1)
    s = csl_evaluate(L, CHI, 0.1)
    assert s.gamma == 0 and s.c1_observed == 0 and s.c2_observed == 1
    assert s.reference_distance == 1 and not s.sampled


def test_csl_sampled_path():
    n = 2200
    chi = balanced_chi(n)
    rng = np.random.default_rng(0)
    L = np.repeat(chi[:, None], 10, axis=1)
    flip = rng.random((n, 10)) < 0.02
    L = np.where(flip, -L, L)
    s = csl_evaluate(L, chi, 0.1, seed=1)
    assert s.sampled
    assert s.c1_observed <= 0.4 and s.c2_observed >= 0.6
    assert csl_evaluate(L, chi, 0.1, seed=1).c1_observed == s.c1_observed


def test_series_accessors(g64):
    rep = run(g64, 0.5, 100, seed=1, observe_every=10)
    with pytest.raises(MissingObserver):
        bad_set_series(rep)
    with pytest.raises(MissingObserver):
        threshold_set_series(rep)
    rep2 = run(g64, 0.5, 100, seed=1, observe_every=10, eps=0.2, eta=0.05)
    t, bad = bad_set_series(rep2)
    assert len(t) == len(bad) == 11
    t, r, rbar = threshold_set_series(rep2)
    assert np.all(r + rbar == 64)


def test_non_ephemeral_fraction():
    g = generate_clustered_regular(64, 16, 1, seed=1)
    lam3 = 0.8
    lo, hi = good_node_window(64, lam3)
    reps = [run(g, 0.5, int(hi) + 1, seed=s, observe_every=100, eps=0.3) for s in range(3)]
    f = non_ephemeral_pass_fraction(reps, 0.3, lam3)
    assert 0.0 <= f <= 1.0
    short = [run(g, 0.5, 50, seed=0, observe_every=10, eps=0.3)]
    with pytest.raises(MissingObserver):
        non_ephemeral_pass_fraction(short, 0.3, lam3)


def test_uniformity_schedule_length_checked(g64):
    sched = ActivationSchedule.generate(g64, 100, seed=1)
    with pytest.raises(ScheduleTooShort):
        uniformity_report(sched, 2, 4, 0.05)


def test_uniformity_report_fields():
    g = generate_clustered_regular(200, 10, 1, seed=1)
    sched = ActivationSchedule.generate(g, int(0.6 * 4 * 200 * np.log(200)) + 10, seed=2)
    r = uniformity_report(sched, 2, 4, 0.05)
    assert 0 <= r.fraction <= min(r.first_ok, r.second_ok, r.spacing_ok) <= 1
    assert uniformity_fraction(sched, 2, 4, 0.05) == r.fraction


def test_stopping_time_coverage_inclusive():
    T, n = 10, 4
    ft = np.array([30, 60, 29, 61])
    assert stopping_time_coverage(ft, T, n) == 0.5
    assert stopping_time_coverage(np.full(4, T * n / 2), T, n) == 0.0


def test_score_json(tmp_path):
    p = tmp_path / "s.json"
    write_score_json(p, recon=weak_reconstruction_error(CHI, CHI))
    d = json.loads(p.read_text())
    assert set(d) == {"error_fraction", "flip_used", "gamma", "c1_observed", "c2_observed", "window_pass_fraction"}
    assert d["error_fraction"] == 0 and d["gamma"] is None

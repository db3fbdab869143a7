import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avgsim.dynamics import local_to_global, run
from avgsim.errors import ConfigError, DeltaOutOfRange
from avgsim.graphgen import generate_clustered_regular
from avgsim.protocols import (
    LABEL_COLUMNS,
    JumpConfig,
    boosted_jump_run,
    jump_default_parameters,
    jump_labeling_run,
    sign_default_parameters,
    sign_labeling_run,
    write_labels_csv,
)
from avgsim.spectral import compute_spectrum

SMALL = JumpConfig(0.3, 5, 10, 30, 60)


# ------------------------------------------------------------ Sign-Labeling

def replay_sign(g, draws, x_init, T):
    ell, n = x_init.shape
    m = g.m
    X = x_init.copy()
    counts = np.zeros((ell, n), dtype=int)
    labels = np.zeros((ell, n), dtype=int)
    writes = np.zeros((ell, n), dtype=int)
    fg = np.zeros((ell, n), dtype=int)
    for t, k in enumerate(draws, start=1):
        e, j = k % m, k // m
        u, v = g.edges[e]
        X[j, u] = X[j, v] = 0.5 * (X[j, u] + X[j, v])
        for w in (u, v):
            counts[j, w] += 1
            if counts[j, w] == T:
                labels[j, w] = 1 if X[j, w] >= 0 else -1
                writes[j, w] += 1
                fg[j, w] = t
    return labels, writes, fg


def test_sign_matches_replay_and_labels_written_once(g16):
    r = sign_labeling_run(g16, 6, 3, seed=4, record=True)
    labels, writes, fg = replay_sign(g16, r.draws, r.x_init, 6)
    assert np.all(writes == 1)
    assert np.array_equal(labels.T, r.labels)
    assert np.array_equal(fg.T, r.freeze_times)
    assert r.total_rounds == len(r.draws) == r.freeze_times.max()


def test_sign_component_independence(g16):
    ell = 4
    r = sign_labeling_run(g16, 5, ell, seed=9, record=True)
    m = g16.m
    for j in range(ell):
        sub = r.draws[r.draws // m == j] % m
        labels, writes, fg = replay_sign(g16, sub, r.x_init[j:j + 1], 5)
        assert np.array_equal(labels[0], r.labels[:, j])
        assert np.array_equal(fg[0], r.freeze_local[:, j])


def test_sign_t1_ell1_is_sign_after_first_average(g16):
    r = sign_labeling_run(g16, 1, 1, seed=2, record=True)
    seen = set()
    x = r.x_init[0].copy()
    for k in r.draws:
        u, v = g16.edges[k]
        avg = 0.5 * (x[u] + x[v])
        for w in (u, v):
            if w not in seen:
                assert r.labels[w, 0] == (1 if avg >= 0 else -1)
                seen.add(w)
        x[u] = x[v] = avg
    assert len(seen) == 16


def test_sign_defaults_and_errors(g64):
    spec = compute_spectrum(g64)
    T, ell = sign_default_parameters(spec, 0.2)
    assert T == math.ceil(8 * math.log(64) / spec.lambda3_complement)
    assert ell == math.ceil(10 / 0.2 * math.log(64))
    with pytest.raises(ConfigError):
        sign_labeling_run(g64, 0, 1, seed=1)
    with pytest.raises(ConfigError):
        sign_default_parameters(spec, 0)


def test_sign_determinism(g64):
    a = sign_labeling_run(g64, 10, 8, seed=3)
    b = sign_labeling_run(g64, 10, 8, seed=3)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.freeze_times, b.freeze_times)


def test_sign_freeze_local_concentrates_near_half_tn():
    g = generate_clustered_regular(128, 16, 1, seed=1)
    T = 200
    r = sign_labeling_run(g, T, 2, seed=5)
    ratio = r.freeze_local / (T * g.n)
    assert 0.45 < ratio.mean() < 0.55


# ------------------------------------------------------------ Jump-Labeling

def test_jump_config_validation():
    with pytest.raises(ConfigError):
        JumpConfig(0.3, 10, 5, 30, 60)
    with pytest.raises(ConfigError):
        JumpConfig(0.3, 5, 10, 10, 60)
    with pytest.raises(ConfigError):
        JumpConfig(1.0, 5, 10, 30, 60)
    with pytest.raises(ConfigError):
        JumpConfig(0.3, 0, 10, 30, 60)


def test_jump_default_parameters(g500):
    spec = compute_spectrum(g500)
    cfg = jump_default_parameters(g500, 0.3, spec)
    gap = spec.lambda3_complement - 0.2
    eps = 0.3 / gap
    assert cfg.tau_s == math.ceil(100 * math.log(500 * 50 / (eps * 5)) / (0.3 * gap))
    assert cfg.tau_s_tilde == 2 * cfg.tau_s
    assert cfg.tau_e - 3 * cfg.tau_s_tilde == math.ceil(10 * 50 / (0.3 * 5))
    assert cfg.tau_e_tilde == 2 * cfg.tau_e
    with pytest.raises(DeltaOutOfRange):
        jump_default_parameters(g500, 0.8 * gap, spec)
    with pytest.raises(DeltaOutOfRange):
        jump_default_parameters(g500, 0.0, spec)


def test_jump_label_identity_against_dynamics_history(g16):
    r = jump_labeling_run(g16, SMALL, seed=6, record=True)
    rep = run(g16, SMALL.delta, r.total_rounds, seed=6, history=True)
    assert np.array_equal(rep.schedule.edge_indices(), r.draws)
    assert np.array_equal(rep.x0, r.x_init[0])
    states = [rep.x0.copy()]
    x = rep.x0.copy()
    for e in r.draws:
        u, v = g16.edges[e]
        xu, xv = x[u], x[v]
        x[u] = (1 - SMALL.delta) * xu + SMALL.delta * xv
        x[v] = (1 - SMALL.delta) * xv + SMALL.delta * xu
        states.append(x.copy())
    for u in range(16):
        ts = local_to_global(rep.schedule, u, r.tau_s_u[0, u])
        te = local_to_global(rep.schedule, u, r.tau_e_u[0, u])
        assert te == r.label_times[0, u]
        diff = states[ts][u] - states[te][u]
        if abs(diff) > 1e-9:
            assert r.labels[u] == (1 if diff > 0 else -1)
        assert SMALL.tau_s <= r.tau_s_u[0, u] <= SMALL.tau_s_tilde
        assert SMALL.tau_e <= r.tau_e_u[0, u] <= SMALL.tau_e_tilde


def test_jump_point_intervals(g16):
    cfg = JumpConfig(0.5, 7, 7, 20, 20)
    r = jump_labeling_run(g16, cfg, seed=1)
    assert np.all(r.tau_s_u == 7) and np.all(r.tau_e_u == 20)


def test_boosted_single_copy_equals_plain_run(g16):
    a = jump_labeling_run(g16, SMALL, seed=12)
    for shared in (True, False):
        b = boosted_jump_run(g16, SMALL, 1, seed=12, shared_init=shared)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.label_times, b.label_times)


@pytest.mark.parametrize("ell", [0, 2, 10])
def test_boosted_rejects_even_ell(g16, ell):
    with pytest.raises(ConfigError):
        boosted_jump_run(g16, SMALL, ell, seed=1)


def test_boosted_majority_rule(g64):
    r = boosted_jump_run(g64, SMALL, 5, seed=3)
    votes = r.copy_labels.sum(axis=0)
    assert np.array_equal(r.labels, np.where(votes >= 0, 1, -1))
    agree = np.all(r.copy_labels == r.copy_labels[0], axis=0)
    assert np.array_equal(r.labels[agree], r.copy_labels[0, agree])


def test_boosted_shared_start(g16):
    r = boosted_jump_run(g16, SMALL, 3, seed=2, record=True)
    assert np.all(r.x_init == r.x_init[0])
    s = boosted_jump_run(g16, SMALL, 3, seed=2, record=True, shared_init=False)
    assert not np.all(s.x_init == s.x_init[0])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_property_jump_labels_complete_and_in_range(g16, seed):
    r = boosted_jump_run(g16, SMALL, 3, seed=seed)
    assert set(np.unique(r.copy_labels)) <= {-1, 1}
    assert np.all(r.label_times > 0) and r.label_times.max() == r.total_rounds


def test_jump_reconstructs_desk_instance(g500):
    cfg = jump_default_parameters(g500, 0.3)
    from avgsim.metrics import weak_reconstruction_error

    r = jump_labeling_run(g500, cfg, seed=1)
    assert weak_reconstruction_error(r.labels, g500.chi).error_fraction <= 0.15


def test_labels_csv(tmp_path, g16):
    r = boosted_jump_run(g16, SMALL, 3, seed=1)
    p = tmp_path / "l.csv"
    write_labels_csv(p, g16.chi, r.labels, r.label_times.max(axis=0), r.copy_labels)
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == LABEL_COLUMNS
    assert len(rows) == 17
    assert len(rows[1][4].split(";")) == 3
    write_labels_csv(p, g16.chi, r.labels, r.label_times[0])
    assert list(csv.reader(p.open()))[1][4] == ""

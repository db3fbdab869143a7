import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avgsim.errors import InvalidParams, ParityError, RetryExhausted
from avgsim.graphgen import (
    ClusteredGraph,
    SbmParams,
    generate_clustered_regular,
    generate_sbm,
    verify_clustered_invariants,
)
from avgsim.spectral import normalized_laplacian


@pytest.mark.parametrize("n,d,b", [(8, 3, 1), (16, 5, 1), (64, 8, 1), (256, 32, 1), (500, 50, 5)])
def test_desk_instances_are_clustered_regular(n, d, b):
    g = generate_clustered_regular(n, d, b, seed=1)
    rep = verify_clustered_invariants(g)
    assert rep.ok, rep.violations
    assert np.all(g.degrees() == d)
    assert np.all(g.cross_degrees() == b)
    assert g.m == n * d // 2
    assert g.cut_size() == n * b // 2
    assert g.chi.sum() == 0


@pytest.mark.parametrize("n,d,b,exc", [
    (9, 3, 1, InvalidParams),
    (8, 3, 2, InvalidParams),
    (8, 8, 1, InvalidParams),
    (8, 2, 1, InvalidParams),
    (10, 4, 1, ParityError),
    (8, 6, 1, InvalidParams),
])
def test_parameter_errors(n, d, b, exc):
    with pytest.raises(exc):
        generate_clustered_regular(n, d, b, seed=0)


def test_retry_budget_exhaustion():
    with pytest.raises(RetryExhausted):
        generate_clustered_regular(500, 50, 5, seed=1, max_retries=0)


def test_generation_is_deterministic():
    a = generate_clustered_regular(64, 8, 1, seed=4)
    b = generate_clustered_regular(64, 8, 1, seed=4)
    c = generate_clustered_regular(64, 8, 1, seed=5)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_save_load_roundtrip(tmp_path, g64):
    p = tmp_path / "g.json"
    g64.save(p)
    h = ClusteredGraph.load(p)
    assert h.fingerprint() == g64.fingerprint()
    assert np.array_equal(h.edges, g64.edges)
    assert np.array_equal(h.chi, g64.chi)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("edges"),
    lambda d: d.update(chi=[0] * d["n"]),
    lambda d: d.update(edges=d["edges"] + [d["edges"][0]]),
    lambda d: d.update(edges=[[0, 0]]),
    lambda d: d.update(kind="torus"),
])
def test_corrupted_graph_records_rejected(tmp_path, g16, mutate):
    data = g16.to_dict()
    mutate(data)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    with pytest.raises(InvalidParams):
        ClusteredGraph.load(p)


def test_unreadable_graph_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InvalidParams):
        ClusteredGraph.load(p)


def test_verification_flags_broken_degree(g16):
    edges = g16.edges[1:]
    broken = ClusteredGraph(n=16, d=5, b=1, chi=g16.chi, edges=edges, kind=g16.kind)
    rep = verify_clustered_invariants(broken)
    assert not rep.ok
    assert rep.degree_violations


def test_sbm_complete_graph():
    g = generate_sbm(SbmParams(100, 1.0, 1.0), seed=0)
    assert g.m == 100 * 99 // 2
    assert g.beta == 0.0


def test_sbm_sparse_sample():
    g = generate_sbm(SbmParams(400, 0.2, 0.01), seed=3)
    assert 0 < g.beta < 0.5
    assert verify_clustered_invariants(g).ok
    assert generate_sbm(SbmParams(400, 0.2, 0.01), seed=3).fingerprint() == g.fingerprint()


@pytest.mark.parametrize("n,p,q", [(7, 0.5, 0.1), (10, 0.1, 0.2), (10, 1.5, 0.1), (10, 0.5, -0.1)])
def test_sbm_parameter_errors(n, p, q):
    with pytest.raises(InvalidParams):
        SbmParams(n, p, q)


@st.composite
def clustered_params(draw):
    half = draw(st.integers(3, 24))
    n = 2 * half
    b = draw(st.integers(1, min(half - 2, 4)))
    k = draw(st.integers(b + 1, half - 1))
    if (k * half) % 2:
        k = k - 1 if k - 1 > b else k + 1
    if k > half - 1 or k <= b:
        return None
    return n, k + b, b


@settings(max_examples=40, deadline=None)
@given(clustered_params(), st.integers(0, 2**32))
def test_property_generated_graphs_satisfy_invariants(params, seed):
    if params is None:
        return
    n, d, b = params
    try:
        g = generate_clustered_regular(n, d, b, seed)
    except RetryExhausted:
        return
    assert verify_clustered_invariants(g).ok
    f = g.chi / np.sqrt(n)
    res = normalized_laplacian(g) @ f - (2 * b / d) * f
    assert np.linalg.norm(res) < 1e-9

"""Clustered regular graphs and two-block stochastic block model samples.

Nodes ``0 .. n/2-1`` form community V1 (chi = +1) and ``n/2 .. n-1`` form
V2 (chi = -1). Edge lists are stored canonically: each pair as (small, large),
rows sorted lexicographically.
"""
from __future__ import annotations

import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyGraph, InvalidParams, ParityError, RetryExhausted
from .seeding import generator

log = logging.getLogger(__name__)

KIND_REGULAR = "clustered-regular"
KIND_SBM = "sbm"


@dataclass(frozen=True)
class SbmParams:
    n: int
    p: float
    q: float

    def __post_init__(self) -> None:
        if self.n < 2 or self.n % 2:
            raise InvalidParams(f"n must be an even integer >= 2, got {self.n}")
        if not (0.0 <= self.q <= self.p <= 1.0):
            raise InvalidParams(f"need 0 <= q <= p <= 1, got p={self.p}, q={self.q}")

    @property
    def a(self) -> float:
        return self.p * self.n

    @property
    def b_sbm(self) -> float:
        return self.q * self.n


@dataclass(frozen=True, eq=False)
class ClusteredGraph:
    n: int
    d: int
    b: int
    chi: np.ndarray
    edges: np.ndarray
    kind: str = KIND_REGULAR
    p: float | None = None
    q: float | None = None
    beta: float = 0.0
    connected: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)

    def cross_degrees(self) -> np.ndarray:
        u, v = self.edges[:, 0], self.edges[:, 1]
        cross = self.chi[u] != self.chi[v]
        return np.bincount(self.edges[cross].ravel(), minlength=self.n).astype(np.int64)

    def cut_size(self) -> int:
        u, v = self.edges[:, 0], self.edges[:, 1]
        return int(np.count_nonzero(self.chi[u] != self.chi[v]))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def laplacian(self) -> np.ndarray:
        a = self.adjacency()
        return np.diag(a.sum(axis=1)) - a

    def neighbor_lists(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges.tolist():
            nb[u].append(v)
            nb[v].append(u)
        return nb

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.kind}:{self.n}:".encode())
        h.update(np.ascontiguousarray(self.edges, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "n": self.n,
            "d": self.d,
            "b": self.b,
            "chi": [int(c) for c in self.chi],
            "edges": self.edges.tolist(),
        }
        if self.kind == KIND_SBM:
            out.update(p=self.p, q=self.q, beta=self.beta, connected=self.connected)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, data: dict) -> "ClusteredGraph":
        try:
            n = int(data["n"])
            chi = np.asarray(data["chi"], dtype=np.int64)
            edges = np.asarray(data["edges"], dtype=np.int64).reshape(-1, 2)
            kind = data.get("kind", KIND_REGULAR)
            d, b = int(data["d"]), int(data["b"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"malformed graph record: {exc}") from exc
        if kind not in (KIND_REGULAR, KIND_SBM):
            raise InvalidParams(f"unknown graph kind {kind!r}")
        if chi.shape != (n,) or not np.all(np.abs(chi) == 1):
            raise InvalidParams("chi must hold n entries in {-1,+1}")
        if edges.size and (edges.min() < 0 or edges.max() >= n or np.any(edges[:, 0] == edges[:, 1])):
            raise InvalidParams("edge endpoints out of range or self-loop present")
        edges = canonical_edges(edges)
        if len(np.unique(edges, axis=0)) != len(edges):
            raise InvalidParams("duplicate edges")
        return cls(
            n=n, d=d, b=b, chi=chi, edges=edges, kind=kind,
            p=data.get("p"), q=data.get("q"),
            beta=float(data.get("beta", 0.0)),
            connected=bool(data.get("connected", True)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ClusteredGraph":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParams(f"cannot read graph file {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class VerificationReport:
    degree_violations: list[tuple[int, int]]
    cross_violations: list[tuple[int, int]]
    connected: bool
    bipartite: bool
    balanced: bool
    beta: float
    cross_checked: bool
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    return np.ascontiguousarray(e[order])


def balanced_chi(n: int) -> np.ndarray:
    chi = np.ones(n, dtype=np.int64)
    chi[n // 2:] = -1
    return chi


def _connected_and_bipartite(n: int, edges: np.ndarray) -> tuple[bool, bool]:
    nb: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges.tolist():
        nb[u].append(v)
        nb[v].append(u)
    color = [-1] * n
    bipartite = True
    components = 0
    for s in range(n):
        if color[s] >= 0:
            continue
        components += 1
        color[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in nb[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    bipartite = False
    return components == 1, bipartite


def _random_regular(k: int, nodes: int, rng: np.random.Generator, budget: list[int]) -> list[tuple[int, int]]:
    """k-regular simple graph on ``nodes`` vertices by stub pairing.

    Bad pairs (loops, repeats) are returned to the stub pool and re-paired;
    a dead end counts as one rejection against ``budget`` and restarts.
    """
    if k == 0:
        return []
    while True:
        edges: set[tuple[int, int]] = set()
        stubs = np.repeat(np.arange(nodes), k)
        stuck = False
        while stubs.size:
            rng.shuffle(stubs)
            leftover: list[int] = []
            progressed = False
            for i in range(0, stubs.size, 2):
                u, v = int(stubs[i]), int(stubs[i + 1])
                if u > v:
                    u, v = v, u
                if u != v and (u, v) not in edges:
                    edges.add((u, v))
                    progressed = True
                else:
                    leftover.extend((u, v))
            stubs = np.asarray(leftover, dtype=np.int64)
            if not progressed and stubs.size and not _can_pair(stubs, edges):
                stuck = True
                break
        if not stuck:
            return sorted(edges)
        budget[0] -= 1
        if budget[0] < 0:
            raise RetryExhausted("stub pairing exhausted its retry budget")


def _can_pair(stubs: np.ndarray, edges: set[tuple[int, int]]) -> bool:
    pending = np.unique(stubs).tolist()
    for i, u in enumerate(pending):
        for v in pending[i + 1:]:
            if (u, v) not in edges:
                return True
    return False


def _cross_matchings(half: int, b: int, rng: np.random.Generator, budget: list[int]) -> list[tuple[int, int]]:
    """b edge-disjoint perfect matchings between {0..half-1} and {half..2half-1}."""
    used = np.zeros((half, half), dtype=bool)
    out: list[tuple[int, int]] = []
    for _ in range(b):
        while True:
            perm = rng.permutation(half)
            # swap-repair collisions with previously used pairs
            for _sweep in range(50 * half):
                bad = np.flatnonzero(used[np.arange(half), perm])
                if bad.size == 0:
                    break
                i = int(bad[0])
                j = int(rng.integers(half))
                if not used[i, perm[j]] and not used[j, perm[i]]:
                    perm[i], perm[j] = perm[j], perm[i]
            if not np.any(used[np.arange(half), perm]):
                break
            budget[0] -= 1
            if budget[0] < 0:
                raise RetryExhausted("cross matching exhausted its retry budget")
        used[np.arange(half), perm] = True
        out.extend((i, half + int(perm[i])) for i in range(half))
    return out


def generate_clustered_regular(n: int, d: int, b: int, seed: int, max_retries: int = 100) -> ClusteredGraph:
    """Random (n, d, b)-clustered regular graph, connected and non-bipartite."""
    if n <= 0 or n % 2:
        raise InvalidParams(f"n must be a positive even integer, got {n}")
    if b < 1:
        raise InvalidParams(f"b must be >= 1, got {b}")
    if not (2 * b < d < n):
        raise InvalidParams(f"need 2b < d < n, got n={n}, d={d}, b={b}")
    half = n // 2
    k = d - b
    if b > half or k > half - 1:
        raise InvalidParams(f"degrees exceed community capacity: inner {k} of {half - 1}, cross {b} of {half}")
    if (k * half) % 2:
        raise ParityError(f"(d-b)*(n/2) = {k * half} is odd")

    rng = generator(seed)
    budget = [int(max_retries)]
    chi = balanced_chi(n)
    while True:
        e1 = _random_regular(k, half, rng, budget)
        e2 = _random_regular(k, half, rng, budget)
        ec = _cross_matchings(half, b, rng, budget)
        edges = np.array(e1 + [(u + half, v + half) for u, v in e2] + ec, dtype=np.int64)
        edges = canonical_edges(edges)
        connected, bipartite = _connected_and_bipartite(n, edges)
        if connected and not bipartite:
            return ClusteredGraph(n=n, d=d, b=b, chi=chi, edges=edges, kind=KIND_REGULAR)
        log.debug("rejecting sample: connected=%s bipartite=%s", connected, bipartite)
        budget[0] -= 1
        if budget[0] < 0:
            raise RetryExhausted("could not produce a connected non-bipartite sample")


def generate_sbm(params: SbmParams, seed: int) -> ClusteredGraph:
    n = params.n
    rng = generator(seed)
    chi = balanced_chi(n)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(chi[iu] == chi[ju], params.p, params.q)
    keep = rng.random(iu.size) < prob
    edges = canonical_edges(np.stack([iu[keep], ju[keep]], axis=1))
    if edges.shape[0] == 0:
        raise EmptyGraph("sampled graph has no edges")
    deg = np.bincount(edges.ravel(), minlength=n)
    dbar = deg.mean()
    beta = float(np.max(np.abs(deg - dbar)) / dbar)
    cross = chi[edges[:, 0]] != chi[edges[:, 1]]
    connected, _ = _connected_and_bipartite(n, edges)
    return ClusteredGraph(
        n=n,
        d=int(round(dbar)),
        b=int(round(2.0 * cross.sum() / n)),
        chi=chi,
        edges=edges,
        kind=KIND_SBM,
        p=params.p,
        q=params.q,
        beta=beta,
        connected=connected,
    )


def verify_clustered_invariants(g: ClusteredGraph) -> VerificationReport:
    deg = g.degrees()
    violations: list[str] = []
    balanced = bool(np.sum(g.chi == 1) == g.n // 2 and np.sum(g.chi == -1) == g.n // 2 and g.n % 2 == 0)
    if not balanced:
        violations.append("chi is not balanced")
    e = g.edges
    if e.size and (np.any(e[:, 0] == e[:, 1]) or len(np.unique(np.sort(e, axis=1), axis=0)) != len(e)):
        violations.append("self-loops or duplicate edges present")
    connected, bipartite = _connected_and_bipartite(g.n, e)
    dbar = deg.mean() if g.n else 0.0
    beta = float(np.max(np.abs(deg - dbar)) / dbar) if dbar > 0 else float("inf")
    degree_violations: list[tuple[int, int]] = []
    cross_violations: list[tuple[int, int]] = []
    cross_checked = g.kind == KIND_REGULAR
    if cross_checked:
        degree_violations = [(u, int(x)) for u, x in enumerate(deg) if x != g.d]
        cross_violations = [(u, int(x)) for u, x in enumerate(g.cross_degrees()) if x != g.b]
        for u, x in degree_violations:
            violations.append(f"node {u}: degree {x} != {g.d}")
        for u, x in cross_violations:
            violations.append(f"node {u}: cross-degree {x} != {g.b}")
        if not (2 * g.b < g.d < g.n):
            violations.append("parameters violate 2b < d < n")
        if int(deg.sum()) != g.n * g.d:
            violations.append(f"degree sum {int(deg.sum())} != nd = {g.n * g.d}")
    else:
        if g.beta and abs(beta - g.beta) > 1e-12:
            violations.append(f"recorded beta {g.beta} differs from measured {beta}")
    if not connected:
        violations.append("graph is disconnected")
    if bipartite:
        violations.append("graph is bipartite")
    return VerificationReport(
        degree_violations=degree_violations,
        cross_violations=cross_violations,
        connected=connected,
        bipartite=bipartite,
        balanced=balanced,
        beta=beta,
        cross_checked=cross_checked,
        violations=violations,
    )

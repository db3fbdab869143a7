"""The asynchronous Averaging(delta) process.

Each round one edge {u, v} is drawn uniformly from the edge list and both
endpoints move toward each other: ``x_u <- (1-delta) x_u + delta x_v`` and
symmetrically for v.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidEdge, InvariantBreach, NotYetReached
from .graphgen import ClusteredGraph
from .seeding import streams, trial_seed

DRAW_BLOCK = 1 << 16
SERIES_COLUMNS = ("t", "a_par", "a_y", "y_norm_sq", "z_norm_sq", "bad_count", "r_eta_count", "cross_count")


class DrawStream:
    """Uniform integers in [0, bound) drawn in fixed-size blocks.

    Block size is constant, so the sequence does not depend on how callers
    slice it.
    """

    def __init__(self, rng: np.random.Generator, bound: int):
        self.rng = rng
        self.bound = int(bound)
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        parts = []
        while k > 0:
            if self._pos >= self._buf.size:
                self._buf = self.rng.integers(0, self.bound, size=DRAW_BLOCK, dtype=np.int64)
                self._pos = 0
            s = min(k, self._buf.size - self._pos)
            parts.append(self._buf[self._pos:self._pos + s])
            self._pos += s
            k -= s
        if not parts:
            return np.empty(0, dtype=np.int64)
        return parts[0] if len(parts) == 1 else np.concatenate(parts)


def edge_arrays(g: ClusteredGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eu = np.ascontiguousarray(g.edges[:, 0])
    ev = np.ascontiguousarray(g.edges[:, 1])
    return eu, ev, g.chi[eu] != g.chi[ev]


def init_random_state(n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = streams(seed)["init"]
    return (2 * rng.integers(0, 2, size=n) - 1).astype(float)


def step(x: np.ndarray, edge: tuple[int, int], delta: float) -> np.ndarray:
    u, v = int(edge[0]), int(edge[1])
    n = len(x)
    if u == v or not (0 <= u < n and 0 <= v < n):
        raise InvalidEdge(f"invalid edge ({u}, {v})")
    out = np.array(x, dtype=float, copy=True)
    out[u] = (1 - delta) * x[u] + delta * x[v]
    out[v] = (1 - delta) * x[v] + delta * x[u]
    return out


@dataclass
class Decomposition:
    a_par: float
    a_y: float
    z: np.ndarray
    y_norm_sq: float
    z_norm_sq: float

    def recompose(self, chi: np.ndarray) -> np.ndarray:
        n = len(chi)
        return self.a_par / math.sqrt(n) + self.a_y * chi / math.sqrt(n) + self.z


def decompose(x: np.ndarray, chi: np.ndarray) -> Decomposition:
    """Split x along 1/sqrt(n), chi/sqrt(n) and the orthogonal rest z."""
    n = len(x)
    rn = math.sqrt(n)
    a_par = float(x.sum()) / rn
    a_y = float(chi @ x) / rn
    z = x - a_par / rn - a_y * chi / rn
    return Decomposition(a_par, a_y, z, a_y * a_y, float(z @ z))


@dataclass
class ActivationSchedule:
    seed: int
    n: int
    step: int = 0
    local_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cross_count: int = 0
    history: bool = False
    eu: np.ndarray | None = None
    ev: np.ndarray | None = None
    edge_history: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.local_counts.size == 0:
            self.local_counts = np.zeros(self.n, dtype=np.int64)

    def edge_indices(self) -> np.ndarray:
        if not self.history:
            raise NotYetReached("schedule was not recorded (history mode off)")
        if not self.edge_history:
            return np.empty(0, dtype=np.int64)
        if len(self.edge_history) > 1:
            self.edge_history = [np.concatenate(self.edge_history)]
        return self.edge_history[0]

    def record(self, idx: np.ndarray, cross: int) -> None:
        self.step += int(idx.size)
        self.cross_count += int(cross)
        if self.history:
            self.edge_history.append(np.array(idx, copy=True))

    def activation_times(self, max_tau: int) -> np.ndarray:
        """Matrix of T_u(k) for k = 1..max_tau (entries -1 where not reached)."""
        return _kernels.activation_times(self.eu, self.ev, self.edge_indices(), self.n, int(max_tau))

    @classmethod
    def generate(cls, g: ClusteredGraph, rounds: int, seed: int) -> "ActivationSchedule":
        """Draw an edge sequence with no state attached (same stream as ``run``)."""
        eu, ev, cross = edge_arrays(g)
        sched = cls(seed=seed, n=g.n, history=True, eu=eu, ev=ev)
        draws = DrawStream(streams(seed)["edges"], g.m).take(int(rounds))
        np.add.at(sched.local_counts, eu[draws], 1)
        np.add.at(sched.local_counts, ev[draws], 1)
        sched.record(draws, int(cross[draws].sum()))
        return sched


def local_to_global(schedule: ActivationSchedule, u: int, tau: float) -> int:
    """T_u(tau): first round whose activation count of u reaches tau (T_u(0) = 0)."""
    k = math.ceil(tau)
    if k <= 0:
        return 0
    idx = schedule.edge_indices()
    hits = np.flatnonzero((schedule.eu[idx] == u) | (schedule.ev[idx] == u))
    if hits.size < k:
        raise NotYetReached(f"node {u} has {hits.size} activations, fewer than {k}")
    return int(hits[k - 1]) + 1


@dataclass
class RunReport:
    series: dict[str, np.ndarray]
    x0: np.ndarray
    x_final: np.ndarray
    schedule: ActivationSchedule
    delta: float
    eps: float | None
    eta: float | None
    cross_claim: dict[str, np.ndarray] | None = None

    def write_csv(self, path: str | Path) -> None:
        write_series_csv(self.series, path)


def write_series_csv(series: dict[str, np.ndarray], path: str | Path) -> None:
    rows = len(series["t"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for i in range(rows):
            out = []
            for col in SERIES_COLUMNS:
                arr = series.get(col)
                if arr is None:
                    out.append("")
                elif arr.dtype.kind in "iu":
                    out.append(str(int(arr[i])))
                else:
                    out.append(format(float(arr[i]), ".17g"))
            w.writerow(out)


def run(
    g: ClusteredGraph,
    delta: float,
    rounds: int,
    seed: int,
    observe_every: int = 1,
    eta: float | None = None,
    eps: float | None = None,
    x0: np.ndarray | None = None,
    history: bool = False,
    verify_cross: bool = False,
) -> RunReport:
    """Run ``rounds`` steps and record observables every ``observe_every`` rounds.

    With ``verify_cross`` the indicator chi is pushed through the same edge
    sequence and ``||W_t...W_1 chi - chi||^2 <= 8 delta c`` is checked at each
    observation, c being the number of cross edges used so far.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if rounds < 0 or observe_every < 1:
        raise ValueError("rounds must be >= 0 and observe_every >= 1")
    if g.m == 0:
        raise ValueError("graph has no edges")
    n = g.n
    rn = math.sqrt(n)
    st = streams(seed)
    x = init_random_state(n, seed) if x0 is None else np.array(x0, dtype=float, copy=True)
    x_init = x.copy()
    chi = g.chi.astype(float)
    eu, ev, cross = edge_arrays(g)
    sched = ActivationSchedule(seed=seed, n=n, history=history, eu=eu, ev=ev)
    draws = DrawStream(st["edges"], g.m)

    d0 = decompose(x, chi)
    base = d0.a_par / rn + d0.a_y * chi / rn  # x_par + y^(0)
    good_radius_sq = None if eps is None else eps * eps * d0.y_norm_sq / n
    x_par_u = d0.a_par / rn

    aux = chi[None, :].copy() if verify_cross else np.zeros((0, n))
    obs: dict[str, list] = {c: [] for c in SERIES_COLUMNS}
    claim: dict[str, list] = {"t": [], "dev_sq": [], "bound": [], "holds": []}

    def observe(t: int) -> None:
        d = decompose(x, chi)
        obs["t"].append(t)
        obs["a_par"].append(d.a_par)
        obs["a_y"].append(d.a_y)
        obs["y_norm_sq"].append(d.y_norm_sq)
        obs["z_norm_sq"].append(d.z_norm_sq)
        if good_radius_sq is not None:
            obs["bad_count"].append(int(np.count_nonzero((x - base) ** 2 > good_radius_sq)))
        if eta is not None:
            obs["r_eta_count"].append(int(np.count_nonzero(chi * (x - x_par_u) >= eta)))
        obs["cross_count"].append(sched.cross_count)
        if verify_cross:
            dev = aux[0] - chi
            dev_sq = float(dev @ dev)
            bound = 8.0 * delta * sched.cross_count
            claim["t"].append(t)
            claim["dev_sq"].append(dev_sq)
            claim["bound"].append(bound)
            claim["holds"].append(dev_sq <= bound + 1e-9 * n)

    observe(0)
    t = 0
    while t < rounds:
        k = min(observe_every, rounds - t)
        idx = draws.take(k)
        c = _kernels.apply_edges(x, aux, eu, ev, idx, delta, sched.local_counts, cross)
        sched.record(idx, c)
        t += k
        if t % observe_every == 0 or t == rounds:
            observe(t)

    series = {
        "t": np.asarray(obs["t"], dtype=np.int64),
        "a_par": np.asarray(obs["a_par"]),
        "a_y": np.asarray(obs["a_y"]),
        "y_norm_sq": np.asarray(obs["y_norm_sq"]),
        "z_norm_sq": np.asarray(obs["z_norm_sq"]),
        "cross_count": np.asarray(obs["cross_count"], dtype=np.int64),
    }
    if eps is not None:
        series["bad_count"] = np.asarray(obs["bad_count"], dtype=np.int64)
    if eta is not None:
        series["r_eta_count"] = np.asarray(obs["r_eta_count"], dtype=np.int64)
        series["rbar_eta_count"] = n - series["r_eta_count"]
    claim_out = None
    if verify_cross:
        claim_out = {
            "t": np.asarray(claim["t"], dtype=np.int64),
            "dev_sq": np.asarray(claim["dev_sq"]),
            "bound": np.asarray(claim["bound"]),
            "holds": np.asarray(claim["holds"], dtype=bool),
        }
    return RunReport(series, x_init, x, sched, delta, eps, eta, claim_out)


def check_conservation(report: RunReport, budget: float = 1e-9) -> float:
    """Largest deviation of a_par from its initial value; raises if over budget."""
    a = report.series["a_par"]
    drift = float(np.max(np.abs(a - a[0]))) if a.size else 0.0
    if drift > budget:
        raise InvariantBreach(f"a_par drifted by {drift:.3e}")
    return drift


def run_batch(
    g: ClusteredGraph,
    delta: float,
    x0: np.ndarray,
    checkpoints: list[int] | np.ndarray,
    trials: int,
    master_seed: int,
    first_trial: int = 0,
) -> np.ndarray:
    """States of many independent runs from a common x0 at the given checkpoints.

    Trial i draws its edges from the stream of ``trial_seed(master_seed, i)``.
    Returns an array shaped (len(checkpoints), trials, n).
    """
    cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
    tmax = int(cps[-1]) if cps.size else 0
    eu, ev, _ = edge_arrays(g)
    idx = np.empty((trials, tmax), dtype=np.int64)
    for r in range(trials):
        rng = streams(trial_seed(master_seed, first_trial + r))["edges"]
        # a short fill is a prefix of a full block, so this matches ``run``
        idx[r] = rng.integers(0, g.m, size=tmax, dtype=np.int64) if tmax <= DRAW_BLOCK else DrawStream(rng, g.m).take(tmax)
    out = np.empty((cps.size, trials, g.n))
    _kernels.batch_checkpoints(np.asarray(x0, dtype=float), eu, ev, idx, float(delta), cps, out)
    return out

"""Sign-Labeling, Jump-Labeling and majority boosting.

Protocol logic sees only local quantities: a node's own values, the value it
receives, its activation counters and the configuration. Global round numbers
are recorded for analysis only.

Per-node random choices that the protocols make "at first activation"
(initial +-1 values, the sampled local times) are drawn up front from a
dedicated stream. Each node draws exactly once, so the joint law is the same.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .dynamics import DRAW_BLOCK, DrawStream, edge_arrays
from .errors import ConfigError, DeltaOutOfRange
from .graphgen import ClusteredGraph
from .seeding import streams
from .spectral import GraphSpectrum, compute_spectrum

LABEL_COLUMNS = ("node", "chi", "label", "label_global_time", "copy_labels")


# ------------------------------------------------------------ Sign-Labeling

@dataclass
class SignResult:
    labels: np.ndarray         # n x ell over {-1, +1}
    freeze_times: np.ndarray   # n x ell, global round of each freeze
    freeze_local: np.ndarray   # n x ell, round count of the component's own clock
    total_rounds: int
    T: int
    ell: int
    draws: np.ndarray | None = None
    x_init: np.ndarray | None = None   # ell x n initial values


def sign_default_parameters(spec: GraphSpectrum, eps: float) -> tuple[int, int]:
    """(T, ell) = (ceil(8 ln n / lambda3), ceil(10 ln n / eps))."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    n = spec.n
    lam3 = spec.lambda3_complement
    return math.ceil(8.0 / lam3 * math.log(n)), math.ceil(10.0 / eps * math.log(n))


def sign_labeling_run(g: ClusteredGraph, T: int, ell: int, seed: int, record: bool = False) -> SignResult:
    if T < 1 or ell < 1:
        raise ConfigError("T and ell must be >= 1")
    n, m = g.n, g.m
    st = streams(seed)
    X = (2 * st["init"].integers(0, 2, size=(ell, n)) - 1).astype(float)
    x_init = X.copy() if record else None
    eu, ev, _ = edge_arrays(g)
    counts = np.zeros((ell, n), dtype=np.int64)
    labels = np.zeros((ell, n), dtype=np.int8)
    fg = np.zeros((ell, n), dtype=np.int64)
    fl = np.zeros((ell, n), dtype=np.int64)
    comp_rounds = np.zeros(ell, dtype=np.int64)
    draws = DrawStream(st["edges"], m * ell)
    remaining = n * ell
    t = 0
    kept: list[np.ndarray] = []
    while remaining > 0:
        chunk = draws.take(DRAW_BLOCK)
        used, remaining = _kernels.sign_chunk(chunk, m, eu, ev, X, counts, T, labels, fg, fl,
                                              comp_rounds, t, remaining)
        if record:
            kept.append(chunk[:used].copy())
        t += used
    return SignResult(
        labels=labels.T.astype(np.int64),
        freeze_times=fg.T.copy(),
        freeze_local=fl.T.copy(),
        total_rounds=t,
        T=T,
        ell=ell,
        draws=np.concatenate(kept) if record else None,
        x_init=x_init,
    )


# ------------------------------------------------------------ Jump-Labeling

@dataclass(frozen=True)
class JumpConfig:
    delta: float
    tau_s: int
    tau_s_tilde: int
    tau_e: int
    tau_e_tilde: int

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not (1 <= self.tau_s <= self.tau_s_tilde < self.tau_e <= self.tau_e_tilde):
            raise ConfigError(
                "need 1 <= tau_s <= tau_s~ < tau_e <= tau_e~, got "
                f"{self.tau_s}, {self.tau_s_tilde}, {self.tau_e}, {self.tau_e_tilde}"
            )


def jump_default_parameters(g: ClusteredGraph, delta: float, spec: GraphSpectrum | None = None) -> JumpConfig:
    """Default local times from the measured spectrum, eps = delta/(lambda3 - lambda2), ceiled."""
    if spec is None:
        spec = compute_spectrum(g)
    lam2 = 2.0 * g.b / g.d if g.kind == "clustered-regular" else spec.lambda2
    lam3 = spec.lambda3_complement
    gap = lam3 - lam2
    if not (0.0 < delta < 0.8 * gap):
        raise DeltaOutOfRange(f"delta={delta} outside (0, 0.8 (lambda3 - lambda2)) = (0, {0.8 * gap:.6g})")
    eps = delta / gap
    n, d, b = g.n, g.d, g.b
    tau_s = math.ceil(100.0 * math.log(n * d / (eps * b)) / (delta * gap))
    tau_s_tilde = 2 * tau_s
    tau_e = 3 * tau_s_tilde + math.ceil(10.0 * d / (delta * b))
    return JumpConfig(delta, tau_s, tau_s_tilde, tau_e, 2 * tau_e)


@dataclass
class JumpResult:
    labels: np.ndarray          # n (majority for boosted runs)
    label_times: np.ndarray     # ell x n global rounds
    copy_labels: np.ndarray     # ell x n
    total_rounds: int
    tau_s_u: np.ndarray         # ell x n
    tau_e_u: np.ndarray
    draws: np.ndarray | None = None
    x_init: np.ndarray | None = None


def _jump_core(g: ClusteredGraph, cfg: JumpConfig, ell: int, seed: int, record: bool,
               shared_init: bool = False) -> JumpResult:
    n, m = g.n, g.m
    st = streams(seed)
    if shared_init:
        x0 = np.tile((2 * st["init"].integers(0, 2, size=n) - 1).astype(float), (ell, 1))
    else:
        x0 = (2 * st["init"].integers(0, 2, size=(ell, n)) - 1).astype(float)
    extra = st["extra"]
    ts = extra.integers(cfg.tau_s, cfg.tau_s_tilde, size=(ell, n), endpoint=True)
    te = extra.integers(cfg.tau_e, cfg.tau_e_tilde, size=(ell, n), endpoint=True)
    # residual w.r.t. the conserved mean: labels only see differences of x_u
    X = x0 - x0.mean(axis=1, keepdims=True)
    exps = np.zeros(ell, dtype=np.int64)
    since = np.zeros(ell, dtype=np.int64)
    counts = np.zeros((ell, n), dtype=np.int64)
    xs = np.zeros((ell, n))
    xs_exp = np.zeros((ell, n), dtype=np.int64)
    labels = np.zeros((ell, n), dtype=np.int8)
    ltime = np.zeros((ell, n), dtype=np.int64)
    eu, ev, _ = edge_arrays(g)
    draws = DrawStream(st["edges"], m * ell)
    rescale_every = max(1, min(2048, n // 4))
    remaining = n * ell
    t = 0
    kept: list[np.ndarray] = []
    while remaining > 0:
        chunk = draws.take(DRAW_BLOCK)
        used, remaining = _kernels.jump_chunk(chunk, m, eu, ev, cfg.delta, X, exps, since, counts, ts, te,
                                              xs, xs_exp, labels, ltime, t, remaining, rescale_every)
        if record:
            kept.append(chunk[:used].copy())
        t += used
    copy_labels = labels.astype(np.int64)
    votes = copy_labels.sum(axis=0)
    majority = np.where(votes >= 0, 1, -1)
    return JumpResult(
        labels=majority,
        label_times=ltime,
        copy_labels=copy_labels,
        total_rounds=t,
        tau_s_u=ts,
        tau_e_u=te,
        draws=np.concatenate(kept) if record else None,
        x_init=x0 if record else None,
    )


def jump_labeling_run(g: ClusteredGraph, cfg: JumpConfig, seed: int, record: bool = False) -> JumpResult:
    return _jump_core(g, cfg, 1, seed, record)


def boosted_jump_run(
    g: ClusteredGraph, cfg: JumpConfig, ell: int, seed: int, record: bool = False, shared_init: bool = True
) -> JumpResult:
    """ell interleaved copies (one uniformly chosen copy per activation), majority label.

    A copy's label pattern is +-chi with the sign of its initial community
    imbalance, so copies started from independent values disagree on
    orientation and the vote degenerates. With ``shared_init`` each node
    starts every copy from the same random +-1 value: every copy is still a
    plain Jump-Labeling run, and all copies share one orientation.
    """
    if ell < 1 or ell % 2 == 0:
        raise ConfigError(f"ell must be odd and >= 1, got {ell}")
    return _jump_core(g, cfg, ell, seed, record, shared_init)


# ------------------------------------------------------------------ export

def write_labels_csv(
    path: str | Path,
    chi: np.ndarray,
    labels: np.ndarray,
    label_times: np.ndarray,
    copy_labels: np.ndarray | None = None,
) -> None:
    """One row per node. ``copy_labels`` (copies x n) is semicolon-joined when given."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for u in range(len(chi)):
            cl = "" if copy_labels is None else ";".join(str(int(c)) for c in copy_labels[:, u])
            w.writerow([u, int(chi[u]), int(labels[u]), int(label_times[u]), cl])

"""Scores for protocol outputs and measurements of analysis quantities."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ActivationSchedule, RunReport
from .errors import MissingObserver, ScheduleTooShort
from .seeding import generator

EXACT_PAIRS_UP_TO = 2000
SAMPLED_PAIRS = 100_000


@dataclass
class ReconstructionScore:
    error_fraction: float
    flip_used: bool
    per_community_errors: tuple[float, float]
    w1_size: int
    w2_size: int


def weak_reconstruction_error(labels: np.ndarray, chi: np.ndarray) -> ReconstructionScore:
    labels = np.asarray(labels)
    chi = np.asarray(chi)
    n = len(chi)
    wrong = labels != chi
    flip = bool(wrong.sum() > n - wrong.sum())
    if flip:
        wrong = ~wrong
    v1, v2 = chi == 1, chi == -1
    e1 = float(wrong[v1].mean()) if v1.any() else 0.0
    e2 = float(wrong[v2].mean()) if v2.any() else 0.0
    return ReconstructionScore(
        error_fraction=float(wrong.sum()) / n,
        flip_used=flip,
        per_community_errors=(e1, e2),
        w1_size=int(np.count_nonzero(v1 & ~wrong)),
        w2_size=int(np.count_nonzero(v2 & ~wrong)),
    )


@dataclass
class CslScore:
    gamma: float
    c1_observed: float
    c2_observed: float
    inlier_set_size: int
    reference_strings: tuple[np.ndarray, np.ndarray]
    reference_distance: float
    sampled: bool


def _majority(rows: np.ndarray) -> np.ndarray:
    return np.where(rows.sum(axis=0) >= 0, 1, -1)


def _pair_distances(a: np.ndarray, b: np.ndarray, ell: int) -> np.ndarray:
    # rows are +-1, so Hamming = (ell - <a, b>) / 2
    return (ell - a @ b.T) / (2.0 * ell)


def csl_evaluate(label_matrix: np.ndarray, chi: np.ndarray, eps: float, seed: int = 0) -> CslScore:
    """Community-sensitive labeling surrogate built from per-community majority strings.

    Inliers are nodes within normalized distance 2 eps of their own
    community's reference string. Pair distances are exact up to 2000 nodes;
    above that 10^5 random pairs of each kind are drawn with ``seed``.
    """
    L = np.asarray(label_matrix, dtype=np.int64)
    if L.ndim == 1:
        L = L[:, None]
    chi = np.asarray(chi)
    n, ell = L.shape
    ref1 = _majority(L[chi == 1])
    ref2 = _majority(L[chi == -1])
    own = np.where((chi == 1)[:, None], ref1[None, :], ref2[None, :])
    dist_own = np.mean(L != own, axis=1)
    inlier = dist_own <= 2 * eps
    gamma = 1.0 - inlier.sum() / n
    A = L[inlier & (chi == 1)].astype(float)
    B = L[inlier & (chi == -1)].astype(float)
    sampled = n > EXACT_PAIRS_UP_TO
    if not sampled:
        c1 = 0.0
        for blk in (A, B):
            if len(blk) > 1:
                c1 = max(c1, float(_pair_distances(blk, blk, ell).max()))
        c2 = float(_pair_distances(A, B, ell).min()) if len(A) and len(B) else math.nan
    else:
        rng = generator(seed)
        c1 = 0.0
        for blk in (A, B):
            if len(blk) > 1:
                i = rng.integers(0, len(blk), SAMPLED_PAIRS)
                j = rng.integers(0, len(blk), SAMPLED_PAIRS)
                c1 = max(c1, float(np.max(np.mean(blk[i] != blk[j], axis=1))))
        if len(A) and len(B):
            i = rng.integers(0, len(A), SAMPLED_PAIRS)
            j = rng.integers(0, len(B), SAMPLED_PAIRS)
            c2 = float(np.min(np.mean(A[i] != B[j], axis=1)))
        else:
            c2 = math.nan
    return CslScore(
        gamma=float(gamma),
        c1_observed=c1,
        c2_observed=c2,
        inlier_set_size=int(inlier.sum()),
        reference_strings=(ref1, ref2),
        reference_distance=float(np.mean(ref1 != ref2)),
        sampled=sampled,
    )


# ------------------------------------------------------------ run series

def bad_set_series(report: RunReport) -> tuple[np.ndarray, np.ndarray]:
    if "bad_count" not in report.series:
        raise MissingObserver("run was executed without an eps observer")
    return report.series["t"], report.series["bad_count"]


def threshold_set_series(report: RunReport) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if "r_eta_count" not in report.series:
        raise MissingObserver("run was executed without an eta observer")
    return report.series["t"], report.series["r_eta_count"], report.series["rbar_eta_count"]


def good_node_window(n: int, lambda3: float) -> tuple[float, float]:
    ln = math.log(n)
    return 6 * n / lambda3 * ln, 12 * n / lambda3 * ln


def non_ephemeral_pass_fraction(reports: list[RunReport], eps: float, lambda3: float) -> float:
    """Fraction of runs whose max |B_t| over the good-node window stays <= 3 eps n."""
    if not reports:
        return math.nan
    passed = 0
    for rep in reports:
        t, bad = bad_set_series(rep)
        n = len(rep.x0)
        lo, hi = good_node_window(n, lambda3)
        sel = (t >= lo) & (t <= hi)
        if not sel.any():
            raise MissingObserver("no observation falls inside the window")
        passed += int(bad[sel].max() <= 3 * eps * n)
    return passed / len(reports)


# ------------------------------------------------------------ schedules

@dataclass
class UniformityReport:
    fraction: float
    first_ok: float
    second_ok: float
    spacing_ok: float


def uniformity_report(schedule: ActivationSchedule, a: float, b_param: float, zeta: float) -> UniformityReport:
    n = schedule.n
    ln = math.log(n)
    if schedule.step < 0.6 * b_param * n * ln:
        raise ScheduleTooShort(f"schedule has {schedule.step} rounds, need {0.6 * b_param * n * ln:.0f}")
    k_lo = math.ceil(a * ln)
    k_hi = math.floor(b_param * ln)
    k_end = math.ceil(b_param * ln + 1)
    times = schedule.activation_times(max(k_end, k_hi + 1, 1))
    never = np.iinfo(np.int64).max
    times = np.where(times < 0, never, times)

    def T(k: int) -> np.ndarray:
        return np.zeros(n, dtype=np.int64) if k <= 0 else times[:, k - 1]

    first = T(k_lo) > 0.4 * a * n * ln
    second = T(k_end) <= 0.6 * b_param * n * ln
    taus = [k for k in range(max(k_lo, 0), k_hi + 1)]
    if taus:
        gap_thr = math.sqrt(zeta) * n
        close = np.zeros(n)
        for k in taus:
            tk, tk1 = T(k), T(k + 1)
            reached = tk1 != never
            close += (reached & (tk1 - tk < gap_thr))
        spacing = close / len(taus) <= 4 * math.sqrt(zeta)
    else:
        spacing = np.ones(n, dtype=bool)
    ok = first & second & spacing
    return UniformityReport(float(ok.mean()), float(first.mean()), float(second.mean()), float(spacing.mean()))


def uniformity_fraction(schedule: ActivationSchedule, a: float, b_param: float, zeta: float) -> float:
    return uniformity_report(schedule, a, b_param, zeta).fraction


def stopping_time_coverage(freeze_times: np.ndarray, T: int, n: int) -> float:
    ft = np.asarray(freeze_times)
    lo, hi = 0.75 * T * n, 1.5 * T * n
    return float(np.mean((ft >= lo) & (ft <= hi)))


def score_dict(
    recon: ReconstructionScore | None = None,
    csl: CslScore | None = None,
    window_pass_fraction: float | None = None,
) -> dict:
    return {
        "error_fraction": None if recon is None else recon.error_fraction,
        "flip_used": None if recon is None else recon.flip_used,
        "gamma": None if csl is None else csl.gamma,
        "c1_observed": None if csl is None else csl.c1_observed,
        "c2_observed": None if csl is None or math.isnan(csl.c2_observed) else csl.c2_observed,
        "window_pass_fraction": window_pass_fraction,
    }


def write_score_json(path: str | Path, **kw) -> None:
    Path(path).write_text(json.dumps(score_dict(**kw), indent=2))

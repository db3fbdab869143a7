"""Exact reference computations: expected dynamics, one-step expectations,
the first-moment decomposition and the 2x2 second-moment envelope."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DegenerateGap, InvariantBreach, ZeroAlpha2
from .graphgen import ClusteredGraph
from .spectral import GraphSpectrum, bad_node_set

ORACLE_COLUMNS = ("t", "predicted", "empirical_mean", "std_error", "bound", "holds")


def _wbar_step(lap: np.ndarray, scale: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: x - scale * (lap @ x)


def expected_states(g: ClusteredGraph, x0: np.ndarray, ts: list[int], delta: float = 0.5) -> dict[int, np.ndarray]:
    """W-bar^t x0 for every t in ``ts`` with W-bar = I - delta L / m (one pass of mat-vecs)."""
    lap = g.laplacian()
    apply = _wbar_step(lap, delta / g.m)
    want = sorted(set(int(t) for t in ts))
    out: dict[int, np.ndarray] = {}
    x = np.array(x0, dtype=float, copy=True)
    t = 0
    for target in want:
        while t < target:
            x = apply(x)
            t += 1
        out[target] = x.copy()
    return out


def expected_state(g: ClusteredGraph, x0: np.ndarray, t: int, delta: float = 0.5) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    return expected_states(g, x0, [t], delta)[int(t)]


# ---------------------------------------------------------------- one step

@dataclass
class OneStep:
    Ey2: float
    Ez2: float
    Eyz2: float
    y2: float
    z2: float


def one_step_expectation_exact(g: ClusteredGraph, x: np.ndarray, delta: float) -> OneStep:
    """Average of ||y'||^2, ||z'||^2, ||y'+z'||^2 over all m edges (weight 1/m each).

    Per edge, with D = delta (x_v - x_u) the change at u, the change of a_y is
    da = D (chi_u - chi_v)/sqrt(n), and since z is orthogonal to 1 and chi,
    ||z'||^2 = ||z||^2 + 2 D (z_u - z_v) + 2 D^2 - da^2.
    """
    n = g.n
    rn = math.sqrt(n)
    x = np.asarray(x, dtype=float)
    chi = g.chi.astype(float)
    a_par = x.sum() / rn
    a_y = chi @ x / rn
    z = x - a_par / rn - a_y * chi / rn
    z2 = float(z @ z)
    u, v = g.edges[:, 0], g.edges[:, 1]
    D = delta * (x[v] - x[u])
    da = D * (chi[u] - chi[v]) / rn
    ay_new = a_y + da
    y2_new = ay_new * ay_new
    z2_new = z2 + 2 * D * (z[u] - z[v]) + 2 * D * D - da * da
    Ey2 = float(y2_new.mean())
    Ez2 = float(z2_new.mean())
    return OneStep(Ey2=Ey2, Ez2=Ez2, Eyz2=Ey2 + Ez2, y2=float(a_y * a_y), z2=z2)


def one_step_bounds(g: ClusteredGraph, x: np.ndarray, delta: float, lambda3: float) -> dict[str, float]:
    """Slack (rhs - lhs, or lhs - rhs for lower bounds) of every one-step inequality.

    General-delta forms are always evaluated; the delta = 1/2 forms only when
    delta == 0.5. ``lambda3`` is the smallest normalized-Laplacian eigenvalue
    on the complement of span{1, chi}.
    """
    r = one_step_expectation_exact(g, x, delta)
    n, d, b = g.n, g.d, g.b
    y, z = r.y2, r.z2
    a11 = 1 - 8 * delta * b / (d * n) + 16 * delta**2 * b / (d * n**2)
    a12 = 16 * delta**2 * b / (d * n**2)
    a21 = 8 * delta**2 * b / (d * n)
    a22 = 1 - 4 * delta * (1 - delta) * lambda3 / n
    out = {
        "y_upper": a11 * y + a12 * z - r.Ey2,
        "y_lower": r.Ey2 - a11 * y,
        "z_upper": a21 * y + a22 * z - r.Ez2,
    }
    if delta == 0.5:
        lam2 = 2.0 * b / d
        out.update({
            "yz_upper_half": (1 - lam2 / n) * y + (1 - lambda3 / n) * z - r.Eyz2,
            "y_lower_half": r.Ey2 - (1 - 2 * lam2 / n) * y,
            "y_upper_half": (1 - 2 * lam2 / n) * y + (2 * lam2 / n**2) * (y + z) - r.Ey2,
            "z_upper_half": (lam2 / n) * y + (1 - lambda3 / n) * z - r.Ez2,
        })
    return out


# ----------------------------------------------------- first moment

@dataclass
class FirstMomentDecomposition:
    alpha1: float
    alpha2: float
    mu1: float
    mu2: float
    wbar2: float
    wbar3: float
    n: int
    residuals: dict[int, tuple[float, float]] = field(default_factory=dict)  # t -> (||e||, bound)

    def e_norm_bound(self, t: int) -> float:
        return self.wbar3 ** t * math.sqrt(self.n)

    @property
    def holds(self) -> bool:
        return all(e <= b + 1e-9 for e, b in self.residuals.values())


def first_moment_decomposition(
    g: ClusteredGraph, spec: GraphSpectrum, x0: np.ndarray, check_ts: tuple[int, ...] = (10, 100, 1000)
) -> FirstMomentDecomposition:
    n = g.n
    if spec.par_block < 1 or spec.wbar_gap <= spec.eig_tolerance:
        raise DegenerateGap("second eigenspace of W-bar is not isolated")
    x0 = np.asarray(x0, dtype=float)
    mu1 = float(x0[g.chi == 1].mean())
    mu2 = float(x0[g.chi == -1].mean())
    f_perp = spec.f_perp
    ff = spec.f - f_perp
    alpha1 = 0.5 * (mu1 + mu2)
    alpha2 = (0.5 * (mu1 - mu2) - float(x0 @ f_perp) / math.sqrt(n)) / float(ff @ ff)
    wb = np.sort(spec.wbar_lambdas)[::-1]
    res = FirstMomentDecomposition(alpha1, alpha2, mu1, mu2, float(wb[1]), float(wb[2]), n)
    if check_ts:
        states = expected_states(g, x0, list(check_ts), 0.5)
        chi = g.chi.astype(float)
        for t in check_ts:
            lam_t = res.wbar2 ** t
            main = alpha1 + alpha2 * lam_t * chi + alpha2 * math.sqrt(n) * lam_t * f_perp
            e = float(np.linalg.norm(states[t] - main))
            res.residuals[int(t)] = (e, res.e_norm_bound(t))
    return res


@dataclass
class Windows:
    t_mono: int
    sign_window: tuple[float, float] | None
    open_ended: bool


def monotonicity_and_sign_windows(
    spec: GraphSpectrum, alpha1: float, alpha2: float, eps: float
) -> Windows:
    """Round thresholds after which node-wise expected values reveal the community.

    ``alpha1 == 0`` gives an open-ended sign window, reported as
    [t_mono, max(n^2, 2 t_mono)].
    """
    if alpha2 == 0:
        raise ZeroAlpha2("alpha2 = 0: the chi component is absent")
    if spec.wbar_gap <= spec.eig_tolerance:
        raise DegenerateGap("lambda-bar_2 == lambda-bar_3")
    # -ln(lambda-bar_i) from the Laplacian spectrum, avoiding 1 - (1 - small)
    nl2 = -math.log1p(-float(spec.lap_lambdas[1]) / (2 * spec.m))
    nl3 = -math.log1p(-float(spec.lap_lambdas[2]) / (2 * spec.m))
    n = spec.n
    t_mono = math.ceil(3 * math.log(n / (1 - eps)) / (nl3 - nl2))
    if alpha1 == 0:
        return Windows(t_mono, (float(t_mono), float(max(n * n, 2 * t_mono))), True)
    if abs(alpha2) <= 2 * abs(alpha1) / (1 - eps):
        return Windows(t_mono, None, False)
    lo = math.log(n / abs(alpha1)) / nl3
    hi = math.log(abs(alpha2) * (1 - eps) / (2 * abs(alpha1))) / nl2
    return Windows(t_mono, (lo, hi) if lo <= hi else None, False)


@dataclass
class WindowCheck:
    monotone_ok: bool
    sign_ok: bool
    checked_nodes: int
    t_values: list[int]
    failures: list[tuple[str, int, int]]


def verify_windows(
    g: ClusteredGraph,
    spec: GraphSpectrum,
    x0: np.ndarray,
    eps: float,
    mono_ts: list[int],
    sign_ts: list[int],
) -> WindowCheck:
    """Check both sign identities on nodes outside B_eps at the given rounds."""
    fm = first_moment_decomposition(g, spec, x0, check_ts=())
    target = np.sign(fm.alpha2 * g.chi)
    bad, _ = bad_node_set(spec, eps)
    good = np.array([u for u in range(g.n) if u not in bad], dtype=np.int64)
    lap = g.laplacian()
    need = sorted(set([t - 1 for t in mono_ts if t >= 1] + list(sign_ts)))
    states = expected_states(g, x0, need, 0.5)
    failures: list[tuple[str, int, int]] = []
    for t in mono_ts:
        # E x(t-1) - E x(t) = (L / 2m) E x(t-1), computed without cancellation
        diff = lap @ states[t - 1] / (2 * g.m)
        for u in good[np.sign(diff[good]) != target[good]]:
            failures.append(("monotone", int(t), int(u)))
    mono_ok = not failures
    for t in sign_ts:
        s = states[t]
        for u in good[np.where(s[good] >= 0, 1, -1) != target[good]]:
            failures.append(("sign", int(t), int(u)))
    sign_ok = not any(f[0] == "sign" for f in failures)
    return WindowCheck(mono_ok, sign_ok, int(good.size), sorted(set(mono_ts) | set(sign_ts)), failures)


# ------------------------------------------------------- second moment

def mu_expected(a_y0: float, t: int, delta: float, b: float, d: float, n: int) -> float:
    return (1 - 4 * delta * b / (d * n)) ** t * a_y0


@dataclass
class RecursionEnvelope:
    A: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    xi: float
    xi1: float
    xi2: float
    eps: float
    beta: float
    kappa: float
    closed_y: np.ndarray
    closed_z: np.ndarray
    preconditions: bool
    closed_consistent: bool

    def mu(self, a_y0: float, t: int) -> float:
        return self.xi ** (t / 2) * a_y0


def recursion_envelope(
    y0_sq: float,
    z0_sq: float,
    delta: float,
    b: float,
    d: float,
    lambda3: float,
    n: int,
    t_max: int,
    beta: float | None = None,
) -> RecursionEnvelope:
    """Iterate the 2x2 one-step recursion exactly and compare with the closed bounds.

    ``beta`` defaults to the smallest admissible value z0/(n y0) (at least 1).
    The closed bounds are only guaranteed when delta < 0.8 (lambda3 - lambda2)
    and 1 <= beta <= d/(eps b); an inconsistency under those conditions raises.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    lam2 = 2.0 * b / d
    a11 = 1 - 8 * delta * b / (d * n) + 16 * delta**2 * b / (d * n**2)
    a12 = 16 * delta**2 * b / (d * n**2)
    a21 = 8 * delta**2 * b / (d * n)
    a22 = 1 - 4 * delta * (1 - delta) * lambda3 / n
    A = np.array([[a11, a12], [a21, a22]])
    ys = np.empty(t_max + 1)
    zs = np.empty(t_max + 1)
    y, z = float(y0_sq), float(z0_sq)
    for t in range(t_max + 1):
        ys[t], zs[t] = y, z
        y, z = a11 * y + a12 * z, a21 * y + a22 * z

    gap = lambda3 - lam2
    eps = delta / gap if gap > 0 else math.inf
    if beta is None:
        beta = max(1.0, z0_sq / (n * y0_sq)) if y0_sq > 0 else math.inf
    xi = (1 - 4 * delta * b / (d * n)) ** 2
    xi1 = 1 - 8 * delta * b / (d * n) + 336 * delta**2 * b / (d * n**2)
    xi2 = 1 - 4 * delta * (1 - delta) * lambda3 / n
    kappa = 1 + (40 * eps * b / d) * beta
    tt = np.arange(t_max + 1)
    if math.isfinite(beta) and math.isfinite(eps):
        closed_y = kappa * xi1**tt * y0_sq
        closed_z = ((20 * eps * b / d) * kappa * xi1**tt + beta * n * xi2**tt) * y0_sq
    else:
        closed_y = np.full(t_max + 1, math.inf)
        closed_z = np.full(t_max + 1, math.inf)
    pre = bool(0 < delta < 0.8 * gap and 1 <= beta <= d / (eps * b) and z0_sq <= beta * n * y0_sq)
    rel = 1e-12
    consistent = bool(np.all(ys <= closed_y * (1 + rel) + 1e-300) and np.all(zs <= closed_z * (1 + rel) + 1e-300))
    if pre and not consistent:
        raise InvariantBreach("iterated envelope exceeds the closed-form bound")
    return RecursionEnvelope(A, ys, zs, xi, xi1, xi2, eps, beta, kappa, closed_y, closed_z, pre, consistent)


def concentration_window(n: int, d: float, b: float, delta: float, lambda2: float, lambda3: float,
                         beta: float) -> tuple[float, float]:
    """[8n/(delta gap) ln(n d beta/(eps b)), n^2 beta/(128 delta gap)] with eps = delta/gap."""
    gap = lambda3 - lambda2
    eps = delta / gap
    lo = 8 * n / (delta * gap) * math.log(n * d * beta / (eps * b))
    hi = n * n * beta / (128 * delta * gap)
    return lo, hi


def mom_bound_rhs(lambda2: float, t: float, n: int) -> float:
    return 3 * lambda2 * t / n


def mom_window(n: int, lambda2: float, lambda3: float) -> tuple[float, float]:
    return 3 * n / lambda3 * math.log(n), n / (4 * lambda2)


def write_oracle_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_COLUMNS)
        for r in rows:
            w.writerow([
                int(r["t"]),
                format(float(r["predicted"]), ".17g"),
                format(float(r["empirical_mean"]), ".17g"),
                format(float(r["std_error"]), ".17g"),
                format(float(r["bound"]), ".17g"),
                "true" if r["holds"] else "false",
            ])
